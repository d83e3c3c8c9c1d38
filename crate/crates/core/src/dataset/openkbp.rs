//! Best-effort reader for the OpenKBP challenge release layout.
//!
//! Each case folder holds sparse CSVs on a fixed cubic grid: masks list
//! flattened voxel indices (`index`), scalar fields list `index,value`.
//! Voxels not listed are 0. A release root with `train-pats/`,
//! `validation-pats/` and `test-pats/` is split accordingly; otherwise every
//! case folder gets [`OpenKbpConfig::default_split`].

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::datamodel::{Case, Dims, RoiLabel, Spacing, Split, VoxelGrid};
use crate::error::{Error, Result};

const SPLIT_DIRS: [(&str, Split); 3] =
    [("train-pats", Split::Train), ("validation-pats", Split::Validate), ("test-pats", Split::Test)];

/// Grid geometry is not stored in the CSVs, so it comes from here.
#[derive(Clone, Debug, PartialEq)]
pub struct OpenKbpConfig {
    /// Challenge release grid: 128×128×128.
    pub dims: Dims,
    /// Used when a case has no `voxel_dimensions.csv`.
    pub spacing: Spacing,
    pub default_split: Split,
}

impl Default for OpenKbpConfig {
    fn default() -> Self {
        OpenKbpConfig {
            dims: Dims { nx: 128, ny: 128, nz: 128 },
            spacing: Spacing { sx: 3.906, sy: 3.906, sz: 2.5 },
            default_split: Split::Train,
        }
    }
}

fn parse_index(field: &str, n: usize, ctx: &dyn Fn() -> String) -> Result<usize> {
    let field = field.trim();
    let idx = match field.parse::<usize>() {
        Ok(i) => i,
        Err(_) => {
            let f: f64 = field.parse().map_err(|_| Error::data(ctx(), format!("invalid voxel index {field:?}")))?;
            if f.fract() != 0.0 || f < 0.0 {
                return Err(Error::data(ctx(), format!("invalid voxel index {field:?}")));
            }
            f as usize
        }
    };
    if idx >= n {
        return Err(Error::data(ctx(), format!("voxel index {idx} outside grid of {n} voxels")));
    }
    Ok(idx)
}

/// Parses one sparse CSV into a dense array. A first line whose leading
/// field is not numeric is treated as a header.
fn parse_sparse_csv(text: &str, n: usize, with_values: bool, file: &str) -> Result<Vec<f32>> {
    let mut values = vec![0.0f32; n];
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let ctx = || format!("{file}, line {}", lineno + 1);
        let mut fields = line.split(',');
        let first = fields.next().unwrap_or("").trim();
        if lineno == 0 && first.parse::<f64>().is_err() {
            continue;
        }
        let idx = parse_index(first, n, &ctx)?;
        if with_values {
            let raw = fields
                .next()
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .ok_or_else(|| Error::data(ctx(), "missing value column"))?;
            let v: f32 = raw.parse().map_err(|_| Error::data(ctx(), format!("invalid value {raw:?}")))?;
            if !v.is_finite() {
                return Err(Error::data(ctx(), format!("non-finite value {raw:?}")));
            }
            values[idx] = v;
        } else {
            values[idx] = 1.0;
        }
    }
    Ok(values)
}

fn read_text(path: &Path, ctx: &str) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::data(ctx, format!("cannot read {}: {e}", path.display())))
}

fn read_spacing(path: &Path, ctx: &str) -> Result<Spacing> {
    let text = read_text(path, ctx)?;
    let nums: Vec<f64> = text
        .split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .filter_map(|s| s.parse().ok())
        .collect();
    if nums.len() < 3 {
        return Err(Error::data(ctx, "voxel_dimensions.csv needs three spacing values"));
    }
    Spacing::new(nums[0], nums[1], nums[2]).map_err(|e| Error::data(ctx, e.to_string()))
}

fn read_case(case_dir: &Path, split: Split, cfg: &OpenKbpConfig) -> Result<Case> {
    let id = case_dir.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let n = cfg.dims.len();
    let spacing_path = case_dir.join("voxel_dimensions.csv");
    let spacing = if spacing_path.exists() {
        read_spacing(&spacing_path, &format!("case {id}, file voxel_dimensions.csv"))?
    } else {
        cfg.spacing
    };
    let load = |file: &str, with_values: bool| -> Result<VoxelGrid> {
        let ctx = format!("case {id}, file {file}");
        let text = read_text(&case_dir.join(file), &ctx)?;
        let values = parse_sparse_csv(&text, n, with_values, &ctx)?;
        VoxelGrid::new(cfg.dims, spacing, values).map_err(|e| Error::data(ctx, e.to_string()))
    };

    let mut roi_masks = BTreeMap::new();
    for label in RoiLabel::all() {
        let file = format!("{}.csv", label.name());
        if case_dir.join(&file).exists() {
            roi_masks.insert(label, load(&file, false)?);
        }
    }
    let case = Case {
        ct: load("ct.csv", true)?,
        dose: load("dose.csv", true)?,
        possible_dose_mask: load("possible_dose_mask.csv", false)?,
        roi_masks,
        split,
        id,
    };
    case.validate()?;
    Ok(case)
}

fn case_dirs(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut dirs: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir() && p.join("ct.csv").exists())
        .collect();
    dirs.sort();
    Ok(dirs)
}

/// Loads every OpenKBP-style case under `dir`, ordered by case ID.
pub fn ingest_openkbp(dir: impl AsRef<Path>, cfg: &OpenKbpConfig) -> Result<Vec<Case>> {
    let dir = dir.as_ref();
    let mut jobs: Vec<(PathBuf, Split)> = Vec::new();
    let has_split_dirs = SPLIT_DIRS.iter().any(|(name, _)| dir.join(name).is_dir());
    if has_split_dirs {
        for (name, split) in SPLIT_DIRS {
            let sub = dir.join(name);
            if sub.is_dir() {
                jobs.extend(case_dirs(&sub)?.into_iter().map(|d| (d, split)));
            }
        }
    } else {
        jobs.extend(case_dirs(dir)?.into_iter().map(|d| (d, cfg.default_split)));
    }
    let mut cases = jobs.par_iter().map(|(d, split)| read_case(d, *split, cfg)).collect::<Result<Vec<_>>>()?;
    cases.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(cases)
}

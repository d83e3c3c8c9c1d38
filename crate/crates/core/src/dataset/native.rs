//! Native on-disk case format.
//!
//! ```text
//! <root>/<case_id>/manifest.json
//! <root>/<case_id>/ct.f32
//! <root>/<case_id>/dose.f32
//! <root>/<case_id>/possible_dose_mask.f32
//! <root>/<case_id>/<RoiName>.f32
//! ```
//!
//! Grid files are raw little-endian `f32` in x-fastest order with no header.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datamodel::{Case, Dims, RoiKind, RoiLabel, Spacing, Split, VoxelGrid};
use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";
const CT_FILE: &str = "ct.f32";
const DOSE_FILE: &str = "dose.f32";
const PDM_FILE: &str = "possible_dose_mask.f32";

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CaseManifest {
    id: String,
    dims: [usize; 3],
    spacing_mm: [f64; 3],
    split: Split,
    rois: Vec<RoiEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RoiEntry {
    name: String,
    kind: RoiKind,
    prescription_gy: Option<f64>,
    file: String,
}

pub(crate) fn f32_le_bytes(values: &[f32]) -> Vec<u8> {
    values.iter().flat_map(|v| v.to_le_bytes()).collect()
}

pub(crate) fn f32_from_le_bytes(bytes: &[u8]) -> Vec<f32> {
    bytes.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect()
}

fn read_grid(
    case_dir: &Path,
    case_id: &str,
    file: &str,
    dims: Dims,
    spacing: Spacing,
    mask: bool,
) -> Result<VoxelGrid> {
    let ctx = || format!("case {case_id}, file {file}");
    let path = case_dir.join(file);
    let bytes = fs::read(&path).map_err(|e| Error::data(ctx(), format!("cannot read: {e}")))?;
    if bytes.len() != dims.len() * 4 {
        return Err(Error::data(
            ctx(),
            format!("expected {} bytes for {dims} grid, found {}", dims.len() * 4, bytes.len()),
        ));
    }
    let values = f32_from_le_bytes(&bytes);
    let grid = VoxelGrid::new(dims, spacing, values).map_err(|e| Error::data(ctx(), e.to_string()))?;
    if mask && !grid.is_binary() {
        return Err(Error::data(ctx(), "mask contains values other than 0 and 1"));
    }
    Ok(grid)
}

fn read_case(case_dir: &Path) -> Result<Case> {
    let manifest_path = case_dir.join(MANIFEST_FILE);
    let dir_name = case_dir.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let text = fs::read_to_string(&manifest_path)
        .map_err(|e| Error::data(format!("case {dir_name}, file {MANIFEST_FILE}"), format!("cannot read: {e}")))?;
    let m: CaseManifest = serde_json::from_str(&text)
        .map_err(|e| Error::data(format!("case {dir_name}, file {MANIFEST_FILE}"), e.to_string()))?;
    let ctx = format!("case {}, file {MANIFEST_FILE}", m.id);
    let dims = Dims::new(m.dims[0], m.dims[1], m.dims[2]).map_err(|e| Error::data(&ctx, e.to_string()))?;
    let [sx, sy, sz] = m.spacing_mm;
    let spacing = Spacing::new(sx, sy, sz).map_err(|e| Error::data(&ctx, e.to_string()))?;

    let mut roi_masks = BTreeMap::new();
    for entry in &m.rois {
        let label: RoiLabel = entry.name.parse().map_err(|e: Error| Error::data(&ctx, e.to_string()))?;
        if label.kind() != entry.kind || label.prescription_gy() != entry.prescription_gy {
            return Err(Error::data(&ctx, format!("ROI {} has inconsistent kind/prescription", entry.name)));
        }
        let grid = read_grid(case_dir, &m.id, &entry.file, dims, spacing, true)?;
        if roi_masks.insert(label, grid).is_some() {
            return Err(Error::data(&ctx, format!("ROI {} listed twice", entry.name)));
        }
    }

    let case = Case {
        ct: read_grid(case_dir, &m.id, CT_FILE, dims, spacing, false)?,
        dose: read_grid(case_dir, &m.id, DOSE_FILE, dims, spacing, false)?,
        possible_dose_mask: read_grid(case_dir, &m.id, PDM_FILE, dims, spacing, true)?,
        roi_masks,
        split: m.split,
        id: m.id,
    };
    case.validate()?;
    Ok(case)
}

/// Reads every case directory under `dir`, ordered by case ID.
pub fn ingest_native(dir: impl AsRef<Path>) -> Result<Vec<Case>> {
    let dir = dir.as_ref();
    let mut case_dirs: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    case_dirs.sort();
    let mut cases = case_dirs.par_iter().map(|d| read_case(d)).collect::<Result<Vec<_>>>()?;
    cases.sort_by(|a, b| a.id.cmp(&b.id));
    if let Some(w) = cases.windows(2).find(|w| w[0].id == w[1].id) {
        return Err(Error::data(dir.display().to_string(), format!("case id {} appears twice", w[0].id)));
    }
    Ok(cases)
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Writes `cases` under `dir`, one subdirectory per case ID.
pub fn export_native(cases: &[Case], dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    for case in cases {
        case.validate()?;
        if case.id.is_empty() || case.id.contains(['/', '\\']) || case.id.starts_with('.') {
            return Err(Error::data(format!("case {:?}", case.id), "case id is not a valid directory name"));
        }
        let case_dir = dir.join(&case.id);
        fs::create_dir_all(&case_dir).map_err(|e| Error::io(&case_dir, e))?;
        let d = case.ct.dims();
        let s = case.ct.spacing();
        let rois = case
            .roi_masks
            .keys()
            .map(|label| RoiEntry {
                name: label.name(),
                kind: label.kind(),
                prescription_gy: label.prescription_gy(),
                file: format!("{}.f32", label.name()),
            })
            .collect();
        let manifest = CaseManifest {
            id: case.id.clone(),
            dims: d.as_array(),
            spacing_mm: [s.sx, s.sy, s.sz],
            split: case.split,
            rois,
        };
        let text = serde_json::to_string_pretty(&manifest).expect("manifest serialises");
        write_file(&case_dir.join(MANIFEST_FILE), text.as_bytes())?;
        write_file(&case_dir.join(CT_FILE), &f32_le_bytes(case.ct.values()))?;
        write_file(&case_dir.join(DOSE_FILE), &f32_le_bytes(case.dose.values()))?;
        write_file(&case_dir.join(PDM_FILE), &f32_le_bytes(case.possible_dose_mask.values()))?;
        for (label, mask) in &case.roi_masks {
            write_file(&case_dir.join(format!("{}.f32", label.name())), &f32_le_bytes(mask.values()))?;
        }
    }
    Ok(())
}

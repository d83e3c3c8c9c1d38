//! Synthetic head-and-neck-like phantoms for desk-scale runs.
//!
//! Each case carries one ellipsoidal target per prescription level and a
//! random subset of the seven organs at risk. The reference dose is the
//! prescription inside each target with exponential falloff outside,
//! combined by maximum over targets.

use std::collections::BTreeMap;

use super::{Distribution, PartitionSchedule};
use crate::datamodel::{Case, Dims, Oar, Prescription, RoiLabel, Spacing, Split, VoxelGrid};
use crate::error::{Error, Result};
use crate::rng::SeededRng;

pub const MIN_PHANTOM_DIM: usize = 8;
pub const PHANTOM_SPACING_MM: f64 = 4.0;
/// e-folding length of the dose falloff outside a target, in voxels.
pub const DOSE_FALLOFF_VOXELS: f64 = 2.0;
/// Voxels above this dose belong to the possible-dose mask.
pub const POSSIBLE_DOSE_THRESHOLD_GY: f64 = 0.5;
pub const OAR_INCLUSION_PROBABILITY: f64 = 0.85;
/// Target centres are drawn from this fraction range of each axis.
pub const TARGET_CENTER_RANGE: (f64, f64) = (0.3, 0.7);
pub const OAR_CENTER_RANGE: (f64, f64) = (0.15, 0.85);
const TARGET_MIN_RADIUS: f64 = 1.5;
const TARGET_MAX_RADIUS_FRACTION: f64 = 0.2;
const OAR_MIN_RADIUS: f64 = 1.0;
const OAR_MAX_RADIUS_FRACTION: f64 = 0.15;
const MANDIBLE_DENSITY_BOOST: f32 = 1.0;

#[derive(Clone, Copy, Debug)]
struct Ellipsoid {
    center: [f64; 3],
    radii: [f64; 3],
}

impl Ellipsoid {
    fn random(rng: &mut SeededRng, dims: Dims, center_range: (f64, f64), r_min: f64, r_max_frac: f64) -> Self {
        let mut center = [0.0; 3];
        let mut radii = [0.0; 3];
        for (axis, n) in dims.as_array().into_iter().enumerate() {
            let n = n as f64;
            // integer centres keep the centre voxel inside the mask
            center[axis] = rng.uniform(center_range.0 * n, center_range.1 * n).floor();
            let r_max = (r_max_frac * n).max(r_min + 0.5);
            radii[axis] = rng.uniform(r_min, r_max);
        }
        Ellipsoid { center, radii }
    }

    /// 1 on the surface, 0 at the centre.
    fn normalized_radius(&self, p: [f64; 3]) -> f64 {
        (0..3).map(|a| ((p[a] - self.center[a]) / self.radii[a]).powi(2)).sum::<f64>().sqrt()
    }

    /// Approximate distance outside the surface, in voxels.
    fn outside_distance(&self, p: [f64; 3]) -> f64 {
        let r_min = self.radii.iter().cloned().fold(f64::INFINITY, f64::min);
        (self.normalized_radius(p) - 1.0).max(0.0) * r_min
    }

    fn mask(&self, dims: Dims, spacing: Spacing) -> VoxelGrid {
        let values = (0..dims.len())
            .map(|i| {
                let (x, y, z) = dims.coords(i);
                f32::from(u8::from(self.normalized_radius([x as f64, y as f64, z as f64]) <= 1.0))
            })
            .collect();
        VoxelGrid::new(dims, spacing, values).expect("sized by dims")
    }
}

/// 3×3×3 box mean with edge clamping.
fn box_blur(values: &[f32], dims: Dims) -> Vec<f32> {
    let [nx, ny, nz] = dims.as_array().map(|n| n as isize);
    let mut out = vec![0.0f32; values.len()];
    for (i, o) in out.iter_mut().enumerate() {
        let (x, y, z) = dims.coords(i);
        let mut acc = 0.0f32;
        for dz in -1..=1isize {
            for dy in -1..=1isize {
                for dx in -1..=1isize {
                    let xx = (x as isize + dx).clamp(0, nx - 1) as usize;
                    let yy = (y as isize + dy).clamp(0, ny - 1) as usize;
                    let zz = (z as isize + dz).clamp(0, nz - 1) as usize;
                    acc += values[xx + dims.nx * (yy + dims.ny * zz)];
                }
            }
        }
        *o = acc / 27.0;
    }
    out
}

fn split_code(split: Split) -> u64 {
    match split {
        Split::Train => 1,
        Split::Validate => 2,
        Split::Test => 3,
    }
}

fn split_prefix(split: Split) -> &'static str {
    match split {
        Split::Train => "train",
        Split::Validate => "val",
        Split::Test => "test",
    }
}

/// Builds one phantom. Each `(seed, split, index)` has its own random
/// stream, so case sets with larger counts extend smaller ones.
pub fn generate_phantom(seed: u64, split: Split, index: usize, dims: Dims) -> Result<Case> {
    if dims.as_array().iter().any(|&n| n < MIN_PHANTOM_DIM) {
        return Err(Error::Config(format!(
            "phantom dims {dims} too small to fit structures (each axis needs >= {MIN_PHANTOM_DIM})"
        )));
    }
    let spacing = Spacing::isotropic(PHANTOM_SPACING_MM)?;
    let mut rng = SeededRng::derived(seed, &[split_code(split), index as u64]);

    let targets: Vec<(Prescription, Ellipsoid)> = Prescription::ALL
        .into_iter()
        .map(|p| {
            let e =
                Ellipsoid::random(&mut rng, dims, TARGET_CENTER_RANGE, TARGET_MIN_RADIUS, TARGET_MAX_RADIUS_FRACTION);
            (p, e)
        })
        .collect();
    let mut roi_masks = BTreeMap::new();
    for oar in Oar::ALL {
        let e = Ellipsoid::random(&mut rng, dims, OAR_CENTER_RANGE, OAR_MIN_RADIUS, OAR_MAX_RADIUS_FRACTION);
        if rng.next_f64() < OAR_INCLUSION_PROBABILITY {
            roi_masks.insert(RoiLabel::Oar(oar), e.mask(dims, spacing));
        }
    }
    for (p, e) in &targets {
        roi_masks.insert(RoiLabel::Target(*p), e.mask(dims, spacing));
    }

    let dose_values: Vec<f32> = (0..dims.len())
        .map(|i| {
            let (x, y, z) = dims.coords(i);
            let p = [x as f64, y as f64, z as f64];
            let d = targets
                .iter()
                .map(|(rx, e)| rx.gy() * (-e.outside_distance(p) / DOSE_FALLOFF_VOXELS).exp())
                .fold(0.0f64, f64::max);
            d.max(0.0) as f32
        })
        .collect();
    let pdm_values =
        dose_values.iter().map(|&d| f32::from(u8::from(f64::from(d) > POSSIBLE_DOSE_THRESHOLD_GY))).collect();

    let noise: Vec<f32> = (0..dims.len()).map(|_| rng.next_f64() as f32).collect();
    let mut ct_values = box_blur(&noise, dims);
    if let Some(mandible) = roi_masks.get(&RoiLabel::Oar(Oar::Mandible)) {
        for (c, &m) in ct_values.iter_mut().zip(mandible.values()) {
            *c += MANDIBLE_DENSITY_BOOST * m;
        }
    }

    Ok(Case {
        id: format!("{}_{index:03}", split_prefix(split)),
        ct: VoxelGrid::new(dims, spacing, ct_values)?,
        roi_masks,
        possible_dose_mask: VoxelGrid::new(dims, spacing, pdm_values)?,
        dose: VoxelGrid::new(dims, spacing, dose_values)?,
        split,
    })
}

/// `n_train` + `n_val` + `n_test` phantoms, in that order.
pub fn generate_phantom_set(seed: u64, n_train: usize, n_val: usize, n_test: usize, dims: Dims) -> Result<Vec<Case>> {
    let mut cases = Vec::with_capacity(n_train + n_val + n_test);
    for (split, n) in [(Split::Train, n_train), (Split::Validate, n_val), (Split::Test, n_test)] {
        for i in 0..n {
            cases.push(generate_phantom(seed, split, i, dims)?);
        }
    }
    Ok(cases)
}

/// Training phantoms in a desk-scale run.
pub const DESK_N_TRAIN: usize = 40;
/// Testing phantoms in a desk-scale run.
pub const DESK_N_TEST: usize = 20;

/// Phantom set sized for the desk-scale site schedule of `kind`.
pub fn desk_phantoms(seed: u64, kind: Distribution, dims: Dims) -> Result<Vec<Case>> {
    let n_val = PartitionSchedule::desk(kind).total_val();
    generate_phantom_set(seed, DESK_N_TRAIN, n_val, DESK_N_TEST, dims)
}

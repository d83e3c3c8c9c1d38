//! Oracles shared by the integration tests. Everything here is written
//! independently of the library's kernels.
#![allow(dead_code)]

use std::collections::BTreeMap;

use fedkbp_core::datamodel::{Case, Dims, RoiLabel, Spacing, VoxelGrid};
use fedkbp_core::federation::SiteUpdate;
use fedkbp_core::metrics::DvhKind;
use fedkbp_core::model::DoseNet;

pub fn crop_grid(g: &VoxelGrid, lo: usize, n: usize) -> VoxelGrid {
    let d = g.dims();
    let mut out = Vec::with_capacity(n * n * n);
    for z in lo..lo + n {
        for y in lo..lo + n {
            for x in lo..lo + n {
                out.push(g.values()[x + d.nx * (y + d.ny * z)]);
            }
        }
    }
    VoxelGrid::new(Dims::cube(n).unwrap(), g.spacing(), out).unwrap()
}

/// Cube of side `n` starting at voxel (lo, lo, lo).
pub fn crop_case(case: &Case, lo: usize, n: usize) -> Case {
    Case {
        id: case.id.clone(),
        ct: crop_grid(&case.ct, lo, n),
        roi_masks: case.roi_masks.iter().map(|(k, v)| (*k, crop_grid(v, lo, n))).collect(),
        possible_dose_mask: crop_grid(&case.possible_dose_mask, lo, n),
        dose: crop_grid(&case.dose, lo, n),
        split: case.split,
    }
}

#[derive(Debug, Default, Clone, Copy)]
pub struct FdSummary {
    pub checked: usize,
    pub passed: usize,
    pub excluded: usize,
    pub worst: f64,
}

impl FdSummary {
    pub fn pass_fraction(&self) -> f64 {
        self.passed as f64 / self.checked.max(1) as f64
    }
}

pub const FD_STEP: f64 = 1e-3;
pub const FD_TOLERANCE: f64 = 1e-4;
pub const KINK_MARGIN: f64 = 1e-6;

/// Central differences on every coordinate against the analytic gradient.
///
/// A coordinate is excluded when a kink argument moved by its probes
/// changes sign or lies within `KINK_MARGIN` of zero at the base point or
/// either probe. Coordinates where both gradients are below 1e-10 count
/// as agreeing.
pub fn fd_check(net: &DoseNet, params: &[f64], case: &Case) -> FdSummary {
    let (_, analytic) = net.loss_and_grad(params, &[case]).unwrap();
    let (_, base) = net.loss_and_kinks(params, case).unwrap();
    let mut s = FdSummary::default();
    let mut p = params.to_vec();
    for j in 0..params.len() {
        p[j] = params[j] + FD_STEP;
        let (lp, kp) = net.loss_and_kinks(&p, case).unwrap();
        p[j] = params[j] - FD_STEP;
        let (lm, km) = net.loss_and_kinks(&p, case).unwrap();
        p[j] = params[j];
        let at_kink = base.iter().zip(&kp).zip(&km).any(|((&b, &a), &c)| {
            if a == b && c == b {
                return false;
            }
            let side = b > 0.0;
            (a > 0.0) != side || (c > 0.0) != side || [a, b, c].iter().any(|v| v.abs() < KINK_MARGIN)
        });
        if at_kink {
            s.excluded += 1;
            continue;
        }
        let fd = (lp - lm) / (2.0 * FD_STEP);
        let scale = fd.abs().max(analytic[j].abs());
        let rel = if scale < 1e-10 { 0.0 } else { (fd - analytic[j]).abs() / scale };
        s.checked += 1;
        if rel < FD_TOLERANCE {
            s.passed += 1;
        }
        s.worst = s.worst.max(rel);
    }
    s
}

/// Direct-loop evaluation of the network on `input` (channel-major, x-fastest).
pub fn naive_forward(net: &DoseNet, params: &[f64], input: &[f64], dims: Dims) -> Vec<f64> {
    let m = net.manifest();
    let get = |name: &str| &params[m.range(name).unwrap()];
    let cfg = net.config();
    let f = cfg.base_width;
    let conv = |x: &[f64], cin: usize, w: &[f64], b: &[f64], n: [usize; 3]| -> Vec<f64> {
        let [nx, ny, nz] = n;
        let vox = nx * ny * nz;
        let cout = b.len();
        let mut out = vec![0.0; cout * vox];
        for o in 0..cout {
            for z in 0..nz {
                for y in 0..ny {
                    for xx in 0..nx {
                        let mut acc = b[o];
                        for i in 0..cin {
                            for kz in 0..3 {
                                for ky in 0..3 {
                                    for kx in 0..3 {
                                        let (sx, sy, sz) = (xx + kx, y + ky, z + kz);
                                        if sx < 1 || sy < 1 || sz < 1 || sx > nx || sy > ny || sz > nz {
                                            continue;
                                        }
                                        let v = x[i * vox + (sx - 1) + nx * ((sy - 1) + ny * (sz - 1))];
                                        acc += w[(((o * cin + i) * 3 + kz) * 3 + ky) * 3 + kx] * v;
                                    }
                                }
                            }
                        }
                        out[o * vox + xx + nx * (y + ny * z)] = acc;
                    }
                }
            }
        }
        out
    };
    let relu = |v: Vec<f64>| v.into_iter().map(|a| if a > 0.0 { a } else { 0.0 }).collect::<Vec<_>>();

    let full = [dims.nx, dims.ny, dims.nz];
    let vox = dims.len();
    let stem = relu(conv(input, cfg.in_channels, get("stem.weight"), get("stem.bias"), full));
    let mut feats = Vec::new();
    let mut gaps = Vec::new();
    for s in 0..cfg.n_scales {
        let k = 1usize << s;
        let small = [dims.nx / k, dims.ny / k, dims.nz / k];
        let sv = small[0] * small[1] * small[2];
        let mut pooled = vec![0.0; f * sv];
        for c in 0..f {
            for z in 0..dims.nz {
                for y in 0..dims.ny {
                    for x in 0..dims.nx {
                        let dst = (x / k) + small[0] * ((y / k) + small[1] * (z / k));
                        pooled[c * sv + dst] += stem[c * vox + x + dims.nx * (y + dims.ny * z)] / (k * k * k) as f64;
                    }
                }
            }
        }
        let feat = relu(conv(&pooled, f, get(&format!("scale{s}.weight")), get(&format!("scale{s}.bias")), small));
        gaps.push(feat.iter().sum::<f64>() / feat.len() as f64);
        feats.push((feat, small));
    }
    let gw = get("gate.weight");
    let gb = get("gate.bias");
    let logits: Vec<f64> = (0..cfg.n_scales).map(|s| gw[s] * gaps[s] + gb[s]).collect();
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = exps.iter().sum();

    let hw = get("head.weight");
    let hb = get("head.bias")[0];
    let mut out = vec![hb; vox];
    for z in 0..dims.nz {
        for y in 0..dims.ny {
            for x in 0..dims.nx {
                let i = x + dims.nx * (y + dims.ny * z);
                for c in 0..f {
                    let mut fused = 0.0;
                    for (s, (feat, small)) in feats.iter().enumerate() {
                        let k = 1usize << s;
                        let sv = small[0] * small[1] * small[2];
                        let j = (x / k) + small[0] * ((y / k) + small[1] * (z / k));
                        fused += exps[s] / total * feat[c * sv + j];
                    }
                    out[i] += hw[c] * fused;
                }
            }
        }
    }
    out
}

/// Σ n_k x_k / Σ n_k per coordinate, one scalar at a time.
pub fn scalar_fedavg(updates: &[SiteUpdate]) -> Vec<f64> {
    let total: f64 = updates.iter().map(|u| u.n as f64).sum();
    let len = updates[0].params.len();
    let mut out = Vec::with_capacity(len);
    for j in 0..len {
        let mut acc = 0.0;
        for u in updates {
            acc += u.n as f64 * f64::from(u.params.data()[j]);
        }
        out.push(acc / total);
    }
    out
}

fn roi_values(dose: &VoxelGrid, mask: &VoxelGrid) -> Vec<f64> {
    let mut v = Vec::new();
    for i in 0..dose.values().len() {
        if mask.values()[i] != 0.0 {
            v.push(f64::from(dose.values()[i]));
        }
    }
    v
}

/// DVH criterion straight from its definition, without sorting.
pub fn dvh_oracle(dose: &VoxelGrid, mask: &VoxelGrid, kind: DvhKind, spacing: Spacing) -> f64 {
    let v = roi_values(dose, mask);
    let n = v.len() as f64;
    let percentile = |x: f64| {
        // the largest d with at least x% of voxels receiving >= d
        let mut best = f64::NEG_INFINITY;
        for &d in &v {
            let count = v.iter().filter(|&&o| o >= d).count() as f64;
            if count * 100.0 >= x * n && d > best {
                best = d;
            }
        }
        best
    };
    match kind {
        DvhKind::DMean => v.iter().sum::<f64>() / n,
        DvhKind::D1 => percentile(1.0),
        DvhKind::D95 => percentile(95.0),
        DvhKind::D99 => percentile(99.0),
        DvhKind::D0_1cc => {
            let vol = spacing.sx * spacing.sy * spacing.sz;
            let k = ((100.0 / vol).ceil() as usize).clamp(1, v.len());
            let mut rest = v.clone();
            let mut sum = 0.0;
            for _ in 0..k {
                let (idx, &hot) = rest.iter().enumerate().max_by(|a, b| a.1.partial_cmp(b.1).unwrap()).unwrap();
                sum += hot;
                rest.swap_remove(idx);
            }
            sum / k as f64
        }
    }
}

/// Mean |pred − truth| over the mask, by explicit loop.
pub fn dose_score_oracle(pred: &VoxelGrid, truth: &VoxelGrid, mask: &VoxelGrid) -> f64 {
    let mut sum = 0.0;
    let mut n = 0usize;
    for i in 0..pred.values().len() {
        if mask.values()[i] != 0.0 {
            sum += (f64::from(pred.values()[i]) - f64::from(truth.values()[i])).abs();
            n += 1;
        }
    }
    sum / n as f64
}

pub fn dvh_score_oracle(
    pred: &VoxelGrid,
    truth: &VoxelGrid,
    rois: &BTreeMap<RoiLabel, VoxelGrid>,
    spacing: Spacing,
) -> f64 {
    let mut diffs = Vec::new();
    for (label, mask) in rois {
        if mask.values().iter().all(|&m| m == 0.0) {
            continue;
        }
        for &kind in DvhKind::applicable(label.kind()) {
            diffs.push((dvh_oracle(pred, mask, kind, spacing) - dvh_oracle(truth, mask, kind, spacing)).abs());
        }
    }
    diffs.iter().sum::<f64>() / diffs.len() as f64
}

use crate::datamodel::VoxelGrid;
use crate::error::{Error, Result};

/// Mean absolute error over the voxels where `mask` is nonzero, in Gy.
pub fn mae_loss(pred: &VoxelGrid, truth: &VoxelGrid, mask: &VoxelGrid) -> Result<f64> {
    if pred.dims() != truth.dims() || pred.dims() != mask.dims() {
        return Err(Error::Structural("prediction, truth and mask dims differ".into()));
    }
    masked_mae(pred.values().iter().map(|&v| f64::from(v)), truth.values(), mask.values())
}

pub(crate) fn masked_mae(pred: impl Iterator<Item = f64>, truth: &[f32], mask: &[f32]) -> Result<f64> {
    let mut sum = 0.0;
    let mut count = 0usize;
    for ((p, &t), &m) in pred.zip(truth).zip(mask) {
        if m != 0.0 {
            sum += (p - f64::from(t)).abs();
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::Evaluation("loss mask is empty".into()));
    }
    Ok(sum / count as f64)
}

/// Loss and d(loss)/d(pred) for one case. A residual that vanishes at grid
/// (32-bit) precision gets subgradient 0.
pub(crate) fn masked_mae_with_grad(pred: &[f64], truth: &[f32], mask: &[f32]) -> Result<(f64, Vec<f64>)> {
    let count = mask.iter().filter(|&&m| m != 0.0).count();
    if count == 0 {
        return Err(Error::Evaluation("loss mask is empty".into()));
    }
    let inv = 1.0 / count as f64;
    let mut sum = 0.0;
    let grad = pred
        .iter()
        .zip(truth)
        .zip(mask)
        .map(|((&p, &t), &m)| {
            if m == 0.0 {
                return 0.0;
            }
            let r = p - f64::from(t);
            sum += r.abs();
            if p as f32 == t {
                0.0
            } else {
                r.signum() * inv
            }
        })
        .collect();
    Ok((sum * inv, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datamodel::{Dims, Spacing};
    use crate::rng::SeededRng;

    fn grid(values: Vec<f32>, n: usize) -> VoxelGrid {
        VoxelGrid::new(Dims::cube(n).unwrap(), Spacing::isotropic(1.0).unwrap(), values).unwrap()
    }

    #[test]
    fn identical_is_zero_and_offset_is_one() {
        let mut rng = SeededRng::new(1);
        let t: Vec<f32> = (0..27).map(|_| rng.uniform(0.0, 70.0) as f32).collect();
        let m: Vec<f32> = (0..27).map(|i| (i % 2) as f32).collect();
        let truth = grid(t.clone(), 3);
        let mask = grid(m, 3);
        assert_eq!(mae_loss(&truth, &truth, &mask).unwrap(), 0.0);
        let shifted = grid(t.iter().map(|v| v + 1.0).collect(), 3);
        assert!((mae_loss(&shifted, &truth, &mask).unwrap() - 1.0).abs() < 1e-5);
    }

    #[test]
    fn matches_scalar_loop() {
        let mut rng = SeededRng::new(7);
        let mut gen = |lo: f64, hi: f64| -> Vec<f32> { (0..64).map(|_| rng.uniform(lo, hi) as f32).collect() };
        let p = gen(0.0, 80.0);
        let t = gen(0.0, 80.0);
        let m: Vec<f32> = gen(0.0, 1.0).into_iter().map(|v| if v > 0.4 { 1.0 } else { 0.0 }).collect();
        let mut sum = 0.0f64;
        let mut n = 0.0f64;
        for i in 0..64 {
            if m[i] == 1.0 {
                sum += (p[i] as f64 - t[i] as f64).abs();
                n += 1.0;
            }
        }
        let got = mae_loss(&grid(p, 4), &grid(t, 4), &grid(m, 4)).unwrap();
        assert!((got - sum / n).abs() < 1e-12);
    }

    #[test]
    fn empty_mask_is_an_error() {
        let g = grid(vec![1.0; 8], 2);
        let z = grid(vec![0.0; 8], 2);
        assert!(matches!(mae_loss(&g, &g, &z), Err(Error::Evaluation(_))));
    }

    #[test]
    fn zero_residual_has_zero_subgradient() {
        let (loss, g) = masked_mae_with_grad(&[1.0, 2.5, 3.0], &[1.0, 2.0, 4.0], &[1.0, 1.0, 1.0]).unwrap();
        assert!((loss - 0.5).abs() < 1e-15);
        assert_eq!(g, vec![0.0, 1.0 / 3.0, -1.0 / 3.0]);
    }
}

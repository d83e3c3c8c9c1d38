use std::collections::BTreeMap;
use std::fmt;

use crate::datamodel::{RoiKind, RoiLabel, Spacing, VoxelGrid};
use crate::error::{Error, Result};

/// 0.1 cc in mm³.
pub const HOT_SPOT_VOLUME_MM3: f64 = 100.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum DvhKind {
    /// Mean dose over the ROI.
    DMean,
    /// Mean dose over the hottest 0.1 cc.
    D0_1cc,
    /// Dose received by at least 1% of the ROI.
    D1,
    D95,
    D99,
}

impl DvhKind {
    pub const OAR_CRITERIA: [DvhKind; 2] = [DvhKind::DMean, DvhKind::D0_1cc];
    pub const TARGET_CRITERIA: [DvhKind; 3] = [DvhKind::D1, DvhKind::D95, DvhKind::D99];

    pub fn applicable(kind: RoiKind) -> &'static [DvhKind] {
        match kind {
            RoiKind::Oar => &Self::OAR_CRITERIA,
            RoiKind::Target => &Self::TARGET_CRITERIA,
        }
    }

    fn percent(self) -> Option<u64> {
        match self {
            DvhKind::D1 => Some(1),
            DvhKind::D95 => Some(95),
            DvhKind::D99 => Some(99),
            _ => None,
        }
    }
}

impl fmt::Display for DvhKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DvhKind::DMean => "D_mean",
            DvhKind::D0_1cc => "D_0.1cc",
            DvhKind::D1 => "D_1",
            DvhKind::D95 => "D_95",
            DvhKind::D99 => "D_99",
        })
    }
}

/// One evaluated criterion.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DvhCriterion {
    pub roi: RoiLabel,
    pub kind: DvhKind,
    pub value_gy: f64,
}

/// ROI doses sorted hottest first.
fn roi_doses_desc(dose: &VoxelGrid, roi_mask: &VoxelGrid) -> Result<Vec<f64>> {
    if dose.dims() != roi_mask.dims() {
        return Err(Error::Structural("dose and ROI mask dims differ".into()));
    }
    let mut doses: Vec<f64> =
        dose.values().iter().zip(roi_mask.values()).filter(|(_, &m)| m != 0.0).map(|(&d, _)| f64::from(d)).collect();
    if doses.is_empty() {
        return Err(Error::Evaluation("ROI mask is empty".into()));
    }
    doses.sort_by(|a, b| b.total_cmp(a));
    Ok(doses)
}

fn criterion_from_sorted(desc: &[f64], kind: DvhKind, spacing: Spacing) -> f64 {
    let n = desc.len();
    match kind {
        DvhKind::DMean => desc.iter().sum::<f64>() / n as f64,
        DvhKind::D0_1cc => {
            let hot = ((HOT_SPOT_VOLUME_MM3 / spacing.voxel_volume_mm3()).ceil() as usize).clamp(1, n);
            desc[..hot].iter().sum::<f64>() / hot as f64
        }
        _ => {
            let x = kind.percent().expect("percentile criterion");
            // ceil(x/100 * n)-th largest, in exact integer arithmetic
            let rank = ((x * n as u64).div_ceil(100) as usize).max(1);
            desc[rank - 1]
        }
    }
}

/// Value of one DVH criterion for `dose` restricted to `roi_mask`.
pub fn dvh_value(dose: &VoxelGrid, roi_mask: &VoxelGrid, kind: DvhKind, spacing: Spacing) -> Result<f64> {
    let desc = roi_doses_desc(dose, roi_mask)?;
    Ok(criterion_from_sorted(&desc, kind, spacing))
}

/// All applicable criteria for every non-empty ROI, in label order.
pub fn dvh_criteria(
    dose: &VoxelGrid,
    roi_masks: &BTreeMap<RoiLabel, VoxelGrid>,
    spacing: Spacing,
) -> Result<Vec<DvhCriterion>> {
    let mut out = Vec::new();
    for (&roi, mask) in roi_masks {
        if mask.count_nonzero() == 0 {
            continue;
        }
        let desc = roi_doses_desc(dose, mask)?;
        for &kind in DvhKind::applicable(roi.kind()) {
            out.push(DvhCriterion { roi, kind, value_gy: criterion_from_sorted(&desc, kind, spacing) });
        }
    }
    Ok(out)
}

/// Mean absolute criterion difference between predicted and reference dose.
pub fn dvh_score_case(
    pred: &VoxelGrid,
    truth: &VoxelGrid,
    roi_masks: &BTreeMap<RoiLabel, VoxelGrid>,
    spacing: Spacing,
) -> Result<f64> {
    let p = dvh_criteria(pred, roi_masks, spacing)?;
    let t = dvh_criteria(truth, roi_masks, spacing)?;
    if p.is_empty() {
        return Err(Error::Evaluation("no ROI provides a DVH criterion".into()));
    }
    let total: f64 = p.iter().zip(&t).map(|(a, b)| (a.value_gy - b.value_gy).abs()).sum();
    Ok(total / p.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datamodel::{Dims, Oar, Prescription};

    fn grid(values: Vec<f32>, dims: Dims) -> VoxelGrid {
        VoxelGrid::new(dims, Spacing::isotropic(1.0).unwrap(), values).unwrap()
    }

    #[test]
    fn uniform_roi() {
        let d = Dims::cube(3).unwrap();
        let dose = grid(vec![70.0; 27], d);
        let mask = grid(vec![1.0; 27], d);
        let s = Spacing::isotropic(2.0).unwrap();
        for kind in [DvhKind::DMean, DvhKind::D1, DvhKind::D95, DvhKind::D99, DvhKind::D0_1cc] {
            assert_eq!(dvh_value(&dose, &mask, kind, s).unwrap(), 70.0);
        }
    }

    #[test]
    fn hundred_cubic_mm_voxel_takes_the_max() {
        let d = Dims::new(4, 1, 1).unwrap();
        let dose = grid(vec![3.0, 9.0, 1.0, 4.0], d);
        let mask = grid(vec![1.0; 4], d);
        let s = Spacing::new(5.0, 5.0, 4.0).unwrap();
        assert_eq!(dvh_value(&dose, &mask, DvhKind::D0_1cc, s).unwrap(), 9.0);
        let s = Spacing::isotropic(4.0).unwrap(); // 64 mm³ -> 2 hottest
        assert_eq!(dvh_value(&dose, &mask, DvhKind::D0_1cc, s).unwrap(), 6.5);
    }

    #[test]
    fn ramp_percentiles() {
        let d = Dims::new(100, 1, 1).unwrap();
        let dose = grid((1..=100).map(|v| v as f32).collect(), d);
        let mask = grid(vec![1.0; 100], d);
        let s = Spacing::isotropic(1.0).unwrap();
        assert_eq!(dvh_value(&dose, &mask, DvhKind::D95, s).unwrap(), 6.0);
        assert_eq!(dvh_value(&dose, &mask, DvhKind::D1, s).unwrap(), 100.0);
        assert_eq!(dvh_value(&dose, &mask, DvhKind::D99, s).unwrap(), 2.0);
        assert_eq!(dvh_value(&dose, &mask, DvhKind::DMean, s).unwrap(), 50.5);
    }

    #[test]
    fn empty_roi_is_an_error() {
        let d = Dims::cube(2).unwrap();
        let r =
            dvh_value(&grid(vec![1.0; 8], d), &grid(vec![0.0; 8], d), DvhKind::D95, Spacing::isotropic(1.0).unwrap());
        assert!(matches!(r, Err(Error::Evaluation(_))));
    }

    #[test]
    fn dvh_score_shift_and_absent_rois() {
        let d = Dims::cube(2).unwrap();
        let s = Spacing::isotropic(1.0).unwrap();
        let truth = grid((0..8).map(|v| v as f32 * 3.0).collect(), d);
        let pred = truth.map(|v| v + 1.0);
        let mut rois = BTreeMap::new();
        rois.insert(RoiLabel::Oar(Oar::Brainstem), grid(vec![1., 1., 0., 0., 1., 0., 0., 1.], d));
        assert!((dvh_score_case(&pred, &truth, &rois, s).unwrap() - 1.0).abs() < 1e-6);
        assert_eq!(dvh_score_case(&truth, &truth, &rois, s).unwrap(), 0.0);

        rois.insert(RoiLabel::Target(Prescription::Gy70), grid(vec![0.0; 8], d));
        assert_eq!(dvh_criteria(&truth, &rois, s).unwrap().len(), 2);
        let only_empty: BTreeMap<_, _> = rois.into_iter().filter(|(l, _)| l.kind() == RoiKind::Target).collect();
        assert!(matches!(dvh_score_case(&pred, &truth, &only_empty, s), Err(Error::Evaluation(_))));
    }
}

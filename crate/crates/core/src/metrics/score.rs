use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::datamodel::{Case, ParamVector, VoxelGrid};
use crate::error::{Error, Result};
use crate::model::{loss::masked_mae, DoseNet};

use super::dvh::dvh_score_case;

/// Mean |pred − truth| over the possible-dose mask, in Gy.
pub fn dose_score_case(pred: &VoxelGrid, truth: &VoxelGrid, possible_dose_mask: &VoxelGrid) -> Result<f64> {
    if pred.dims() != truth.dims() || pred.dims() != possible_dose_mask.dims() {
        return Err(Error::Structural("prediction, truth and mask dims differ".into()));
    }
    masked_mae(pred.values().iter().map(|&v| f64::from(v)), truth.values(), possible_dose_mask.values())
        .map_err(|_| Error::Evaluation("possible-dose mask is empty".into()))
}

/// Test-set scores: means plus the per-case values they came from.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ScoreReport {
    pub dose_score: f64,
    pub dvh_score: f64,
    pub per_case_dose: BTreeMap<String, f64>,
    pub per_case_dvh: BTreeMap<String, f64>,
}

impl ScoreReport {
    /// Builds a report from per-case values; means run in ascending case-ID order.
    pub fn from_cases(per_case_dose: BTreeMap<String, f64>, per_case_dvh: BTreeMap<String, f64>) -> Result<Self> {
        if per_case_dose.is_empty() || per_case_dose.len() != per_case_dvh.len() {
            return Err(Error::Evaluation("score report needs matching, nonempty per-case maps".into()));
        }
        let mean = |m: &BTreeMap<String, f64>| m.values().sum::<f64>() / m.len() as f64;
        Ok(ScoreReport {
            dose_score: mean(&per_case_dose),
            dvh_score: mean(&per_case_dvh),
            per_case_dose,
            per_case_dvh,
        })
    }
}

/// Anything that turns a case into a dose prediction on its grid.
pub trait DosePredictor: Sync {
    fn predict(&self, case: &Case) -> Result<VoxelGrid>;
}

/// A network with fixed parameters; predictions are clamped to >= 0 Gy.
pub struct ModelPredictor<'a> {
    pub net: &'a DoseNet,
    pub params: &'a ParamVector,
}

impl DosePredictor for ModelPredictor<'_> {
    fn predict(&self, case: &Case) -> Result<VoxelGrid> {
        self.net.predict(self.params, case)
    }
}

pub fn evaluate_predictor(predictor: &dyn DosePredictor, test_cases: &[Case]) -> Result<ScoreReport> {
    if test_cases.is_empty() {
        return Err(Error::Evaluation("test set is empty".into()));
    }
    let scores = test_cases
        .par_iter()
        .map(|case| {
            let with_id = |e: Error| e.context(format!("case {}", case.id));
            let pred = predictor.predict(case).map_err(with_id)?;
            let dose = dose_score_case(&pred, &case.dose, &case.possible_dose_mask).map_err(with_id)?;
            let dvh = dvh_score_case(&pred, &case.dose, &case.roi_masks, case.dose.spacing()).map_err(with_id)?;
            Ok((case.id.clone(), dose, dvh))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut per_case_dose = BTreeMap::new();
    let mut per_case_dvh = BTreeMap::new();
    for (id, dose, dvh) in scores {
        if per_case_dose.insert(id.clone(), dose).is_some() {
            return Err(Error::Evaluation(format!("case id {id} appears twice in the test set")));
        }
        per_case_dvh.insert(id, dvh);
    }
    ScoreReport::from_cases(per_case_dose, per_case_dvh)
}

/// Scores a model's clamped predictions on every test case.
pub fn evaluate_model(net: &DoseNet, params: &ParamVector, test_cases: &[Case]) -> Result<ScoreReport> {
    evaluate_predictor(&ModelPredictor { net, params }, test_cases)
}

/// Site-averaged report: the per-case values and both means are averaged
/// across sites.
pub fn average_site_reports(reports: &[ScoreReport]) -> Result<ScoreReport> {
    let first = reports.first().ok_or_else(|| Error::Evaluation("no reports to average".into()))?;
    for r in &reports[1..] {
        if !r.per_case_dose.keys().eq(first.per_case_dose.keys())
            || !r.per_case_dvh.keys().eq(first.per_case_dvh.keys())
        {
            return Err(Error::Evaluation("site reports cover different case sets".into()));
        }
    }
    let k = reports.len() as f64;
    let average_map = |pick: fn(&ScoreReport) -> &BTreeMap<String, f64>| -> BTreeMap<String, f64> {
        pick(first).keys().map(|id| (id.clone(), reports.iter().map(|r| pick(r)[id]).sum::<f64>() / k)).collect()
    };
    Ok(ScoreReport {
        dose_score: reports.iter().map(|r| r.dose_score).sum::<f64>() / k,
        dvh_score: reports.iter().map(|r| r.dvh_score).sum::<f64>() / k,
        per_case_dose: average_map(|r| &r.per_case_dose),
        per_case_dvh: average_map(|r| &r.per_case_dvh),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datamodel::{Dims, Spacing, Split};
    use crate::dataset::generate_phantom_set;

    struct Perfect;

    impl DosePredictor for Perfect {
        fn predict(&self, case: &Case) -> Result<VoxelGrid> {
            Ok(case.dose.clone())
        }
    }

    struct Offset(f32);

    impl DosePredictor for Offset {
        fn predict(&self, case: &Case) -> Result<VoxelGrid> {
            Ok(case.dose.map(|v| v + self.0))
        }
    }

    fn report(ids: &[&str], dose: &[f64], dvh: &[f64]) -> ScoreReport {
        ScoreReport::from_cases(
            ids.iter().map(|s| s.to_string()).zip(dose.iter().copied()).collect(),
            ids.iter().map(|s| s.to_string()).zip(dvh.iter().copied()).collect(),
        )
        .unwrap()
    }

    #[test]
    fn dose_score_examples() {
        let d = Dims::cube(2).unwrap();
        let s = Spacing::isotropic(1.0).unwrap();
        let t = VoxelGrid::new(d, s, (0..8).map(|v| v as f32).collect()).unwrap();
        let m = VoxelGrid::mask(d, s, vec![1., 0., 1., 0., 1., 1., 0., 0.]).unwrap();
        assert_eq!(dose_score_case(&t, &t, &m).unwrap(), 0.0);
        assert_eq!(dose_score_case(&t.map(|v| v + 2.0), &t, &m).unwrap(), 2.0);
        let empty = VoxelGrid::zeros(d, s);
        assert!(matches!(dose_score_case(&t, &t, &empty), Err(Error::Evaluation(_))));
    }

    #[test]
    fn perfect_predictor_scores_zero() {
        let cases = generate_phantom_set(1, 0, 0, 4, Dims::cube(8).unwrap()).unwrap();
        let r = evaluate_predictor(&Perfect, &cases).unwrap();
        assert_eq!((r.dose_score, r.dvh_score), (0.0, 0.0));
        assert_eq!(r.per_case_dose.len(), 4);
        assert!(cases.iter().all(|c| c.split == Split::Test));
    }

    #[test]
    fn means_equal_hand_average() {
        let cases = generate_phantom_set(2, 0, 0, 3, Dims::cube(8).unwrap()).unwrap();
        let r = evaluate_predictor(&Offset(1.5), &cases).unwrap();
        let mean = r.per_case_dvh.values().sum::<f64>() / 3.0;
        assert!((r.dvh_score - mean).abs() < 1e-12);
        assert!((r.dose_score - 1.5).abs() < 1e-5);
    }

    #[test]
    fn averaging_reports() {
        let a = report(&["a", "b"], &[1.0, 3.0], &[2.0, 2.0]);
        let b = report(&["a", "b"], &[3.0, 5.0], &[0.0, 4.0]);
        let avg = average_site_reports(&[a.clone(), b]).unwrap();
        assert_eq!(avg.dose_score, 3.0);
        assert_eq!(avg.per_case_dose["a"], 2.0);
        assert_eq!(avg.per_case_dvh["b"], 3.0);
        let same = average_site_reports(&vec![a.clone(); 8]).unwrap();
        assert_eq!(same, a);
        let other = report(&["a", "c"], &[1.0, 1.0], &[1.0, 1.0]);
        assert!(average_site_reports(&[a, other]).is_err());
        assert!(average_site_reports(&[]).is_err());
    }
}

//! OpenKBP-style evaluation of predicted dose against the reference.

mod dvh;
mod score;

pub use dvh::{dvh_criteria, dvh_score_case, dvh_value, DvhCriterion, DvhKind, HOT_SPOT_VOLUME_MM3};
pub use score::{
    average_site_reports, dose_score_case, evaluate_model, evaluate_predictor, DosePredictor, ModelPredictor,
    ScoreReport,
};

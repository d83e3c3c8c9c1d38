//! CSV renderings of an experiment report.

use std::fmt::Write as _;

use crate::federation::{ExperimentReport, Scenario};

pub const LOSS_CURVES_HEADER: &str = "round,site_id,train_loss,val_loss";
pub const SCORES_HEADER: &str = "scope,scenario,distribution,dose_score,dvh_score";

/// Per round: one row per site, then `mean`, then `global` when the scenario
/// has a global model. Losses use the shortest exact decimal form.
pub fn loss_curves_csv(report: &ExperimentReport) -> String {
    let mut out = String::new();
    out.push_str(LOSS_CURVES_HEADER);
    out.push('\n');
    for r in &report.rounds {
        for (k, (t, v)) in r.per_site_train_loss.iter().zip(&r.per_site_val_loss).enumerate() {
            let _ = writeln!(out, "{},{k},{t},{v}", r.round);
        }
        let _ = writeln!(out, "{},mean,{},{}", r.round, r.mean_train_loss, r.mean_val_loss);
        if let (Some(t), Some(v)) = (r.global_train_loss, r.global_val_loss) {
            let _ = writeln!(out, "{},global,{t},{v}", r.round);
        }
    }
    out
}

/// Label written in the distribution column; PM ignores the split.
pub fn distribution_label(report: &ExperimentReport) -> String {
    match report.scenario {
        Scenario::Pm => "ignored".to_string(),
        _ => report.distribution.to_string(),
    }
}

/// IM: one `site<k>` row per local model plus an `average` row.
/// PM and FedAvg: a single `global` row.
pub fn scores_csv(report: &ExperimentReport) -> String {
    let dist = distribution_label(report);
    let mut out = String::new();
    out.push_str(SCORES_HEADER);
    out.push('\n');
    let mut row = |scope: &str, dose: f64, dvh: f64| {
        let _ = writeln!(out, "{scope},{},{dist},{dose:.6},{dvh:.6}", report.scenario);
    };
    if report.scenario == Scenario::Im {
        for (k, s) in report.site_scores.iter().enumerate() {
            row(&format!("site{k}"), s.dose_score, s.dvh_score);
        }
        row("average", report.global_score.dose_score, report.global_score.dvh_score);
    } else {
        row("global", report.global_score.dose_score, report.global_score.dvh_score);
    }
    out
}

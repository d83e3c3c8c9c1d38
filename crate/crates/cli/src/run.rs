use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use fedkbp_core::datamodel::{Case, Dims};
use fedkbp_core::dataset::{desk_phantoms, ingest_native, ingest_openkbp, OpenKbpConfig};
use fedkbp_core::federation::{
    run_scenario, ExecMode, ExperimentReport, RunOptions, Scenario, ScenarioConfig, Transport,
};
use fedkbp_core::model::{save_checkpoint, ModelConfig, TrainConfig};
use fedkbp_core::report::{distribution_label, loss_curves_csv, scores_csv};
use fedkbp_core::Distribution;
use serde_json::{json, Value};

use crate::args::{merge, parse_config_file, DataFormat, RunArgs};
use crate::CliError;

pub const DEFAULT_EPOCHS: usize = 100;
pub const DEFAULT_SYNTHETIC_DIMS: usize = 16;

#[derive(Clone, Debug, PartialEq)]
pub enum DataSource {
    Synthetic { dims: Dims },
    Directory { path: PathBuf, format: DataFormat, dims: Option<Dims> },
}

/// A fully resolved `run` invocation.
#[derive(Clone, Debug)]
pub struct RunSettings {
    pub scenario: ScenarioConfig,
    pub options: RunOptions,
    pub source: DataSource,
    pub out: PathBuf,
}

/// Merges the config file (if any) under the flags and checks required keys.
pub fn resolve(flags: RunArgs) -> Result<RunSettings, CliError> {
    if flags.data.is_some() && flags.synthetic {
        return Err(CliError::Usage("--data and --synthetic are mutually exclusive".into()));
    }
    let args = match &flags.config {
        Some(path) => {
            let file = parse_config_file(path)?;
            if file.data.is_some() && file.synthetic {
                return Err(CliError::Usage(format!("{}: data and synthetic are mutually exclusive", path.display())));
            }
            merge(flags, file)
        }
        None => flags,
    };
    let missing = |key: &str| CliError::Usage(format!("missing required key: {key}"));
    let scenario = args.scenario.ok_or_else(|| missing("scenario"))?;
    let distribution = match (scenario, args.distribution) {
        (_, Some(d)) => d,
        (Scenario::Pm, None) => Distribution::Iid,
        (_, None) => return Err(missing("distribution")),
    };
    let out = args.out.ok_or_else(|| missing("out"))?;
    let source = match (args.data, args.synthetic) {
        (Some(path), false) => DataSource::Directory { path, format: args.format.unwrap_or_default(), dims: args.dims },
        (None, true) => DataSource::Synthetic {
            dims: match args.dims {
                Some(d) => d,
                None => Dims::cube(DEFAULT_SYNTHETIC_DIMS).map_err(CliError::Core)?,
            },
        },
        _ => return Err(missing("data or synthetic")),
    };
    let epochs = args.epochs.unwrap_or(DEFAULT_EPOCHS);
    let seed = args.seed.unwrap_or(0);
    let base_train = match source {
        DataSource::Synthetic { .. } => TrainConfig::desk(epochs),
        DataSource::Directory { .. } => TrainConfig { epochs, ..TrainConfig::default() },
    };
    let defaults = ModelConfig::default();
    let mut cfg = ScenarioConfig::new(scenario, distribution, epochs, seed);
    cfg.model_cfg = ModelConfig {
        base_width: args.width.unwrap_or(defaults.base_width),
        n_scales: args.scales.unwrap_or(defaults.n_scales),
        seed,
        ..defaults
    };
    cfg.train_cfg = TrainConfig {
        learning_rate: args.lr.unwrap_or(base_train.learning_rate),
        momentum: args.momentum.unwrap_or(base_train.momentum),
        batch_size: args.batch_size.unwrap_or(base_train.batch_size),
        epochs,
    };
    cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let options = RunOptions {
        mode: args.mode.unwrap_or_default(),
        transport: args.transport.unwrap_or_default(),
        checkpoint_dir: args.checkpoints.then(|| out.join("checkpoints")),
    };
    Ok(RunSettings { scenario: cfg, options, source, out })
}

fn looks_like_openkbp(dir: &Path) -> bool {
    let has_ct = |d: &Path| d.join("ct.csv").is_file();
    if ["train-pats", "validation-pats", "test-pats"].iter().any(|s| dir.join(s).is_dir()) {
        return true;
    }
    fs::read_dir(dir).map(|entries| entries.flatten().any(|e| has_ct(&e.path()))).unwrap_or(false)
}

pub fn load_cases(settings: &RunSettings) -> Result<Vec<Case>, CliError> {
    let cases = match &settings.source {
        DataSource::Synthetic { dims } => {
            // PM pools everything, so its phantom set matches the IID one
            let dist = match settings.scenario.scenario {
                Scenario::Pm => Distribution::Iid,
                _ => settings.scenario.distribution,
            };
            desk_phantoms(settings.scenario.seed, dist, *dims)?
        }
        DataSource::Directory { path, format, dims } => {
            let openkbp = match format {
                DataFormat::Auto => looks_like_openkbp(path),
                DataFormat::Native => false,
                DataFormat::Openkbp => true,
            };
            if openkbp {
                let mut cfg = OpenKbpConfig::default();
                if let Some(d) = dims {
                    cfg.dims = *d;
                }
                ingest_openkbp(path, &cfg)?
            } else {
                ingest_native(path)?
            }
        }
    };
    Ok(cases)
}

fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| CliError::Io(path.to_path_buf(), e))
}

fn mode_name(m: ExecMode) -> &'static str {
    match m {
        ExecMode::Sequential => "sequential",
        ExecMode::Concurrent => "concurrent",
    }
}

fn transport_name(t: Transport) -> &'static str {
    match t {
        Transport::InProcess => "inprocess",
        Transport::Loopback => "loopback",
    }
}

fn config_snapshot(s: &RunSettings) -> Value {
    let c = &s.scenario;
    let distribution = match c.scenario {
        Scenario::Pm => "ignored".to_string(),
        _ => c.distribution.to_string(),
    };
    let data = match &s.source {
        DataSource::Synthetic { dims } => json!({ "kind": "synthetic", "dims": dims.as_array() }),
        DataSource::Directory { path, format, dims } => json!({
            "kind": "directory",
            "path": path.display().to_string(),
            "format": format!("{format:?}").to_lowercase(),
            "dims": dims.map(|d| d.as_array()),
        }),
    };
    json!({
        "scenario": c.scenario.to_string(),
        "distribution": distribution,
        "epochs": c.epochs,
        "seed": c.seed,
        "data": data,
        "model": {
            "in_channels": c.model_cfg.in_channels,
            "base_width": c.model_cfg.base_width,
            "n_scales": c.model_cfg.n_scales,
            "parameters": c.model_cfg.param_count(),
        },
        "train": {
            "learning_rate": c.train_cfg.learning_rate,
            "momentum": c.train_cfg.momentum,
            "batch_size": c.train_cfg.batch_size,
        },
        "mode": mode_name(s.options.mode),
        "transport": transport_name(s.options.transport),
    })
}

/// Output of a successful run.
#[derive(Debug)]
pub struct RunOutcome {
    pub report: ExperimentReport,
    /// Written files, relative to the output directory.
    pub outputs: Vec<String>,
}

/// Runs the experiment and writes its artifacts. The manifest is written
/// first with status `running` and rewritten as `complete` or `failed`.
pub fn execute(settings: &RunSettings) -> Result<RunOutcome, CliError> {
    fs::create_dir_all(&settings.out).map_err(|e| CliError::Io(settings.out.clone(), e))?;
    let started = unix_now();
    let manifest_path = settings.out.join("manifest.json");
    let write_manifest = |status: &str, outputs: &[String], error: Option<String>| {
        let m = json!({
            "tool": "fedkbp",
            "version": env!("CARGO_PKG_VERSION"),
            "status": status,
            "error": error,
            "config": config_snapshot(settings),
            "seed": settings.scenario.seed,
            "started_unix": started,
            "finished_unix": (status != "running").then(unix_now),
            "outputs": outputs,
        });
        let text = serde_json::to_string_pretty(&m).expect("manifest serialises");
        write_file(&manifest_path, text + "\n")
    };
    write_manifest("running", &[], None)?;

    let mut outputs = Vec::new();
    let result = (|| -> Result<ExperimentReport, CliError> {
        let cases = load_cases(settings)?;
        let report = run_scenario(&settings.scenario, &cases, &settings.options)?;
        write_file(&settings.out.join("loss_curves.csv"), loss_curves_csv(&report))?;
        outputs.push("loss_curves.csv".to_string());
        write_file(&settings.out.join("scores.csv"), scores_csv(&report))?;
        outputs.push("scores.csv".to_string());
        let model_dir = settings.out.join("model");
        fs::create_dir_all(&model_dir).map_err(|e| CliError::Io(model_dir.clone(), e))?;
        for (k, params) in report.final_params.iter().enumerate() {
            let name = match report.scenario {
                Scenario::Im => format!("model/site{k}.ckpt"),
                _ => "model/global.ckpt".to_string(),
            };
            save_checkpoint(settings.out.join(&name), params)?;
            outputs.push(name);
        }
        if settings.options.checkpoint_dir.is_some() {
            outputs.push("checkpoints/".to_string());
        }
        Ok(report)
    })();

    match result {
        Ok(report) => {
            outputs.push("manifest.json".to_string());
            write_manifest("complete", &outputs, None)?;
            Ok(RunOutcome { report, outputs })
        }
        Err(e) => {
            // best effort: the original error matters more than this one
            let _ = write_manifest("failed", &outputs, Some(e.to_string()));
            Err(e)
        }
    }
}

/// One-line summary for standard output.
pub fn summary(report: &ExperimentReport) -> String {
    format!(
        "{} ({}): {} rounds, final mean val loss {:.4}, dose score {:.4}, DVH score {:.4}",
        report.scenario,
        distribution_label(report),
        report.rounds.len(),
        report.final_mean_val_loss().unwrap_or(f64::NAN),
        report.global_score.dose_score,
        report.global_score.dvh_score
    )
}

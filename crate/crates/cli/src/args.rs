//! Command-line and config-file parsing for `fedkbp run`.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};
use fedkbp_core::datamodel::Dims;
use fedkbp_core::federation::{ExecMode, Scenario, Transport};
use fedkbp_core::Distribution;

use crate::CliError;

#[derive(Debug, Parser)]
#[command(name = "fedkbp", version, about = "Federated dose-prediction benchmark runner")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train and evaluate one scenario, then write its artifacts.
    Run(RunArgs),
    /// Compare finished run directories side by side.
    Compare(CompareArgs),
    /// Write a synthetic phantom set in the native case format.
    Phantoms(PhantomArgs),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, ValueEnum)]
pub enum DataFormat {
    /// Detect from the directory contents.
    #[default]
    Auto,
    Native,
    Openkbp,
}

/// Every option is optional here so that flags and config files can be
/// merged before required keys are checked.
#[derive(Clone, Debug, Default, Args)]
pub struct RunArgs {
    /// Flat key=value file; keys are the long flag names such as batch-size.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// pm | im | fedavg
    #[arg(long)]
    pub scenario: Option<Scenario>,
    /// iid | noniid (ignored by pm)
    #[arg(long)]
    pub distribution: Option<Distribution>,
    /// Training rounds; one local epoch each [default: 100]
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Master seed for data and training [default: 0]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Directory of cases (native or OpenKBP layout)
    #[arg(long, value_name = "PATH")]
    pub data: Option<PathBuf>,
    /// Use generated desk-scale phantoms instead of --data
    #[arg(long)]
    pub synthetic: bool,
    #[arg(long, value_enum)]
    pub format: Option<DataFormat>,
    /// Grid size X,Y,Z [default: 16,16,16 synthetic, 128,128,128 OpenKBP]
    #[arg(long, value_parser = parse_dims)]
    pub dims: Option<Dims>,
    /// Output directory
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Learning rate [default: 0.01 synthetic, 0.001 otherwise]
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub momentum: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Feature width of the network [default: 8]
    #[arg(long)]
    pub width: Option<usize>,
    /// Number of attention scales [default: 2]
    #[arg(long)]
    pub scales: Option<usize>,
    /// sequential | concurrent
    #[arg(long)]
    pub mode: Option<ExecMode>,
    /// inprocess | loopback
    #[arg(long)]
    pub transport: Option<Transport>,
    /// Save the model after every round under <out>/checkpoints
    #[arg(long)]
    pub checkpoints: bool,
}

#[derive(Clone, Debug, Args)]
pub struct CompareArgs {
    /// Two or more run directories
    #[arg(required = true, num_args = 2..)]
    pub runs: Vec<PathBuf>,
}

#[derive(Clone, Debug, Args)]
pub struct PhantomArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Sizes the validation set for this schedule
    #[arg(long, default_value = "iid")]
    pub distribution: Distribution,
    #[arg(long, value_parser = parse_dims, default_value = "16,16,16")]
    pub dims: Dims,
}

pub fn parse_dims(s: &str) -> Result<Dims, String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    let [x, y, z] = parts.as_slice() else {
        return Err(format!("expected X,Y,Z, got {s:?}"));
    };
    let num = |v: &str| v.parse::<usize>().map_err(|_| format!("invalid dimension {v:?}"));
    Dims::new(num(x)?, num(y)?, num(z)?).map_err(|e| e.to_string())
}

#[derive(Debug, Parser)]
#[command(no_binary_name = true)]
struct FileArgs {
    #[command(flatten)]
    args: RunArgs,
}

/// Reads a key=value config file. Blank lines and `#` comments are skipped.
pub fn parse_config_file(path: &Path) -> Result<RunArgs, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
    parse_config_text(&text).map_err(|e| match e {
        CliError::Usage(m) => CliError::Usage(format!("{}: {m}", path.display())),
        other => other,
    })
}

pub fn parse_config_text(text: &str) -> Result<RunArgs, CliError> {
    let cmd = FileArgs::command();
    let mut argv: Vec<String> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let lineno = i + 1;
        let (key, value) = line
            .split_once('=')
            .map(|(k, v)| (k.trim(), v.trim()))
            .ok_or_else(|| CliError::Usage(format!("line {lineno}: expected key=value")))?;
        let arg = cmd
            .get_arguments()
            .find(|a| a.get_long() == Some(key) && key != "config")
            .ok_or_else(|| CliError::Usage(format!("line {lineno}: unknown key {key:?}")))?;
        if arg.get_action().takes_values() {
            argv.push(format!("--{key}"));
            argv.push(value.to_string());
        } else {
            match value {
                "true" => argv.push(format!("--{key}")),
                "false" => {}
                _ => return Err(CliError::Usage(format!("line {lineno}: {key} expects true or false"))),
            }
        }
    }
    FileArgs::try_parse_from(argv)
        .map(|f| f.args)
        .map_err(|e| CliError::Usage(e.render().to_string().trim().to_string()))
}

/// Flags take precedence over file values, key by key.
pub fn merge(flags: RunArgs, file: RunArgs) -> RunArgs {
    let flag_source = flags.data.is_some() || flags.synthetic;
    RunArgs {
        config: flags.config,
        scenario: flags.scenario.or(file.scenario),
        distribution: flags.distribution.or(file.distribution),
        epochs: flags.epochs.or(file.epochs),
        seed: flags.seed.or(file.seed),
        data: if flag_source { flags.data } else { file.data },
        synthetic: if flag_source { flags.synthetic } else { file.synthetic },
        format: flags.format.or(file.format),
        dims: flags.dims.or(file.dims),
        out: flags.out.or(file.out),
        lr: flags.lr.or(file.lr),
        momentum: flags.momentum.or(file.momentum),
        batch_size: flags.batch_size.or(file.batch_size),
        width: flags.width.or(file.width),
        scales: flags.scales.or(file.scales),
        mode: flags.mode.or(file.mode),
        transport: flags.transport.or(file.transport),
        checkpoints: flags.checkpoints || file.checkpoints,
    }
}

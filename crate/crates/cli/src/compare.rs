use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use fedkbp_core::report::{LOSS_CURVES_HEADER, SCORES_HEADER};

use crate::CliError;

/// What `compare` needs from one run directory.
#[derive(Clone, Debug, PartialEq)]
pub struct RunSummary {
    pub dir: PathBuf,
    pub scenario: String,
    pub distribution: String,
    pub dose_score: f64,
    pub dvh_score: f64,
    /// Mean validation loss per round, round 1 first.
    pub mean_val_loss: Vec<f64>,
}

impl RunSummary {
    pub fn final_loss(&self) -> f64 {
        *self.mean_val_loss.last().expect("runs have at least one round")
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Comparison {
    pub runs: Vec<RunSummary>,
    /// Index of the run with the lowest final mean validation loss.
    pub lowest: usize,
}

impl Comparison {
    /// `deltas[r][k]` = run k minus run 0 at round r + 1.
    pub fn deltas(&self) -> Vec<Vec<f64>> {
        let base = &self.runs[0].mean_val_loss;
        (0..base.len()).map(|r| self.runs.iter().map(|run| run.mean_val_loss[r] - base[r]).collect()).collect()
    }
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))
}

fn bad(path: &Path, line: usize, msg: &str) -> CliError {
    CliError::Usage(format!("{}:{line}: {msg}", path.display()))
}

fn parse_f64(path: &Path, line: usize, s: &str) -> Result<f64, CliError> {
    s.parse().map_err(|_| bad(path, line, &format!("invalid number {s:?}")))
}

pub fn load_run(dir: &Path) -> Result<RunSummary, CliError> {
    let scores_path = dir.join("scores.csv");
    let scores = read(&scores_path)?;
    let mut lines = scores.lines();
    if lines.next() != Some(SCORES_HEADER) {
        return Err(bad(&scores_path, 1, "unexpected header"));
    }
    let mut headline = None;
    for (i, line) in lines.enumerate() {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 5 {
            return Err(bad(&scores_path, i + 2, "expected 5 columns"));
        }
        if f[0] == "global" || f[0] == "average" {
            headline = Some((
                f[1].to_string(),
                f[2].to_string(),
                parse_f64(&scores_path, i + 2, f[3])?,
                parse_f64(&scores_path, i + 2, f[4])?,
            ));
        }
    }
    let (scenario, distribution, dose_score, dvh_score) =
        headline.ok_or_else(|| bad(&scores_path, 1, "no global or average row"))?;

    let curves_path = dir.join("loss_curves.csv");
    let curves = read(&curves_path)?;
    let mut lines = curves.lines();
    if lines.next() != Some(LOSS_CURVES_HEADER) {
        return Err(bad(&curves_path, 1, "unexpected header"));
    }
    let mut mean_val_loss = Vec::new();
    for (i, line) in lines.enumerate() {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 4 {
            return Err(bad(&curves_path, i + 2, "expected 4 columns"));
        }
        if f[1] == "mean" {
            let round: usize = f[0].parse().map_err(|_| bad(&curves_path, i + 2, "invalid round"))?;
            if round != mean_val_loss.len() + 1 {
                return Err(bad(&curves_path, i + 2, "rounds out of order"));
            }
            mean_val_loss.push(parse_f64(&curves_path, i + 2, f[3])?);
        }
    }
    if mean_val_loss.is_empty() {
        return Err(bad(&curves_path, 1, "no mean rows"));
    }
    Ok(RunSummary { dir: dir.to_path_buf(), scenario, distribution, dose_score, dvh_score, mean_val_loss })
}

pub fn compare_runs(dirs: &[PathBuf]) -> Result<Comparison, CliError> {
    if dirs.len() < 2 {
        return Err(CliError::Usage("compare needs at least two run directories".into()));
    }
    let runs = dirs.iter().map(|d| load_run(d)).collect::<Result<Vec<_>, _>>()?;
    let rounds = runs[0].mean_val_loss.len();
    if let Some(r) = runs.iter().find(|r| r.mean_val_loss.len() != rounds) {
        return Err(CliError::Usage(format!(
            "{} has {} rounds but {} has {rounds}",
            r.dir.display(),
            r.mean_val_loss.len(),
            runs[0].dir.display()
        )));
    }
    // first run wins ties
    let mut lowest = 0;
    for (k, r) in runs.iter().enumerate() {
        if r.final_loss() < runs[lowest].final_loss() {
            lowest = k;
        }
    }
    Ok(Comparison { runs, lowest })
}

pub fn render(c: &Comparison) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "run,dir,scenario,distribution,dose_score,dvh_score,final_mean_val_loss,lowest");
    for (k, r) in c.runs.iter().enumerate() {
        let _ = writeln!(
            out,
            "{k},{},{},{},{:.6},{:.6},{:.6},{}",
            r.dir.display(),
            r.scenario,
            r.distribution,
            r.dose_score,
            r.dvh_score,
            r.final_loss(),
            if k == c.lowest { "*" } else { "" }
        );
    }
    out.push('\n');
    let mut header = String::from("round");
    for k in 0..c.runs.len() {
        let _ = write!(header, ",mean_val_loss_{k}");
    }
    for k in 1..c.runs.len() {
        let _ = write!(header, ",delta_{k}_0");
    }
    let _ = writeln!(out, "{header}");
    for (r, deltas) in c.deltas().iter().enumerate() {
        let mut row = format!("{}", r + 1);
        for run in &c.runs {
            let _ = write!(row, ",{:.6}", run.mean_val_loss[r]);
        }
        for d in &deltas[1..] {
            let _ = write!(row, ",{d:.6}");
        }
        let _ = writeln!(out, "{row}");
    }
    let _ = writeln!(out, "\nlowest final mean validation loss: run {} ({})", c.lowest, c.runs[c.lowest].dir.display());
    out
}

//! Training drivers for each scenario.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;
use std::thread;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::coordinator::Coordinator;
use super::protocol::Message;
use super::site::{local_train_epoch, CaseStore, SiteState, TrainContext};
use super::transport::{link, LinkReceiver, LinkSender, Transport};
use crate::datamodel::{Case, ParamVector, Split};
use crate::dataset::{partition, Distribution, PartitionSchedule, SitePartition};
use crate::error::{Error, Result};
use crate::metrics::{average_site_reports, evaluate_model, ScoreReport};
use crate::model::{save_checkpoint, DoseNet, ModelConfig, TrainConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scenario {
    /// Pooled model: one learner over every site's data.
    Pm,
    /// Individual models: each site alone, no exchange.
    Im,
    FedAvg,
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scenario::Pm => "pm",
            Scenario::Im => "im",
            Scenario::FedAvg => "fedavg",
        })
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "pm" => Ok(Scenario::Pm),
            "im" => Ok(Scenario::Im),
            "fedavg" => Ok(Scenario::FedAvg),
            _ => Err(Error::Config(format!("unknown scenario {s:?} (expected pm, im or fedavg)"))),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExecMode {
    /// Sites run one after another on the calling thread.
    #[default]
    Sequential,
    /// One thread per site within each round.
    Concurrent,
}

impl FromStr for ExecMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sequential" => Ok(ExecMode::Sequential),
            "concurrent" => Ok(ExecMode::Concurrent),
            _ => Err(Error::Config(format!("unknown mode {s:?} (expected sequential or concurrent)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioConfig {
    pub scenario: Scenario,
    /// Ignored by PM.
    pub distribution: Distribution,
    pub epochs: usize,
    pub seed: u64,
    pub model_cfg: ModelConfig,
    pub train_cfg: TrainConfig,
    /// Explicit site schedule; inferred from the pool sizes when `None`.
    pub schedule: Option<PartitionSchedule>,
}

impl ScenarioConfig {
    pub fn new(scenario: Scenario, distribution: Distribution, epochs: usize, seed: u64) -> Self {
        ScenarioConfig {
            scenario,
            distribution,
            epochs,
            seed,
            model_cfg: ModelConfig { seed, ..Default::default() },
            train_cfg: TrainConfig { epochs, ..Default::default() },
            schedule: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs < 1 {
            return Err(Error::Config("epochs must be >= 1".into()));
        }
        self.model_cfg.validate()?;
        TrainConfig { epochs: self.epochs, ..self.train_cfg }.validate()
    }
}

#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    pub mode: ExecMode,
    pub transport: Transport,
    /// Write the model(s) after every round here.
    pub checkpoint_dir: Option<PathBuf>,
}

/// Losses after one round (one local epoch per site).
#[derive(Clone, Debug, PartialEq)]
pub struct RoundRecord {
    /// 1-based.
    pub round: usize,
    pub per_site_train_loss: Vec<f64>,
    pub per_site_val_loss: Vec<f64>,
    pub per_site_n: Vec<usize>,
    /// Arithmetic mean over sites.
    pub mean_train_loss: f64,
    pub mean_val_loss: f64,
    /// Training loss weighted by site case counts (PM and FedAvg).
    pub global_train_loss: Option<f64>,
    /// Global model on the union of validation sets (PM and FedAvg).
    pub global_val_loss: Option<f64>,
    /// FedAvg only: `n_k / Σ n` in site order.
    pub aggregation_weights: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentReport {
    pub scenario: Scenario,
    pub distribution: Distribution,
    pub rounds: Vec<RoundRecord>,
    /// IM only: one test report per local model, in site order.
    pub site_scores: Vec<ScoreReport>,
    /// The global model's test scores (IM: site average).
    pub global_score: ScoreReport,
    /// The global model, or one model per site for IM.
    pub final_params: Vec<ParamVector>,
}

impl ExperimentReport {
    pub fn final_mean_val_loss(&self) -> Option<f64> {
        self.rounds.last().map(|r| r.mean_val_loss)
    }
}

/// Cases grouped by split, each group sorted by ID.
struct Pools {
    store: CaseStore,
    train_ids: Vec<String>,
    val_ids: Vec<String>,
    test: Vec<Case>,
}

impl Pools {
    fn new(cases: &[Case]) -> Result<Self> {
        let mut sorted: Vec<&Case> = cases.iter().collect();
        sorted.sort_by(|a, b| a.id.cmp(&b.id));
        let ids = |s: Split| sorted.iter().filter(|c| c.split == s).map(|c| c.id.clone()).collect::<Vec<_>>();
        let pools = Pools {
            train_ids: ids(Split::Train),
            val_ids: ids(Split::Validate),
            test: sorted.iter().filter(|c| c.split == Split::Test).map(|c| (*c).clone()).collect(),
            store: CaseStore::new(cases.iter().filter(|c| c.split != Split::Test).cloned())?,
        };
        if pools.train_ids.is_empty() || pools.val_ids.is_empty() || pools.test.is_empty() {
            return Err(Error::Config(format!(
                "need training, validating and testing cases (have {} / {} / {})",
                pools.train_ids.len(),
                pools.val_ids.len(),
                pools.test.len()
            )));
        }
        Ok(pools)
    }
}

fn resolve_schedule(cfg: &ScenarioConfig, n_train: usize, n_val: usize) -> Result<PartitionSchedule> {
    if let Some(s) = &cfg.schedule {
        return Ok(s.clone());
    }
    [PartitionSchedule::full_scale(cfg.distribution), PartitionSchedule::desk(cfg.distribution)]
        .into_iter()
        .find(|s| s.total_train() == n_train && s.total_val() == n_val)
        .ok_or_else(|| {
            Error::Config(format!(
                "no {} site schedule for {n_train} training / {n_val} validating cases",
                cfg.distribution
            ))
        })
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Validation loss of `params` on each of `ids`, in order.
fn case_losses(
    net: &DoseNet,
    params: &ParamVector,
    ids: &[String],
    store: &CaseStore,
    mode: ExecMode,
) -> Result<Vec<f64>> {
    let one = |id: &String| store.get(id).and_then(|c| net.case_loss(params, c));
    match mode {
        ExecMode::Sequential => ids.iter().map(one).collect(),
        ExecMode::Concurrent => ids.par_iter().map(one).collect(),
    }
}

/// Runs `f` on every item, serially or one thread per item; results in item order.
fn run_per_site<S: Send, T: Send>(
    mode: ExecMode,
    items: &mut [S],
    f: impl Fn(&mut S) -> Result<T> + Sync,
) -> Vec<Result<T>> {
    match mode {
        ExecMode::Sequential => items.iter_mut().map(&f).collect(),
        ExecMode::Concurrent => thread::scope(|scope| {
            let f = &f;
            let handles: Vec<_> = items.iter_mut().map(|item| scope.spawn(move || f(item))).collect();
            handles
                .into_iter()
                .map(|h| h.join().unwrap_or_else(|_| Err(Error::Protocol("site worker panicked".into()))))
                .collect()
        }),
    }
}

fn site_failure(site_id: usize, round: usize, e: Error) -> Error {
    Error::Protocol(format!("site {site_id} failed in round {round}: {e}"))
}

fn write_checkpoint(opts: &RunOptions, name: String, params: &ParamVector) -> Result<()> {
    match &opts.checkpoint_dir {
        Some(dir) => {
            std::fs::create_dir_all(dir).map_err(|e| Error::Io { path: dir.clone(), source: e })?;
            save_checkpoint(dir.join(name), params)
        }
        None => Ok(()),
    }
}

fn make_sites(parts: Vec<SitePartition>, init: &ParamVector) -> Result<Vec<SiteState>> {
    parts.into_iter().map(|p| SiteState::new(p, init.clone())).collect()
}

/// Pooled training: a single learner over all training cases.
pub fn run_pm(cfg: &ScenarioConfig, cases: &[Case], opts: &RunOptions) -> Result<ExperimentReport> {
    cfg.validate()?;
    let pools = Pools::new(cases)?;
    let net = DoseNet::new(cfg.model_cfg)?;
    let ctx = TrainContext { net: &net, train_cfg: &cfg.train_cfg, seed: cfg.seed };
    let pooled = SitePartition { site_id: 0, train_ids: pools.train_ids.clone(), val_ids: pools.val_ids.clone() };
    let mut site = SiteState::new(pooled, net.init_params())?;
    let mut rounds = Vec::with_capacity(cfg.epochs);
    for r in 1..=cfg.epochs {
        let incoming = site.params.clone();
        let epoch =
            local_train_epoch(&mut site, &incoming, &pools.store, ctx, r as u32).map_err(|e| site_failure(0, r, e))?;
        let val = mean(&case_losses(&net, &epoch.params, &pools.val_ids, &pools.store, opts.mode)?);
        write_checkpoint(opts, format!("round_{r:03}.ckpt"), &epoch.params)?;
        rounds.push(RoundRecord {
            round: r,
            per_site_train_loss: vec![epoch.train_loss],
            per_site_val_loss: vec![val],
            per_site_n: vec![epoch.n],
            mean_train_loss: epoch.train_loss,
            mean_val_loss: val,
            global_train_loss: Some(epoch.train_loss),
            global_val_loss: Some(val),
            aggregation_weights: Vec::new(),
        });
    }
    let global_score = evaluate_model(&net, &site.params, &pools.test)?;
    Ok(ExperimentReport {
        scenario: Scenario::Pm,
        distribution: cfg.distribution,
        rounds,
        site_scores: Vec::new(),
        global_score,
        final_params: vec![site.params],
    })
}

/// Individual training: every site trains its own model on its own data.
pub fn run_im(cfg: &ScenarioConfig, cases: &[Case], opts: &RunOptions) -> Result<ExperimentReport> {
    cfg.validate()?;
    let pools = Pools::new(cases)?;
    let schedule = resolve_schedule(cfg, pools.train_ids.len(), pools.val_ids.len())?;
    let parts = partition(&pools.train_ids, &pools.val_ids, &schedule, cfg.seed)?;
    let net = DoseNet::new(cfg.model_cfg)?;
    let ctx = TrainContext { net: &net, train_cfg: &cfg.train_cfg, seed: cfg.seed };
    let mut sites = make_sites(parts, &net.init_params())?;
    let mut rounds = Vec::with_capacity(cfg.epochs);
    for r in 1..=cfg.epochs {
        let results = run_per_site(opts.mode, &mut sites, |site| {
            let incoming = site.params.clone();
            let epoch = local_train_epoch(site, &incoming, &pools.store, ctx, r as u32)?;
            let val =
                mean(&case_losses(&net, &epoch.params, &site.partition.val_ids, &pools.store, ExecMode::Sequential)?);
            Ok((epoch, val))
        });
        let mut train = Vec::new();
        let mut val = Vec::new();
        let mut ns = Vec::new();
        for (site_id, res) in results.into_iter().enumerate() {
            let (epoch, v) = res.map_err(|e| site_failure(site_id, r, e))?;
            train.push(epoch.train_loss);
            val.push(v);
            ns.push(epoch.n);
        }
        for s in &sites {
            write_checkpoint(opts, format!("round_{r:03}_site{}.ckpt", s.site_id), &s.params)?;
        }
        rounds.push(RoundRecord {
            round: r,
            mean_train_loss: mean(&train),
            mean_val_loss: mean(&val),
            per_site_train_loss: train,
            per_site_val_loss: val,
            per_site_n: ns,
            global_train_loss: None,
            global_val_loss: None,
            aggregation_weights: Vec::new(),
        });
    }
    let site_scores = sites
        .iter()
        .map(|s| evaluate_model(&net, &s.params, &pools.test).map_err(|e| e.context(format!("site {}", s.site_id))))
        .collect::<Result<Vec<_>>>()?;
    let global_score = average_site_reports(&site_scores)?;
    Ok(ExperimentReport {
        scenario: Scenario::Im,
        distribution: cfg.distribution,
        rounds,
        site_scores,
        global_score,
        final_params: sites.into_iter().map(|s| s.params).collect(),
    })
}

/// A site endpoint in the federated protocol.
struct SiteWorker {
    state: SiteState,
    down: LinkReceiver,
    up: LinkSender,
}

impl SiteWorker {
    /// Waits for the round broadcast, trains one local epoch, reports back.
    fn step(&mut self, store: &CaseStore, ctx: TrainContext<'_>) -> Result<()> {
        let (round, params) = match self.down.recv()? {
            Message::RoundBegin { round, params } => (round, params),
            other => {
                return Err(Error::Protocol(format!("expected ROUND_BEGIN, got {:?}", other.message_type())));
            }
        };
        let epoch = local_train_epoch(&mut self.state, &params, store, ctx, round)?;
        self.up.send(Message::RoundUpdate {
            round,
            site_id: self.state.site_id as u16,
            params: epoch.params,
            n: epoch.n as u64,
            train_loss: epoch.train_loss,
        })
    }

    fn accept_commit(&mut self, round: u32) -> Result<()> {
        match self.down.recv()? {
            Message::RoundCommit { round: r, params } if r == round => {
                self.state.params = params;
                Ok(())
            }
            other => Err(Error::Protocol(format!(
                "site {} expected ROUND_COMMIT {round}, got {:?}",
                self.state.site_id,
                other.message_type()
            ))),
        }
    }
}

/// Federated averaging with one aggregation per local epoch.
pub fn run_fedavg(cfg: &ScenarioConfig, cases: &[Case], opts: &RunOptions) -> Result<ExperimentReport> {
    cfg.validate()?;
    let pools = Pools::new(cases)?;
    let schedule = resolve_schedule(cfg, pools.train_ids.len(), pools.val_ids.len())?;
    let parts = partition(&pools.train_ids, &pools.val_ids, &schedule, cfg.seed)?;
    let net = DoseNet::new(cfg.model_cfg)?;
    let ctx = TrainContext { net: &net, train_cfg: &cfg.train_cfg, seed: cfg.seed };
    let init = net.init_params();
    let n_sites = parts.len();
    let site_val_ids: Vec<Vec<String>> = parts.iter().map(|p| p.val_ids.clone()).collect();

    let (up_tx, mut up_rx) = link(opts.transport);
    let mut downs = Vec::with_capacity(n_sites);
    let mut workers = Vec::with_capacity(n_sites);
    for state in make_sites(parts, &init)? {
        let (down_tx, down_rx) = link(opts.transport);
        downs.push(down_tx);
        workers.push(SiteWorker { state, down: down_rx, up: up_tx.clone() });
    }
    drop(up_tx);

    let mut coord = Coordinator::new(init, n_sites)?;
    for w in &workers {
        w.up.send(Message::Join { site_id: w.state.site_id as u16 })?;
    }
    for _ in 0..n_sites {
        coord.handle(up_rx.recv()?)?;
    }

    let mut rounds = Vec::with_capacity(cfg.epochs);
    for r in 1..=cfg.epochs {
        let begin = coord.begin_round()?;
        for d in &downs {
            d.send(begin.clone())?;
        }
        let results = run_per_site(opts.mode, &mut workers, |w| w.step(&pools.store, ctx));
        for (site_id, res) in results.into_iter().enumerate() {
            res.map_err(|e| site_failure(site_id, r, e))?;
        }
        let mut commit = None;
        for _ in 0..n_sites {
            let msg = up_rx.try_recv()?.ok_or_else(|| Error::Protocol(format!("round {r}: missing site update")))?;
            if let Some(c) = coord.handle(msg)? {
                commit = Some(c);
            }
        }
        let commit = commit.ok_or_else(|| Error::Protocol(format!("round {r} did not reach its barrier")))?;
        for d in &downs {
            d.send(commit.clone())?;
        }
        for w in &mut workers {
            w.accept_commit(r as u32)?;
        }

        let global = coord.global().clone();
        let all_val: Vec<String> = {
            let mut v: Vec<String> = site_val_ids.iter().flatten().cloned().collect();
            v.sort();
            v
        };
        let losses = case_losses(&net, &global, &all_val, &pools.store, opts.mode)?;
        let loss_of = |id: &String| losses[all_val.binary_search(id).expect("val id present")];
        let per_site_val: Vec<f64> =
            site_val_ids.iter().map(|ids| ids.iter().map(loss_of).sum::<f64>() / ids.len() as f64).collect();
        let weights: Vec<f64> = coord.last_weights().iter().map(|&(_, w)| w).collect();
        let train: Vec<f64> = coord.last_train_losses().iter().map(|&(_, l)| l).collect();
        write_checkpoint(opts, format!("round_{r:03}.ckpt"), &global)?;
        rounds.push(RoundRecord {
            round: r,
            mean_train_loss: mean(&train),
            mean_val_loss: mean(&per_site_val),
            global_train_loss: Some(train.iter().zip(&weights).map(|(l, w)| l * w).sum()),
            global_val_loss: Some(mean(&losses)),
            per_site_train_loss: train,
            per_site_val_loss: per_site_val,
            per_site_n: workers.iter().map(|w| w.state.n_train).collect(),
            aggregation_weights: weights,
        });
    }
    let global = coord.global().clone();
    let global_score = evaluate_model(&net, &global, &pools.test)?;
    Ok(ExperimentReport {
        scenario: Scenario::FedAvg,
        distribution: cfg.distribution,
        rounds,
        site_scores: Vec::new(),
        global_score,
        final_params: vec![global],
    })
}

/// Dispatches on `cfg.scenario`.
pub fn run_scenario(cfg: &ScenarioConfig, cases: &[Case], opts: &RunOptions) -> Result<ExperimentReport> {
    match cfg.scenario {
        Scenario::Pm => run_pm(cfg, cases, opts),
        Scenario::Im => run_im(cfg, cases, opts),
        Scenario::FedAvg => run_fedavg(cfg, cases, opts),
    }
}

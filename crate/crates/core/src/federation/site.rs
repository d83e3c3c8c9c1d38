use std::collections::BTreeMap;

use crate::datamodel::{Case, ParamVector};
use crate::dataset::SitePartition;
use crate::error::{Error, Result};
use crate::model::{sgd_step, DoseNet, TrainConfig};
use crate::rng::SeededRng;

const SHUFFLE_STREAM: u64 = 0x7368_7566;

/// Cases by ID; sites only ever hold IDs.
#[derive(Clone, Debug, Default)]
pub struct CaseStore {
    cases: BTreeMap<String, Case>,
}

impl CaseStore {
    pub fn new(cases: impl IntoIterator<Item = Case>) -> Result<Self> {
        let mut map = BTreeMap::new();
        for c in cases {
            let id = c.id.clone();
            if map.insert(id.clone(), c).is_some() {
                return Err(Error::data("case store", format!("duplicate case id {id:?}")));
            }
        }
        Ok(CaseStore { cases: map })
    }

    pub fn get(&self, id: &str) -> Result<&Case> {
        self.cases.get(id).ok_or_else(|| Error::data("case store", format!("unknown case id {id:?}")))
    }

    pub fn len(&self) -> usize {
        self.cases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cases.is_empty()
    }
}

/// One site's replica: its partition plus model and optimizer state.
#[derive(Clone, Debug)]
pub struct SiteState {
    pub site_id: usize,
    pub partition: SitePartition,
    pub params: ParamVector,
    pub velocity: ParamVector,
    pub n_train: usize,
}

impl SiteState {
    pub fn new(partition: SitePartition, params: ParamVector) -> Result<Self> {
        if partition.train_ids.is_empty() {
            return Err(Error::Config(format!("site {} has no training cases", partition.site_id)));
        }
        Ok(SiteState {
            site_id: partition.site_id,
            n_train: partition.train_ids.len(),
            velocity: params.zeros_like(),
            params,
            partition,
        })
    }
}

/// Everything local training needs besides the site itself.
#[derive(Clone, Copy, Debug)]
pub struct TrainContext<'a> {
    pub net: &'a DoseNet,
    pub train_cfg: &'a TrainConfig,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LocalEpoch {
    pub params: ParamVector,
    pub train_loss: f64,
    pub n: usize,
}

/// One pass over the site's training cases starting from `incoming`.
///
/// The visiting order is a shuffle seeded by `(seed, site_id, round)`;
/// the reported loss is the per-case mean of the pre-step batch losses.
pub fn local_train_epoch(
    state: &mut SiteState,
    incoming: &ParamVector,
    store: &CaseStore,
    ctx: TrainContext<'_>,
    round: u32,
) -> Result<LocalEpoch> {
    state.params.check_compatible(incoming)?;
    if state.partition.train_ids.is_empty() {
        return Err(Error::Config(format!("site {} has no training cases", state.site_id)));
    }
    state.params = incoming.clone();
    let mut order: Vec<&str> = state.partition.train_ids.iter().map(String::as_str).collect();
    SeededRng::derived(ctx.seed, &[SHUFFLE_STREAM, state.site_id as u64, u64::from(round)]).shuffle(&mut order);

    let mut loss_sum = 0.0;
    for chunk in order.chunks(ctx.train_cfg.batch_size) {
        let batch = chunk.iter().map(|id| store.get(id)).collect::<Result<Vec<_>>>()?;
        let (grad, loss) = ctx.net.backward(&state.params, &batch)?;
        loss_sum += loss * batch.len() as f64;
        let (p, v) = sgd_step(&state.params, &grad, &state.velocity, ctx.train_cfg)?;
        state.params = p;
        state.velocity = v;
    }
    Ok(LocalEpoch { params: state.params.clone(), train_loss: loss_sum / order.len() as f64, n: state.n_train })
}

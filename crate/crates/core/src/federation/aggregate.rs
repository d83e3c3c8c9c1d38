use crate::datamodel::{ParamAccumulator, ParamVector};
use crate::error::{Error, Result};

/// One site's contribution to a round.
#[derive(Clone, Debug, PartialEq)]
pub struct SiteUpdate {
    pub site_id: usize,
    pub params: ParamVector,
    /// Number of local training cases; the aggregation weight.
    pub n: u64,
}

/// `n_k / Σ n` for each update, in ascending site order.
pub fn aggregation_weights(updates: &[SiteUpdate]) -> Result<Vec<(usize, f64)>> {
    if updates.is_empty() {
        return Err(Error::Protocol("aggregation needs at least one update".into()));
    }
    if let Some(u) = updates.iter().find(|u| u.n == 0) {
        return Err(Error::Protocol(format!("site {} reported zero training cases", u.site_id)));
    }
    let mut order: Vec<&SiteUpdate> = updates.iter().collect();
    order.sort_by_key(|u| u.site_id);
    if let Some(w) = order.windows(2).find(|w| w[0].site_id == w[1].site_id) {
        return Err(Error::Protocol(format!("site {} submitted twice", w[0].site_id)));
    }
    let total: u64 = order.iter().map(|u| u.n).sum();
    Ok(order.iter().map(|u| (u.site_id, u.n as f64 / total as f64)).collect())
}

/// Training-count-weighted average of the site models.
///
/// Updates are sorted by site before summing, accumulated in 64-bit and
/// rounded to 32-bit once, so the result does not depend on arrival order.
pub fn fedavg_aggregate(updates: &[SiteUpdate]) -> Result<ParamVector> {
    let weights = aggregation_weights(updates)?;
    let manifest = updates[0].params.manifest();
    let mut acc = ParamAccumulator::new(manifest.clone());
    for (site_id, w) in weights {
        let u = updates.iter().find(|u| u.site_id == site_id).expect("weight came from an update");
        acc.axpy(&u.params, w).map_err(|e| e.context(format!("site {site_id}")))?;
    }
    acc.finish()
}

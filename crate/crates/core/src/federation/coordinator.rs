use std::collections::{BTreeMap, BTreeSet};

use super::aggregate::{aggregation_weights, fedavg_aggregate, SiteUpdate};
use super::protocol::Message;
use crate::datamodel::ParamVector;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Phase {
    /// Waiting for every site to join.
    Joining,
    /// Between rounds; the next step is `begin_round`.
    Idle,
    /// Round open; collecting one update per site.
    Collecting,
}

/// Synchronous FedAvg coordinator.
///
/// A round commits only after every joined site has delivered exactly one
/// update for it; the aggregate does not depend on arrival order.
#[derive(Debug)]
pub struct Coordinator {
    n_sites: usize,
    phase: Phase,
    round: u32,
    global: ParamVector,
    joined: BTreeSet<u16>,
    pending: BTreeMap<u16, (SiteUpdate, f64)>,
    last_weights: Vec<(usize, f64)>,
    last_train_losses: Vec<(usize, f64)>,
}

impl Coordinator {
    pub fn new(initial: ParamVector, n_sites: usize) -> Result<Self> {
        if n_sites == 0 || n_sites > usize::from(u16::MAX) {
            return Err(Error::Config(format!("invalid site count {n_sites}")));
        }
        Ok(Coordinator {
            n_sites,
            phase: Phase::Joining,
            round: 0,
            global: initial,
            joined: BTreeSet::new(),
            pending: BTreeMap::new(),
            last_weights: Vec::new(),
            last_train_losses: Vec::new(),
        })
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn round(&self) -> u32 {
        self.round
    }

    pub fn global(&self) -> &ParamVector {
        &self.global
    }

    /// Aggregation weights of the last committed round, ascending by site.
    pub fn last_weights(&self) -> &[(usize, f64)] {
        &self.last_weights
    }

    /// Reported training losses of the last committed round, ascending by site.
    pub fn last_train_losses(&self) -> &[(usize, f64)] {
        &self.last_train_losses
    }

    /// Opens the next round and returns the broadcast message.
    pub fn begin_round(&mut self) -> Result<Message> {
        if self.phase != Phase::Idle {
            return Err(Error::Protocol(format!("cannot begin a round while {:?}", self.phase)));
        }
        self.round += 1;
        self.phase = Phase::Collecting;
        Ok(Message::RoundBegin { round: self.round, params: self.global.clone() })
    }

    /// Feeds one inbound message. Returns the commit broadcast once the
    /// round's barrier is reached.
    pub fn handle(&mut self, msg: Message) -> Result<Option<Message>> {
        match msg {
            Message::Join { site_id } => {
                if self.phase != Phase::Joining {
                    return Err(Error::Protocol(format!("site {site_id} joined after training started")));
                }
                if usize::from(site_id) >= self.n_sites {
                    return Err(Error::Protocol(format!("site id {site_id} out of range")));
                }
                if !self.joined.insert(site_id) {
                    return Err(Error::Protocol(format!("site {site_id} joined twice")));
                }
                if self.joined.len() == self.n_sites {
                    self.phase = Phase::Idle;
                }
                Ok(None)
            }
            Message::RoundUpdate { round, site_id, params, n, train_loss } => {
                if self.phase != Phase::Collecting || round != self.round {
                    return Err(Error::Protocol(format!(
                        "update from site {site_id} for round {round} while round {} is {:?}",
                        self.round, self.phase
                    )));
                }
                if !self.joined.contains(&site_id) {
                    return Err(Error::Protocol(format!("update from unknown site {site_id}")));
                }
                if self.pending.contains_key(&site_id) {
                    return Err(Error::Protocol(format!("site {site_id} sent two updates in round {round}")));
                }
                self.global
                    .check_compatible(&params)
                    .map_err(|e| e.context(format!("site {site_id}, round {round}")))?;
                let update = SiteUpdate { site_id: usize::from(site_id), params, n };
                self.pending.insert(site_id, (update, train_loss));
                if self.pending.len() < self.n_sites {
                    return Ok(None);
                }
                let (updates, losses): (Vec<SiteUpdate>, Vec<(usize, f64)>) = std::mem::take(&mut self.pending)
                    .into_values()
                    .map(|(u, l)| {
                        let id = u.site_id;
                        (u, (id, l))
                    })
                    .unzip();
                self.last_weights = aggregation_weights(&updates)?;
                self.global = fedavg_aggregate(&updates).map_err(|e| e.context(format!("round {round}")))?;
                self.last_train_losses = losses;
                self.phase = Phase::Idle;
                Ok(Some(Message::RoundCommit { round, params: self.global.clone() }))
            }
            other => Err(Error::Protocol(format!("coordinator cannot accept {:?}", other.message_type()))),
        }
    }
}

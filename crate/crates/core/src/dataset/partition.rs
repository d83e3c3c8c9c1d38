use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SeededRng;

/// Per-site training/validating counts from the benchmark's site table.
pub const FULL_IID_TRAIN: [usize; 8] = [25; 8];
pub const FULL_IID_VAL: [usize; 8] = [5; 8];
pub const FULL_NONIID_TRAIN: [usize; 8] = [40, 35, 30, 25, 25, 20, 15, 10];
pub const FULL_NONIID_VAL: [usize; 8] = [8, 7, 6, 5, 5, 4, 3, 2];

/// Desk-scale analogues (40 train / 8 or 9 val in total). The non-IID
/// validation column would round to 0 for site 6; it is lifted to 1.
pub const DESK_IID_TRAIN: [usize; 8] = [5; 8];
pub const DESK_IID_VAL: [usize; 8] = [1; 8];
pub const DESK_NONIID_TRAIN: [usize; 8] = [8, 7, 6, 5, 5, 4, 3, 2];
pub const DESK_NONIID_VAL: [usize; 8] = [2, 1, 1, 1, 1, 1, 1, 1];

const TRAIN_STREAM: u64 = 0x74_7261_696e;
const VAL_STREAM: u64 = 0x76_616c;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Distribution {
    Iid,
    NonIid,
}

impl fmt::Display for Distribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Distribution::Iid => "iid",
            Distribution::NonIid => "noniid",
        })
    }
}

impl FromStr for Distribution {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "iid" => Ok(Distribution::Iid),
            "noniid" | "non-iid" => Ok(Distribution::NonIid),
            _ => Err(Error::Config(format!("unknown distribution {s:?} (expected iid or noniid)"))),
        }
    }
}

/// How many training and validating cases each site receives.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PartitionSchedule {
    pub kind: Distribution,
    pub train_counts: Vec<usize>,
    pub val_counts: Vec<usize>,
}

impl PartitionSchedule {
    /// The full-size 8-site schedule (200 training / 40 validating cases).
    pub fn full_scale(kind: Distribution) -> Self {
        let (train, val) = match kind {
            Distribution::Iid => (FULL_IID_TRAIN, FULL_IID_VAL),
            Distribution::NonIid => (FULL_NONIID_TRAIN, FULL_NONIID_VAL),
        };
        PartitionSchedule { kind, train_counts: train.to_vec(), val_counts: val.to_vec() }
    }

    /// The scaled 8-site schedule used for synthetic desk-scale runs.
    pub fn desk(kind: Distribution) -> Self {
        let (train, val) = match kind {
            Distribution::Iid => (DESK_IID_TRAIN, DESK_IID_VAL),
            Distribution::NonIid => (DESK_NONIID_TRAIN, DESK_NONIID_VAL),
        };
        PartitionSchedule { kind, train_counts: train.to_vec(), val_counts: val.to_vec() }
    }

    /// Arbitrary schedule; every site needs at least one case of each split.
    pub fn custom(kind: Distribution, train_counts: Vec<usize>, val_counts: Vec<usize>) -> Result<Self> {
        let s = PartitionSchedule { kind, train_counts, val_counts };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.train_counts.is_empty() || self.train_counts.len() != self.val_counts.len() {
            return Err(Error::Config("schedule needs equal-length, nonempty count lists".into()));
        }
        if self.train_counts.iter().chain(&self.val_counts).any(|&c| c == 0) {
            return Err(Error::Config("every site needs at least one training and one validating case".into()));
        }
        Ok(())
    }

    pub fn n_sites(&self) -> usize {
        self.train_counts.len()
    }

    pub fn total_train(&self) -> usize {
        self.train_counts.iter().sum()
    }

    pub fn total_val(&self) -> usize {
        self.val_counts.iter().sum()
    }
}

/// One site's share of the training and validating pools.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SitePartition {
    pub site_id: usize,
    pub train_ids: Vec<String>,
    pub val_ids: Vec<String>,
}

fn check_unique<'a>(ids: impl IntoIterator<Item = &'a String>, seen: &mut BTreeSet<&'a str>) -> Result<()> {
    for id in ids {
        if !seen.insert(id.as_str()) {
            return Err(Error::data("partition pools", format!("duplicate case id {id:?}")));
        }
    }
    Ok(())
}

/// Shuffle each pool with a seeded generator, then hand out contiguous blocks
/// in site order.
pub fn partition(
    train_pool: &[String],
    val_pool: &[String],
    schedule: &PartitionSchedule,
    seed: u64,
) -> Result<Vec<SitePartition>> {
    schedule.validate()?;
    if train_pool.len() != schedule.total_train() || val_pool.len() != schedule.total_val() {
        return Err(Error::Config(format!(
            "schedule wants {} train / {} val cases, pools hold {} / {}",
            schedule.total_train(),
            schedule.total_val(),
            train_pool.len(),
            val_pool.len()
        )));
    }
    let mut seen = BTreeSet::new();
    check_unique(train_pool, &mut seen)?;
    check_unique(val_pool, &mut seen)?;

    let mut train = train_pool.to_vec();
    let mut val = val_pool.to_vec();
    SeededRng::derived(seed, &[TRAIN_STREAM]).shuffle(&mut train);
    SeededRng::derived(seed, &[VAL_STREAM]).shuffle(&mut val);

    let mut train_iter = train.into_iter();
    let mut val_iter = val.into_iter();
    Ok(schedule
        .train_counts
        .iter()
        .zip(&schedule.val_counts)
        .enumerate()
        .map(|(site_id, (&nt, &nv))| SitePartition {
            site_id,
            train_ids: train_iter.by_ref().take(nt).collect(),
            val_ids: val_iter.by_ref().take(nv).collect(),
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pool(prefix: &str, n: usize) -> Vec<String> {
        (0..n).map(|i| format!("{prefix}{i:03}")).collect()
    }

    #[test]
    fn full_scale_totals() {
        for kind in [Distribution::Iid, Distribution::NonIid] {
            let s = PartitionSchedule::full_scale(kind);
            assert_eq!(s.total_train(), 200);
            assert_eq!(s.total_val(), 40);
            assert_eq!(s.n_sites(), 8);
        }
    }

    #[test]
    fn counts_follow_schedule() {
        let (t, v) = (pool("t", 200), pool("v", 40));
        let iid = partition(&t, &v, &PartitionSchedule::full_scale(Distribution::Iid), 1).unwrap();
        assert!(iid.iter().all(|p| p.train_ids.len() == 25 && p.val_ids.len() == 5));
        let non = partition(&t, &v, &PartitionSchedule::full_scale(Distribution::NonIid), 1).unwrap();
        assert_eq!((non[0].train_ids.len(), non[0].val_ids.len()), (40, 8));
        assert_eq!((non[7].train_ids.len(), non[7].val_ids.len()), (10, 2));
    }

    #[test]
    fn union_equals_pool() {
        let (t, v) = (pool("t", 200), pool("v", 40));
        let parts = partition(&t, &v, &PartitionSchedule::full_scale(Distribution::NonIid), 42).unwrap();
        let mut all: Vec<String> = parts.iter().flat_map(|p| p.train_ids.clone()).collect();
        all.sort();
        assert_eq!(all, t);
    }

    #[test]
    fn rejects_bad_pools() {
        let s = PartitionSchedule::full_scale(Distribution::Iid);
        let v = pool("v", 40);
        assert!(matches!(partition(&pool("t", 199), &v, &s, 0), Err(Error::Config(_))));
        let mut t = pool("t", 200);
        t[5] = t[4].clone();
        assert!(matches!(partition(&t, &v, &s, 0), Err(Error::Data { .. })));
        let mut v2 = v.clone();
        v2[0] = "t000".into();
        assert!(matches!(partition(&pool("t", 200), &v2, &s, 0), Err(Error::Data { .. })));
    }

    #[test]
    fn desk_schedules() {
        let iid = PartitionSchedule::desk(Distribution::Iid);
        assert_eq!((iid.total_train(), iid.total_val()), (40, 8));
        let non = PartitionSchedule::desk(Distribution::NonIid);
        assert_eq!((non.total_train(), non.total_val()), (40, 9));
        assert!(non.val_counts.iter().all(|&c| c >= 1));
    }

    #[test]
    fn distribution_parses() {
        assert_eq!("IID".parse::<Distribution>().unwrap(), Distribution::Iid);
        assert_eq!("noniid".parse::<Distribution>().unwrap(), Distribution::NonIid);
        assert!("skewed".parse::<Distribution>().is_err());
    }
}

//! Federated dose-prediction benchmark on OpenKBP-style head-and-neck cases.
//!
//! A small multi-scale 3D network learns dose from anatomy. Sites either
//! train alone or share weights through federated averaging; a pooled
//! model serves as the reference. Test predictions get OpenKBP scores.

pub mod datamodel;
pub mod dataset;
mod error;
pub mod federation;
pub mod metrics;
pub mod model;
pub mod report;
pub mod rng;

pub use datamodel::{
    Case, Dims, LayerSpec, Manifest, Oar, ParamVector, Prescription, RoiKind, RoiLabel, Spacing, Split, VoxelGrid,
};
pub use dataset::{Distribution, PartitionSchedule, SitePartition};
pub use error::{Error, Result};
pub use federation::{ExecMode, ExperimentReport, RoundRecord, RunOptions, Scenario, ScenarioConfig, Transport};
pub use metrics::ScoreReport;
pub use model::{DoseNet, ModelConfig, TrainConfig};

//! Loading cases and splitting them across sites.

mod native;
mod openkbp;
mod partition;
mod phantom;

pub use native::{export_native, ingest_native};
pub use openkbp::{ingest_openkbp, OpenKbpConfig};
pub use partition::{
    partition, Distribution, PartitionSchedule, SitePartition, DESK_IID_TRAIN, DESK_IID_VAL, DESK_NONIID_TRAIN,
    DESK_NONIID_VAL, FULL_IID_TRAIN, FULL_IID_VAL, FULL_NONIID_TRAIN, FULL_NONIID_VAL,
};
pub use phantom::{
    desk_phantoms, generate_phantom, generate_phantom_set, DESK_N_TEST, DESK_N_TRAIN, DOSE_FALLOFF_VOXELS,
    MIN_PHANTOM_DIM, PHANTOM_SPACING_MM, POSSIBLE_DOSE_THRESHOLD_GY,
};

pub(crate) use native::{f32_from_le_bytes, f32_le_bytes};

//! Shared domain types for grids and cases, plus flat parameter vectors.

mod case;
mod grid;
mod params;
mod roi;

pub use case::{Case, Split};
pub use grid::{linear_index, Dims, Spacing, VoxelGrid};
pub use params::{axpy_scale, LayerSpec, Manifest, ParamAccumulator, ParamVector};
pub use roi::{Oar, Prescription, RoiKind, RoiLabel};

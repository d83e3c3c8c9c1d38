//! Small 3D dose-prediction network with softmax-gated multi-scale fusion.
//! Trained on masked MAE with hand-derived gradients.
// index loops read closer to the math in the kernels
#![allow(clippy::needless_range_loop)]

mod checkpoint;
mod config;
pub(crate) mod loss;
mod net;
mod optim;
pub mod tensor;

pub use checkpoint::{decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint};
pub use config::{ModelConfig, TrainConfig, DEFAULT_IN_CHANNELS, DESK_LEARNING_RATE};
pub use loss::mae_loss;
pub use net::{DoseNet, ForwardPass};
pub use optim::sgd_step;
pub use tensor::Volume;

use crate::datamodel::{Case, ParamVector, VoxelGrid};
use crate::error::Result;

pub fn init_params(cfg: &ModelConfig) -> Result<ParamVector> {
    Ok(DoseNet::new(*cfg)?.init_params())
}

pub fn forward(cfg: &ModelConfig, params: &ParamVector, input: &Volume) -> Result<VoxelGrid> {
    DoseNet::new(*cfg)?.forward(params, input)
}

pub fn backward(cfg: &ModelConfig, params: &ParamVector, batch: &[&Case]) -> Result<(ParamVector, f64)> {
    DoseNet::new(*cfg)?.backward(params, batch)
}

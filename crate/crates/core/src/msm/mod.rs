//! The multi-scale super-resolution network.
//!
//! A model is a chain of `n` independent 2x subnetworks. Each one extracts
//! features with two convolutions and two information distillation blocks,
//! projects them to a signed elevation residual with a stride-2 transposed
//! convolution, and adds the residual to the nearest-neighbour upsampled
//! input.

mod blocks;
mod checkpoint;
mod model;

pub use blocks::{
    idb_forward, idb_graph, subnet_forward, subnet_graph, ConvLayer, IdbParams, Normalization, SubnetParams,
    IDB_PARAMS, SUBNET_PARAMS,
};
pub use checkpoint::{load_model, load_model_file, save_model, save_model_file};
pub use model::{
    msm_forward, multiscale_loss, multiscale_loss_tape, Manifest, ModelConfig, MsmModel, TrainingMeta,
    DEFAULT_FEATURES, DEFAULT_SPLIT, FORMAT_VERSION,
};

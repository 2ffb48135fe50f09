//! Training data preparation, the training loop and tiled inference.

mod data;
mod reconstruct;
mod train;

pub use data::{build_blocks, sample_batch, Batch, BlockStore, TrainConfig};
pub use reconstruct::{
    forward_grid, reconstruct, reconstruct_tiled, reconstruct_whole, tile_geometry, TILE_BLOCK, TILE_OVERLAP,
};
pub use train::{init_model, train, train_step, train_with, write_loss_csv, LossRecord};

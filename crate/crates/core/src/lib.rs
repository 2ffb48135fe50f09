//! Multi-scale convolutional super-resolution for urban digital elevation
//! models.
//!
//! The crate is organised by stage of the experimental workflow:
//!
//! - [`raster`]: elevation grids, ESRI ASCII I/O, NN downsampling, slope, tiling
//! - [`interp`]: NN / bilinear / cubic-convolution / IDW upsampling baselines
//! - [`nn`]: dense tensors, reverse-mode differentiation, He init, Adam
//! - [`msm`]: the multi-scale network, its loss and checkpoint format
//! - [`pipeline`]: training blocks, batch sampling, training loop, tiled inference
//! - [`eval`]: numerical (MAE/RMSE/STD, binned) and morphological (road
//!   profile PCC, building boundary) accuracy
//! - [`synth`]: procedural urban scenes used for training and tests
//! - [`cli`]: the `demsr` command-line front end
//!
//! See the `examples/` directory of this crate for one runnable program per
//! capability.

pub mod cli;
pub mod error;
pub mod eval;
pub mod interp;
pub mod msm;
pub mod nn;
pub mod pipeline;
pub mod raster;
pub mod synth;

pub use error::{Error, Result};
pub use raster::Grid;

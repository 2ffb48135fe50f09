//! Minimal dense-tensor arithmetic with reverse-mode differentiation, He
//! initialisation and the Adam optimiser. All arithmetic is `f64`.

mod adam;
pub mod gradcheck;
mod kernels;
mod ops;
mod param;
mod tape;
mod tensor;

pub use adam::{adam_step, AdamConfig};
pub use ops::{
    add, concat_channels, conv2d, conv2d_stride2, narrow_channels, relu, split_channels, transposed_conv2d,
    upsample_nearest,
};
pub use param::{he_init, Parameter};
pub use tape::{Eager, Gradients, Graph, Tape, Var};
pub use tensor::Tensor;

use rand::SeedableRng;

/// The crate-wide deterministic generator. Every stochastic operation takes
/// one explicitly.
pub type SeededRng = rand_chacha::ChaCha8Rng;

pub fn seeded_rng(seed: u64) -> SeededRng {
    SeededRng::seed_from_u64(seed)
}

//! Adversarial semantic image synthesis with a segmentation discriminator.
//!
//! The crate is `no_std` (with `alloc`) and contains everything that is pure
//! computation: a small reverse-mode autodiff engine over dense `f64`
//! tensors, the generator / U-Net discriminator, the (N+1)-class adversarial
//! objectives with LabelMix consistency, 3D-noise sampling, procedural scene
//! synthesis, evaluation metrics, and the optimizer / training step.
//!
//! File formats, artifacts and the command line live in the `oasis-lab`
//! companion crate.
//!
//! Features:
//! - `std` (default): enables runtime CPU dispatch in the GEMM kernels.
//! - `parallel`: evaluates the samples of a batch on a rayon pool. Gradients
//!   are reduced in sample order, so results do not depend on thread count.

#![cfg_attr(not(feature = "std"), no_std)]
// Index loops mirror the tensor layout; `!(x < t)` rejects NaN along with large values.
#![allow(
    clippy::needless_range_loop,
    clippy::neg_cmp_op_on_partial_ord,
    clippy::large_enum_variant
)]

extern crate alloc;

mod error;
pub mod math;

pub mod evaluation;
pub mod gradcheck;
pub mod graph;
pub mod labelmix;
pub mod layers;
pub mod losses;
pub mod metrics;
pub mod models;
pub mod noise;
pub mod optim;
pub mod params;
pub mod rng;
pub mod scene;
pub mod tensor;
pub mod trainer;

pub use error::{Error, Result};
pub use graph::{Graph, Var};
pub use labelmix::Mask;
pub use models::{Discriminator, Generator, ModelConfig};

pub use params::ParamStore;
pub use rng::Rng;
pub use scene::{LabelMap, Sample, SceneConfig};

pub use tensor::Tensor;

//! Latent representation learning for 3-D scalar volumes.
//!
//! The crate bundles a small reverse-mode differentiation engine, a 3-D
//! convolutional encoder–decoder trained with an (α, β)-weighted objective
//! that mixes reconstruction, per-sample KL and an MMD penalty on the
//! aggregate posterior, and the downstream analysis stack (ε-SVR with grid
//! search, PCA and PLS projections, image and regression metrics). A
//! synthetic phantom generator with known generating factors drives the
//! end-to-end checks.

pub mod cli;
pub mod data;
pub mod error;
pub mod latent_analysis;
pub mod metrics;
pub mod noise;
pub mod objectives;
pub mod tensor;
pub mod vae3d;

pub use error::{Error, Result};

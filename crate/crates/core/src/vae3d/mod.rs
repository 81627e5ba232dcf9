//! 3-D convolutional encoder–decoder with a diagonal Gaussian posterior.
//!
//! Encoder: `stages × (conv3d k=3 s=2 p=1, bias, leaky ReLU)`, flatten, and
//! two affine heads for μ and log σ². Decoder: affine to the bottleneck grid,
//! leaky ReLU, then `stages × (conv3d_transpose, bias)` with leaky ReLU
//! between stages and a sigmoid at the output.

mod checkpoint;
mod config;
mod model;
mod train;

pub use checkpoint::{decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, CHECKPOINT_MAGIC};
pub use config::{ModelConfig, Preset, DEFAULT_CHANNELS};
pub use model::{
    parameter_layout, reparameterize, BoundParams, GaussianPosterior, LatentVector, ParamSpec, Vae3d,
    LOGVAR_CLAMP,
};
pub use train::{train, Adam, LossRecord, TrainConfig};

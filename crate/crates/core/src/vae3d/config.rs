use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Named (α, β) parametrizations.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Preset {
    #[serde(rename = "AE")]
    Ae,
    #[serde(rename = "VAE")]
    Vae,
    #[serde(rename = "BetaVAE")]
    BetaVae,
    #[serde(rename = "InfoVAE-best")]
    InfoVaeBest,
}

impl Preset {
    pub const ALL: [Preset; 4] = [Preset::Ae, Preset::Vae, Preset::BetaVae, Preset::InfoVaeBest];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Ae => "AE",
            Preset::Vae => "VAE",
            Preset::BetaVae => "BetaVAE",
            Preset::InfoVaeBest => "InfoVAE-best",
        }
    }

    /// `(alpha, beta, deterministic_encoder)`.
    pub fn weights(self) -> (f64, f64, bool) {
        match self {
            Preset::Ae => (0.0, 0.0, true),
            Preset::Vae => (1.0, 1.0, false),
            // Keeps the tuned baseline values as published even though
            // beta - alpha is negative here.
            Preset::BetaVae => (0.0025, 0.0, false),
            Preset::InfoVaeBest => (0.0, 1.0, false),
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Preset::ALL
            .into_iter()
            .find(|p| p.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| {
                Error::invalid(format!(
                    "unknown preset {s:?}; expected one of AE, VAE, BetaVAE, InfoVAE-best"
                ))
            })
    }
}

pub const DEFAULT_CHANNELS: [usize; 4] = [8, 16, 32, 64];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub alpha: f64,
    pub beta: f64,
    pub latent_dim: usize,
    pub input_extent: usize,
    pub channels: Vec<usize>,
    pub deterministic_encoder: bool,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig::from_preset(Preset::InfoVaeBest)
    }
}

impl ModelConfig {
    pub fn from_preset(preset: Preset) -> Self {
        let (alpha, beta, deterministic_encoder) = preset.weights();
        ModelConfig {
            alpha,
            beta,
            latent_dim: 32,
            input_extent: 16,
            channels: DEFAULT_CHANNELS.to_vec(),
            deterministic_encoder,
            seed: 0,
        }
    }

    pub fn stages(&self) -> usize {
        self.channels.len()
    }

    /// Spatial extent after the last encoder stage.
    pub fn bottleneck_extent(&self) -> usize {
        self.input_extent >> self.stages()
    }

    /// Flattened encoder feature length.
    pub fn feature_len(&self) -> usize {
        let s = self.bottleneck_extent();
        self.channels.last().copied().unwrap_or(1) * s * s * s
    }

    pub fn validate(&self) -> Result<()> {
        if self.channels.is_empty() || self.channels.iter().any(|&c| c == 0) {
            return Err(Error::invalid(format!("channel widths must be positive, got {:?}", self.channels)));
        }
        if self.stages() >= usize::BITS as usize || self.input_extent == 0 {
            return Err(Error::invalid("input extent must be positive"));
        }
        let step = 1usize << self.stages();
        if self.input_extent % step != 0 {
            return Err(Error::invalid(format!(
                "input extent {} is not divisible by 2^{} = {step}",
                self.input_extent,
                self.stages()
            )));
        }
        if self.latent_dim < 2 {
            return Err(Error::invalid(format!("latent dim {} < 2", self.latent_dim)));
        }
        if !self.alpha.is_finite() || !self.beta.is_finite() {
            return Err(Error::invalid("alpha and beta must be finite"));
        }
        Ok(())
    }

    /// Closed-form parameter count for the encoder (convs + both heads).
    pub fn encoder_parameter_count(&self) -> usize {
        let mut total = 0;
        let mut cin = 1;
        for &c in &self.channels {
            total += c * cin * 27 + c;
            cin = c;
        }
        total + 2 * (self.feature_len() * self.latent_dim + self.latent_dim)
    }

    /// Closed-form parameter count for the decoder (seed affine + transposed convs).
    pub fn decoder_parameter_count(&self) -> usize {
        let f = self.feature_len();
        let mut total = self.latent_dim * f + f;
        let widths: Vec<usize> = self.channels.iter().rev().copied().chain([1]).collect();
        for pair in widths.windows(2) {
            total += pair[0] * pair[1] * 27 + pair[1];
        }
        total
    }
}

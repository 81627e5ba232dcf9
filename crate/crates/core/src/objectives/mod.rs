//! Training losses in minimization form.
//!
//! The combined objective is `rec + α·kl + (β − α)·mmd`, where `rec` is the
//! voxel-mean squared error (unit-variance Gaussian decoder), `kl` is the
//! batch-mean KL of each diagonal posterior to N(0, I), and `mmd` compares
//! latent samples against fresh prior draws.

mod mi_oracle;

pub use mi_oracle::{
    compose_information_form, compose_marginal_form, mi_decomposition_oracle, DiscreteJoint,
    InformationTerms,
};

use crate::data::Volume3D;
use crate::error::{Error, Result};
use crate::noise::NoiseSource;
use crate::tensor::{Graph, Tensor, Var};
use crate::vae3d::{BoundParams, GaussianPosterior, Vae3d};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MmdEstimator {
    Biased,
    Unbiased,
}

/// RBF kernel `k(z, z') = exp(-‖z − z'‖² / bandwidth)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KernelConfig {
    pub bandwidth: f64,
    pub estimator: MmdEstimator,
}

impl KernelConfig {
    /// Bandwidth `2·d`, biased estimator.
    pub fn for_latent_dim(d: usize) -> Self {
        KernelConfig {
            bandwidth: 2.0 * d as f64,
            estimator: MmdEstimator::Biased,
        }
    }

    pub fn unbiased(self) -> Self {
        KernelConfig {
            estimator: MmdEstimator::Unbiased,
            ..self
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.bandwidth > 0.0) || !self.bandwidth.is_finite() {
            return Err(Error::invalid(format!("kernel bandwidth {} must be finite and > 0", self.bandwidth)));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossBreakdown {
    pub rec: f64,
    pub kl: f64,
    pub mmd: f64,
    pub total: f64,
}

/// Graph handles for each term of one objective evaluation.
#[derive(Clone, Copy, Debug)]
pub struct LossTerms {
    pub rec: Var,
    pub kl: Var,
    pub mmd: Var,
    pub total: Var,
}

impl LossTerms {
    pub fn values(&self, g: &Graph) -> LossBreakdown {
        LossBreakdown {
            rec: g.value(self.rec).item(),
            kl: g.value(self.kl).item(),
            mmd: g.value(self.mmd).item(),
            total: g.value(self.total).item(),
        }
    }
}

pub fn reconstruction_loss(x: &Volume3D, xhat: &Volume3D) -> Result<f64> {
    if x.dims() != xhat.dims() {
        return Err(Error::shape("reconstruction_loss", &x.dims(), &xhat.dims()));
    }
    let sum: f64 = x
        .data()
        .iter()
        .zip(xhat.data())
        .map(|(&a, &b)| {
            let d = a as f64 - b as f64;
            d * d
        })
        .sum();
    Ok(sum / x.len() as f64)
}

/// `½ Σ (μ² + exp(logvar) − 1 − logvar)`.
pub fn kl_diag_gaussian(post: &GaussianPosterior) -> f64 {
    0.5 * post
        .mu
        .iter()
        .zip(&post.logvar)
        .map(|(m, lv)| m * m + lv.exp() - 1.0 - lv)
        .sum::<f64>()
}

fn kernel_mean(a: &[Vec<f64>], b: &[Vec<f64>], bandwidth: f64, skip_diagonal: bool) -> f64 {
    let mut total = 0.0;
    let mut count = 0usize;
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            if skip_diagonal && i == j {
                continue;
            }
            let d2: f64 = x.iter().zip(y).map(|(p, q)| (p - q) * (p - q)).sum();
            total += (-d2 / bandwidth).exp();
            count += 1;
        }
    }
    total / count as f64
}

/// Kernel maximum mean discrepancy between two sample sets.
pub fn mmd(z_post: &[Vec<f64>], z_prior: &[Vec<f64>], kernel: KernelConfig) -> Result<f64> {
    kernel.validate()?;
    if z_post.is_empty() || z_prior.is_empty() {
        return Err(Error::invalid("mmd: both sample sets must be non-empty"));
    }
    let d = z_post[0].len();
    if z_post.iter().chain(z_prior).any(|z| z.len() != d) {
        return Err(Error::invalid("mmd: samples have inconsistent dimension"));
    }
    let unbiased = kernel.estimator == MmdEstimator::Unbiased;
    if unbiased && (z_post.len() < 2 || z_prior.len() < 2) {
        return Err(Error::invalid("mmd: unbiased estimator needs at least 2 samples per set"));
    }
    let h = kernel.bandwidth;
    Ok(kernel_mean(z_post, z_post, h, unbiased) + kernel_mean(z_prior, z_prior, h, unbiased)
        - 2.0 * kernel_mean(z_post, z_prior, h, false))
}

pub fn reconstruction_loss_var(g: &Graph, x: Var, xhat: Var) -> Result<Var> {
    Ok(g.mean(g.square(g.sub(x, xhat)?)))
}

/// Batch mean of the per-sample KL for `[N, d]` posterior tensors.
pub fn kl_var(g: &Graph, mu: Var, logvar: Var) -> Result<Var> {
    let shape = g.shape(mu);
    let (n, d) = (shape[0], shape[1]);
    let inner = g.sub(g.add(g.square(mu), g.exp(logvar))?, logvar)?;
    let summed = g.add_scalar(g.sum(inner), -((n * d) as f64));
    Ok(g.scale(summed, 0.5 / n as f64))
}

fn kernel_block(g: &Graph, a: Var, b: Var, bandwidth: f64) -> Result<Var> {
    Ok(g.exp(g.scale(g.sq_dist(a, b)?, -1.0 / bandwidth)))
}

/// Differentiable [`mmd`] on `[n, d]` and `[m, d]` sample tensors.
pub fn mmd_var(g: &Graph, a: Var, b: Var, kernel: KernelConfig) -> Result<Var> {
    kernel.validate()?;
    let (n, m) = (g.shape(a)[0], g.shape(b)[0]);
    let h = kernel.bandwidth;
    let within = |x: Var, count: usize| -> Result<Var> {
        let k = kernel_block(g, x, x, h)?;
        Ok(match kernel.estimator {
            MmdEstimator::Biased => g.mean(k),
            MmdEstimator::Unbiased => {
                if count < 2 {
                    return Err(Error::invalid("mmd: unbiased estimator needs at least 2 samples per set"));
                }
                // The diagonal is exactly exp(0) = 1.
                let off = g.add_scalar(g.sum(k), -(count as f64));
                g.scale(off, 1.0 / (count * (count - 1)) as f64)
            }
        })
    };
    let kxx = within(a, n)?;
    let kyy = within(b, m)?;
    let kxy = g.mean(kernel_block(g, a, b, h)?);
    g.sub(g.add(kxx, kyy)?, g.scale(kxy, 2.0))
}

/// Weights of the objective `rec + α·kl + (β − α)·mmd`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ObjectiveWeights {
    pub alpha: f64,
    pub beta: f64,
}

impl ObjectiveWeights {
    pub fn kl_coefficient(&self) -> f64 {
        self.alpha
    }

    pub fn mmd_coefficient(&self) -> f64 {
        self.beta - self.alpha
    }
}

/// Records the full objective for a `[N, 1, E, E, E]` batch. Noise is drawn
/// as `N·d` posterior draws (stochastic encoders only) followed by `N·d`
/// prior draws. Terms with a zero coefficient are left out of `total`.
pub fn infovae_objective(
    g: &Graph,
    model: &Vae3d,
    params: &BoundParams,
    x: Var,
    weights: ObjectiveWeights,
    kernel: KernelConfig,
    noise: &mut dyn NoiseSource,
) -> Result<LossTerms> {
    let n = g.shape(x)[0];
    let d = model.config().latent_dim;
    let (mu, logvar) = model.encode_graph(g, params, x)?;
    let z = if model.config().deterministic_encoder {
        mu
    } else {
        let eps = g.constant(Tensor::new(vec![n, d], noise.standard_normal(n * d))?);
        let sigma = g.exp(g.scale(logvar, 0.5));
        g.add(mu, g.mul(sigma, eps)?)?
    };
    let prior = g.constant(Tensor::new(vec![n, d], noise.standard_normal(n * d))?);

    let xhat = model.decode_graph(g, params, z)?;
    let rec = reconstruction_loss_var(g, x, xhat)?;
    let kl = kl_var(g, mu, logvar)?;
    let mmd = mmd_var(g, z, prior, kernel)?;

    let mut total = rec;
    if weights.kl_coefficient() != 0.0 {
        total = g.add(total, g.scale(kl, weights.kl_coefficient()))?;
    }
    if weights.mmd_coefficient() != 0.0 {
        total = g.add(total, g.scale(mmd, weights.mmd_coefficient()))?;
    }
    Ok(LossTerms { rec, kl, mmd, total })
}

pub fn batch_tensor(volumes: &[Volume3D]) -> Result<Tensor> {
    let Some(first) = volumes.first() else {
        return Err(Error::invalid("empty batch"));
    };
    let [h, w, d] = first.dims();
    let mut data = Vec::with_capacity(volumes.len() * first.len());
    for v in volumes {
        if v.dims() != first.dims() {
            return Err(Error::shape("batch", &first.dims(), &v.dims()));
        }
        data.extend(v.data().iter().map(|&x| x as f64));
    }
    Tensor::new(vec![volumes.len(), 1, d, w, h], data)
}

/// Value-only evaluation of the objective on a batch of volumes.
pub fn infovae_loss(
    x_batch: &[Volume3D],
    model: &Vae3d,
    weights: ObjectiveWeights,
    kernel: KernelConfig,
    noise: &mut dyn NoiseSource,
) -> Result<LossBreakdown> {
    let g = Graph::new();
    let params = model.bind(&g, false);
    let x = g.constant(batch_tensor(x_batch)?);
    Ok(infovae_objective(&g, model, &params, x, weights, kernel, noise)?.values(&g))
}

/// `−(rec + kl)`: the maximized-form bound, using the same draws as
/// [`infovae_loss`] with α = β = 1.
pub fn elbo(x_batch: &[Volume3D], model: &Vae3d, noise: &mut dyn NoiseSource) -> Result<f64> {
    if model.config().deterministic_encoder {
        return Err(Error::invalid("elbo requires a stochastic encoder"));
    }
    let weights = ObjectiveWeights { alpha: 1.0, beta: 1.0 };
    let kernel = KernelConfig::for_latent_dim(model.config().latent_dim);
    Ok(-infovae_loss(x_batch, model, weights, kernel, noise)?.total)
}

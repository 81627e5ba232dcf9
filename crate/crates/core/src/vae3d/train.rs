use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::model::Vae3d;
use crate::data::Volume3D;
use crate::error::{Error, Result};
use crate::noise::NoiseStream;
use crate::objectives::{infovae_objective, KernelConfig, ObjectiveWeights};
use crate::tensor::{Graph, Tensor};

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub iterations: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            iterations: 5000,
            batch_size: 2,
            learning_rate: 1e-4,
            seed: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossRecord {
    pub iteration: usize,
    pub rec: f64,
    pub kl: f64,
    pub mmd: f64,
    pub total: f64,
}

/// Adam with bias correction.
#[derive(Clone, Debug)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(learning_rate: f64, params: &[Tensor]) -> Self {
        Adam {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: params.iter().map(|p| vec![0.0; p.numel()]).collect(),
            v: params.iter().map(|p| vec![0.0; p.numel()]).collect(),
        }
    }

    pub fn update(&mut self, params: &[Tensor], grads: &[Tensor]) -> Result<Vec<Tensor>> {
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        let mut out = Vec::with_capacity(params.len());
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            let data = p
                .data()
                .iter()
                .zip(g.data())
                .zip(m.iter_mut().zip(v.iter_mut()))
                .map(|((&w, &g), (m, v))| {
                    *m = self.beta1 * *m + (1.0 - self.beta1) * g;
                    *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
                    let mhat = *m / c1;
                    let vhat = *v / c2;
                    w - self.learning_rate * mhat / (vhat.sqrt() + self.eps)
                })
                .collect();
            out.push(Tensor::new(p.shape().to_vec(), data)?);
        }
        Ok(out)
    }
}

const NOISE_STREAM_SALT: u64 = 0x6E6F_6973_655F_7331;

/// Minimizes `rec + α·kl + (β − α)·mmd` with Adam on random minibatches.
/// Batches are drawn without replacement within a step (with replacement
/// when the pool is smaller than the batch). Returns one record per step.
pub fn train(
    model: &mut Vae3d,
    volumes: &[Volume3D],
    cfg: &TrainConfig,
    mut on_step: impl FnMut(&LossRecord),
) -> Result<Vec<LossRecord>> {
    if volumes.is_empty() || cfg.batch_size == 0 {
        return Err(Error::invalid("training needs at least one volume and batch size >= 1"));
    }
    if !(cfg.learning_rate > 0.0) {
        return Err(Error::invalid(format!("learning rate {} must be > 0", cfg.learning_rate)));
    }
    let e = model.config().input_extent;
    if let Some(bad) = volumes.iter().find(|v| !v.is_cube(e)) {
        return Err(Error::shape("train", &bad.dims(), &[e, e, e]));
    }
    let voxels = e * e * e;
    let pool: Vec<Vec<f64>> = volumes.iter().map(|v| v.data().iter().map(|&x| x as f64).collect()).collect();

    let weights = ObjectiveWeights {
        alpha: model.config().alpha,
        beta: model.config().beta,
    };
    let kernel = KernelConfig::for_latent_dim(model.config().latent_dim);
    let mut batch_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut noise = NoiseStream::new(cfg.seed ^ NOISE_STREAM_SALT);
    let mut optimizer = Adam::new(cfg.learning_rate, model.params());
    let mut log = Vec::with_capacity(cfg.iterations);

    for iteration in 0..cfg.iterations {
        let picks: Vec<usize> = if pool.len() >= cfg.batch_size {
            index::sample(&mut batch_rng, pool.len(), cfg.batch_size).into_vec()
        } else {
            (0..cfg.batch_size).map(|_| batch_rng.random_range(0..pool.len())).collect()
        };
        let mut data = Vec::with_capacity(cfg.batch_size * voxels);
        for &i in &picks {
            data.extend_from_slice(&pool[i]);
        }
        let batch = Tensor::new(vec![cfg.batch_size, 1, e, e, e], data)?;

        let g = Graph::new();
        let params = model.bind(&g, true);
        let x = g.constant(batch);
        let terms = infovae_objective(&g, model, &params, x, weights, kernel, &mut noise)?;
        let values = terms.values(&g);
        if !values.total.is_finite() {
            return Err(Error::Numeric(format!("non-finite loss at iteration {iteration}: {values:?}")));
        }
        let grads = g.backward(terms.total)?;
        let grads: Vec<Tensor> = params
            .vars
            .iter()
            .zip(model.params())
            .map(|(&v, p)| grads.get_or_zeros(v, p.shape()))
            .collect();
        let updated = optimizer.update(model.params(), &grads)?;
        model.set_params(updated)?;

        let record = LossRecord {
            iteration,
            rec: values.rec,
            kl: values.kl,
            mmd: values.mmd,
            total: values.total,
        };
        on_step(&record);
        log.push(record);
    }
    Ok(log)
}

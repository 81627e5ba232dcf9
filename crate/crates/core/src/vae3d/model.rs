use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::ModelConfig;
use crate::data::Volume3D;
use crate::error::{Error, Result};
use crate::tensor::{ConvGeometry, Graph, Tensor, Var};

pub const LOGVAR_CLAMP: (f64, f64) = (-20.0, 20.0);
const STAGE_GEOMETRY: ConvGeometry = ConvGeometry {
    kernel: 3,
    stride: 2,
    padding: 1,
};

/// Diagonal Gaussian `q(z | x)` as `(μ, log σ²)`.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianPosterior {
    pub mu: Vec<f64>,
    pub logvar: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LatentVector {
    pub z: Vec<f64>,
}

/// `z = μ` when deterministic, otherwise `z = μ + exp(logvar / 2) ⊙ noise`.
pub fn reparameterize(post: &GaussianPosterior, noise: &[f64], deterministic: bool) -> Result<LatentVector> {
    if deterministic {
        return Ok(LatentVector { z: post.mu.clone() });
    }
    if noise.len() != post.mu.len() || post.logvar.len() != post.mu.len() {
        return Err(Error::shape("reparameterize", &[post.mu.len()], &[noise.len()]));
    }
    let z = post
        .mu
        .iter()
        .zip(&post.logvar)
        .zip(noise)
        .map(|((m, lv), n)| m + (lv.clamp(LOGVAR_CLAMP.0, LOGVAR_CLAMP.1) * 0.5).exp() * n)
        .collect();
    Ok(LatentVector { z })
}

/// Name and shape of one parameter tensor, in declaration order.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    /// Fan-in for initialization; zero marks a bias.
    pub fan_in: usize,
}

pub fn parameter_layout(cfg: &ModelConfig) -> Vec<ParamSpec> {
    let mut specs = Vec::new();
    let mut push = |name: String, shape: Vec<usize>, fan_in: usize| specs.push(ParamSpec { name, shape, fan_in });
    let d = cfg.latent_dim;
    let f = cfg.feature_len();

    let mut cin = 1;
    for (i, &c) in cfg.channels.iter().enumerate() {
        push(format!("enc.conv{i}.weight"), vec![c, cin, 3, 3, 3], cin * 27);
        push(format!("enc.conv{i}.bias"), vec![c], 0);
        cin = c;
    }
    push("enc.mu.weight".into(), vec![f, d], f);
    push("enc.mu.bias".into(), vec![d], 0);
    push("enc.logvar.weight".into(), vec![f, d], f);
    push("enc.logvar.bias".into(), vec![d], 0);

    push("dec.seed.weight".into(), vec![d, f], d);
    push("dec.seed.bias".into(), vec![f], 0);
    let widths: Vec<usize> = cfg.channels.iter().rev().copied().chain([1]).collect();
    for (i, pair) in widths.windows(2).enumerate() {
        push(format!("dec.deconv{i}.weight"), vec![pair[0], pair[1], 3, 3, 3], pair[0] * 27);
        push(format!("dec.deconv{i}.bias"), vec![pair[1]], 0);
    }
    specs
}

/// Encoder–decoder weights plus the configuration that shapes them.
#[derive(Clone, Debug, PartialEq)]
pub struct Vae3d {
    config: ModelConfig,
    layout: Vec<ParamSpec>,
    params: Vec<Tensor>,
}

/// Parameter leaves bound into one [`Graph`].
pub struct BoundParams {
    pub vars: Vec<Var>,
}

impl Vae3d {
    /// He-style init: weights uniform in `±sqrt(6 / fan_in)`, biases zero.
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let layout = parameter_layout(&config);
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let params = layout
            .iter()
            .map(|spec| {
                let n: usize = spec.shape.iter().product();
                let data = if spec.fan_in == 0 {
                    vec![0.0; n]
                } else {
                    let bound = (6.0 / spec.fan_in as f64).sqrt();
                    (0..n).map(|_| rng.random_range(-bound..bound)).collect()
                };
                Tensor::new(spec.shape.clone(), data)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Vae3d { config, layout, params })
    }

    pub fn from_parts(config: ModelConfig, params: Vec<Tensor>) -> Result<Self> {
        config.validate()?;
        let layout = parameter_layout(&config);
        if layout.len() != params.len() || layout.iter().zip(&params).any(|(s, p)| s.shape != p.shape()) {
            return Err(Error::invalid("parameter tensors do not match the configuration layout"));
        }
        Ok(Vae3d { config, layout, params })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn layout(&self) -> &[ParamSpec] {
        &self.layout
    }

    pub fn params(&self) -> &[Tensor] {
        &self.params
    }

    pub fn set_params(&mut self, params: Vec<Tensor>) -> Result<()> {
        if params.len() != self.params.len() || params.iter().zip(&self.params).any(|(a, b)| a.shape() != b.shape()) {
            return Err(Error::invalid("replacement parameters have the wrong layout"));
        }
        self.params = params;
        Ok(())
    }

    pub fn parameter_count(&self) -> usize {
        self.params.iter().map(Tensor::numel).sum()
    }

    /// Parameter count of the encoder half, computed from the live tensors.
    pub fn encoder_parameters(&self) -> usize {
        self.layout
            .iter()
            .zip(&self.params)
            .filter(|(s, _)| s.name.starts_with("enc."))
            .map(|(_, p)| p.numel())
            .sum()
    }

    pub fn decoder_parameters(&self) -> usize {
        self.parameter_count() - self.encoder_parameters()
    }

    pub fn param_index(&self, name: &str) -> Option<usize> {
        self.layout.iter().position(|s| s.name == name)
    }

    /// Overwrites both encoder heads with zeros.
    pub fn zero_heads(&mut self) {
        for name in ["enc.mu.weight", "enc.mu.bias", "enc.logvar.weight", "enc.logvar.bias"] {
            let i = self.param_index(name).expect("head present");
            self.params[i] = Tensor::zeros(self.params[i].shape());
        }
    }

    pub fn bind(&self, g: &Graph, trainable: bool) -> BoundParams {
        let vars = self
            .params
            .iter()
            .map(|p| if trainable { g.param(p.clone()) } else { g.constant(p.clone()) })
            .collect();
        BoundParams { vars }
    }

    /// `[N, 1, E, E, E]` → `(μ, clamped log σ²)`, each `[N, d]`.
    pub fn encode_graph(&self, g: &Graph, p: &BoundParams, x: Var) -> Result<(Var, Var)> {
        let e = self.config.input_extent;
        let shape = g.shape(x);
        if shape.len() != 5 || shape[1..] != [1, e, e, e] {
            return Err(Error::shape("encode", &shape, &[shape.first().copied().unwrap_or(0), 1, e, e, e]));
        }
        let n = shape[0];
        let mut h = x;
        let mut k = 0;
        for _ in 0..self.config.stages() {
            let conv = g.conv3d(h, p.vars[k], STAGE_GEOMETRY)?;
            h = g.leaky_relu(g.add_bias(conv, p.vars[k + 1])?);
            k += 2;
        }
        let flat = g.reshape(h, &[n, self.config.feature_len()])?;
        let mu = g.add_bias(g.matmul(flat, p.vars[k])?, p.vars[k + 1])?;
        let lv = g.add_bias(g.matmul(flat, p.vars[k + 2])?, p.vars[k + 3])?;
        let lv = g.clamp(lv, LOGVAR_CLAMP.0, LOGVAR_CLAMP.1);
        Ok((mu, lv))
    }

    /// `[N, d]` → `[N, 1, E, E, E]` with values in `(0, 1)`.
    pub fn decode_graph(&self, g: &Graph, p: &BoundParams, z: Var) -> Result<Var> {
        let shape = g.shape(z);
        if shape.len() != 2 || shape[1] != self.config.latent_dim {
            return Err(Error::shape("decode", &shape, &[0, self.config.latent_dim]));
        }
        let n = shape[0];
        let mut k = 2 * self.config.stages() + 4;
        let seed = g.add_bias(g.matmul(z, p.vars[k])?, p.vars[k + 1])?;
        k += 2;
        let s = self.config.bottleneck_extent();
        let c = *self.config.channels.last().expect("validated");
        let mut h = g.reshape(g.leaky_relu(seed), &[n, c, s, s, s])?;
        let stages = self.config.stages();
        for i in 0..stages {
            let up = g.conv3d_transpose(h, p.vars[k], STAGE_GEOMETRY, 1)?;
            let up = g.add_bias(up, p.vars[k + 1])?;
            h = if i + 1 == stages { g.sigmoid(up) } else { g.leaky_relu(up) };
            k += 2;
        }
        Ok(h)
    }

    fn check_volume(&self, x: &Volume3D) -> Result<()> {
        let e = self.config.input_extent;
        if !x.is_cube(e) {
            return Err(Error::shape("encode", &x.dims(), &[e, e, e]));
        }
        Ok(())
    }

    pub fn encode(&self, x: &Volume3D) -> Result<GaussianPosterior> {
        self.check_volume(x)?;
        let g = Graph::new();
        let p = self.bind(&g, false);
        let xv = g.constant(x.to_tensor());
        let (mu, lv) = self.encode_graph(&g, &p, xv)?;
        Ok(GaussianPosterior {
            mu: g.value(mu).data().to_vec(),
            logvar: g.value(lv).data().to_vec(),
        })
    }

    pub fn decode(&self, z: &LatentVector) -> Result<Volume3D> {
        let g = Graph::new();
        let p = self.bind(&g, false);
        let zv = g.constant(Tensor::new(vec![1, z.z.len()], z.z.clone())?);
        let out = self.decode_graph(&g, &p, zv)?;
        let e = self.config.input_extent;
        Volume3D::from_f64([e; 3], g.value(out).data())
    }

    /// Decodes the posterior mean.
    pub fn reconstruct(&self, x: &Volume3D) -> Result<Volume3D> {
        let post = self.encode(x)?;
        self.decode(&LatentVector { z: post.mu })
    }
}

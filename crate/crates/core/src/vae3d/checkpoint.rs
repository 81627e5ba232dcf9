//! `LVW1` checkpoints: magic, α and β as little-endian f64, then u32 latent
//! dim, input extent, stage count and stage widths, then every parameter as
//! little-endian f64 in declaration order.

use std::path::Path;

use super::config::ModelConfig;
use super::model::{parameter_layout, Vae3d};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"LVW1";

pub fn encode_checkpoint(model: &Vae3d) -> Result<Vec<u8>> {
    let cfg = model.config();
    let to_u32 = |v: usize, what: &str| {
        u32::try_from(v).map_err(|_| Error::invalid(format!("{what} {v} does not fit in u32")))
    };
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&cfg.alpha.to_le_bytes());
    out.extend_from_slice(&cfg.beta.to_le_bytes());
    out.extend_from_slice(&to_u32(cfg.latent_dim, "latent dim")?.to_le_bytes());
    out.extend_from_slice(&to_u32(cfg.input_extent, "input extent")?.to_le_bytes());
    out.extend_from_slice(&to_u32(cfg.stages(), "stage count")?.to_le_bytes());
    for &w in &cfg.channels {
        out.extend_from_slice(&to_u32(w, "stage width")?.to_le_bytes());
    }
    for p in model.params() {
        for v in p.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl Cursor<'_> {
    fn take(&mut self, n: usize, what: &str) -> Result<&[u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::Format {
                path: self.path.to_path_buf(),
                offset: self.pos as u64,
                msg: format!("truncated while reading {what}"),
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()) as usize)
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
}

/// Inverse of [`encode_checkpoint`]. The encoder is treated as deterministic
/// exactly when both weights are zero, matching the presets.
pub fn decode_checkpoint(bytes: &[u8], path: &Path) -> Result<Vae3d> {
    let mut c = Cursor { bytes, pos: 0, path };
    if c.take(4, "magic")? != CHECKPOINT_MAGIC {
        return Err(Error::Format {
            path: path.to_path_buf(),
            offset: 0,
            msg: "bad checkpoint magic".into(),
        });
    }
    let alpha = c.f64("alpha")?;
    let beta = c.f64("beta")?;
    let latent_dim = c.u32("latent dim")?;
    let input_extent = c.u32("input extent")?;
    let stages = c.u32("stage count")?;
    if stages == 0 || stages > 16 {
        return Err(Error::Format {
            path: path.to_path_buf(),
            offset: (c.pos - 4) as u64,
            msg: format!("implausible stage count {stages}"),
        });
    }
    let channels = (0..stages).map(|_| c.u32("stage width")).collect::<Result<Vec<_>>>()?;
    let config = ModelConfig {
        alpha,
        beta,
        latent_dim,
        input_extent,
        channels,
        deterministic_encoder: alpha == 0.0 && beta == 0.0,
        seed: 0,
    };
    config.validate().map_err(|e| Error::Format {
        path: path.to_path_buf(),
        offset: 4,
        msg: e.to_string(),
    })?;
    let mut params = Vec::new();
    for spec in parameter_layout(&config) {
        let n: usize = spec.shape.iter().product();
        let raw = c.take(n * 8, &spec.name)?;
        let data = raw.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().unwrap())).collect();
        params.push(Tensor::new(spec.shape, data)?);
    }
    if c.pos != bytes.len() {
        return Err(Error::Format {
            path: path.to_path_buf(),
            offset: c.pos as u64,
            msg: format!("{} trailing bytes", bytes.len() - c.pos),
        });
    }
    Vae3d::from_parts(config, params)
}

pub fn save_checkpoint(model: &Vae3d, path: &Path) -> Result<()> {
    std::fs::write(path, encode_checkpoint(model)?).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Vae3d> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes, path)
}

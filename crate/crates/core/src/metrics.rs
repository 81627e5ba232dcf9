//! Reconstruction and regression quality metrics.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::Volume3D;
use crate::error::{Error, Result};

fn check_same_dims(op: &'static str, a: &Volume3D, b: &Volume3D) -> Result<()> {
    if a.dims() != b.dims() {
        return Err(Error::shape(op, &a.dims(), &b.dims()));
    }
    Ok(())
}

/// Voxel-mean squared error between two volumes of equal shape.
pub fn mse(a: &Volume3D, b: &Volume3D) -> Result<f64> {
    check_same_dims("mse", a, b)?;
    let sum: f64 = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum();
    Ok(sum / a.len() as f64)
}

/// Peak signal-to-noise ratio in decibels. Identical volumes give
/// `f64::INFINITY`.
pub fn psnr(a: &Volume3D, b: &Volume3D, max_val: f64) -> Result<f64> {
    if !(max_val > 0.0) {
        return Err(Error::invalid(format!("psnr max_val {max_val} must be > 0")));
    }
    let m = mse(a, b)?;
    if m == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (max_val * max_val / m).log10())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SsimConfig {
    pub window_extent: usize,
    pub k1: f64,
    pub k2: f64,
    pub dynamic_range: f64,
}

impl Default for SsimConfig {
    fn default() -> Self {
        SsimConfig {
            window_extent: 7,
            k1: 0.01,
            k2: 0.03,
            dynamic_range: 1.0,
        }
    }
}

impl SsimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window_extent == 0 || self.window_extent % 2 == 0 {
            return Err(Error::invalid(format!(
                "ssim window extent {} must be odd and positive",
                self.window_extent
            )));
        }
        if !(self.dynamic_range > 0.0) || !(self.k1 > 0.0) || !(self.k2 > 0.0) {
            return Err(Error::invalid("ssim constants must be positive"));
        }
        Ok(())
    }
}

/// Volumetric SSIM: mean over every valid (unpadded, stride one) cubic
/// window position of the local luminance/contrast/structure index.
/// Window statistics use population moments.
pub fn ssim3d(a: &Volume3D, b: &Volume3D, cfg: &SsimConfig) -> Result<f64> {
    cfg.validate()?;
    check_same_dims("ssim3d", a, b)?;
    let [nx, ny, nz] = a.dims();
    let w = cfg.window_extent;
    if nx < w || ny < w || nz < w {
        return Err(Error::invalid(format!(
            "ssim3d: volume {:?} smaller than window {w}",
            a.dims()
        )));
    }
    let c1 = (cfg.k1 * cfg.dynamic_range).powi(2);
    let c2 = (cfg.k2 * cfg.dynamic_range).powi(2);
    let n = (w * w * w) as f64;
    let (av, bv) = (a.data(), b.data());
    let mut total = 0.0;
    let mut windows = 0usize;
    for z0 in 0..=nz - w {
        for y0 in 0..=ny - w {
            for x0 in 0..=nx - w {
                let (mut sa, mut sb) = (0.0, 0.0);
                for z in z0..z0 + w {
                    for y in y0..y0 + w {
                        let row = (z * ny + y) * nx;
                        for i in row + x0..row + x0 + w {
                            sa += av[i] as f64;
                            sb += bv[i] as f64;
                        }
                    }
                }
                let (ma, mb) = (sa / n, sb / n);
                let (mut vaa, mut vbb, mut vab) = (0.0, 0.0, 0.0);
                for z in z0..z0 + w {
                    for y in y0..y0 + w {
                        let row = (z * ny + y) * nx;
                        for i in row + x0..row + x0 + w {
                            let da = av[i] as f64 - ma;
                            let db = bv[i] as f64 - mb;
                            vaa += da * da;
                            vbb += db * db;
                            vab += da * db;
                        }
                    }
                }
                let (vaa, vbb, vab) = (vaa / n, vbb / n, vab / n);
                let num = (2.0 * ma * mb + c1) * (2.0 * vab + c2);
                let den = (ma * ma + mb * mb + c1) * (vaa + vbb + c2);
                total += num / den;
                windows += 1;
            }
        }
    }
    Ok(total / windows as f64)
}

fn check_pair(op: &'static str, y: &[f64], yhat: &[f64]) -> Result<()> {
    if y.len() != yhat.len() {
        return Err(Error::shape(op, &[y.len()], &[yhat.len()]));
    }
    if y.is_empty() {
        return Err(Error::invalid(format!("{op}: empty input")));
    }
    Ok(())
}

pub fn mae(y: &[f64], yhat: &[f64]) -> Result<f64> {
    check_pair("mae", y, yhat)?;
    Ok(y.iter().zip(yhat).map(|(a, b)| (a - b).abs()).sum::<f64>() / y.len() as f64)
}

pub fn rmse(y: &[f64], yhat: &[f64]) -> Result<f64> {
    check_pair("rmse", y, yhat)?;
    let ss: f64 = y.iter().zip(yhat).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok((ss / y.len() as f64).sqrt())
}

/// Coefficient of determination; negative when predictions are worse than
/// the target mean.
pub fn r2(y: &[f64], yhat: &[f64]) -> Result<f64> {
    check_pair("r2", y, yhat)?;
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let ss_tot: f64 = y.iter().map(|a| (a - mean) * (a - mean)).sum();
    if ss_tot == 0.0 {
        return Err(Error::invalid("r2: targets have zero variance"));
    }
    let ss_res: f64 = y.iter().zip(yhat).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(1.0 - ss_res / ss_tot)
}

/// Formats a metric value for report files; infinities print as `inf`.
pub fn format_metric(v: f64) -> String {
    if v == f64::INFINITY {
        "inf".to_string()
    } else if v == f64::NEG_INFINITY {
        "-inf".to_string()
    } else {
        format!("{v}")
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReconstructionScore {
    pub id: String,
    pub psnr: f64,
    pub ssim: f64,
}

pub fn score_reconstruction(
    id: impl Into<String>,
    original: &Volume3D,
    reconstruction: &Volume3D,
    max_val: f64,
    ssim: &SsimConfig,
) -> Result<ReconstructionScore> {
    Ok(ReconstructionScore {
        id: id.into(),
        psnr: psnr(original, reconstruction, max_val)?,
        ssim: ssim3d(original, reconstruction, ssim)?,
    })
}

/// Dataset means (sum then divide once). An infinite PSNR makes the mean
/// infinite.
pub fn mean_scores(scores: &[ReconstructionScore]) -> (f64, f64) {
    let n = scores.len() as f64;
    let psnr = scores.iter().map(|s| s.psnr).sum::<f64>() / n;
    let ssim = scores.iter().map(|s| s.ssim).sum::<f64>() / n;
    (psnr, ssim)
}

/// Per-volume rows followed by a `mean` row.
pub fn metrics_report(scores: &[ReconstructionScore]) -> String {
    let mut out = String::from("record_id,psnr,ssim\n");
    for s in scores {
        let _ = writeln!(out, "{},{},{}", s.id, format_metric(s.psnr), format_metric(s.ssim));
    }
    if !scores.is_empty() {
        let (p, q) = mean_scores(scores);
        let _ = writeln!(out, "mean,{},{}", format_metric(p), format_metric(q));
    }
    out
}

pub fn write_metrics_report(path: &Path, scores: &[ReconstructionScore]) -> Result<()> {
    std::fs::write(path, metrics_report(scores)).map_err(|e| Error::io(path, e))
}

//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use latvol::data::Volume3D;
use nalgebra::{DMatrix, DVector};

/// Minimizes `½θᵀKθ − yᵀθ + ε‖θ‖₁` subject to `Σθ = 0`, `|θᵢ| ≤ C` with
/// accelerated proximal gradient. The prox step is solved exactly by
/// bisection on the multiplier of the equality constraint.
pub fn qp_oracle(k: &DMatrix<f64>, y: &[f64], c: f64, eps: f64) -> (Vec<f64>, f64) {
    let n = y.len();
    let lipschitz = k.clone().symmetric_eigen().eigenvalues.max().max(1e-12);
    let step = 1.0 / lipschitz;
    let yv = DVector::from_column_slice(y);
    let prox = |v: &DVector<f64>| -> DVector<f64> {
        let at = |nu: f64| -> DVector<f64> {
            v.map(|vi| {
                let s = vi - nu;
                let soft = s.signum() * (s.abs() - step * eps).max(0.0);
                soft.clamp(-c, c)
            })
        };
        let (mut lo, mut hi) = (v.min() - c - 1.0, v.max() + c + 1.0);
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if at(mid).sum() > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        at(0.5 * (lo + hi))
    };
    let objective = |t: &DVector<f64>| 0.5 * t.dot(&(k * t)) - yv.dot(t) + eps * t.abs().sum();
    let mut theta = DVector::zeros(n);
    let mut momentum = theta.clone();
    let mut tk: f64 = 1.0;
    let mut best = objective(&theta);
    for _ in 0..20_000 {
        let grad = k * &momentum - &yv;
        let next = prox(&(&momentum - grad * step));
        let f = objective(&next);
        let t_next = (1.0 + (1.0 + 4.0 * tk * tk).sqrt()) / 2.0;
        if f > best {
            // restart the momentum when the objective goes up
            momentum = theta.clone();
            tk = 1.0;
            continue;
        }
        momentum = &next + (&next - &theta) * ((tk - 1.0) / t_next);
        theta = next;
        tk = t_next;
        best = f;
    }
    (theta.iter().copied().collect(), best)
}

pub fn volume_mean(v: &Volume3D) -> f64 {
    let mut s = 0.0;
    for &x in v.data() {
        s += x as f64;
    }
    s / v.len() as f64
}

/// Two-pass PSNR: squared error summed by coordinate loops.
pub fn psnr_loop(a: &Volume3D, b: &Volume3D, max_val: f64) -> f64 {
    let [nx, ny, nz] = a.dims();
    let mut sse = 0.0;
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                let d = a.get(x, y, z) as f64 - b.get(x, y, z) as f64;
                sse += d * d;
            }
        }
    }
    let mse = sse / (nx * ny * nz) as f64;
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (max_val * max_val / mse).log10()
    }
}

/// Brute-force SSIM from raw moments of every valid cubic window.
pub fn ssim_loop(a: &Volume3D, b: &Volume3D, w: usize, k1: f64, k2: f64, l: f64) -> f64 {
    let [nx, ny, nz] = a.dims();
    let c1 = (k1 * l) * (k1 * l);
    let c2 = (k2 * l) * (k2 * l);
    let mut acc = 0.0;
    let mut count = 0.0;
    for z0 in 0..=nz - w {
        for y0 in 0..=ny - w {
            for x0 in 0..=nx - w {
                let mut va = Vec::new();
                let mut vb = Vec::new();
                for z in z0..z0 + w {
                    for y in y0..y0 + w {
                        for x in x0..x0 + w {
                            va.push(a.get(x, y, z) as f64);
                            vb.push(b.get(x, y, z) as f64);
                        }
                    }
                }
                let n = va.len() as f64;
                let ma = va.iter().sum::<f64>() / n;
                let mb = vb.iter().sum::<f64>() / n;
                let saa = va.iter().map(|v| v * v).sum::<f64>() / n - ma * ma;
                let sbb = vb.iter().map(|v| v * v).sum::<f64>() / n - mb * mb;
                let sab = va.iter().zip(&vb).map(|(p, q)| p * q).sum::<f64>() / n - ma * mb;
                acc += ((2.0 * ma * mb + c1) * (2.0 * sab + c2)) / ((ma * ma + mb * mb + c1) * (saa + sbb + c2));
                count += 1.0;
            }
        }
    }
    acc / count
}

pub fn mae_loop(y: &[f64], p: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..y.len() {
        s += (y[i] - p[i]).abs();
    }
    s / y.len() as f64
}

pub fn rmse_loop(y: &[f64], p: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..y.len() {
        s += (y[i] - p[i]).powi(2);
    }
    (s / y.len() as f64).sqrt()
}

pub fn r2_loop(y: &[f64], p: &[f64]) -> f64 {
    let mut mean = 0.0;
    for v in y {
        mean += v;
    }
    mean /= y.len() as f64;
    let (mut res, mut tot) = (0.0, 0.0);
    for i in 0..y.len() {
        res += (y[i] - p[i]).powi(2);
        tot += (y[i] - mean).powi(2);
    }
    1.0 - res / tot
}

/// Top-two eigenpairs of a symmetric matrix, eigenvalues descending.
pub fn top_two_eigen(c: &DMatrix<f64>) -> [(f64, DVector<f64>); 2] {
    let e = c.clone().symmetric_eigen();
    let mut idx: Vec<usize> = (0..e.eigenvalues.len()).collect();
    idx.sort_by(|&a, &b| e.eigenvalues[b].total_cmp(&e.eigenvalues[a]));
    [0, 1].map(|k| (e.eigenvalues[idx[k]], e.eigenvectors.column(idx[k]).into_owned()))
}

/// Sample covariance with divisor n − 1.
pub fn covariance(rows: &[Vec<f64>]) -> DMatrix<f64> {
    let n = rows.len();
    let d = rows[0].len();
    let x = DMatrix::from_fn(n, d, |i, j| rows[i][j]);
    let mean = x.row_mean();
    let mut xc = x.clone();
    for mut r in xc.row_iter_mut() {
        r -= &mean;
    }
    xc.transpose() * &xc / (n as f64 - 1.0)
}

//! ε-insensitive support vector regression solved in the dual by
//! pairwise (SMO) updates with second-order working-set selection.

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelKind {
    Linear,
    Rbf,
}

impl KernelKind {
    pub fn name(self) -> &'static str {
        match self {
            KernelKind::Linear => "linear",
            KernelKind::Rbf => "rbf",
        }
    }
}

impl std::str::FromStr for KernelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "linear" => Ok(KernelKind::Linear),
            "rbf" => Ok(KernelKind::Rbf),
            other => Err(Error::invalid(format!("unknown kernel {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Kernel {
    Linear,
    Rbf { gamma: f64 },
}

impl Kernel {
    /// Builds a kernel of the given family; RBF gets `gamma`, or `1/d` when
    /// none is supplied.
    pub fn of_kind(kind: KernelKind, gamma: Option<f64>, d: usize) -> Kernel {
        match kind {
            KernelKind::Linear => Kernel::Linear,
            KernelKind::Rbf => Kernel::Rbf {
                gamma: gamma.unwrap_or(1.0 / d.max(1) as f64),
            },
        }
    }

    pub fn kind(&self) -> KernelKind {
        match self {
            Kernel::Linear => KernelKind::Linear,
            Kernel::Rbf { .. } => KernelKind::Rbf,
        }
    }

    pub fn eval(&self, a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
        match *self {
            Kernel::Linear => a.dot(&b),
            Kernel::Rbf { gamma } => {
                let d2: f64 = a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum();
                (-gamma * d2).exp()
            }
        }
    }

    pub fn gram(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let n = x.nrows();
        let mut k = Array2::zeros((n, n));
        for i in 0..n {
            for j in i..n {
                let v = self.eval(x.row(i), x.row(j));
                k[[i, j]] = v;
                k[[j, i]] = v;
            }
        }
        k
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SvrParams {
    pub c: f64,
    pub epsilon: f64,
    pub kernel: KernelKind,
    /// RBF width; `None` means `1/d`.
    pub gamma: Option<f64>,
    /// Stopping threshold on the maximal violating pair.
    pub tolerance: f64,
}

impl SvrParams {
    pub fn new(c: f64, kernel: KernelKind) -> Self {
        SvrParams {
            c,
            epsilon: 0.1,
            kernel,
            gamma: None,
            tolerance: 1e-3,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.c > 0.0) || !self.c.is_finite() {
            return Err(Error::invalid(format!("svr C must be > 0, got {}", self.c)));
        }
        if !(self.epsilon >= 0.0) || !self.epsilon.is_finite() {
            return Err(Error::invalid(format!("svr epsilon must be >= 0, got {}", self.epsilon)));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::invalid("svr tolerance must be > 0"));
        }
        if let Some(g) = self.gamma {
            if !(g > 0.0) || !g.is_finite() {
                return Err(Error::invalid(format!("rbf gamma must be > 0, got {g}")));
            }
        }
        Ok(())
    }
}

/// Solution of the dual in terms of `θ = α − α*`.
#[derive(Clone, Debug, PartialEq)]
pub struct DualSolution {
    pub theta: Vec<f64>,
    pub bias: f64,
    /// `½θᵀKθ − yᵀθ + ε‖θ‖₁`, the minimized dual objective.
    pub objective: f64,
    /// Maximal violating pair gap at termination.
    pub gap: f64,
    pub iterations: usize,
}

const TAU: f64 = 1e-12;

/// Minimizes the ε-SVR dual for a precomputed Gram matrix.
pub fn solve_dual(k: ArrayView2<f64>, y: &[f64], c: f64, epsilon: f64, tolerance: f64) -> Result<DualSolution> {
    let n = y.len();
    if k.nrows() != n || k.ncols() != n {
        return Err(Error::shape("solve_dual", &[k.nrows(), k.ncols()], &[n, n]));
    }
    if !(c > 0.0) {
        return Err(Error::invalid(format!("svr C must be > 0, got {c}")));
    }
    let m = 2 * n;
    let sign = |t: usize| if t < n { 1.0 } else { -1.0 };
    let base = |t: usize| if t < n { t } else { t - n };
    let kd = |s: usize, t: usize| k[[base(s), base(t)]];
    let mut a = vec![0.0; m];
    let mut grad: Vec<f64> = (0..m).map(|t| if t < n { epsilon - y[t] } else { epsilon + y[t - n] }).collect();
    let max_iter = (100 * m).max(10_000_000);
    let mut iterations = 0;
    let mut gap;

    loop {
        let upper = |t: usize, a: &[f64]| a[t] >= c;
        let lower = |t: usize, a: &[f64]| a[t] <= 0.0;

        let mut gmax = f64::NEG_INFINITY;
        let mut i_sel = usize::MAX;
        for t in 0..m {
            let in_up = if sign(t) > 0.0 { !upper(t, &a) } else { !lower(t, &a) };
            if in_up {
                let v = -sign(t) * grad[t];
                if v >= gmax {
                    gmax = v;
                    i_sel = t;
                }
            }
        }
        let mut gmax2 = f64::NEG_INFINITY;
        let mut j_sel = usize::MAX;
        let mut obj_min = f64::INFINITY;
        for t in 0..m {
            let in_low = if sign(t) > 0.0 { !lower(t, &a) } else { !upper(t, &a) };
            if !in_low {
                continue;
            }
            let v = sign(t) * grad[t];
            if v >= gmax2 {
                gmax2 = v;
            }
            if i_sel == usize::MAX {
                continue;
            }
            let diff = gmax + v;
            if diff > 0.0 {
                let quad = kd(i_sel, i_sel) + kd(t, t) - 2.0 * kd(i_sel, t);
                let obj = -(diff * diff) / if quad > 0.0 { quad } else { TAU };
                if obj <= obj_min {
                    obj_min = obj;
                    j_sel = t;
                }
            }
        }
        gap = gmax + gmax2;
        if gap < tolerance || j_sel == usize::MAX || i_sel == usize::MAX {
            break;
        }
        if iterations >= max_iter {
            return Err(Error::Numeric(format!(
                "svr dual did not converge in {max_iter} iterations (gap {gap})"
            )));
        }
        iterations += 1;

        let (i, j) = (i_sel, j_sel);
        let (old_i, old_j) = (a[i], a[j]);
        let qij = sign(i) * sign(j) * kd(i, j);
        if sign(i) != sign(j) {
            let quad = (kd(i, i) + kd(j, j) + 2.0 * qij).max(TAU);
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = a[i] - a[j];
            a[i] += delta;
            a[j] += delta;
            if diff > 0.0 {
                if a[j] < 0.0 {
                    a[j] = 0.0;
                    a[i] = diff;
                }
            } else if a[i] < 0.0 {
                a[i] = 0.0;
                a[j] = -diff;
            }
            if diff > 0.0 {
                if a[i] > c {
                    a[i] = c;
                    a[j] = c - diff;
                }
            } else if a[j] > c {
                a[j] = c;
                a[i] = c + diff;
            }
        } else {
            let quad = (kd(i, i) + kd(j, j) - 2.0 * qij).max(TAU);
            let delta = (grad[i] - grad[j]) / quad;
            let sum = a[i] + a[j];
            a[i] -= delta;
            a[j] += delta;
            if sum > c {
                if a[i] > c {
                    a[i] = c;
                    a[j] = sum - c;
                }
            } else if a[j] < 0.0 {
                a[j] = 0.0;
                a[i] = sum;
            }
            if sum > c {
                if a[j] > c {
                    a[j] = c;
                    a[i] = sum - c;
                }
            } else if a[i] < 0.0 {
                a[i] = 0.0;
                a[j] = sum;
            }
        }
        let (di, dj) = (a[i] - old_i, a[j] - old_j);
        for t in 0..m {
            grad[t] += sign(t) * (sign(i) * kd(t, i) * di + sign(j) * kd(t, j) * dj);
        }
    }

    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut sum_free, mut n_free) = (0.0, 0usize);
    for t in 0..m {
        let yg = sign(t) * grad[t];
        if a[t] >= c {
            if sign(t) < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if a[t] <= 0.0 {
            if sign(t) > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            n_free += 1;
            sum_free += yg;
        }
    }
    let rho = if n_free > 0 {
        sum_free / n_free as f64
    } else if ub.is_finite() && lb.is_finite() {
        (ub + lb) / 2.0
    } else if ub.is_finite() {
        ub
    } else {
        lb
    };
    let theta: Vec<f64> = (0..n).map(|t| a[t] - a[t + n]).collect();
    let objective = dual_objective(k, y, &theta, epsilon);
    Ok(DualSolution {
        theta,
        bias: -rho,
        objective,
        gap: gap.max(0.0),
        iterations,
    })
}

/// `½θᵀKθ − yᵀθ + ε‖θ‖₁`.
pub fn dual_objective(k: ArrayView2<f64>, y: &[f64], theta: &[f64], epsilon: f64) -> f64 {
    let t = ArrayView1::from(theta);
    let kt = k.dot(&t);
    0.5 * t.dot(&kt) - theta.iter().zip(y).map(|(a, b)| a * b).sum::<f64>()
        + epsilon * theta.iter().map(|v| v.abs()).sum::<f64>()
}

/// Largest violation of the ε-SVR optimality conditions for a candidate
/// `(θ, b)`: residuals must lie inside the tube for zero coefficients, on
/// its edge for free ones and outside it for bounded ones.
pub fn kkt_violation(k: ArrayView2<f64>, y: &[f64], theta: &[f64], bias: f64, c: f64, epsilon: f64) -> f64 {
    let t = ArrayView1::from(theta);
    let f = k.dot(&t);
    let bound_tol = 1e-12 * c.max(1.0);
    let mut worst: f64 = 0.0;
    for i in 0..y.len() {
        let r = y[i] - f[i] - bias;
        let th = theta[i];
        let v = if th.abs() <= bound_tol {
            (r.abs() - epsilon).max(0.0)
        } else if th >= c - bound_tol {
            (epsilon - r).max(0.0)
        } else if th <= -c + bound_tol {
            (r + epsilon).max(0.0)
        } else if th > 0.0 {
            (r - epsilon).abs()
        } else {
            (r + epsilon).abs()
        };
        worst = worst.max(v);
    }
    worst
}

/// Per-column affine standardization.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    /// Population statistics; zero-variance columns keep scale 1.
    pub fn fit(x: ArrayView2<f64>) -> Self {
        let n = x.nrows() as f64;
        let mean: Vec<f64> = x.mean_axis(Axis(0)).map(|m| m.to_vec()).unwrap_or_default();
        let scale = x
            .columns()
            .into_iter()
            .zip(&mean)
            .map(|(col, &m)| {
                let var = col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n;
                if var > 0.0 {
                    var.sqrt()
                } else {
                    1.0
                }
            })
            .collect();
        Standardizer { mean, scale }
    }

    pub fn apply(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let mut out = x.to_owned();
        for mut row in out.rows_mut() {
            for ((v, m), s) in row.iter_mut().zip(&self.mean).zip(&self.scale) {
                *v = (*v - m) / s;
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SvrModel {
    pub support_indices: Vec<usize>,
    /// `αᵢ − αᵢ*` for each support vector, in standardized target units.
    pub dual_coeffs: Vec<f64>,
    /// Standardized support vectors, row-aligned with `dual_coeffs`.
    pub support_vectors: Vec<Vec<f64>>,
    pub bias: f64,
    pub kernel: Kernel,
    pub c: f64,
    pub epsilon: f64,
    pub features: Standardizer,
    pub target_mean: f64,
    pub target_scale: f64,
    pub gap: f64,
    pub kkt_residual: f64,
    pub iterations: usize,
}

impl SvrModel {
    pub fn dim(&self) -> usize {
        self.features.mean.len()
    }

    /// Decision value in standardized units for an already standardized row.
    fn decision(&self, row: ArrayView1<f64>) -> f64 {
        self.dual_coeffs
            .iter()
            .zip(&self.support_vectors)
            .map(|(a, sv)| a * self.kernel.eval(ArrayView1::from(sv.as_slice()), row))
            .sum::<f64>()
            + self.bias
    }

    /// Primal weights in standardized feature and target units, available
    /// for the linear kernel only.
    pub fn linear_weights(&self) -> Option<Vec<f64>> {
        if self.kernel != Kernel::Linear {
            return None;
        }
        let mut w = vec![0.0; self.dim()];
        for (a, sv) in self.dual_coeffs.iter().zip(&self.support_vectors) {
            for (wi, s) in w.iter_mut().zip(sv) {
                *wi += a * s;
            }
        }
        Some(w)
    }
}

/// Dual coefficients with magnitude at most this are dropped from the
/// support set.
const SUPPORT_CUTOFF: f64 = 0.0;

pub fn svr_fit(z: ArrayView2<f64>, y: &[f64], params: &SvrParams) -> Result<SvrModel> {
    params.validate()?;
    let (n, d) = z.dim();
    if y.len() != n {
        return Err(Error::shape("svr_fit", &[n, d], &[y.len()]));
    }
    if n < 2 {
        return Err(Error::invalid(format!("svr_fit needs at least 2 samples, got {n}")));
    }
    if z.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::invalid("svr_fit: non-finite input"));
    }
    let features = Standardizer::fit(z);
    let kernel = Kernel::of_kind(params.kernel, params.gamma, d);
    let ymean = y.iter().sum::<f64>() / n as f64;
    let yvar = y.iter().map(|v| (v - ymean) * (v - ymean)).sum::<f64>() / n as f64;
    if yvar == 0.0 {
        return Ok(SvrModel {
            support_indices: Vec::new(),
            dual_coeffs: Vec::new(),
            support_vectors: Vec::new(),
            bias: y[0],
            kernel,
            c: params.c,
            epsilon: params.epsilon,
            features,
            target_mean: 0.0,
            target_scale: 1.0,
            gap: 0.0,
            kkt_residual: 0.0,
            iterations: 0,
        });
    }
    let yscale = yvar.sqrt();
    let ys: Vec<f64> = y.iter().map(|v| (v - ymean) / yscale).collect();
    let zs = features.apply(z);
    let k = kernel.gram(zs.view());
    let sol = solve_dual(k.view(), &ys, params.c, params.epsilon, params.tolerance)?;
    let kkt_residual = kkt_violation(k.view(), &ys, &sol.theta, sol.bias, params.c, params.epsilon);
    let support_indices: Vec<usize> = (0..n).filter(|&i| sol.theta[i].abs() > SUPPORT_CUTOFF).collect();
    Ok(SvrModel {
        dual_coeffs: support_indices.iter().map(|&i| sol.theta[i]).collect(),
        support_vectors: support_indices.iter().map(|&i| zs.row(i).to_vec()).collect(),
        support_indices,
        bias: sol.bias,
        kernel,
        c: params.c,
        epsilon: params.epsilon,
        features,
        target_mean: ymean,
        target_scale: yscale,
        gap: sol.gap,
        kkt_residual,
        iterations: sol.iterations,
    })
}

pub fn svr_predict(model: &SvrModel, z: ArrayView2<f64>) -> Result<Vec<f64>> {
    if z.ncols() != model.dim() {
        return Err(Error::shape("svr_predict", &[z.nrows(), z.ncols()], &[z.nrows(), model.dim()]));
    }
    let zs = model.features.apply(z);
    Ok(zs
        .rows()
        .into_iter()
        .map(|row| model.target_mean + model.target_scale * model.decision(row))
        .collect())
}

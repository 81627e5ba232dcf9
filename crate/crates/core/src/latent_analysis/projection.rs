//! Two-dimensional linear projections of latent codes: PCA by power
//! iteration with deflation, and NIPALS partial least squares.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProjectionMethod {
    Pca,
    Pls,
}

impl ProjectionMethod {
    pub fn name(self) -> &'static str {
        match self {
            ProjectionMethod::Pca => "pca",
            ProjectionMethod::Pls => "pls",
        }
    }
}

impl std::str::FromStr for ProjectionMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "pca" => Ok(ProjectionMethod::Pca),
            "pls" => Ok(ProjectionMethod::Pls),
            other => Err(Error::invalid(format!("unknown projection method {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProjectionMatrix {
    pub method: ProjectionMethod,
    /// d×2 weights.
    pub w: Array2<f64>,
    pub center: Array1<f64>,
    /// Fingerprint of the data the projection was fitted on.
    pub fitted_on: u64,
    /// Set when the second column could not be determined from the data
    /// and was filled with an arbitrary orthogonal unit vector.
    pub rank_deficient: bool,
    /// PCA: top-2 covariance eigenvalues. PLS: score variances.
    pub component_variance: [f64; 2],
    /// PCA: share of total variance per component. PLS: share of
    /// centered-feature variance captured by each score.
    pub explained_ratio: [f64; 2],
}

/// FNV-1a over the shape and raw bit patterns of a matrix.
pub fn fingerprint(z: ArrayView2<f64>) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    let mut h = OFFSET;
    let mut feed = |bytes: [u8; 8]| {
        for b in bytes {
            h ^= b as u64;
            h = h.wrapping_mul(PRIME);
        }
    };
    feed((z.nrows() as u64).to_le_bytes());
    feed((z.ncols() as u64).to_le_bytes());
    for v in z.iter() {
        feed(v.to_bits().to_le_bytes());
    }
    h
}

fn check_finite(op: &'static str, z: ArrayView2<f64>) -> Result<()> {
    if z.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid(format!("{op}: non-finite input")));
    }
    Ok(())
}

fn centered(z: ArrayView2<f64>) -> (Array1<f64>, Array2<f64>) {
    let center = z.mean_axis(Axis(0)).expect("non-empty");
    let x = &z - &center.view().insert_axis(Axis(0));
    (center, x)
}

/// Flips the sign of a vector so its largest-magnitude entry (first on
/// ties) is positive.
pub fn canonical_sign(v: &mut Array1<f64>) {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    if v[best] < 0.0 {
        v.mapv_inplace(|x| -x);
    }
}

fn normalize(v: &mut Array1<f64>) -> f64 {
    let n = v.dot(v).sqrt();
    if n > 0.0 {
        *v /= n;
    }
    n
}

/// A unit vector orthogonal to every column in `basis` (assumed
/// orthonormal), built from the standard basis vector least aligned with
/// them.
fn orthogonal_unit(d: usize, basis: &[&Array1<f64>]) -> Array1<f64> {
    let mut best: Option<Array1<f64>> = None;
    let mut best_norm = -1.0;
    for k in 0..d {
        let mut e = Array1::zeros(d);
        e[k] = 1.0;
        for b in basis {
            let p = e.dot(*b);
            e.scaled_add(-p, b);
        }
        let n = e.dot(&e).sqrt();
        if n > best_norm + 1e-12 {
            best_norm = n;
            best = Some(e);
        }
    }
    let mut e = best.expect("d >= 1");
    normalize(&mut e);
    e
}

fn solve_dense(mut a: Array2<f64>, mut b: Array1<f64>) -> Option<Array1<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[[i, col]].abs().total_cmp(&a[[j, col]].abs()))?;
        if a[[piv, col]] == 0.0 {
            return None;
        }
        if piv != col {
            for k in 0..n {
                a.swap([piv, k], [col, k]);
            }
            b.swap(piv, col);
        }
        for r in col + 1..n {
            let f = a[[r, col]] / a[[col, col]];
            if f != 0.0 {
                for k in col..n {
                    a[[r, k]] -= f * a[[col, k]];
                }
                b[r] -= f * b[col];
            }
        }
    }
    let mut x = Array1::zeros(n);
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|k| a[[r, k]] * x[k]).sum();
        x[r] = (b[r] - s) / a[[r, r]];
    }
    x.iter().all(|v| v.is_finite()).then_some(x)
}

const POWER_TOL: f64 = 1e-10;
const POWER_MAX_ITER: usize = 100_000;

/// Dominant eigenpair of a symmetric positive semidefinite matrix by power
/// iteration, polished with a few steps of shifted inverse iteration.
pub(crate) fn dominant_eigenpair(c: &Array2<f64>, start: usize) -> (f64, Array1<f64>) {
    let d = c.nrows();
    let mut v = Array1::from_elem(d, 1.0);
    v[start % d] += 1.0;
    normalize(&mut v);
    for _ in 0..POWER_MAX_ITER {
        let mut next = c.dot(&v);
        if normalize(&mut next) == 0.0 {
            return (0.0, v);
        }
        if next.dot(&v) < 0.0 {
            next.mapv_inplace(|x| -x);
        }
        let delta = (&next - &v).mapv(|x| x * x).sum().sqrt();
        v = next;
        if delta < POWER_TOL {
            break;
        }
    }
    let mut lambda = v.dot(&c.dot(&v));
    for _ in 0..3 {
        let mut shifted = c.clone();
        for i in 0..d {
            shifted[[i, i]] -= lambda;
        }
        let Some(mut next) = solve_dense(shifted, v.clone()) else { break };
        if normalize(&mut next) == 0.0 {
            break;
        }
        if next.dot(&v) < 0.0 {
            next.mapv_inplace(|x| -x);
        }
        let candidate = next.dot(&c.dot(&next));
        // keep the polished vector only if it stays the dominant direction
        if !(candidate >= lambda - 1e-9 * lambda.abs().max(1.0)) {
            break;
        }
        v = next;
        lambda = candidate;
    }
    (lambda, v)
}

/// Sample covariance (divisor n − 1) of already centered rows.
fn covariance(x: &Array2<f64>) -> Array2<f64> {
    let n = x.nrows() as f64;
    x.t().dot(x) / (n - 1.0)
}

pub fn pca_fit(z: ArrayView2<f64>) -> Result<ProjectionMatrix> {
    let (n, d) = z.dim();
    if n < 3 {
        return Err(Error::invalid(format!("pca_fit needs at least 3 samples, got {n}")));
    }
    if d < 2 {
        return Err(Error::invalid(format!("pca_fit needs at least 2 features, got {d}")));
    }
    check_finite("pca_fit", z)?;
    let (center, x) = centered(z);
    let mut c = covariance(&x);
    let trace: f64 = c.diag().sum();
    let negligible = 1e-12 * trace.max(f64::MIN_POSITIVE);
    let mut rank_deficient = false;

    let (l1, mut w1) = dominant_eigenpair(&c, 0);
    let l1 = if l1 <= negligible {
        rank_deficient = true;
        w1 = Array1::zeros(d);
        w1[0] = 1.0;
        0.0
    } else {
        l1
    };
    let outer = w1.view().insert_axis(Axis(1)).dot(&w1.view().insert_axis(Axis(0)));
    c.scaled_add(-l1, &outer);
    let (l2, mut w2) = dominant_eigenpair(&c, 1);
    let proj = w2.dot(&w1);
    w2.scaled_add(-proj, &w1);
    let l2 = if l2 <= negligible || normalize(&mut w2) < 1e-6 {
        rank_deficient = true;
        w2 = orthogonal_unit(d, &[&w1]);
        w2.dot(&c.dot(&w2)).max(0.0)
    } else {
        l2
    };
    canonical_sign(&mut w1);
    canonical_sign(&mut w2);
    let mut w = Array2::zeros((d, 2));
    w.column_mut(0).assign(&w1);
    w.column_mut(1).assign(&w2);
    let share = |l: f64| if trace > 0.0 { l / trace } else { 0.0 };
    Ok(ProjectionMatrix {
        method: ProjectionMethod::Pca,
        w,
        center,
        fitted_on: fingerprint(z),
        rank_deficient,
        component_variance: [l1, l2],
        explained_ratio: [share(l1), share(l2)],
    })
}

const NIPALS_TOL: f64 = 1e-12;
const NIPALS_MAX_ITER: usize = 10_000;

/// NIPALS weight vector for the current deflated blocks.
fn pls_weight(x: &Array2<f64>, y: &Array2<f64>) -> Array1<f64> {
    if y.ncols() == 1 {
        let mut w = x.t().dot(&y.column(0));
        normalize(&mut w);
        return w;
    }
    let var = |col: ArrayView1<f64>| col.dot(&col);
    let start = (0..y.ncols()).max_by(|&a, &b| var(y.column(a)).total_cmp(&var(y.column(b)))).unwrap_or(0);
    let mut u = y.column(start).to_owned();
    let mut w = x.t().dot(&u);
    normalize(&mut w);
    let mut t_old = x.dot(&w);
    for _ in 0..NIPALS_MAX_ITER {
        w = x.t().dot(&u);
        if normalize(&mut w) == 0.0 {
            break;
        }
        let t = x.dot(&w);
        let tt = t.dot(&t);
        if tt == 0.0 {
            break;
        }
        let q = y.t().dot(&t) / tt;
        let qq = q.dot(&q);
        if qq == 0.0 {
            break;
        }
        u = y.dot(&q) / qq;
        let delta = (&t - &t_old).mapv(|v| v * v).sum().sqrt() / tt.sqrt();
        t_old = t;
        if delta < NIPALS_TOL {
            break;
        }
    }
    w
}

/// Two-component PLS regression of `y` (n×t) on `z`. Returns the rotation
/// matrix `W (PᵀW)⁻¹`, so projecting centered `z` reproduces the scores.
pub fn pls_fit(z: ArrayView2<f64>, y: ArrayView2<f64>) -> Result<ProjectionMatrix> {
    let (n, d) = z.dim();
    if n < 3 {
        return Err(Error::invalid(format!("pls_fit needs at least 3 samples, got {n}")));
    }
    if d < 2 {
        return Err(Error::invalid(format!("pls_fit needs at least 2 features, got {d}")));
    }
    if y.nrows() != n || y.ncols() == 0 {
        return Err(Error::shape("pls_fit", &[n, d], &[y.nrows(), y.ncols()]));
    }
    check_finite("pls_fit", z)?;
    check_finite("pls_fit", y)?;
    let (center, x0) = centered(z);
    let (_, y0) = centered(y);
    let xnorm = x0.mapv(|v| v * v).sum().sqrt();
    let ynorm = y0.mapv(|v| v * v).sum().sqrt();
    let cov = x0.t().dot(&y0).mapv(|v| v * v).sum().sqrt();
    if !(cov > 1e-12 * xnorm * ynorm) || ynorm == 0.0 {
        return Err(Error::invalid(
            "pls_fit: features and targets have zero covariance",
        ));
    }
    let total_var = xnorm * xnorm / (n as f64 - 1.0);

    let mut x = x0.clone();
    let mut yk = y0.clone();
    let mut ws: Vec<Array1<f64>> = Vec::new();
    let mut ps: Vec<Array1<f64>> = Vec::new();
    let mut rank_deficient = false;
    for comp in 0..2 {
        let cross = x.t().dot(&yk).mapv(|v| v * v).sum().sqrt();
        let xn = x.mapv(|v| v * v).sum().sqrt();
        let mut w = if comp > 0 && !(cross > 1e-10 * xn * ynorm) {
            rank_deficient = true;
            let refs: Vec<&Array1<f64>> = ws.iter().collect();
            orthogonal_unit(d, &refs)
        } else {
            pls_weight(&x, &yk)
        };
        if comp > 0 {
            // weights from deflated blocks are orthogonal in exact arithmetic
            for prev in &ws {
                let p = w.dot(prev);
                w.scaled_add(-p, prev);
            }
            normalize(&mut w);
        }
        let t = x.dot(&w);
        let tt = t.dot(&t);
        let p = if tt > 0.0 { x.t().dot(&t) / tt } else { Array1::zeros(d) };
        if tt > 0.0 {
            let q = yk.t().dot(&t) / tt;
            let tcol = t.view().insert_axis(Axis(1));
            x = &x - &tcol.dot(&p.view().insert_axis(Axis(0)));
            yk = &yk - &tcol.dot(&q.view().insert_axis(Axis(0)));
        }
        ws.push(w);
        ps.push(p);
    }
    // rotations R = W (PᵀW)⁻¹ with PᵀW unit upper... triangular in exact arithmetic
    let m = [
        [ps[0].dot(&ws[0]), ps[0].dot(&ws[1])],
        [ps[1].dot(&ws[0]), ps[1].dot(&ws[1])],
    ];
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    let mut r1 = ws[0].clone();
    let mut r2 = ws[1].clone();
    if det.abs() > 1e-12 {
        let inv = [[m[1][1] / det, -m[0][1] / det], [-m[1][0] / det, m[0][0] / det]];
        r1 = &ws[0] * inv[0][0] + &ws[1] * inv[1][0];
        r2 = &ws[0] * inv[0][1] + &ws[1] * inv[1][1];
    } else {
        rank_deficient = true;
    }
    canonical_sign(&mut r1);
    canonical_sign(&mut r2);
    let mut w = Array2::zeros((d, 2));
    w.column_mut(0).assign(&r1);
    w.column_mut(1).assign(&r2);
    let scores = x0.dot(&w);
    let var = |k: usize| {
        let s = scores.column(k);
        s.dot(&s) / (n as f64 - 1.0)
    };
    let v = [var(0), var(1)];
    let share = |s: f64| if total_var > 0.0 { s / total_var } else { 0.0 };
    Ok(ProjectionMatrix {
        method: ProjectionMethod::Pls,
        w,
        center,
        fitted_on: fingerprint(z),
        rank_deficient,
        component_variance: v,
        explained_ratio: [share(v[0]), share(v[1])],
    })
}

/// `(z − center)·W`.
pub fn project(z: ArrayView2<f64>, proj: &ProjectionMatrix) -> Result<Array2<f64>> {
    if z.ncols() != proj.w.nrows() {
        return Err(Error::shape("project", &[z.nrows(), z.ncols()], &[proj.w.nrows(), 2]));
    }
    let x = &z - &proj.center.view().insert_axis(Axis(0));
    Ok(x.dot(&proj.w))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn pca_rank_one_line() {
        let z = Array2::from_shape_fn((6, 4), |(i, j)| if j == 0 { i as f64 - 2.0 } else { 0.0 });
        let p = pca_fit(z.view()).unwrap();
        assert!((p.w[[0, 0]] - 1.0).abs() < 1e-12);
        assert!((p.explained_ratio[0] - 1.0).abs() < 1e-12);
        assert!(p.rank_deficient);
        let c0 = p.w.column(0);
        let c1 = p.w.column(1);
        assert!(c0.dot(&c1).abs() < 1e-12);
        assert!((c1.dot(&c1) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn pca_sign_and_variance_order() {
        let z = array![[2.0, 0.1, 0.0], [-1.0, 0.3, 1.0], [0.5, -0.7, 0.2], [-1.5, 0.2, -1.1], [0.0, 0.1, -0.1]];
        let p = pca_fit(z.view()).unwrap();
        for k in 0..2 {
            let col = p.w.column(k);
            let big = col.iter().cloned().fold(0.0f64, |a, b| if b.abs() > a.abs() { b } else { a });
            assert!(big > 0.0);
        }
        assert!(p.component_variance[0] >= p.component_variance[1]);
        let proj = project(z.view(), &p).unwrap();
        assert_eq!(proj.nrows(), 5);
    }

    #[test]
    fn identity_projection() {
        let z = array![[1.0, 2.0, 3.0], [-1.0, 0.0, 1.0], [0.0, -2.0, -4.0]];
        let (center, _) = centered(z.view());
        let mut w = Array2::zeros((3, 2));
        w[[0, 0]] = 1.0;
        w[[1, 1]] = 1.0;
        let proj = ProjectionMatrix {
            method: ProjectionMethod::Pca,
            w,
            center: center.clone(),
            fitted_on: 0,
            rank_deficient: false,
            component_variance: [0.0; 2],
            explained_ratio: [0.0; 2],
        };
        let out = project(z.view(), &proj).unwrap();
        for i in 0..3 {
            assert_eq!(out[[i, 0]], z[[i, 0]] - center[0]);
            assert_eq!(out[[i, 1]], z[[i, 1]] - center[1]);
        }
        assert!(project(array![[1.0, 2.0]].view(), &proj).is_err());
    }

    #[test]
    fn pls_noiseless_direction() {
        let z = array![[0.2, 1.0, -0.3], [1.5, -0.4, 0.8], [-0.9, 0.6, 0.1], [0.4, -1.2, -0.7], [-1.1, 0.3, 1.4], [0.7, 0.9, -1.0]];
        let v = array![0.5, -1.0, 2.0];
        let y = z.dot(&v).insert_axis(Axis(1));
        let p = pls_fit(z.view(), y.view()).unwrap();
        let (_, x) = centered(z.view());
        let (_, yc) = centered(y.view());
        let mut dir = x.t().dot(&yc.column(0));
        normalize(&mut dir);
        let col = p.w.column(0);
        let cos = col.dot(&dir) / col.dot(&col).sqrt();
        assert!(cos.abs() > 1.0 - 1e-12);
    }

    #[test]
    fn pls_rejects_zero_covariance() {
        let z = array![[1.0, 0.0], [-1.0, 0.0], [1.0, 1.0], [-1.0, 1.0]];
        let y = array![[1.0], [1.0], [-1.0], [-1.0]];
        // y varies only along the second feature; decorrelate by construction
        let y0 = array![[0.0], [0.0], [0.0], [0.0]];
        assert!(pls_fit(z.view(), y0.view()).is_err());
        let zz = array![[1.0, 0.0], [-1.0, 0.0], [1.0, 0.0], [-1.0, 0.0]];
        assert!(pls_fit(zz.view(), y.view()).is_err());
    }

    #[test]
    fn fingerprint_sensitive() {
        let a = array![[1.0, 2.0], [3.0, 4.0]];
        let mut b = a.clone();
        b[[1, 1]] = 4.000000001;
        assert_ne!(fingerprint(a.view()), fingerprint(b.view()));
        assert_eq!(fingerprint(a.view()), fingerprint(a.clone().view()));
    }
}

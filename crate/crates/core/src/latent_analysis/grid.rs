//! Seeded k-fold cross-validated grid search over SVR configurations.

use ndarray::{ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::svr::{svr_fit, svr_predict, KernelKind, SvrParams};
use crate::error::{Error, Result};
use crate::metrics::mae;

#[derive(Clone, Debug, PartialEq)]
pub struct GridSpec {
    pub c_grid: Vec<f64>,
    pub kernels: Vec<KernelKind>,
    pub folds: usize,
    pub seed: u64,
    pub epsilon: f64,
    pub gamma: Option<f64>,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            c_grid: vec![0.1, 1.0, 10.0],
            kernels: vec![KernelKind::Rbf, KernelKind::Linear],
            folds: 5,
            seed: 0,
            epsilon: 0.1,
            gamma: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridRow {
    pub params: SvrParams,
    pub fold_mae: Vec<f64>,
    pub mean_mae: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridResult {
    pub best: SvrParams,
    /// One row per configuration, linear kernels first, then by ascending C.
    pub rows: Vec<GridRow>,
}

/// Seeded shuffle dealt round-robin into `folds` disjoint index sets.
pub fn fold_assignment(n: usize, folds: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if folds < 2 {
        return Err(Error::invalid(format!("need at least 2 folds, got {folds}")));
    }
    if n < folds {
        return Err(Error::invalid(format!("{n} samples cannot fill {folds} folds")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut out = vec![Vec::new(); folds];
    for (pos, i) in order.into_iter().enumerate() {
        out[pos % folds].push(i);
    }
    for f in &mut out {
        f.sort_unstable();
    }
    Ok(out)
}

fn fold_score(z: ArrayView2<f64>, y: &[f64], val: &[usize], params: &SvrParams) -> Result<f64> {
    let mut is_val = vec![false; y.len()];
    for &i in val {
        is_val[i] = true;
    }
    let train: Vec<usize> = (0..y.len()).filter(|&i| !is_val[i]).collect();
    let ztr = z.select(Axis(0), &train);
    let ytr: Vec<f64> = train.iter().map(|&i| y[i]).collect();
    let model = svr_fit(ztr.view(), &ytr, params)?;
    let pred = svr_predict(&model, z.select(Axis(0), val).view())?;
    let yval: Vec<f64> = val.iter().map(|&i| y[i]).collect();
    mae(&yval, &pred)
}

/// Evaluates every (kernel, C) pair by mean validation MAE and picks the
/// lowest; ties go to the earlier configuration in report order. Fits run
/// in parallel but results are gathered in fixed (config, fold) order.
pub fn grid_search_cv(z: ArrayView2<f64>, y: &[f64], spec: &GridSpec) -> Result<GridResult> {
    if z.nrows() != y.len() {
        return Err(Error::shape("grid_search_cv", &[z.nrows(), z.ncols()], &[y.len()]));
    }
    if spec.c_grid.is_empty() || spec.kernels.is_empty() {
        return Err(Error::invalid("grid search needs at least one C and one kernel"));
    }
    let folds = fold_assignment(y.len(), spec.folds, spec.seed)?;
    let mut kernels = spec.kernels.clone();
    kernels.sort();
    kernels.dedup();
    let mut cs = spec.c_grid.clone();
    cs.sort_by(f64::total_cmp);
    cs.dedup();
    let configs: Vec<SvrParams> = kernels
        .iter()
        .flat_map(|&k| {
            cs.iter().map(move |&c| SvrParams {
                epsilon: spec.epsilon,
                gamma: spec.gamma,
                ..SvrParams::new(c, k)
            })
        })
        .collect();
    for p in &configs {
        p.validate()?;
    }
    let tasks: Vec<(usize, usize)> = (0..configs.len()).flat_map(|c| (0..folds.len()).map(move |f| (c, f))).collect();
    let workers = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1).min(tasks.len());
    let mut scores: Vec<Option<Result<f64>>> = (0..tasks.len()).map(|_| None).collect();
    std::thread::scope(|s| {
        let chunks: Vec<_> = scores.chunks_mut(tasks.len().div_ceil(workers)).collect();
        let mut start = 0;
        for chunk in chunks {
            let offset = start;
            start += chunk.len();
            let (tasks, configs, folds) = (&tasks, &configs, &folds);
            s.spawn(move || {
                for (k, slot) in chunk.iter_mut().enumerate() {
                    let (c, f) = tasks[offset + k];
                    *slot = Some(fold_score(z, y, &folds[f], &configs[c]));
                }
            });
        }
    });
    let mut rows = Vec::with_capacity(configs.len());
    let mut it = scores.into_iter();
    for params in configs {
        let fold_mae = (0..folds.len())
            .map(|_| it.next().flatten().expect("every task ran"))
            .collect::<Result<Vec<f64>>>()?;
        let mean_mae = fold_mae.iter().sum::<f64>() / fold_mae.len() as f64;
        rows.push(GridRow { params, fold_mae, mean_mae });
    }
    let mut best = 0;
    for (i, r) in rows.iter().enumerate() {
        if r.mean_mae < rows[best].mean_mae {
            best = i;
        }
    }
    Ok(GridResult {
        best: rows[best].params,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;
    use rand::Rng;
    use rand_distr::{Distribution, Normal};

    #[test]
    fn folds_partition_indices() {
        let f = fold_assignment(23, 5, 9).unwrap();
        let mut all: Vec<usize> = f.iter().flatten().copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..23).collect::<Vec<_>>());
        assert!(f.iter().all(|x| x.len() == 4 || x.len() == 5));
        assert!(fold_assignment(4, 5, 0).is_err());
    }

    #[test]
    fn linear_data_selects_linear_kernel() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let noise = Normal::new(0.0, 0.05).unwrap();
        let z = Array2::from_shape_fn((60, 3), |_| rng.random_range(-2.0..2.0));
        let y: Vec<f64> = z
            .rows()
            .into_iter()
            .map(|r| 1.5 * r[0] - 0.7 * r[1] + 0.2 * r[2] + noise.sample(&mut rng))
            .collect();
        let spec = GridSpec { seed: 3, ..GridSpec::default() };
        let res = grid_search_cv(z.view(), &y, &spec).unwrap();
        assert_eq!(res.rows.len(), 6);
        assert_eq!(res.best.kernel, KernelKind::Linear);
        let again = grid_search_cv(z.view(), &y, &spec).unwrap();
        assert_eq!(res, again);
    }
}

use std::collections::BTreeSet;
use std::path::PathBuf;

use ndarray::{Array1, Array2};
use proptest::prelude::*;

use latvol::data::{
    decode_mvol, group_split, load_manifest, read_mvol, resample_trilinear, save_manifest, write_mvol, Volume3D,
    VolumeRecord, DEFAULT_RATIOS,
};
use latvol::latent_analysis::{fold_assignment, pca_fit, project, svr_fit, KernelKind, SvrParams};
use latvol::metrics::{mae, psnr, r2, rmse, ssim3d, SsimConfig};
use latvol::objectives::{kl_diag_gaussian, mmd, KernelConfig};
use latvol::tensor::{conv3d_output_extent, ConvGeometry, Graph, Tensor};
use latvol::vae3d::GaussianPosterior;

fn cases(n: u32) -> ProptestConfig {
    ProptestConfig::with_cases(n)
}

fn values(len: usize, lo: f64, hi: f64) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(lo..hi, len)
}

fn tensor(shape: &[usize], data: Vec<f64>) -> Tensor {
    Tensor::new(shape.to_vec(), data).unwrap()
}

#[derive(Debug, Clone)]
struct ConvCase {
    n: usize,
    cin: usize,
    cout: usize,
    extent: usize,
    geom: ConvGeometry,
    seed: u64,
}

fn conv_case() -> impl Strategy<Value = ConvCase> {
    (1usize..=2, 1usize..=3, 1usize..=3, 3usize..=6, prop_oneof![Just(1usize), Just(3)], 1usize..=2, 0usize..=1, any::<u64>())
        .prop_map(|(n, cin, cout, extent, k, s, p, seed)| ConvCase {
            n,
            cin,
            cout,
            extent,
            geom: ConvGeometry::new(k, s, p.min(k / 2)),
            seed,
        })
}

fn seeded(len: usize, seed: u64) -> Vec<f64> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    (0..len).map(|_| rng.random_range(-1.0..1.0)).collect()
}

proptest! {
    #![proptest_config(cases(64))]

    #[test]
    fn conv_transpose_is_adjoint(c in conv_case()) {
        let o = conv3d_output_extent(c.extent, c.geom).unwrap();
        let k = c.geom.kernel;
        let reach = (o - 1) * c.geom.stride + k;
        let output_padding = c.extent + 2 * c.geom.padding - reach;
        prop_assume!(output_padding < c.geom.stride);
        let e = c.extent;
        let xs = [c.n, c.cin, e, e, e];
        let ys = [c.n, c.cout, o, o, o];
        let ws = [c.cout, c.cin, k, k, k];
        let x = tensor(&xs, seeded(xs.iter().product(), c.seed));
        let y = tensor(&ys, seeded(ys.iter().product(), c.seed ^ 1));
        let w = tensor(&ws, seeded(ws.iter().product(), c.seed ^ 2));
        let g = Graph::new();
        let (xv, yv, wv) = (g.constant(x.clone()), g.constant(y.clone()), g.constant(w));
        let ax = g.value(g.conv3d(xv, wv, c.geom).unwrap());
        let aty = g.value(g.conv3d_transpose(yv, wv, c.geom, output_padding).unwrap());
        prop_assert_eq!(aty.shape(), x.shape());
        let lhs = ax.dot(&y);
        let rhs = x.dot(&aty);
        prop_assert!((lhs - rhs).abs() <= 1e-8 * lhs.abs().max(rhs.abs()).max(1.0), "{} vs {}", lhs, rhs);
    }

    #[test]
    fn backward_is_linear_and_deterministic(
        x in values(2 * 2 * 4 * 4 * 4, -1.0, 1.0),
        w in values(3 * 2 * 27, -0.5, 0.5),
        m in values(2 * 5, -1.0, 1.0),
        a in -2.0f64..2.0,
        b in -2.0f64..2.0,
    ) {
        let run = |ca: f64, cb: f64| {
            let g = Graph::new();
            let xv = g.param(tensor(&[2, 2, 4, 4, 4], x.clone()));
            let wv = g.param(tensor(&[3, 2, 3, 3, 3], w.clone()));
            let mv = g.param(tensor(&[2, 5], m.clone()));
            let conv = g.conv3d(xv, wv, ConvGeometry::new(3, 2, 1)).unwrap();
            let f = g.mean(g.square(g.leaky_relu(conv)));
            let flat = g.reshape(xv, &[2, 128]).unwrap();
            let head = g.gather(flat, 1, &[0, 1]).unwrap();
            let proj = g.matmul(g.transpose(head).unwrap(), mv).unwrap();
            let gg = g.sum(g.sigmoid(proj));
            let root = g.add(g.scale(f, ca), g.scale(gg, cb)).unwrap();
            let grads = g.backward(root).unwrap();
            let value = g.value(root).item();
            let out: Vec<Vec<f64>> = [xv, wv, mv].iter().map(|&v| grads.get(v).unwrap().data().to_vec()).collect();
            (value, out)
        };
        let (v1, combo) = run(a, b);
        let (v2, again) = run(a, b);
        prop_assert_eq!(v1.to_bits(), v2.to_bits());
        prop_assert_eq!(&combo, &again);
        let (_, fa) = run(1.0, 0.0);
        let (_, gb) = run(0.0, 1.0);
        for ((c, f), g) in combo.iter().zip(&fa).zip(&gb) {
            for ((c, f), g) in c.iter().zip(f).zip(g) {
                prop_assert!((c - (a * f + b * g)).abs() <= 1e-10, "{} vs {}", c, a * f + b * g);
            }
        }
    }

    #[test]
    fn kl_is_nonnegative(mu in values(6, -5.0, 5.0), logvar in values(6, -10.0, 10.0)) {
        let kl = kl_diag_gaussian(&GaussianPosterior { mu: mu.clone(), logvar: logvar.clone() });
        prop_assert!(kl >= 0.0);
        let zero = kl_diag_gaussian(&GaussianPosterior { mu: vec![0.0; 6], logvar: vec![0.0; 6] });
        prop_assert_eq!(zero, 0.0);
        if mu.iter().chain(&logvar).any(|v| v.abs() > 1e-3) {
            prop_assert!(kl > 0.0);
        }
    }

    #[test]
    fn biased_mmd_is_nonnegative(a in values(12, -3.0, 3.0), b in values(12, -3.0, 3.0)) {
        let rows = |v: &[f64]| v.chunks(3).map(<[f64]>::to_vec).collect::<Vec<_>>();
        let v = mmd(&rows(&a), &rows(&b), KernelConfig::for_latent_dim(3)).unwrap();
        prop_assert!(v >= -1e-15);
    }
}

fn records(sizes: &[usize]) -> Vec<VolumeRecord> {
    sizes
        .iter()
        .enumerate()
        .flat_map(|(s, &n)| {
            (0..n).map(move |t| VolumeRecord {
                subject_id: format!("s{s:03}"),
                session_id: format!("t{t}"),
                path: PathBuf::from(format!("volumes/s{s:03}_t{t}.mvol")),
                age: 20.0 + s as f64 + 0.25 * t as f64,
                sdmt: if s % 3 == 0 { None } else { Some(40.0 + t as f64) },
                sex: (s % 2) as u8,
            })
        })
        .collect()
}

proptest! {
    #![proptest_config(cases(128))]

    #[test]
    fn group_split_partitions_subjects(sizes in prop::collection::vec(1usize..=5, 3..60), seed in any::<u64>()) {
        let recs = records(&sizes);
        let split = group_split(&recs, DEFAULT_RATIOS, seed).unwrap();
        let mut ids: Vec<String> = split.parts().iter().flat_map(|p| p.iter().map(VolumeRecord::id)).collect();
        prop_assert_eq!(ids.len(), recs.len());
        ids.sort();
        let mut expected: Vec<String> = recs.iter().map(VolumeRecord::id).collect();
        expected.sort();
        prop_assert_eq!(ids, expected);
        let subjects: Vec<BTreeSet<&str>> =
            split.parts().iter().map(|p| p.iter().map(|r| r.subject_id.as_str()).collect()).collect();
        for i in 0..3 {
            prop_assert!(!subjects[i].is_empty());
            for j in i + 1..3 {
                prop_assert!(subjects[i].is_disjoint(&subjects[j]));
            }
        }
        let total = recs.len();
        if sizes.iter().all(|&n| 10 * n <= total) {
            let target = [0.8, 0.1, 0.1];
            for (part, t) in split.parts().iter().zip(target) {
                let got = part.len() as f64 / total as f64;
                prop_assert!((got - t).abs() <= 0.05, "fraction {} vs {}", got, t);
            }
        }
    }

    #[test]
    fn folds_partition_indices(n in 5usize..200, folds in 2usize..=5, seed in any::<u64>()) {
        let f = fold_assignment(n, folds, seed).unwrap();
        prop_assert_eq!(f.len(), folds);
        let mut all: Vec<usize> = f.concat();
        all.sort_unstable();
        prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
        prop_assert!(f.iter().all(|s| !s.is_empty()));
        prop_assert_eq!(f, fold_assignment(n, folds, seed).unwrap());
    }

    #[test]
    fn regression_metrics_are_consistent(
        pairs in prop::collection::vec((-10.0f64..10.0, -10.0f64..10.0), 2..40),
        shift in any::<u64>(),
    ) {
        let (y, yhat): (Vec<f64>, Vec<f64>) = pairs.iter().copied().unzip();
        let m = mae(&y, &yhat).unwrap();
        let r = rmse(&y, &yhat).unwrap();
        prop_assert!(r + 1e-12 >= m);
        let k = (shift as usize) % y.len();
        let mut py = y.clone();
        let mut ph = yhat.clone();
        py.rotate_left(k);
        ph.rotate_left(k);
        py.reverse();
        ph.reverse();
        prop_assert!((mae(&py, &ph).unwrap() - m).abs() <= 1e-12);
        prop_assert!((rmse(&py, &ph).unwrap() - r).abs() <= 1e-12);
        if let Ok(a) = r2(&y, &yhat) {
            prop_assert!((r2(&py, &ph).unwrap() - a).abs() <= 1e-9);
        }
    }
}

fn volume(extent: usize, seed: u64) -> Volume3D {
    let data = seeded(extent * extent * extent, seed).into_iter().map(|v| (0.5 + 0.5 * v) as f32).collect();
    Volume3D::cube(extent, data).unwrap()
}

proptest! {
    #![proptest_config(cases(48))]

    #[test]
    fn ssim_is_bounded_symmetric_and_identity_exact(sa in any::<u64>(), sb in any::<u64>()) {
        let cfg = SsimConfig::default();
        let (a, b) = (volume(9, sa), volume(9, sb));
        let ab = ssim3d(&a, &b, &cfg).unwrap();
        let ba = ssim3d(&b, &a, &cfg).unwrap();
        prop_assert!((-1.0..=1.0).contains(&ab));
        prop_assert!((ab - ba).abs() <= 1e-12);
        prop_assert!((ssim3d(&a, &a, &cfg).unwrap() - 1.0).abs() <= 1e-12);
        if sa != sb {
            prop_assert!(ab < 1.0);
        }
    }

    #[test]
    fn psnr_falls_as_noise_grows(seed in any::<u64>()) {
        let clean = volume(8, seed);
        let pattern = seeded(clean.len(), seed ^ 0x55);
        let scores: Vec<f64> = [0.01, 0.05, 0.1]
            .iter()
            .map(|amp| {
                let noisy: Vec<f32> =
                    clean.data().iter().zip(&pattern).map(|(&c, n)| (c as f64 + amp * n) as f32).collect();
                psnr(&clean, &Volume3D::new(clean.dims(), noisy).unwrap(), 1.0).unwrap()
            })
            .collect();
        prop_assert!(scores[0] > scores[1] && scores[1] > scores[2], "{:?}", scores);
    }

    #[test]
    fn resampling_stays_within_input_range(src in 2usize..10, dst in 2usize..12, seed in any::<u64>()) {
        let v = volume(src, seed);
        let out = resample_trilinear(&v, dst).unwrap();
        prop_assert!(out.is_cube(dst));
        let lo = v.data().iter().copied().fold(f32::INFINITY, f32::min);
        let hi = v.data().iter().copied().fold(f32::NEG_INFINITY, f32::max);
        prop_assert!(out.data().iter().all(|&x| x >= lo - 1e-6 && x <= hi + 1e-6));
    }

    #[test]
    fn mvol_round_trips_bit_exactly(dims in (1usize..6, 1usize..6, 1usize..6), bits in prop::collection::vec(any::<u32>(), 125)) {
        let n = dims.0 * dims.1 * dims.2;
        let data: Vec<f32> = bits[..n].iter().map(|&b| f32::from_bits(b)).collect();
        let v = Volume3D::new([dims.0, dims.1, dims.2], data).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v.mvol");
        write_mvol(&v, &path).unwrap();
        let back = read_mvol(&path).unwrap();
        prop_assert_eq!(back.dims(), v.dims());
        let same = back.data().iter().zip(v.data()).all(|(a, b)| a.to_bits() == b.to_bits());
        prop_assert!(same);
        let bytes = std::fs::read(&path).unwrap();
        prop_assert_eq!(decode_mvol(&bytes, &path).unwrap().dims(), v.dims());
    }

    #[test]
    fn manifest_round_trips(sizes in prop::collection::vec(1usize..=3, 1..12)) {
        let recs = records(&sizes);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        save_manifest(&recs, &path).unwrap();
        prop_assert_eq!(load_manifest(&path).unwrap(), recs);
    }
}

fn matrix(n: usize, d: usize, data: &[f64]) -> Array2<f64> {
    Array2::from_shape_vec((n, d), data[..n * d].to_vec()).unwrap()
}

proptest! {
    #![proptest_config(cases(48))]

    #[test]
    fn svr_solutions_satisfy_kkt_and_box(
        n in 6usize..24,
        d in 1usize..4,
        data in values(24 * 4, -2.0, 2.0),
        noise in values(24, -1.0, 1.0),
        c in prop_oneof![Just(0.1), Just(1.0), Just(10.0)],
        rbf in any::<bool>(),
    ) {
        let z = matrix(n, d, &data);
        let y: Vec<f64> = (0..n).map(|i| z.row(i).sum() + 0.5 * noise[i]).collect();
        let kind = if rbf { KernelKind::Rbf } else { KernelKind::Linear };
        let model = svr_fit(z.view(), &y, &SvrParams::new(c, kind)).unwrap();
        prop_assert!(model.kkt_residual < 1e-3, "kkt {}", model.kkt_residual);
        prop_assert!(model.dual_coeffs.iter().all(|t| t.abs() <= c + 1e-12));
        prop_assert!(model.dual_coeffs.iter().sum::<f64>().abs() <= 1e-8);
        let again = svr_fit(z.view(), &y, &SvrParams::new(c, kind)).unwrap();
        prop_assert_eq!(model, again);
    }

    #[test]
    fn pca_columns_orthonormal_and_ordered(n in 4usize..30, d in 2usize..6, data in values(30 * 6, -3.0, 3.0)) {
        let z = matrix(n, d, &data);
        let p = pca_fit(z.view()).unwrap();
        let gram = p.w.t().dot(&p.w);
        for i in 0..2 {
            for j in 0..2 {
                let want = if i == j { 1.0 } else { 0.0 };
                prop_assert!((gram[[i, j]] - want).abs() <= 1e-9);
            }
        }
        let s = project(z.view(), &p).unwrap();
        let var = |c: usize| s.column(c).iter().map(|v| v * v).sum::<f64>() / (n - 1) as f64;
        prop_assert!(var(0) + 1e-9 >= var(1));
        prop_assert!(p.component_variance[0] >= p.component_variance[1]);
    }

    #[test]
    fn pca_reconstructs_rank_two_data(n in 4usize..30, d in 3usize..7, coef in values(30 * 2, -3.0, 3.0), basis in values(2 * 7, -1.0, 1.0)) {
        let scores = matrix(n, 2, &coef);
        let b = matrix(2, d, &basis);
        prop_assume!((b.row(0).dot(&b.row(0)) * b.row(1).dot(&b.row(1)) - b.row(0).dot(&b.row(1)).powi(2)) > 1e-2);
        let offset = Array1::from_iter((0..d).map(|j| j as f64 - 1.0));
        let z = scores.dot(&b) + &offset;
        let centered = &z - &z.mean_axis(ndarray::Axis(0)).unwrap();
        prop_assume!({
            let cov = centered.t().dot(&centered);
            cov.diag().sum() > 1e-3
        });
        let p = pca_fit(z.view()).unwrap();
        if !p.rank_deficient {
            let back = project(z.view(), &p).unwrap().dot(&p.w.t());
            let err = (&back - &centered).iter().fold(0.0f64, |m, v| m.max(v.abs()));
            prop_assert!(err <= 1e-8, "reconstruction error {}", err);
        }
    }
}

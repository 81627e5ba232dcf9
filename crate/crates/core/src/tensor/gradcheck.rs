use super::{Graph, Tensor, Var};
use crate::error::Result;

/// Outcome of comparing reverse-mode gradients against central differences.
#[derive(Clone, Debug)]
pub struct GradientCheck {
    /// `max |a - b| / max(|a|, |b|, floor)` over every checked coordinate.
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    /// Largest analytic gradient magnitude.
    pub max_gradient: f64,
    /// (input index, flat coordinate) where the maximum was attained.
    pub worst: (usize, usize),
    pub analytic: f64,
    pub numeric: f64,
    pub coordinates: usize,
}

/// Default magnitude below which errors are measured in absolute terms.
pub const REL_FLOOR: f64 = 1e-8;

fn eval_scalar<F>(f: &F, inputs: &[Tensor]) -> Result<f64>
where
    F: Fn(&Graph, &[Var]) -> Result<Var>,
{
    let g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.constant(t.clone())).collect();
    let root = f(&g, &vars)?;
    Ok(g.value(root).item())
}

/// `(f(x + h e_i) - f(x - h e_i)) / 2h` for every coordinate of `inputs[which]`.
pub fn central_difference<F>(f: &F, inputs: &[Tensor], which: usize, h: f64) -> Result<Vec<f64>>
where
    F: Fn(&Graph, &[Var]) -> Result<Var>,
{
    let mut work = inputs.to_vec();
    let n = inputs[which].numel();
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let orig = inputs[which].data()[i];
        let mut data = inputs[which].data().to_vec();
        data[i] = orig + h;
        work[which] = Tensor::new(inputs[which].shape().to_vec(), data.clone())?;
        let plus = eval_scalar(f, &work)?;
        data[i] = orig - h;
        work[which] = Tensor::new(inputs[which].shape().to_vec(), data)?;
        let minus = eval_scalar(f, &work)?;
        out.push((plus - minus) / (2.0 * h));
    }
    work[which] = inputs[which].clone();
    Ok(out)
}

/// Checks `f` with respect to every coordinate of every input tensor.
pub fn gradient_check<F>(f: F, inputs: &[Tensor], h: f64) -> Result<GradientCheck>
where
    F: Fn(&Graph, &[Var]) -> Result<Var>,
{
    gradient_check_with_floor(f, inputs, h, REL_FLOOR)
}

/// As [`gradient_check`], with coordinates whose gradients are smaller than
/// `floor` compared in absolute terms.
pub fn gradient_check_with_floor<F>(f: F, inputs: &[Tensor], h: f64, floor: f64) -> Result<GradientCheck>
where
    F: Fn(&Graph, &[Var]) -> Result<Var>,
{
    let g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.param(t.clone())).collect();
    let root = f(&g, &vars)?;
    let grads = g.backward(root)?;

    let mut report = GradientCheck {
        max_rel_error: 0.0,
        max_abs_error: 0.0,
        max_gradient: 0.0,
        worst: (0, 0),
        analytic: 0.0,
        numeric: 0.0,
        coordinates: 0,
    };
    for (which, (&var, input)) in vars.iter().zip(inputs).enumerate() {
        let analytic = grads.get_or_zeros(var, input.shape());
        let numeric = central_difference(&f, inputs, which, h)?;
        for (i, (&a, &b)) in analytic.data().iter().zip(&numeric).enumerate() {
            let err = (a - b).abs() / a.abs().max(b.abs()).max(floor);
            report.max_abs_error = report.max_abs_error.max((a - b).abs());
            report.max_gradient = report.max_gradient.max(a.abs());
            report.coordinates += 1;
            if err > report.max_rel_error || report.coordinates == 1 {
                report.max_rel_error = err;
                report.worst = (which, i);
                report.analytic = a;
                report.numeric = b;
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::ConvGeometry;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(shape: &[usize], seed: u64) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = shape.iter().product();
        Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn sigmoid_sum() {
        let x = random(&[32], 1);
        let r = gradient_check(|g, v| Ok(g.sum(g.sigmoid(v[0]))), &[x], 1e-5).unwrap();
        assert!(r.max_rel_error < 1e-4, "{r:?}");
    }

    #[test]
    fn linear_function_is_exact() {
        let x = random(&[16], 2);
        let w = random(&[16], 3);
        let r = gradient_check(
            move |g, v| {
                let c = g.constant(w.clone());
                Ok(g.sum(g.mul(v[0], c)?))
            },
            &[x],
            1e-5,
        )
        .unwrap();
        assert!(r.max_rel_error < 1e-8, "{r:?}");
    }

    #[test]
    fn every_primitive() {
        let a = random(&[3, 4], 10);
        let b = random(&[4, 2], 11);
        let c = random(&[3, 4], 12).map(|v| v.abs() + 0.5);
        let bias = random(&[4], 13);
        let check = |f: &dyn Fn(&Graph, &[Var]) -> Result<Var>, inputs: &[Tensor]| {
            let r = gradient_check(f, inputs, 1e-5).unwrap();
            assert!(r.max_rel_error < 1e-4, "{r:?}");
        };
        let (ia, ib, ic, ibias) = (a.clone(), b.clone(), c.clone(), bias.clone());
        check(&|g, v| Ok(g.sum(g.matmul(v[0], v[1])?)), &[ia.clone(), ib.clone()]);
        check(&|g, v| Ok(g.sum(g.square(g.matmul(v[0], v[1])?))), &[ia.clone(), ib]);
        check(&|g, v| Ok(g.mean(g.exp(v[0]))), &[ia.clone()]);
        check(&|g, v| Ok(g.sum(g.log(v[0])?)), &[ic.clone()]);
        check(
            &|g, v| Ok(g.sum(g.square(g.sub(g.mul(v[0], v[1])?, v[0])?))),
            &[ia.clone(), ic.clone()],
        );
        check(&|g, v| Ok(g.sum(g.square(g.add_bias(v[0], v[1])?))), &[ia.clone(), ibias]);
        check(&|g, v| Ok(g.sum(g.square(g.leaky_relu(v[0])))), &[ia.clone()]);
        check(&|g, v| Ok(g.sum(g.square(g.transpose(v[0])?))), &[ia.clone()]);
        check(
            &|g, v| {
                let r = g.reshape(v[0], &[2, 6])?;
                let picked = g.gather(r, 1, &[5, 0, 0])?;
                Ok(g.sum(g.square(picked)))
            },
            &[ia.clone()],
        );
        check(
            &|g, v| {
                let cat = g.concat(&[v[0], v[1]], 0)?;
                Ok(g.sum(g.exp(g.scale(cat, 0.5))))
            },
            &[ia.clone(), ic],
        );
        check(&|g, v| Ok(g.sum(g.exp(g.scale(g.sq_dist(v[0], v[1])?, -0.3)))), &[ia, random(&[5, 4], 14)]);
    }

    #[test]
    fn conv_primitives() {
        let geom = ConvGeometry::new(3, 2, 1);
        let x = random(&[2, 2, 4, 4, 4], 20);
        let w = random(&[3, 2, 3, 3, 3], 21);
        let r = gradient_check(
            |g, v| Ok(g.sum(g.square(g.conv3d(v[0], v[1], geom)?))),
            &[x, w],
            1e-5,
        )
        .unwrap();
        assert!(r.max_rel_error < 1e-4, "{r:?}");

        let y = random(&[2, 3, 2, 2, 2], 22);
        let wt = random(&[3, 2, 3, 3, 3], 23);
        let r = gradient_check(
            |g, v| Ok(g.sum(g.square(g.conv3d_transpose(v[0], v[1], geom, 1)?))),
            &[y, wt],
            1e-5,
        )
        .unwrap();
        assert!(r.max_rel_error < 1e-4, "{r:?}");
    }
}

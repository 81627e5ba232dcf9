use std::cell::RefCell;
use std::sync::Arc;

use super::conv::{self, ConvGeometry, Dims5};
use super::Tensor;
use crate::error::{Error, Result};

/// Negative-side slope of the leaky rectifier.
pub const LEAKY_SLOPE: f64 = 0.01;

/// Handle to a node recorded in a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    MatMul(Var, Var),
    Transpose(Var),
    Reshape(Var),
    Sum(Var),
    Mean(Var),
    Exp(Var),
    Log(Var),
    Square(Var),
    AddBias(Var, Var),
    LeakyRelu(Var),
    Sigmoid(Var),
    Clamp(Var, f64, f64),
    Conv3d(Var, Var, ConvGeometry),
    Conv3dTranspose(Var, Var, ConvGeometry),
    Concat(Vec<Var>, usize),
    Gather(Var, usize, Vec<usize>),
    SqDist(Var, Var),
}

struct Node {
    value: Arc<Tensor>,
    op: Op,
    needs_grad: bool,
    is_param: bool,
}

/// Records forward primitives in topological order and replays them in
/// reverse to accumulate gradients.
#[derive(Default)]
pub struct Graph {
    nodes: RefCell<Vec<Node>>,
}

/// Gradients of a scalar root with respect to every parameter leaf.
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, var: Var) -> Option<&Tensor> {
        self.grads.get(var.0).and_then(|g| g.as_ref())
    }

    /// Gradient for `var`, or zeros shaped like `like` when the root does not
    /// depend on it.
    pub fn get_or_zeros(&self, var: Var, like: &[usize]) -> Tensor {
        self.get(var).cloned().unwrap_or_else(|| Tensor::zeros(like))
    }
}

fn outer_axis_inner(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

fn matmul_raw(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            for (o, &bv) in row.iter_mut().zip(&b[p * n..(p + 1) * n]) {
                *o += av * bv;
            }
        }
    }
    out
}

fn transpose_raw(a: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; rows * cols];
    for i in 0..rows {
        for j in 0..cols {
            out[j * rows + i] = a[i * cols + j];
        }
    }
    out
}

impl Graph {
    pub fn new() -> Self {
        Graph::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, value: Tensor, op: Op, needs_grad: bool) -> Var {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value: Arc::new(value),
            op,
            needs_grad,
            is_param: false,
        });
        Var(nodes.len() - 1)
    }

    fn needs(&self, vars: &[Var]) -> bool {
        let nodes = self.nodes.borrow();
        vars.iter().any(|v| nodes[v.0].needs_grad)
    }

    /// Leaf whose gradient is reported by [`Graph::backward`].
    pub fn param(&self, value: Tensor) -> Var {
        let var = self.push(value, Op::Leaf, true);
        self.nodes.borrow_mut()[var.0].is_param = true;
        var
    }

    /// Leaf treated as a constant.
    pub fn constant(&self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, var: Var) -> Arc<Tensor> {
        Arc::clone(&self.nodes.borrow()[var.0].value)
    }

    pub fn shape(&self, var: Var) -> Vec<usize> {
        self.nodes.borrow()[var.0].value.shape().to_vec()
    }

    fn unary(&self, x: Var, op: Op, f: impl Fn(f64) -> f64) -> Var {
        let out = self.value(x).map(f);
        let needs = self.needs(&[x]);
        self.push(out, op, needs)
    }

    fn binary_same_shape(
        &self,
        name: &'static str,
        a: Var,
        b: Var,
        op: Op,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.shape() != bv.shape() {
            return Err(Error::shape(name, av.shape(), bv.shape()));
        }
        let data = av.data().iter().zip(bv.data()).map(|(&x, &y)| f(x, y)).collect();
        let out = Tensor::new(av.shape().to_vec(), data)?;
        let needs = self.needs(&[a, b]);
        Ok(self.push(out, op, needs))
    }

    pub fn add(&self, a: Var, b: Var) -> Result<Var> {
        self.binary_same_shape("add", a, b, Op::Add(a, b), |x, y| x + y)
    }

    pub fn sub(&self, a: Var, b: Var) -> Result<Var> {
        self.binary_same_shape("sub", a, b, Op::Sub(a, b), |x, y| x - y)
    }

    pub fn mul(&self, a: Var, b: Var) -> Result<Var> {
        self.binary_same_shape("mul", a, b, Op::Mul(a, b), |x, y| x * y)
    }

    pub fn scale(&self, x: Var, factor: f64) -> Var {
        self.unary(x, Op::Scale(x, factor), |v| v * factor)
    }

    pub fn add_scalar(&self, x: Var, offset: f64) -> Var {
        self.unary(x, Op::AddScalar(x), |v| v + offset)
    }

    pub fn exp(&self, x: Var) -> Var {
        self.unary(x, Op::Exp(x), f64::exp)
    }

    /// Natural logarithm; every input entry must be strictly positive.
    pub fn log(&self, x: Var) -> Result<Var> {
        let xv = self.value(x);
        if let Some(bad) = xv.data().iter().find(|&&v| !(v > 0.0)) {
            return Err(Error::invalid(format!("log: non-positive input {bad}")));
        }
        Ok(self.unary(x, Op::Log(x), f64::ln))
    }

    pub fn square(&self, x: Var) -> Var {
        self.unary(x, Op::Square(x), |v| v * v)
    }

    pub fn leaky_relu(&self, x: Var) -> Var {
        self.unary(x, Op::LeakyRelu(x), |v| if v > 0.0 { v } else { LEAKY_SLOPE * v })
    }

    pub fn sigmoid(&self, x: Var) -> Var {
        self.unary(x, Op::Sigmoid(x), sigmoid)
    }

    /// Elementwise clamp to `[lo, hi]`; gradient is zero where clamped.
    pub fn clamp(&self, x: Var, lo: f64, hi: f64) -> Var {
        self.unary(x, Op::Clamp(x, lo, hi), |v| v.clamp(lo, hi))
    }

    pub fn reshape(&self, x: Var, shape: &[usize]) -> Result<Var> {
        let xv = self.value(x);
        let numel: usize = shape.iter().product();
        if numel != xv.numel() {
            return Err(Error::shape("reshape", xv.shape(), shape));
        }
        let out = xv.reshaped(shape)?;
        let needs = self.needs(&[x]);
        Ok(self.push(out, Op::Reshape(x), needs))
    }

    pub fn sum(&self, x: Var) -> Var {
        let total: f64 = self.value(x).data().iter().sum();
        let needs = self.needs(&[x]);
        self.push(Tensor::scalar(total), Op::Sum(x), needs)
    }

    pub fn mean(&self, x: Var) -> Var {
        let xv = self.value(x);
        let total: f64 = xv.data().iter().sum::<f64>() / xv.numel() as f64;
        let needs = self.needs(&[x]);
        self.push(Tensor::scalar(total), Op::Mean(x), needs)
    }

    /// `[m, k] x [k, n] -> [m, n]`.
    pub fn matmul(&self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        let (sa, sb) = (av.shape(), bv.shape());
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(Error::shape("matmul", sa, sb));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let out = Tensor::new(vec![m, n], matmul_raw(av.data(), bv.data(), m, k, n))?;
        let needs = self.needs(&[a, b]);
        Ok(self.push(out, Op::MatMul(a, b), needs))
    }

    pub fn transpose(&self, x: Var) -> Result<Var> {
        let xv = self.value(x);
        let s = xv.shape();
        if s.len() != 2 {
            return Err(Error::shape("transpose", s, &[0, 0]));
        }
        let out = Tensor::new(vec![s[1], s[0]], transpose_raw(xv.data(), s[0], s[1]))?;
        let needs = self.needs(&[x]);
        Ok(self.push(out, Op::Transpose(x), needs))
    }

    /// Adds `bias[c]` to every entry whose axis-1 index is `c`.
    pub fn add_bias(&self, x: Var, bias: Var) -> Result<Var> {
        let (xv, bv) = (self.value(x), self.value(bias));
        let s = xv.shape();
        if s.len() < 2 || bv.shape() != [s[1]] {
            return Err(Error::shape("add_bias", s, bv.shape()));
        }
        let (outer, channels, inner) = outer_axis_inner(s, 1);
        let mut data = xv.data().to_vec();
        for o in 0..outer {
            for c in 0..channels {
                let b = bv.data()[c];
                let start = (o * channels + c) * inner;
                for v in &mut data[start..start + inner] {
                    *v += b;
                }
            }
        }
        let out = Tensor::new(s.to_vec(), data)?;
        let needs = self.needs(&[x, bias]);
        Ok(self.push(out, Op::AddBias(x, bias), needs))
    }

    /// 3-D convolution of `[N, C_in, D, H, W]` by `[C_out, C_in, k, k, k]`.
    pub fn conv3d(&self, x: Var, weight: Var, geom: ConvGeometry) -> Result<Var> {
        let (xv, wv) = (self.value(x), self.value(weight));
        let (xs, ws) = (xv.shape(), wv.shape());
        let k = geom.kernel;
        if xs.len() != 5 || ws.len() != 5 || ws[1] != xs[1] || ws[2..] != [k, k, k] {
            return Err(Error::shape("conv3d", xs, ws));
        }
        let extent = |e| conv::conv3d_output_extent(e, geom);
        let (Some(od), Some(oh), Some(ow)) = (extent(xs[2]), extent(xs[3]), extent(xs[4])) else {
            return Err(Error::shape("conv3d", xs, ws));
        };
        let out_shape = vec![xs[0], ws[0], od, oh, ow];
        let data = conv::conv3d_forward(
            xv.data(),
            Dims5::from_shape(xs),
            wv.data(),
            Dims5::from_shape(&out_shape),
            geom,
        );
        let out = Tensor::new(out_shape, data)?;
        let needs = self.needs(&[x, weight]);
        Ok(self.push(out, Op::Conv3d(x, weight, geom), needs))
    }

    /// Transposed 3-D convolution of `[N, C_in, D, H, W]` by
    /// `[C_in, C_out, k, k, k]`; the adjoint of [`Graph::conv3d`] with the
    /// same weight. `output_padding` selects among the output extents that map
    /// back onto the input extent under the forward convolution.
    pub fn conv3d_transpose(
        &self,
        x: Var,
        weight: Var,
        geom: ConvGeometry,
        output_padding: usize,
    ) -> Result<Var> {
        let (xv, wv) = (self.value(x), self.value(weight));
        let (xs, ws) = (xv.shape(), wv.shape());
        let k = geom.kernel;
        if xs.len() != 5 || ws.len() != 5 || ws[0] != xs[1] || ws[2..] != [k, k, k] {
            return Err(Error::shape("conv3d_transpose", xs, ws));
        }
        let extent = |e| conv::conv3d_transpose_output_extent(e, geom, output_padding);
        let (Some(od), Some(oh), Some(ow)) = (extent(xs[2]), extent(xs[3]), extent(xs[4])) else {
            return Err(Error::shape("conv3d_transpose", xs, ws));
        };
        let out_shape = vec![xs[0], ws[1], od, oh, ow];
        let data = conv::conv3d_backward_input(
            xv.data(),
            Dims5::from_shape(xs),
            wv.data(),
            Dims5::from_shape(&out_shape),
            geom,
        );
        let out = Tensor::new(out_shape, data)?;
        let needs = self.needs(&[x, weight]);
        Ok(self.push(out, Op::Conv3dTranspose(x, weight, geom), needs))
    }

    pub fn concat(&self, parts: &[Var], axis: usize) -> Result<Var> {
        let Some(&first) = parts.first() else {
            return Err(Error::invalid("concat: no operands"));
        };
        let base = self.shape(first);
        if axis >= base.len() {
            return Err(Error::shape("concat", &base, &[axis]));
        }
        let mut total_axis = 0;
        let values: Vec<Arc<Tensor>> = parts.iter().map(|&p| self.value(p)).collect();
        for v in &values {
            let s = v.shape();
            let compatible = s.len() == base.len()
                && s.iter().zip(&base).enumerate().all(|(i, (a, b))| i == axis || a == b);
            if !compatible {
                return Err(Error::shape("concat", &base, s));
            }
            total_axis += s[axis];
        }
        let mut out_shape = base.clone();
        out_shape[axis] = total_axis;
        let (outer, _, inner) = outer_axis_inner(&out_shape, axis);
        let mut data = Vec::with_capacity(outer * total_axis * inner);
        for o in 0..outer {
            for v in &values {
                let chunk = v.shape()[axis] * inner;
                data.extend_from_slice(&v.data()[o * chunk..(o + 1) * chunk]);
            }
        }
        let out = Tensor::new(out_shape, data)?;
        let needs = self.needs(parts);
        Ok(self.push(out, Op::Concat(parts.to_vec(), axis), needs))
    }

    /// Selects `indices` along `axis` (repeats allowed).
    pub fn gather(&self, x: Var, axis: usize, indices: &[usize]) -> Result<Var> {
        let xv = self.value(x);
        let s = xv.shape();
        if axis >= s.len() || indices.is_empty() || indices.iter().any(|&i| i >= s[axis]) {
            return Err(Error::shape("gather", s, &[axis, indices.len()]));
        }
        let (outer, len, inner) = outer_axis_inner(s, axis);
        let mut data = Vec::with_capacity(outer * indices.len() * inner);
        for o in 0..outer {
            for &i in indices {
                let start = (o * len + i) * inner;
                data.extend_from_slice(&xv.data()[start..start + inner]);
            }
        }
        let mut out_shape = s.to_vec();
        out_shape[axis] = indices.len();
        let out = Tensor::new(out_shape, data)?;
        let needs = self.needs(&[x]);
        Ok(self.push(out, Op::Gather(x, axis, indices.to_vec()), needs))
    }

    /// Pairwise squared Euclidean distances between the rows of `[n, d]` and
    /// `[m, d]`, giving `[n, m]`.
    pub fn sq_dist(&self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        let (sa, sb) = (av.shape(), bv.shape());
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[1] {
            return Err(Error::shape("sq_dist", sa, sb));
        }
        let (n, m, d) = (sa[0], sb[0], sa[1]);
        let mut data = vec![0.0; n * m];
        for i in 0..n {
            let ra = &av.data()[i * d..(i + 1) * d];
            for j in 0..m {
                let rb = &bv.data()[j * d..(j + 1) * d];
                data[i * m + j] = ra.iter().zip(rb).map(|(x, y)| (x - y) * (x - y)).sum();
            }
        }
        let out = Tensor::new(vec![n, m], data)?;
        let needs = self.needs(&[a, b]);
        Ok(self.push(out, Op::SqDist(a, b), needs))
    }

    /// Reverse sweep from a scalar root. Nodes are visited once each in reverse
    /// recording order, and contributions from fan-out are summed.
    pub fn backward(&self, root: Var) -> Result<Gradients> {
        let nodes = self.nodes.borrow();
        if !nodes[root.0].value.is_scalar() {
            return Err(Error::invalid(format!(
                "backward: root must be scalar, got shape {:?}",
                nodes[root.0].value.shape()
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; root.0 + 1];
        grads[root.0] = Some(vec![1.0]);

        fn accumulate(grads: &mut [Option<Vec<f64>>], nodes: &[Node], target: Var, delta: Vec<f64>) {
            if !nodes[target.0].needs_grad {
                return;
            }
            match &mut grads[target.0] {
                Some(existing) => {
                    for (e, d) in existing.iter_mut().zip(delta) {
                        *e += d;
                    }
                }
                slot @ None => *slot = Some(delta),
            }
        }

        for idx in (0..=root.0).rev() {
            let node = &nodes[idx];
            if !node.needs_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            let val = |v: Var| &nodes[v.0].value;
            let out = &node.value;
            match &node.op {
                Op::Leaf => {
                    grads[idx] = Some(g);
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads, &nodes, *a, g.clone());
                    accumulate(&mut grads, &nodes, *b, g);
                }
                Op::Sub(a, b) => {
                    let neg = g.iter().map(|v| -v).collect();
                    accumulate(&mut grads, &nodes, *a, g);
                    accumulate(&mut grads, &nodes, *b, neg);
                }
                Op::Mul(a, b) => {
                    let (av, bv) = (val(*a).data(), val(*b).data());
                    let da = g.iter().zip(bv).map(|(g, b)| g * b).collect();
                    let db = g.iter().zip(av).map(|(g, a)| g * a).collect();
                    accumulate(&mut grads, &nodes, *a, da);
                    accumulate(&mut grads, &nodes, *b, db);
                }
                Op::Scale(x, f) => {
                    let dx = g.iter().map(|v| v * f).collect();
                    accumulate(&mut grads, &nodes, *x, dx);
                }
                Op::AddScalar(x) | Op::Reshape(x) => {
                    accumulate(&mut grads, &nodes, *x, g);
                }
                Op::MatMul(a, b) => {
                    let (av, bv) = (val(*a), val(*b));
                    let (m, k, n) = (av.shape()[0], av.shape()[1], bv.shape()[1]);
                    // dA = G B^T, dB = A^T G
                    let bt = transpose_raw(bv.data(), k, n);
                    let da = matmul_raw(&g, &bt, m, n, k);
                    let at = transpose_raw(av.data(), m, k);
                    let db = matmul_raw(&at, &g, k, m, n);
                    accumulate(&mut grads, &nodes, *a, da);
                    accumulate(&mut grads, &nodes, *b, db);
                }
                Op::Transpose(x) => {
                    let s = val(*x).shape();
                    let dx = transpose_raw(&g, s[1], s[0]);
                    accumulate(&mut grads, &nodes, *x, dx);
                }
                Op::Sum(x) => {
                    let dx = vec![g[0]; val(*x).numel()];
                    accumulate(&mut grads, &nodes, *x, dx);
                }
                Op::Mean(x) => {
                    let n = val(*x).numel();
                    let dx = vec![g[0] / n as f64; n];
                    accumulate(&mut grads, &nodes, *x, dx);
                }
                Op::Exp(x) => {
                    let dx = g.iter().zip(out.data()).map(|(g, y)| g * y).collect();
                    accumulate(&mut grads, &nodes, *x, dx);
                }
                Op::Log(x) => {
                    let dx = g.iter().zip(val(*x).data()).map(|(g, v)| g / v).collect();
                    accumulate(&mut grads, &nodes, *x, dx);
                }
                Op::Square(x) => {
                    let dx = g.iter().zip(val(*x).data()).map(|(g, v)| 2.0 * g * v).collect();
                    accumulate(&mut grads, &nodes, *x, dx);
                }
                Op::LeakyRelu(x) => {
                    let dx = g
                        .iter()
                        .zip(val(*x).data())
                        .map(|(g, &v)| if v > 0.0 { *g } else { LEAKY_SLOPE * g })
                        .collect();
                    accumulate(&mut grads, &nodes, *x, dx);
                }
                Op::Sigmoid(x) => {
                    let dx = g.iter().zip(out.data()).map(|(g, y)| g * y * (1.0 - y)).collect();
                    accumulate(&mut grads, &nodes, *x, dx);
                }
                Op::Clamp(x, lo, hi) => {
                    let dx = g
                        .iter()
                        .zip(val(*x).data())
                        .map(|(g, &v)| if v >= *lo && v <= *hi { *g } else { 0.0 })
                        .collect();
                    accumulate(&mut grads, &nodes, *x, dx);
                }
                Op::AddBias(x, b) => {
                    let s = out.shape();
                    let (outer, channels, inner) = outer_axis_inner(s, 1);
                    let mut db = vec![0.0; channels];
                    for o in 0..outer {
                        for (c, acc) in db.iter_mut().enumerate() {
                            let start = (o * channels + c) * inner;
                            *acc += g[start..start + inner].iter().sum::<f64>();
                        }
                    }
                    accumulate(&mut grads, &nodes, *b, db);
                    accumulate(&mut grads, &nodes, *x, g);
                }
                Op::Conv3d(x, w, geom) => {
                    let (xv, wv) = (val(*x), val(*w));
                    let xd = Dims5::from_shape(xv.shape());
                    let yd = Dims5::from_shape(out.shape());
                    if nodes[w.0].needs_grad {
                        let dw = conv::conv3d_backward_weight(xv.data(), xd, &g, yd, *geom);
                        accumulate(&mut grads, &nodes, *w, dw);
                    }
                    if nodes[x.0].needs_grad {
                        let dx = conv::conv3d_backward_input(&g, yd, wv.data(), xd, *geom);
                        accumulate(&mut grads, &nodes, *x, dx);
                    }
                }
                Op::Conv3dTranspose(x, w, geom) => {
                    // y = A^T x where A is the forward conv mapping y-space to x-space.
                    let (xv, wv) = (val(*x), val(*w));
                    let xd = Dims5::from_shape(xv.shape());
                    let yd = Dims5::from_shape(out.shape());
                    if nodes[w.0].needs_grad {
                        let dw = conv::conv3d_backward_weight(&g, yd, xv.data(), xd, *geom);
                        accumulate(&mut grads, &nodes, *w, dw);
                    }
                    if nodes[x.0].needs_grad {
                        let dx = conv::conv3d_forward(&g, yd, wv.data(), xd, *geom);
                        accumulate(&mut grads, &nodes, *x, dx);
                    }
                }
                Op::Concat(parts, axis) => {
                    let (outer, total, inner) = outer_axis_inner(out.shape(), *axis);
                    let mut offset = 0;
                    for p in parts {
                        let len = val(*p).shape()[*axis];
                        let mut dp = Vec::with_capacity(outer * len * inner);
                        for o in 0..outer {
                            let start = (o * total + offset) * inner;
                            dp.extend_from_slice(&g[start..start + len * inner]);
                        }
                        offset += len;
                        accumulate(&mut grads, &nodes, *p, dp);
                    }
                }
                Op::Gather(x, axis, indices) => {
                    let (outer, len, inner) = outer_axis_inner(val(*x).shape(), *axis);
                    let mut dx = vec![0.0; outer * len * inner];
                    for o in 0..outer {
                        for (j, &i) in indices.iter().enumerate() {
                            let src = (o * indices.len() + j) * inner;
                            let dst = (o * len + i) * inner;
                            for t in 0..inner {
                                dx[dst + t] += g[src + t];
                            }
                        }
                    }
                    accumulate(&mut grads, &nodes, *x, dx);
                }
                Op::SqDist(a, b) => {
                    let (av, bv) = (val(*a), val(*b));
                    let (n, d) = (av.shape()[0], av.shape()[1]);
                    let m = bv.shape()[0];
                    let mut da = vec![0.0; n * d];
                    let mut db = vec![0.0; m * d];
                    for i in 0..n {
                        for j in 0..m {
                            let gij = g[i * m + j];
                            for t in 0..d {
                                let diff = 2.0 * gij * (av.data()[i * d + t] - bv.data()[j * d + t]);
                                da[i * d + t] += diff;
                                db[j * d + t] -= diff;
                            }
                        }
                    }
                    accumulate(&mut grads, &nodes, *a, da);
                    accumulate(&mut grads, &nodes, *b, db);
                }
            }
        }

        let grads = grads
            .into_iter()
            .enumerate()
            .map(|(i, g)| match g {
                Some(g) if nodes[i].is_param => {
                    Some(Tensor::new(nodes[i].value.shape().to_vec(), g).expect("gradient shape"))
                }
                _ => None,
            })
            .collect();
        Ok(Gradients { grads })
    }
}

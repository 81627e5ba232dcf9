//! Direct 3-D convolution kernels on `[N, C, D, H, W]` buffers.
//!
//! Weights are `[C_out, C_in, k, k, k]` for a forward convolution. The
//! transposed convolution reuses the same weight tensor and is the exact
//! adjoint of the forward map.

/// Stride, zero padding and cubic kernel extent shared by every spatial axis.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeometry {
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
}

impl ConvGeometry {
    pub fn new(kernel: usize, stride: usize, padding: usize) -> Self {
        ConvGeometry {
            kernel,
            stride,
            padding,
        }
    }
}

/// `floor((in + 2p - k) / s) + 1`, or `None` when the kernel does not fit.
pub fn conv3d_output_extent(input: usize, geom: ConvGeometry) -> Option<usize> {
    let padded = input + 2 * geom.padding;
    if geom.stride == 0 || padded < geom.kernel {
        return None;
    }
    Some((padded - geom.kernel) / geom.stride + 1)
}

/// `(in - 1) * s - 2p + k + output_padding`.
pub fn conv3d_transpose_output_extent(
    input: usize,
    geom: ConvGeometry,
    output_padding: usize,
) -> Option<usize> {
    if input == 0 || output_padding >= geom.stride.max(1) {
        return None;
    }
    let grown = (input - 1) * geom.stride + geom.kernel + output_padding;
    grown.checked_sub(2 * geom.padding).filter(|&e| e > 0)
}

/// Output positions `o` for which `o * s + koff - p` lands inside `[0, in_ext)`.
#[inline]
fn valid_range(koff: usize, geom: ConvGeometry, in_ext: usize, out_ext: usize) -> (usize, usize) {
    let s = geom.stride as isize;
    let shift = koff as isize - geom.padding as isize;
    // o*s + shift >= 0  ->  o >= ceil(-shift / s)
    let lo = if shift >= 0 { 0 } else { ((-shift) + s - 1) / s };
    // o*s + shift <= in_ext - 1
    let top = in_ext as isize - 1 - shift;
    let hi = if top < 0 { 0 } else { top / s + 1 };
    let lo = lo.max(0) as usize;
    let hi = (hi as usize).min(out_ext);
    (lo, hi.max(lo))
}

#[derive(Clone, Copy)]
pub(crate) struct Dims5 {
    pub n: usize,
    pub c: usize,
    pub d: usize,
    pub h: usize,
    pub w: usize,
}

impl Dims5 {
    pub fn from_shape(shape: &[usize]) -> Self {
        Dims5 {
            n: shape[0],
            c: shape[1],
            d: shape[2],
            h: shape[3],
            w: shape[4],
        }
    }

    fn spatial(&self) -> usize {
        self.d * self.h * self.w
    }
}

/// Visits every (input index, output index, weight index) triple of a
/// convolution, grouped so that the innermost loop runs over output width.
#[inline]
fn for_each_tap(
    x: Dims5,
    y: Dims5,
    geom: ConvGeometry,
    mut visit: impl FnMut(usize, usize, usize, usize, usize),
) {
    // visit(x_row_base, y_row_base, weight_index, ow_lo, ow_hi) where
    // x index = x_row_base + ow * stride, y index = y_row_base + ow.
    let k = geom.kernel;
    let s = geom.stride;
    for n in 0..x.n {
        for co in 0..y.c {
            for ci in 0..x.c {
                let w_base = (co * x.c + ci) * k * k * k;
                let x_chan = (n * x.c + ci) * x.spatial();
                let y_chan = (n * y.c + co) * y.spatial();
                for kd in 0..k {
                    let (od_lo, od_hi) = valid_range(kd, geom, x.d, y.d);
                    for od in od_lo..od_hi {
                        let id = od * s + kd - geom.padding;
                        for kh in 0..k {
                            let (oh_lo, oh_hi) = valid_range(kh, geom, x.h, y.h);
                            for oh in oh_lo..oh_hi {
                                let ih = oh * s + kh - geom.padding;
                                let x_row = x_chan + (id * x.h + ih) * x.w;
                                let y_row = y_chan + (od * y.h + oh) * y.w;
                                for kw in 0..k {
                                    let (ow_lo, ow_hi) = valid_range(kw, geom, x.w, y.w);
                                    if ow_lo >= ow_hi {
                                        continue;
                                    }
                                    // x_row + ow*s + kw - p, with kw - p possibly negative
                                    // but ow_lo*s + kw >= p by construction.
                                    let x_base = x_row + kw;
                                    let w_idx = w_base + (kd * k + kh) * k + kw;
                                    visit(x_base, y_row, w_idx, ow_lo, ow_hi);
                                }
                            }
                        }
                    }
                }
            }
        }
    }
}

pub(crate) fn conv3d_forward(
    input: &[f64],
    x: Dims5,
    weight: &[f64],
    y: Dims5,
    geom: ConvGeometry,
) -> Vec<f64> {
    let mut out = vec![0.0; y.n * y.c * y.spatial()];
    let (s, p) = (geom.stride, geom.padding);
    for_each_tap(x, y, geom, |x_base, y_row, w_idx, lo, hi| {
        let wv = weight[w_idx];
        for ow in lo..hi {
            out[y_row + ow] += wv * input[x_base + ow * s - p];
        }
    });
    out
}

/// Gradient of the forward convolution with respect to its input, which is
/// also the forward pass of the transposed convolution.
pub(crate) fn conv3d_backward_input(
    grad_out: &[f64],
    y: Dims5,
    weight: &[f64],
    x: Dims5,
    geom: ConvGeometry,
) -> Vec<f64> {
    let mut dx = vec![0.0; x.n * x.c * x.spatial()];
    let (s, p) = (geom.stride, geom.padding);
    for_each_tap(x, y, geom, |x_base, y_row, w_idx, lo, hi| {
        let wv = weight[w_idx];
        for ow in lo..hi {
            dx[x_base + ow * s - p] += wv * grad_out[y_row + ow];
        }
    });
    dx
}

pub(crate) fn conv3d_backward_weight(
    input: &[f64],
    x: Dims5,
    grad_out: &[f64],
    y: Dims5,
    geom: ConvGeometry,
) -> Vec<f64> {
    let k = geom.kernel;
    let mut dw = vec![0.0; y.c * x.c * k * k * k];
    let (s, p) = (geom.stride, geom.padding);
    for_each_tap(x, y, geom, |x_base, y_row, w_idx, lo, hi| {
        let mut acc = 0.0;
        for ow in lo..hi {
            acc += input[x_base + ow * s - p] * grad_out[y_row + ow];
        }
        dw[w_idx] += acc;
    });
    dw
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive_conv(input: &[f64], x: Dims5, weight: &[f64], y: Dims5, g: ConvGeometry) -> Vec<f64> {
        let k = g.kernel;
        let mut out = vec![0.0; y.n * y.c * y.d * y.h * y.w];
        for n in 0..y.n {
            for co in 0..y.c {
                for od in 0..y.d {
                    for oh in 0..y.h {
                        for ow in 0..y.w {
                            let mut acc = 0.0;
                            for ci in 0..x.c {
                                for kd in 0..k {
                                    for kh in 0..k {
                                        for kw in 0..k {
                                            let id = (od * g.stride + kd) as isize - g.padding as isize;
                                            let ih = (oh * g.stride + kh) as isize - g.padding as isize;
                                            let iw = (ow * g.stride + kw) as isize - g.padding as isize;
                                            if id < 0
                                                || ih < 0
                                                || iw < 0
                                                || id >= x.d as isize
                                                || ih >= x.h as isize
                                                || iw >= x.w as isize
                                            {
                                                continue;
                                            }
                                            let xi = (((n * x.c + ci) * x.d + id as usize) * x.h
                                                + ih as usize)
                                                * x.w
                                                + iw as usize;
                                            let wi = (((co * x.c + ci) * k + kd) * k + kh) * k + kw;
                                            acc += input[xi] * weight[wi];
                                        }
                                    }
                                }
                            }
                            out[(((n * y.c + co) * y.d + od) * y.h + oh) * y.w + ow] = acc;
                        }
                    }
                }
            }
        }
        out
    }

    #[test]
    fn output_extent_arithmetic() {
        let g = ConvGeometry::new(3, 2, 1);
        assert_eq!(conv3d_output_extent(16, g), Some(8));
        assert_eq!(conv3d_output_extent(8, g), Some(4));
        assert_eq!(conv3d_output_extent(1, g), Some(1));
        assert_eq!(conv3d_transpose_output_extent(8, g, 1), Some(16));
        assert_eq!(conv3d_output_extent(2, ConvGeometry::new(5, 1, 0)), None);
    }

    #[test]
    fn matches_naive_loop() {
        let g = ConvGeometry::new(3, 2, 1);
        let x = Dims5 { n: 2, c: 2, d: 5, h: 4, w: 6 };
        let y = Dims5 { n: 2, c: 3, d: 3, h: 2, w: 3 };
        let input: Vec<f64> = (0..2 * 2 * 5 * 4 * 6).map(|i| ((i * 37 % 11) as f64) - 5.0).collect();
        let weight: Vec<f64> = (0..3 * 2 * 27).map(|i| ((i * 13 % 7) as f64) * 0.25 - 0.7).collect();
        let fast = conv3d_forward(&input, x, &weight, y, g);
        let slow = naive_conv(&input, x, &weight, y, g);
        for (a, b) in fast.iter().zip(&slow) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}

use super::{gemm, ParamSet, Scalar, Tensor, View};

/// Upper bound on im2col scratch elements; larger outputs are processed in row bands.
const COL_BUDGET: usize = 1 << 22;

/// A 2-D convolution with zero padding. Weights are `cout x cin x k x k`.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv {
    pub weight: usize,
    pub bias: Option<usize>,
    pub cin: usize,
    pub cout: usize,
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
}

impl Conv {
    pub fn output_size(&self, h: usize, w: usize) -> Option<(usize, usize)> {
        let (ph, pw) = (h + 2 * self.pad, w + 2 * self.pad);
        if ph < self.k || pw < self.k {
            return None;
        }
        Some(((ph - self.k) / self.stride + 1, (pw - self.k) / self.stride + 1))
    }

    fn band_rows(&self, wo: usize) -> usize {
        let per_row = self.cin * self.k * self.k * wo;
        (COL_BUDGET / per_row.max(1)).max(1)
    }
}

/// Fills `col` (`cin*k*k` rows of `(r1 - r0) * wo` columns) for output rows `r0..r1`.
fn im2col<T: Scalar>(conv: &Conv, x: &Tensor<T>, wo: usize, r0: usize, r1: usize, col: &mut [T]) {
    let (k, s, pad) = (conv.k, conv.stride, conv.pad as isize);
    let ncols = (r1 - r0) * wo;
    let mut row = 0;
    for ci in 0..conv.cin {
        let src = &x.data[ci * x.plane()..(ci + 1) * x.plane()];
        for ky in 0..k {
            for kx in 0..k {
                let dst = &mut col[row * ncols..(row + 1) * ncols];
                for (band_y, oy) in (r0..r1).enumerate() {
                    let out = &mut dst[band_y * wo..(band_y + 1) * wo];
                    let iy = (oy * s) as isize + ky as isize - pad;
                    if iy < 0 || iy >= x.h as isize {
                        out.fill(T::zero());
                        continue;
                    }
                    let line = &src[iy as usize * x.w..(iy as usize + 1) * x.w];
                    for (ox, o) in out.iter_mut().enumerate() {
                        let ix = (ox * s) as isize + kx as isize - pad;
                        *o = if ix >= 0 && (ix as usize) < x.w { line[ix as usize] } else { T::zero() };
                    }
                }
                row += 1;
            }
        }
    }
}

/// Scatter-adds `col` back into `dx`, the adjoint of [`im2col`].
fn col2im<T: Scalar>(conv: &Conv, dx: &mut Tensor<T>, wo: usize, r0: usize, r1: usize, col: &[T]) {
    let (k, s, pad) = (conv.k, conv.stride, conv.pad as isize);
    let ncols = (r1 - r0) * wo;
    let (h, w, plane) = (dx.h, dx.w, dx.plane());
    let mut row = 0;
    for ci in 0..conv.cin {
        let dst = &mut dx.data[ci * plane..(ci + 1) * plane];
        for ky in 0..k {
            for kx in 0..k {
                let src = &col[row * ncols..(row + 1) * ncols];
                for (band_y, oy) in (r0..r1).enumerate() {
                    let iy = (oy * s) as isize + ky as isize - pad;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let line = &mut dst[iy as usize * w..(iy as usize + 1) * w];
                    for (ox, &g) in src[band_y * wo..(band_y + 1) * wo].iter().enumerate() {
                        let ix = (ox * s) as isize + kx as isize - pad;
                        if ix >= 0 && (ix as usize) < w {
                            line[ix as usize] += g;
                        }
                    }
                }
                row += 1;
            }
        }
    }
}

pub fn conv2d_forward<T: Scalar>(conv: &Conv, params: &ParamSet<T>, x: &Tensor<T>) -> Tensor<T> {
    assert_eq!(x.c, conv.cin, "conv input channels");
    let (ho, wo) = conv.output_size(x.h, x.w).expect("conv input smaller than kernel");
    let mut y = Tensor::zeros(conv.cout, ho, wo);
    let kk = conv.cin * conv.k * conv.k;
    let weight = View::new(params.data(conv.weight), conv.cout, kk);
    let band = conv.band_rows(wo);
    let mut col = vec![T::zero(); kk * band.min(ho) * wo];
    let plane = ho * wo;
    let mut r0 = 0;
    while r0 < ho {
        let r1 = (r0 + band).min(ho);
        let n = (r1 - r0) * wo;
        im2col(conv, x, wo, r0, r1, &mut col[..kk * n]);
        gemm(T::one(), weight, View::new(&col[..kk * n], kk, n), T::zero(), &mut y.data[r0 * wo..], plane);
        r0 = r1;
    }
    if let Some(b) = conv.bias {
        for (co, &bv) in params.data(b).iter().enumerate() {
            y.data[co * plane..(co + 1) * plane].iter_mut().for_each(|v| *v += bv);
        }
    }
    y
}

/// Accumulates weight and bias gradients into `grads`; returns the input gradient
/// when `want_dx` is set.
pub fn conv2d_backward<T: Scalar>(
    conv: &Conv,
    params: &ParamSet<T>,
    x: &Tensor<T>,
    dy: &Tensor<T>,
    grads: &mut ParamSet<T>,
    want_dx: bool,
) -> Option<Tensor<T>> {
    let (ho, wo) = (dy.h, dy.w);
    let plane = ho * wo;
    let kk = conv.cin * conv.k * conv.k;
    if let Some(b) = conv.bias {
        for (co, g) in grads.data_mut(b).iter_mut().enumerate() {
            *g += dy.data[co * plane..(co + 1) * plane].iter().copied().sum::<T>();
        }
    }
    let band = conv.band_rows(wo);
    let mut col = vec![T::zero(); kk * band.min(ho) * wo];
    let mut dcol = if want_dx { vec![T::zero(); kk * band.min(ho) * wo] } else { Vec::new() };
    let mut dx = want_dx.then(|| Tensor::zeros(x.c, x.h, x.w));
    let mut r0 = 0;
    while r0 < ho {
        let r1 = (r0 + band).min(ho);
        let n = (r1 - r0) * wo;
        im2col(conv, x, wo, r0, r1, &mut col[..kk * n]);
        let dy_band = View { data: &dy.data[r0 * wo..], rows: conv.cout, cols: n, rs: plane, cs: 1 };
        gemm(T::one(), dy_band, View::new(&col[..kk * n], kk, n).t(), T::one(), grads.data_mut(conv.weight), kk);
        if let Some(dx) = dx.as_mut() {
            let weight = View::new(params.data(conv.weight), conv.cout, kk);
            gemm(T::one(), weight.t(), dy_band, T::zero(), &mut dcol[..kk * n], n);
            col2im(conv, dx, wo, r0, r1, &dcol[..kk * n]);
        }
        r0 = r1;
    }
    dx
}

pub const NORM_EPS: f64 = 1e-5;

/// Per-channel normalization over the spatial plane, without affine terms.
/// Returns the output, which doubles as the normalized activations kept for
/// backward, and the per-channel inverse standard deviations.
pub fn instance_norm_forward<T: Scalar>(x: &Tensor<T>) -> (Tensor<T>, Vec<T>) {
    let plane = x.plane();
    let n = T::of(plane as f64);
    let mut y = Tensor::zeros(x.c, x.h, x.w);
    let mut inv_std = Vec::with_capacity(x.c);
    for c in 0..x.c {
        let src = &x.data[c * plane..(c + 1) * plane];
        let mean = src.iter().copied().sum::<T>() / n;
        let var = src.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / n;
        let inv = T::one() / (var + T::of(NORM_EPS)).sqrt();
        for (o, &v) in y.data[c * plane..(c + 1) * plane].iter_mut().zip(src) {
            *o = (v - mean) * inv;
        }
        inv_std.push(inv);
    }
    (y, inv_std)
}

pub fn instance_norm_backward<T: Scalar>(y: &Tensor<T>, inv_std: &[T], dy: &Tensor<T>) -> Tensor<T> {
    let plane = y.plane();
    let n = T::of(plane as f64);
    let mut dx = Tensor::zeros(y.c, y.h, y.w);
    for c in 0..y.c {
        let range = c * plane..(c + 1) * plane;
        let (yc, gc) = (&y.data[range.clone()], &dy.data[range.clone()]);
        let sum_g = gc.iter().copied().sum::<T>();
        let sum_gy = gc.iter().zip(yc).map(|(&g, &v)| g * v).sum::<T>();
        let scale = inv_std[c] / n;
        for ((o, &g), &v) in dx.data[range].iter_mut().zip(gc).zip(yc) {
            *o = scale * (n * g - sum_g - v * sum_gy);
        }
    }
    dx
}

pub fn upsample2_forward<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    let (h, w) = (x.h * 2, x.w * 2);
    let mut y = Tensor::zeros(x.c, h, w);
    for c in 0..x.c {
        for yy in 0..h {
            let src = &x.data[c * x.plane() + (yy / 2) * x.w..][..x.w];
            let dst = &mut y.data[c * h * w + yy * w..][..w];
            for (xx, d) in dst.iter_mut().enumerate() {
                *d = src[xx / 2];
            }
        }
    }
    y
}

pub fn upsample2_backward<T: Scalar>(dy: &Tensor<T>) -> Tensor<T> {
    let (h, w) = (dy.h / 2, dy.w / 2);
    let mut dx = Tensor::zeros(dy.c, h, w);
    for c in 0..dy.c {
        for yy in 0..dy.h {
            let src = &dy.data[c * dy.plane() + yy * dy.w..][..dy.w];
            let dst = &mut dx.data[c * h * w + (yy / 2) * w..][..w];
            for (xx, &g) in src.iter().enumerate() {
                dst[xx / 2] += g;
            }
        }
    }
    dx
}

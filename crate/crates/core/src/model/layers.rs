//! Dense and 3x3 convolution layers with explicit backward passes.
//!
//! Image tensors use a channel-major `[C, N, H, W]` layout so a convolution
//! over a stack of frames is one im2col GEMM per frame.

use rand::Rng;

use crate::numeric::{cst, Real};

#[derive(Debug, Clone, PartialEq)]
pub struct Dense<R> {
    pub inputs: usize,
    pub outputs: usize,
    /// Row-major `[outputs, inputs]`.
    pub weight: Vec<R>,
    pub bias: Vec<R>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Conv3x3<R> {
    pub in_channels: usize,
    pub out_channels: usize,
    pub stride: usize,
    /// `[out, in, 3, 3]`.
    pub weight: Vec<R>,
    pub bias: Vec<R>,
}

/// Uniform Glorot-style draw on `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`.
fn xavier<R: Real>(len: usize, fan_in: usize, rng: &mut impl Rng) -> Vec<R> {
    let bound = 1.0 / (fan_in as f64).sqrt();
    (0..len)
        .map(|_| cst(rng.random_range(-bound..=bound)))
        .collect()
}

impl<R: Real> Dense<R> {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Dense {
            inputs,
            outputs,
            weight: vec![R::zero(); inputs * outputs],
            bias: vec![R::zero(); outputs],
        }
    }

    pub fn xavier(inputs: usize, outputs: usize, rng: &mut impl Rng) -> Self {
        Dense {
            inputs,
            outputs,
            weight: xavier(inputs * outputs, inputs, rng),
            bias: vec![R::zero(); outputs],
        }
    }

    pub fn fan_in(&self) -> usize {
        self.inputs
    }

    /// `y[n, out] = x[n, in] W^T + b`.
    pub fn forward(&self, x: &[R], n: usize, y: &mut [R]) {
        debug_assert_eq!(x.len(), n * self.inputs);
        debug_assert_eq!(y.len(), n * self.outputs);
        for row in y.chunks_exact_mut(self.outputs) {
            row.copy_from_slice(&self.bias);
        }
        R::gemm(
            n,
            self.inputs,
            self.outputs,
            R::one(),
            x,
            self.inputs as isize,
            1,
            &self.weight,
            1,
            self.inputs as isize,
            R::one(),
            y,
            self.outputs as isize,
            1,
        );
    }

    pub fn forward_vec(&self, x: &[R]) -> Vec<R> {
        let mut y = vec![R::zero(); self.outputs];
        self.forward(x, 1, &mut y);
        y
    }

    /// Accumulates parameter gradients into `grad` and writes the input
    /// gradient into `dx` (overwriting it).
    pub fn backward(
        &self,
        x: &[R],
        n: usize,
        dy: &[R],
        grad: Option<&mut Dense<R>>,
        dx: Option<&mut [R]>,
    ) {
        if let Some(g) = grad {
            R::gemm(
                self.outputs,
                n,
                self.inputs,
                R::one(),
                dy,
                1,
                self.outputs as isize,
                x,
                self.inputs as isize,
                1,
                R::one(),
                &mut g.weight,
                self.inputs as isize,
                1,
            );
            for row in dy.chunks_exact(self.outputs) {
                for (b, &d) in g.bias.iter_mut().zip(row) {
                    *b += d;
                }
            }
        }
        if let Some(dx) = dx {
            R::gemm(
                n,
                self.outputs,
                self.inputs,
                R::one(),
                dy,
                self.outputs as isize,
                1,
                &self.weight,
                self.inputs as isize,
                1,
                R::zero(),
                dx,
                self.inputs as isize,
                1,
            );
        }
    }
}

/// Output size of a padded 3x3 convolution.
pub fn conv_out_dim(n: usize, stride: usize) -> usize {
    (n - 1) / stride + 1
}

impl<R: Real> Conv3x3<R> {
    pub fn zeros(in_channels: usize, out_channels: usize, stride: usize) -> Self {
        Conv3x3 {
            in_channels,
            out_channels,
            stride,
            weight: vec![R::zero(); out_channels * in_channels * 9],
            bias: vec![R::zero(); out_channels],
        }
    }

    pub fn xavier(in_channels: usize, out_channels: usize, stride: usize, rng: &mut impl Rng) -> Self {
        Conv3x3 {
            in_channels,
            out_channels,
            stride,
            weight: xavier(out_channels * in_channels * 9, in_channels * 9, rng),
            bias: vec![R::zero(); out_channels],
        }
    }

    pub fn fan_in(&self) -> usize {
        self.in_channels * 9
    }

    /// Kernel with input and output channels swapped and taps rotated by 180 degrees.
    fn flipped(&self) -> Conv3x3<R> {
        let mut f = Conv3x3::zeros(self.out_channels, self.in_channels, self.stride);
        for co in 0..self.out_channels {
            for ci in 0..self.in_channels {
                let src = &self.weight[(co * self.in_channels + ci) * 9..][..9];
                let dst = &mut f.weight[(ci * self.out_channels + co) * 9..][..9];
                for (d, &s) in dst.iter_mut().zip(src.iter().rev()) {
                    *d = s;
                }
            }
        }
        f
    }

    /// `x` is `[cin, n, h, w]`, `y` receives `[cout, n, ho, wo]`.
    pub fn forward(&self, x: &[R], n: usize, h: usize, w: usize, y: &mut [R], col: &mut Vec<R>) {
        let (ho, wo) = (conv_out_dim(h, self.stride), conv_out_dim(w, self.stride));
        let (q, p) = (ho * wo, n * ho * wo);
        let k = self.in_channels * 9;
        debug_assert_eq!(x.len(), self.in_channels * n * h * w);
        debug_assert_eq!(y.len(), self.out_channels * p);
        for (row, &b) in y.chunks_exact_mut(p).zip(&self.bias) {
            row.iter_mut().for_each(|v| *v = b);
        }
        // one image at a time keeps the patch matrix in cache
        for img in 0..n {
            im2col(x, self.in_channels, n, img, h, w, self.stride, col);
            R::gemm(
                self.out_channels,
                k,
                q,
                R::one(),
                &self.weight,
                k as isize,
                1,
                col,
                q as isize,
                1,
                R::one(),
                &mut y[img * q..],
                p as isize,
                1,
            );
        }
    }

    /// Accumulates parameter gradients into `grad` and writes the input
    /// gradient into `dx` (overwriting it).
    #[allow(clippy::too_many_arguments)]
    pub fn backward(
        &self,
        x: &[R],
        n: usize,
        h: usize,
        w: usize,
        dy: &[R],
        mut grad: Option<&mut Conv3x3<R>>,
        mut dx: Option<&mut [R]>,
        col: &mut Vec<R>,
    ) {
        let (ho, wo) = (conv_out_dim(h, self.stride), conv_out_dim(w, self.stride));
        let (q, p) = (ho * wo, n * ho * wo);
        let k = self.in_channels * 9;
        if let Some(g) = grad.as_deref_mut() {
            for (b, row) in g.bias.iter_mut().zip(dy.chunks_exact(p)) {
                *b += row.iter().copied().sum::<R>();
            }
        }
        if self.stride == 1 {
            // a stride-1 input gradient is the convolution of dy with the
            // flipped, transposed kernel
            if let Some(dx) = dx.take() {
                self.flipped().forward(dy, n, h, w, dx, col);
            }
        }
        for img in 0..n {
            let dy_img = &dy[img * q..];
            if let Some(g) = grad.as_deref_mut() {
                im2col(x, self.in_channels, n, img, h, w, self.stride, col);
                for (co, gw) in g.weight.chunks_exact_mut(k).enumerate() {
                    let d = &dy_img[co * p..][..q];
                    for (kk, gv) in gw.iter_mut().enumerate() {
                        *gv += dot_lanes(&col[kk * q..][..q], d);
                    }
                }
            }
            if let Some(dx) = dx.as_deref_mut() {
                col.clear();
                col.resize(k * q, R::zero());
                R::gemm(
                    k,
                    self.out_channels,
                    q,
                    R::one(),
                    &self.weight,
                    1,
                    k as isize,
                    dy_img,
                    p as isize,
                    1,
                    R::zero(),
                    col,
                    q as isize,
                    1,
                );
                col2im(col, self.in_channels, n, img, h, w, self.stride, dx);
            }
        }
    }
}

/// Unfolds the padded 3x3 patches of image `img` of `x` (`[cin, n, h, w]`):
/// row `ci*9 + ky*3 + kx`, column `(yo, xo)`.
#[allow(clippy::too_many_arguments)]
pub fn im2col<R: Real>(
    x: &[R],
    cin: usize,
    n: usize,
    img: usize,
    h: usize,
    w: usize,
    stride: usize,
    col: &mut Vec<R>,
) {
    let (ho, wo) = (conv_out_dim(h, stride), conv_out_dim(w, stride));
    let q = ho * wo;
    col.clear();
    col.resize(cin * 9 * q, R::zero());
    for ci in 0..cin {
        let plane = &x[(ci * n + img) * h * w..][..h * w];
        for ky in 0..3 {
            for kx in 0..3 {
                let row = &mut col[((ci * 9) + ky * 3 + kx) * q..][..q];
                for yo in 0..ho {
                    let yi = (yo * stride + ky) as isize - 1;
                    if yi < 0 || yi >= h as isize {
                        continue;
                    }
                    let src = &plane[yi as usize * w..][..w];
                    let dst = &mut row[yo * wo..][..wo];
                    if stride == 1 {
                        // xi = xo + kx - 1
                        match kx {
                            0 => dst[1..].copy_from_slice(&src[..w - 1]),
                            1 => dst.copy_from_slice(src),
                            _ => dst[..wo - 1].copy_from_slice(&src[1..]),
                        }
                    } else {
                        for (xo, d) in dst.iter_mut().enumerate() {
                            let xi = (xo * stride + kx) as isize - 1;
                            if xi >= 0 && xi < w as isize {
                                *d = src[xi as usize];
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]; overwrites image `img` of `dx`.
#[allow(clippy::too_many_arguments)]
pub fn col2im<R: Real>(
    col: &[R],
    cin: usize,
    n: usize,
    img: usize,
    h: usize,
    w: usize,
    stride: usize,
    dx: &mut [R],
) {
    let (ho, wo) = (conv_out_dim(h, stride), conv_out_dim(w, stride));
    let q = ho * wo;
    for ci in 0..cin {
        let plane = &mut dx[(ci * n + img) * h * w..][..h * w];
        plane.iter_mut().for_each(|v| *v = R::zero());
        for ky in 0..3 {
            for kx in 0..3 {
                let row = &col[((ci * 9) + ky * 3 + kx) * q..][..q];
                for yo in 0..ho {
                    let yi = (yo * stride + ky) as isize - 1;
                    if yi < 0 || yi >= h as isize {
                        continue;
                    }
                    let dst = &mut plane[yi as usize * w..][..w];
                    let src = &row[yo * wo..][..wo];
                    if stride == 1 {
                        let (d, s) = match kx {
                            0 => (&mut dst[..w - 1], &src[1..]),
                            1 => (&mut dst[..], src),
                            _ => (&mut dst[1..], &src[..wo - 1]),
                        };
                        d.iter_mut().zip(s).for_each(|(a, &b)| *a += b);
                    } else {
                        for (xo, &s) in src.iter().enumerate() {
                            let xi = (xo * stride + kx) as isize - 1;
                            if xi >= 0 && xi < w as isize {
                                dst[xi as usize] += s;
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Nearest-neighbour x2 upsampling of `[planes, h, w]` into `[planes, 2h, 2w]`.
pub fn upsample2<R: Real>(x: &[R], planes: usize, h: usize, w: usize) -> Vec<R> {
    let mut y = vec![R::zero(); planes * 4 * h * w];
    for p in 0..planes {
        let src = &x[p * h * w..][..h * w];
        let dst = &mut y[p * 4 * h * w..][..4 * h * w];
        for r in 0..h {
            for c in 0..w {
                let v = src[r * w + c];
                let base = 2 * r * 2 * w + 2 * c;
                dst[base] = v;
                dst[base + 1] = v;
                dst[base + 2 * w] = v;
                dst[base + 2 * w + 1] = v;
            }
        }
    }
    y
}

/// Adjoint of [`upsample2`]: sums each 2x2 block.
pub fn upsample2_backward<R: Real>(dy: &[R], planes: usize, h: usize, w: usize) -> Vec<R> {
    let mut dx = vec![R::zero(); planes * h * w];
    for p in 0..planes {
        let src = &dy[p * 4 * h * w..][..4 * h * w];
        let dst = &mut dx[p * h * w..][..h * w];
        for r in 0..h {
            for c in 0..w {
                let base = 2 * r * 2 * w + 2 * c;
                dst[r * w + c] = src[base] + src[base + 1] + src[base + 2 * w] + src[base + 2 * w + 1];
            }
        }
    }
    dx
}

/// `[n, c, hw]` to `[c, n, hw]`.
pub fn nchw_to_cnhw<R: Real>(x: &[R], n: usize, c: usize, hw: usize) -> Vec<R> {
    let mut y = vec![R::zero(); x.len()];
    for i in 0..n {
        for ch in 0..c {
            y[(ch * n + i) * hw..][..hw].copy_from_slice(&x[(i * c + ch) * hw..][..hw]);
        }
    }
    y
}

/// `[c, n, hw]` to `[n, c, hw]`.
pub fn cnhw_to_nchw<R: Real>(x: &[R], n: usize, c: usize, hw: usize) -> Vec<R> {
    let mut y = vec![R::zero(); x.len()];
    for i in 0..n {
        for ch in 0..c {
            y[(i * c + ch) * hw..][..hw].copy_from_slice(&x[(ch * n + i) * hw..][..hw]);
        }
    }
    y
}

pub fn relu_inplace<R: Real>(x: &mut [R]) {
    for v in x {
        if !(*v > R::zero()) {
            *v = R::zero();
        }
    }
}

/// Zeroes `dy` where the ReLU output `y` was not positive.
pub fn relu_mask<R: Real>(y: &[R], dy: &mut [R]) {
    for (d, &v) in dy.iter_mut().zip(y) {
        if !(v > R::zero()) {
            *d = R::zero();
        }
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Dense stack with ReLU on every layer, optionally linear on the last.
pub fn mlp_forward<R: Real>(layers: &[Dense<R>], x: &[R], linear_last: bool) -> Vec<Vec<R>> {
    let mut acts = Vec::with_capacity(layers.len() + 1);
    acts.push(x.to_vec());
    for (i, layer) in layers.iter().enumerate() {
        let mut y = layer.forward_vec(acts.last().expect("input pushed"));
        if !(linear_last && i + 1 == layers.len()) {
            relu_inplace(&mut y);
        }
        acts.push(y);
    }
    acts
}

/// Backward through [`mlp_forward`]; returns the gradient w.r.t. the input.
pub fn mlp_backward<R: Real>(
    layers: &[Dense<R>],
    acts: &[Vec<R>],
    linear_last: bool,
    dy: &[R],
    mut grads: Option<&mut [Dense<R>]>,
) -> Vec<R> {
    let mut d = dy.to_vec();
    for i in (0..layers.len()).rev() {
        if !(linear_last && i + 1 == layers.len()) {
            relu_mask(&acts[i + 1], &mut d);
        }
        let mut dx = vec![R::zero(); layers[i].inputs];
        let g = grads.as_deref_mut().map(|g| &mut g[i]);
        layers[i].backward(&acts[i], 1, &d, g, Some(&mut dx));
        d = dx;
    }
    d
}

pub fn dot<R: Real>(a: &[R], b: &[R]) -> R {
    a.iter().zip(b).fold(R::zero(), |s, (&x, &y)| s + x * y)
}

/// Dot product with eight independent partial sums, which vectorises.
pub fn dot_lanes<R: Real>(a: &[R], b: &[R]) -> R {
    let mut acc = [R::zero(); 8];
    let (ca, cb) = (a.chunks_exact(8), b.chunks_exact(8));
    let tail: R = ca.remainder().iter().zip(cb.remainder()).fold(R::zero(), |s, (&x, &y)| s + x * y);
    for (x, y) in ca.zip(cb) {
        for l in 0..8 {
            acc[l] += x[l] * y[l];
        }
    }
    acc.iter().fold(tail, |s, &v| s + v)
}

pub fn max_abs<R: Real>(x: &[R]) -> f64 {
    x.iter().fold(0.0f64, |m, v| {
        let a = v.as_f64().abs();
        if a.is_nan() || a > m {
            a
        } else {
            m
        }
    })
}

//! Forward and backward kernels for the layer types the networks use.
//!
//! Convolutions use 5x5 kernels stored as `(kernel_row, kernel_col, c_in, c_out)`.
//! The strided convolution pads 2 on each side. The transposed convolution
//! scatters input element `a` onto full-resolution positions `[2a, 2a + 5)`
//! and crops 2 on the low side and 1 on the high side, so after cropping `a`
//! touches exactly `[2a - 2, 2a + 3)`. Both are computed as gathers over a
//! fixed `(u, v, c)` tap order.

use crate::error::{Error, Result};
use crate::par;
use crate::tensor::{Scalar, Tensor};

pub const KERNEL: usize = 5;
pub const PAD: i64 = 2;
pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.9;
pub const LEAKY_SLOPE: f64 = 0.2;

#[derive(Clone, Debug, PartialEq)]
pub struct ConvParams<T> {
    /// Shape `(5, 5, c_in, c_out)`.
    pub weights: Tensor<T>,
    /// Length `c_out`; only on layers without batch normalization.
    pub bias: Option<Tensor<T>>,
}

impl<T: Scalar> ConvParams<T> {
    pub fn new(weights: Tensor<T>, bias: Option<Tensor<T>>) -> Result<Self> {
        let s = weights.shape();
        if s.len() != 4 || s[0] != KERNEL || s[1] != KERNEL {
            return Err(Error::Shape(format!("conv weights must be (5, 5, c_in, c_out), got {s:?}")));
        }
        if let Some(b) = &bias {
            if b.shape() != [s[3]] {
                return Err(Error::Shape(format!(
                    "bias shape {:?} does not match c_out = {}",
                    b.shape(),
                    s[3]
                )));
            }
        }
        Ok(Self { weights, bias })
    }

    pub fn zeros(c_in: usize, c_out: usize, bias: bool) -> Self {
        Self {
            weights: Tensor::zeros(&[KERNEL, KERNEL, c_in, c_out]),
            bias: bias.then(|| Tensor::zeros(&[c_out])),
        }
    }

    pub fn c_in(&self) -> usize {
        self.weights.shape()[2]
    }

    pub fn c_out(&self) -> usize {
        self.weights.shape()[3]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BnMode {
    /// Normalize with minibatch statistics.
    Train,
    /// Normalize with frozen running statistics, element-wise.
    Infer,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BatchNormState<T> {
    pub gamma: Tensor<T>,
    pub beta: Tensor<T>,
    pub running_mean: Tensor<T>,
    pub running_var: Tensor<T>,
    pub eps: T,
    pub momentum: T,
    pub mode: BnMode,
}

impl<T: Scalar> BatchNormState<T> {
    pub fn new(channels: usize) -> Self {
        Self {
            gamma: Tensor::full(&[channels], T::one()),
            beta: Tensor::zeros(&[channels]),
            running_mean: Tensor::zeros(&[channels]),
            running_var: Tensor::full(&[channels], T::one()),
            eps: T::from_f64_lossy(BN_EPS),
            momentum: T::from_f64_lossy(BN_MOMENTUM),
            mode: BnMode::Train,
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }

    /// Blends batch statistics into the running estimates.
    pub fn update_running(&mut self, mean: &[T], var: &[T]) {
        let m = self.momentum;
        let keep = T::one() - m;
        for (r, &b) in self.running_mean.data_mut().iter_mut().zip(mean) {
            *r = m * *r + keep * b;
        }
        for (r, &b) in self.running_var.data_mut().iter_mut().zip(var) {
            *r = (m * *r + keep * b).max(T::zero());
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Relu,
    /// Leaky ReLU with slope 0.2.
    LeakyRelu,
    Tanh,
    Sigmoid,
    Identity,
}

impl Activation {
    pub fn apply<T: Scalar>(self, v: T) -> T {
        match self {
            Activation::Relu => v.max(T::zero()),
            Activation::LeakyRelu => {
                if v > T::zero() {
                    v
                } else {
                    v * T::from_f64_lossy(LEAKY_SLOPE)
                }
            }
            Activation::Tanh => v.tanh(),
            Activation::Sigmoid => T::one() / (T::one() + (-v).exp()),
            Activation::Identity => v,
        }
    }

    /// Derivative given the pre-activation input `x` and output `y`.
    pub fn derivative<T: Scalar>(self, x: T, y: T) -> T {
        match self {
            Activation::Relu => {
                if x > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
            Activation::LeakyRelu => {
                if x > T::zero() {
                    T::one()
                } else {
                    T::from_f64_lossy(LEAKY_SLOPE)
                }
            }
            Activation::Tanh => T::one() - y * y,
            Activation::Sigmoid => y * (T::one() - y),
            Activation::Identity => T::one(),
        }
    }
}

pub fn activation<T: Scalar>(x: &Tensor<T>, kind: Activation) -> Tensor<T> {
    x.map(|v| kind.apply(v))
}

/// `(n, h, w, c)` of a rank-3 or rank-4 tensor.
pub(crate) fn dims4<T: Scalar>(x: &Tensor<T>) -> Result<[usize; 4]> {
    match *x.shape() {
        [h, w, c] => Ok([1, h, w, c]),
        [n, h, w, c] => Ok([n, h, w, c]),
        _ => Err(Error::Shape(format!("expected (h, w, c) or (n, h, w, c), got {:?}", x.shape()))),
    }
}

fn out_shape(rank3: bool, n: usize, h: usize, w: usize, c: usize) -> Vec<usize> {
    if rank3 {
        vec![h, w, c]
    } else {
        vec![n, h, w, c]
    }
}

/// Swaps the channel axes of a `(5, 5, a, b)` kernel.
pub(crate) fn transpose_kernel<T: Scalar>(wt: &Tensor<T>) -> Tensor<T> {
    let s = wt.shape();
    let (ci, co) = (s[2], s[3]);
    let src = wt.data();
    let mut out = vec![T::zero(); src.len()];
    for uv in 0..KERNEL * KERNEL {
        for c in 0..ci {
            for o in 0..co {
                out[(uv * co + o) * ci + c] = src[(uv * ci + c) * co + o];
            }
        }
    }
    Tensor::from_vec(&[KERNEL, KERNEL, co, ci], out).expect("kernel shape")
}

/// Raw strided convolution: input `(n, h, w, ci)` to `(n, h/2, w/2, co)`.
pub(crate) fn down_kernel<T: Scalar>(
    x: &[T],
    [n, h, w, ci]: [usize; 4],
    wt: &[T],
    co: usize,
    bias: Option<&[T]>,
) -> Vec<T> {
    let (oh, ow) = (h / 2, w / 2);
    let mut out = vec![T::zero(); n * oh * ow * co];
    par::for_each_block(&mut out, ow * co, |row, block| {
        let (b, i) = (row / oh, row % oh);
        let xb = &x[b * h * w * ci..(b + 1) * h * w * ci];
        for j in 0..ow {
            let acc = &mut block[j * co..(j + 1) * co];
            if let Some(bias) = bias {
                acc.copy_from_slice(bias);
            }
            for u in 0..KERNEL {
                let p = (2 * i + u) as i64 - PAD;
                if p < 0 || p >= h as i64 {
                    continue;
                }
                for v in 0..KERNEL {
                    let q = (2 * j + v) as i64 - PAD;
                    if q < 0 || q >= w as i64 {
                        continue;
                    }
                    let xrow = &xb[(p as usize * w + q as usize) * ci..][..ci];
                    let wbase = (u * KERNEL + v) * ci * co;
                    for (c, &xv) in xrow.iter().enumerate() {
                        let wrow = &wt[wbase + c * co..][..co];
                        for (a, &wv) in acc.iter_mut().zip(wrow) {
                            *a = *a + xv * wv;
                        }
                    }
                }
            }
        }
    });
    out
}

/// Raw transposed convolution: input `(n, l, m, ci)` to `(n, 2l, 2m, co)`.
pub(crate) fn up_kernel<T: Scalar>(
    x: &[T],
    [n, l, m, ci]: [usize; 4],
    wt: &[T],
    co: usize,
    bias: Option<&[T]>,
) -> Vec<T> {
    let (oh, ow) = (2 * l, 2 * m);
    let mut out = vec![T::zero(); n * oh * ow * co];
    par::for_each_block(&mut out, ow * co, |row, block| {
        let (b, p) = (row / oh, row % oh);
        let xb = &x[b * l * m * ci..(b + 1) * l * m * ci];
        for q in 0..ow {
            let acc = &mut block[q * co..(q + 1) * co];
            if let Some(bias) = bias {
                acc.copy_from_slice(bias);
            }
            for u in 0..KERNEL {
                // Output p receives input a through tap u when 2a + u - 2 = p.
                let t = p as i64 + PAD - u as i64;
                if t < 0 || t % 2 != 0 || (t / 2) as usize >= l {
                    continue;
                }
                let a = (t / 2) as usize;
                for v in 0..KERNEL {
                    let s = q as i64 + PAD - v as i64;
                    if s < 0 || s % 2 != 0 || (s / 2) as usize >= m {
                        continue;
                    }
                    let bcol = (s / 2) as usize;
                    let xrow = &xb[(a * m + bcol) * ci..][..ci];
                    let wbase = (u * KERNEL + v) * ci * co;
                    for (c, &xv) in xrow.iter().enumerate() {
                        let wrow = &wt[wbase + c * co..][..co];
                        for (acc_o, &wv) in acc.iter_mut().zip(wrow) {
                            *acc_o = *acc_o + xv * wv;
                        }
                    }
                }
            }
        }
    });
    out
}

/// Weight gradient of the strided convolution.
pub(crate) fn down_weight_grad<T: Scalar>(
    x: &[T],
    [n, h, w, ci]: [usize; 4],
    g: &[T],
    co: usize,
) -> Vec<T> {
    let (oh, ow) = (h / 2, w / 2);
    let mut dw = vec![T::zero(); KERNEL * KERNEL * ci * co];
    par::for_each_block(&mut dw, co, |idx, row| {
        let (uv, c) = (idx / ci, idx % ci);
        let (u, v) = (uv / KERNEL, uv % KERNEL);
        for b in 0..n {
            for i in 0..oh {
                let p = (2 * i + u) as i64 - PAD;
                if p < 0 || p >= h as i64 {
                    continue;
                }
                for j in 0..ow {
                    let q = (2 * j + v) as i64 - PAD;
                    if q < 0 || q >= w as i64 {
                        continue;
                    }
                    let xv = x[((b * h + p as usize) * w + q as usize) * ci + c];
                    let grow = &g[((b * oh + i) * ow + j) * co..][..co];
                    for (r, &gv) in row.iter_mut().zip(grow) {
                        *r = *r + xv * gv;
                    }
                }
            }
        }
    });
    dw
}

/// Weight gradient of the transposed convolution.
pub(crate) fn up_weight_grad<T: Scalar>(
    x: &[T],
    [n, l, m, ci]: [usize; 4],
    g: &[T],
    co: usize,
) -> Vec<T> {
    let (oh, ow) = (2 * l, 2 * m);
    let mut dw = vec![T::zero(); KERNEL * KERNEL * ci * co];
    par::for_each_block(&mut dw, co, |idx, row| {
        let (uv, c) = (idx / ci, idx % ci);
        let (u, v) = (uv / KERNEL, uv % KERNEL);
        for b in 0..n {
            for a in 0..l {
                let p = (2 * a + u) as i64 - PAD;
                if p < 0 || p >= oh as i64 {
                    continue;
                }
                for bc in 0..m {
                    let q = (2 * bc + v) as i64 - PAD;
                    if q < 0 || q >= ow as i64 {
                        continue;
                    }
                    let xv = x[((b * l + a) * m + bc) * ci + c];
                    let grow = &g[((b * oh + p as usize) * ow + q as usize) * co..][..co];
                    for (r, &gv) in row.iter_mut().zip(grow) {
                        *r = *r + xv * gv;
                    }
                }
            }
        }
    });
    dw
}

/// Sums a `(rows, c)` buffer over rows.
pub(crate) fn channel_sums<T: Scalar>(g: &[T], c: usize) -> Vec<T> {
    let mut s = vec![T::zero(); c];
    for row in g.chunks_exact(c) {
        for (a, &v) in s.iter_mut().zip(row) {
            *a = *a + v;
        }
    }
    s
}

fn check_conv_input<T: Scalar>(x: &Tensor<T>, p: &ConvParams<T>) -> Result<[usize; 4]> {
    let d = dims4(x)?;
    if d[3] != p.c_in() {
        return Err(Error::Shape(format!(
            "input has {} channels but the kernel expects {} (input shape {:?}, kernel {:?})",
            d[3],
            p.c_in(),
            x.shape(),
            p.weights.shape()
        )));
    }
    Ok(d)
}

/// Stride-2 convolution with symmetric zero padding of 2.
pub fn conv2d_down<T: Scalar>(x: &Tensor<T>, p: &ConvParams<T>) -> Result<Tensor<T>> {
    let d @ [n, h, w, _] = check_conv_input(x, p)?;
    if h % 2 != 0 || w % 2 != 0 {
        return Err(Error::Shape(format!("strided convolution needs even spatial dims, got {h}x{w}")));
    }
    let co = p.c_out();
    let out = down_kernel(x.data(), d, p.weights.data(), co, p.bias.as_ref().map(|b| b.data()));
    Tensor::from_vec(&out_shape(x.rank() == 3, n, h / 2, w / 2, co), out)
}

/// Stride-1/2 (transposed) convolution doubling both spatial dims.
pub fn conv2d_up<T: Scalar>(x: &Tensor<T>, p: &ConvParams<T>) -> Result<Tensor<T>> {
    let d @ [n, l, m, _] = check_conv_input(x, p)?;
    let co = p.c_out();
    let out = up_kernel(x.data(), d, p.weights.data(), co, p.bias.as_ref().map(|b| b.data()));
    Tensor::from_vec(&out_shape(x.rank() == 3, n, 2 * l, 2 * m, co), out)
}

/// Per-channel statistics over all leading axes.
pub(crate) struct BnStats<T> {
    pub mean: Vec<T>,
    pub var: Vec<T>,
}

pub(crate) fn bn_batch_stats<T: Scalar>(x: &[T], c: usize) -> BnStats<T> {
    let rows = x.len() / c;
    let count = T::from_usize(rows).unwrap();
    let mean: Vec<T> = channel_sums(x, c).into_iter().map(|s| s / count).collect();
    let mut var = vec![T::zero(); c];
    for row in x.chunks_exact(c) {
        for ((acc, &v), &mu) in var.iter_mut().zip(row).zip(&mean) {
            let d = v - mu;
            *acc = *acc + d * d;
        }
    }
    for v in &mut var {
        *v = *v / count;
    }
    BnStats { mean, var }
}

/// `y = (x - mean) / sqrt(var + eps) * gamma + beta` per channel.
pub(crate) fn bn_apply<T: Scalar>(x: &[T], c: usize, mean: &[T], var: &[T], s: &BatchNormState<T>) -> Vec<T> {
    let scale: Vec<T> = var
        .iter()
        .zip(s.gamma.data())
        .map(|(&v, &g)| g / (v + s.eps).sqrt())
        .collect();
    let mut out = vec![T::zero(); x.len()];
    for (orow, xrow) in out.chunks_exact_mut(c).zip(x.chunks_exact(c)) {
        for ch in 0..c {
            orow[ch] = (xrow[ch] - mean[ch]) * scale[ch] + s.beta.data()[ch];
        }
    }
    out
}

/// Batch normalization following `s.mode`. Train mode also updates the
/// running statistics.
pub fn batch_norm<T: Scalar>(x: &Tensor<T>, s: &mut BatchNormState<T>) -> Result<Tensor<T>> {
    let [n, h, w, c] = dims4(x)?;
    if c != s.channels() {
        return Err(Error::Shape(format!("batch norm over {} channels applied to {c}", s.channels())));
    }
    if n * h * w == 0 {
        return Err(Error::Shape("batch norm over an empty batch".into()));
    }
    let out = match s.mode {
        BnMode::Train => {
            let st = bn_batch_stats(x.data(), c);
            let y = bn_apply(x.data(), c, &st.mean, &st.var, s);
            s.update_running(&st.mean, &st.var);
            y
        }
        BnMode::Infer => {
            let (rm, rv) = (s.running_mean.data().to_vec(), s.running_var.data().to_vec());
            bn_apply(x.data(), c, &rm, &rv, s)
        }
    };
    Tensor::from_vec(x.shape(), out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ones_kernel() -> ConvParams<f64> {
        ConvParams::new(Tensor::full(&[5, 5, 1, 1], 1.0), None).unwrap()
    }

    /// Direct sliding window over an explicitly zero-padded input.
    fn down_oracle(x: &Tensor<f64>, w: &Tensor<f64>) -> Tensor<f64> {
        let [h, wd, ci] = [x.shape()[0], x.shape()[1], x.shape()[2]];
        let co = w.shape()[3];
        let mut padded = Tensor::<f64>::zeros(&[h + 4, wd + 4, ci]);
        padded.paste3(x, 2, 2).unwrap();
        let mut out = Tensor::zeros(&[h / 2, wd / 2, co]);
        for i in 0..h / 2 {
            for j in 0..wd / 2 {
                for o in 0..co {
                    let mut s = 0.0;
                    for u in 0..5 {
                        for v in 0..5 {
                            for c in 0..ci {
                                s += padded.at3(2 * i + u, 2 * j + v, c)
                                    * w.data()[((u * 5 + v) * ci + c) * co + o];
                            }
                        }
                    }
                    out.data_mut()[(i * (wd / 2) + j) * co + o] = s;
                }
            }
        }
        out
    }

    /// Scatter every input element onto the full 2n+3 grid, then crop 2 low, 1 high.
    fn up_oracle(x: &Tensor<f64>, w: &Tensor<f64>) -> Tensor<f64> {
        let [l, m, ci] = [x.shape()[0], x.shape()[1], x.shape()[2]];
        let co = w.shape()[3];
        let (fh, fw) = (2 * l + 3, 2 * m + 3);
        let mut full = vec![0.0; fh * fw * co];
        for a in 0..l {
            for b in 0..m {
                for c in 0..ci {
                    for u in 0..5 {
                        for v in 0..5 {
                            for o in 0..co {
                                full[((2 * a + u) * fw + 2 * b + v) * co + o] +=
                                    x.at3(a, b, c) * w.data()[((u * 5 + v) * ci + c) * co + o];
                            }
                        }
                    }
                }
            }
        }
        let full = Tensor::from_vec(&[fh, fw, co], full).unwrap();
        full.crop3(2, fh - 1, 2, fw - 1).unwrap()
    }

    fn lcg(seed: u64, n: usize) -> Vec<f64> {
        let mut s = seed;
        (0..n)
            .map(|_| {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                ((s >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
            })
            .collect()
    }

    #[test]
    fn down_all_ones() {
        let x = Tensor::full(&[4, 4, 1], 1.0);
        let y = conv2d_down(&x, &ones_kernel()).unwrap();
        assert_eq!(y.data(), &[9.0, 12.0, 12.0, 16.0]);
    }

    #[test]
    fn down_delta_kernel_subsamples() {
        let x = Tensor::from_fn(&[6, 8, 1], |i| i as f64 * 0.5 - 3.0);
        let mut w = Tensor::zeros(&[5, 5, 1, 1]);
        w.data_mut()[2 * 5 + 2] = 1.0;
        let y = conv2d_down(&x, &ConvParams::new(w, None).unwrap()).unwrap();
        for i in 0..3 {
            for j in 0..4 {
                assert_eq!(y.at3(i, j, 0), x.at3(2 * i, 2 * j, 0));
            }
        }
    }

    #[test]
    fn down_matches_padded_oracle() {
        let x = Tensor::from_vec(&[6, 4, 3], lcg(1, 72)).unwrap();
        let w = Tensor::from_vec(&[5, 5, 3, 2], lcg(2, 150)).unwrap();
        let y = conv2d_down(&x, &ConvParams::new(w.clone(), None).unwrap()).unwrap();
        assert!(y.max_abs_diff(&down_oracle(&x, &w)).unwrap() < 1e-12);
    }

    #[test]
    fn down_shape_and_errors() {
        let x = Tensor::<f32>::zeros(&[64, 64, 3]);
        let p = ConvParams::zeros(3, 64, true);
        assert_eq!(conv2d_down(&x, &p).unwrap().shape(), &[32, 32, 64]);
        let odd = Tensor::<f32>::zeros(&[5, 4, 3]);
        assert!(conv2d_down(&odd, &p).is_err());
        let wrong = Tensor::<f32>::zeros(&[4, 4, 2]);
        let err = conv2d_down(&wrong, &p).unwrap_err().to_string();
        assert!(err.contains("channels"), "{err}");
    }

    #[test]
    fn up_all_ones() {
        let x = Tensor::full(&[2, 2, 1], 1.0);
        let y = conv2d_up(&x, &ones_kernel()).unwrap();
        let expected = [
            4.0, 4.0, 4.0, 2.0, 4.0, 4.0, 4.0, 2.0, 4.0, 4.0, 4.0, 2.0, 2.0, 2.0, 2.0, 1.0,
        ];
        assert_eq!(y.data(), &expected);
    }

    #[test]
    fn up_matches_scatter_oracle() {
        let x = Tensor::from_vec(&[3, 5, 2], lcg(3, 30)).unwrap();
        let w = Tensor::from_vec(&[5, 5, 2, 3], lcg(4, 150)).unwrap();
        let y = conv2d_up(&x, &ConvParams::new(w.clone(), None).unwrap()).unwrap();
        assert!(y.max_abs_diff(&up_oracle(&x, &w)).unwrap() < 1e-12);
    }

    #[test]
    fn up_single_element_support() {
        let n = 8;
        for a in 1..n - 2 {
            let mut x = Tensor::<f64>::zeros(&[n, 1, 1]);
            x.data_mut()[a] = 1.0;
            let y = conv2d_up(&x, &ones_kernel()).unwrap();
            let cols: Vec<usize> = (0..2 * n).filter(|&p| y.at3(p, 0, 0) != 0.0).collect();
            let lo = 2 * a - 2;
            assert_eq!(cols, (lo..lo + 5).collect::<Vec<_>>());
        }
    }

    #[test]
    fn transpose_duality() {
        let x = Tensor::from_vec(&[6, 8, 3], lcg(5, 144)).unwrap();
        let y = Tensor::from_vec(&[3, 4, 2], lcg(6, 24)).unwrap();
        let w = Tensor::from_vec(&[5, 5, 3, 2], lcg(7, 150)).unwrap();
        let down = conv2d_down(&x, &ConvParams::new(w.clone(), None).unwrap()).unwrap();
        let up = conv2d_up(&y, &ConvParams::new(transpose_kernel(&w), None).unwrap()).unwrap();
        let lhs = down.dot(&y).unwrap();
        let rhs = x.dot(&up).unwrap();
        assert!((lhs - rhs).abs() < 1e-10, "{lhs} vs {rhs}");
    }

    #[test]
    fn batch_norm_constant_channel_is_zero() {
        let x = Tensor::<f64>::from_fn(&[2, 3, 3, 2], |i| if i % 2 == 0 { 4.0 } else { -1.5 });
        let mut s = BatchNormState::new(2);
        let y = batch_norm(&x, &mut s).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.0));
        assert!((s.running_mean.data()[0] - 0.4).abs() < 1e-12);
    }

    #[test]
    fn batch_norm_infer_modes() {
        let x = Tensor::<f64>::from_fn(&[2, 2, 1], |i| i as f64 - 1.0);
        let mut s = BatchNormState::new(1);
        s.mode = BnMode::Infer;
        let y = batch_norm(&x, &mut s).unwrap();
        assert!(y.max_abs_diff(&x).unwrap() < 1e-5);

        let mut s = BatchNormState::new(1);
        s.mode = BnMode::Infer;
        s.eps = 0.0;
        s.running_mean.data_mut()[0] = 1.0;
        s.gamma.data_mut()[0] = 3.0;
        s.beta.data_mut()[0] = 0.5;
        let y = batch_norm(&Tensor::full(&[1, 1, 1], 2.0), &mut s).unwrap();
        assert_eq!(y.data()[0], 3.5);
        // infer mode leaves running statistics untouched
        assert_eq!(s.running_mean.data()[0], 1.0);
    }

    #[test]
    fn batch_norm_channel_mismatch() {
        let mut s = BatchNormState::<f32>::new(3);
        assert!(batch_norm(&Tensor::zeros(&[2, 2, 2]), &mut s).is_err());
    }

    #[test]
    fn activations() {
        assert_eq!(Activation::Relu.apply(-1.0f64), 0.0);
        assert_eq!(Activation::LeakyRelu.apply(-1.0f64), -0.2);
        assert_eq!(Activation::Tanh.apply(0.0f64), 0.0);
        assert_eq!(Activation::Sigmoid.apply(0.0f64), 0.5);
        let t = activation(&Tensor::from_vec(&[2], vec![-2.0f64, 3.0]).unwrap(), Activation::Relu);
        assert_eq!(t.data(), &[0.0, 3.0]);
    }
}

//! Spatial autocorrelation maps and empirical field probes.

use std::fmt::Write as _;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::autograd::Graph;
use crate::error::{Error, Result};
use crate::fields::IndexInterval;
use crate::model::{sample_z_with, Discriminator, Generator};
use crate::ops::BnMode;
use crate::persist::write_atomic;
use crate::tensor::{Scalar, Tensor};

pub const LUMA: [f64; 3] = [0.299, 0.587, 0.114];

/// `(h, w, 3)` RGB to `(h, w)` luminance. Rank-2 input passes through.
pub fn luminance<T: Scalar>(img: &Tensor<T>) -> Result<Tensor<f64>> {
    match *img.shape() {
        [_, _] => Ok(img.cast()),
        [h, w, 3] => {
            let d = img.data();
            Ok(Tensor::from_fn(&[h, w], |i| {
                (0..3).map(|c| LUMA[c] * d[3 * i + c].to_f64_lossy()).sum()
            }))
        }
        _ => Err(Error::Shape(format!("expected (h, w) or (h, w, 3), got {:?}", img.shape()))),
    }
}

fn centered(img: &Tensor<f64>) -> Result<(usize, usize, Vec<f64>, f64)> {
    let [h, w] = match *img.shape() {
        [h, w] => [h, w],
        _ => return Err(Error::Shape(format!("expected (h, w), got {:?}", img.shape()))),
    };
    let mean = img.mean();
    let dev: Vec<f64> = img.data().iter().map(|v| v - mean).collect();
    let var = dev.iter().map(|v| v * v).sum::<f64>() / dev.len() as f64;
    // rounding in the mean leaves a tiny residual for constant images
    if var.is_nan() || var <= 1e-24 * mean * mean || var == 0.0 {
        return Err(Error::Degenerate("image has zero variance".into()));
    }
    Ok((h, w, dev, var))
}

/// Mean-removed, overlap-normalized, variance-normalized linear
/// autocorrelation of `(h, w)` or RGB input. Output is `(2h - 1, 2w - 1)`
/// with lag `(0, 0)` at `(h - 1, w - 1)`; entry `(h - 1 + dy, w - 1 + dx)`
/// pairs `I(y, x)` with `I(y + dy, x + dx)`.
pub fn autocorrelation<T: Scalar>(img: &Tensor<T>) -> Result<Tensor<f64>> {
    let (h, w, dev, var) = centered(&luminance(img)?)?;
    let (ph, pw) = (2 * h - 1, 2 * w - 1);
    let mut buf = vec![Complex::new(0.0, 0.0); ph * pw];
    for y in 0..h {
        for x in 0..w {
            buf[y * pw + x].re = dev[y * w + x];
        }
    }
    let mut planner = FftPlanner::<f64>::new();
    fft2(&mut buf, ph, pw, &mut planner, false);
    for c in &mut buf {
        *c = Complex::new(c.norm_sqr(), 0.0);
    }
    fft2(&mut buf, ph, pw, &mut planner, true);
    let scale = (ph * pw) as f64;
    // the inverse transform holds S(dy, dx) at (dy mod ph, dx mod pw)
    Ok(Tensor::from_fn(&[ph, pw], |i| {
        let (dy, dx) = ((i / pw) as i64 - (h as i64 - 1), (i % pw) as i64 - (w as i64 - 1));
        let src = dy.rem_euclid(ph as i64) as usize * pw + dx.rem_euclid(pw as i64) as usize;
        let n = (h - dy.unsigned_abs() as usize) * (w - dx.unsigned_abs() as usize);
        buf[src].re / scale / (n as f64 * var)
    }))
}

fn fft2(buf: &mut [Complex<f64>], rows: usize, cols: usize, planner: &mut FftPlanner<f64>, inverse: bool) {
    let row_fft = if inverse { planner.plan_fft_inverse(cols) } else { planner.plan_fft_forward(cols) };
    row_fft.process(buf);
    let col_fft = if inverse { planner.plan_fft_inverse(rows) } else { planner.plan_fft_forward(rows) };
    let mut col = vec![Complex::new(0.0, 0.0); rows];
    for x in 0..cols {
        for y in 0..rows {
            col[y] = buf[y * cols + x];
        }
        col_fft.process(&mut col);
        for y in 0..rows {
            buf[y * cols + x] = col[y];
        }
    }
}

/// Whitespace separated rows with a leading `#` header giving the shape and
/// the zero-lag position. Values use the shortest round-trip representation.
pub fn matrix_dump(ac: &Tensor<f64>) -> Result<String> {
    let [h, w] = match *ac.shape() {
        [h, w] => [h, w],
        _ => return Err(Error::Shape(format!("expected (h, w), got {:?}", ac.shape()))),
    };
    let mut out = format!("# rows {h} cols {w} zero_lag {} {}\n", h / 2, w / 2);
    for row in ac.data().chunks(w) {
        let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        writeln!(out, "{}", line.join(" ")).expect("string write");
    }
    Ok(out)
}

pub fn write_matrix_dump(ac: &Tensor<f64>, path: &Path) -> Result<()> {
    write_atomic(path, matrix_dump(ac)?.as_bytes())
}

/// Axis-aligned box of pixel (or cell) indices.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FieldBox {
    pub rows: IndexInterval,
    pub cols: IndexInterval,
}

impl FieldBox {
    pub fn size(&self) -> (i64, i64) {
        (self.rows.width(), self.cols.width())
    }
}

fn support_box(h: usize, w: usize, c: usize, mut changed: impl FnMut(usize) -> bool) -> Option<FieldBox> {
    let (mut y0, mut y1, mut x0, mut x1) = (usize::MAX, 0, usize::MAX, 0);
    for y in 0..h {
        for x in 0..w {
            if (0..c).any(|ch| changed((y * w + x) * c + ch)) {
                y0 = y0.min(y);
                y1 = y1.max(y + 1);
                x0 = x0.min(x);
                x1 = x1.max(x + 1);
            }
        }
    }
    (y0 != usize::MAX).then_some(FieldBox {
        rows: IndexInterval { a: y0 as i64, b: y1 as i64 },
        cols: IndexInterval { a: x0 as i64, b: x1 as i64 },
    })
}

/// Re-randomizes the noise slice at `pos` and returns the tight box of output
/// pixels that changed, or `None` if none did.
pub fn projective_field_probe<T: Scalar>(
    g: &Generator<T>,
    z: &Tensor<T>,
    pos: (usize, usize),
    seed: u64,
) -> Result<Option<FieldBox>> {
    let [m, d] = match *z.shape() {
        [l, m, d] if pos.0 < l && pos.1 < m => [m, d],
        _ => return Err(Error::Shape(format!("position {pos:?} outside noise of shape {:?}", z.shape()))),
    };
    let base = g.generate(z, BnMode::Infer)?;
    let mut z2 = z.clone();
    let fresh: Tensor<T> = sample_z_with(&mut ChaCha8Rng::seed_from_u64(seed), &[d])?;
    let at = (pos.0 * m + pos.1) * d;
    z2.data_mut()[at..at + d].copy_from_slice(fresh.data());
    let out = g.generate(&z2, BnMode::Infer)?;
    let s = base.shape();
    let (a, b) = (base.data(), out.data());
    Ok(support_box(s[0], s[1], s[2], |i| a[i] != b[i]))
}

/// Tight box of input pixels with a nonzero gradient of the output unit at
/// `pos`, with frozen batch-norm statistics.
pub fn receptive_field_probe<T: Scalar>(
    d: &Discriminator<T>,
    x: &Tensor<T>,
    pos: (usize, usize),
) -> Result<Option<FieldBox>> {
    let mut net = d.net.clone();
    let probs = d.discriminate(x, BnMode::Infer)?;
    let [fh, fw] = match *probs.shape() {
        [fh, fw, 1] if pos.0 < fh && pos.1 < fw => [fh, fw],
        _ => return Err(Error::Shape(format!("position {pos:?} outside field of shape {:?}", probs.shape()))),
    };
    let mut graph = Graph::new();
    let xv = graph.leaf(x.clone(), true);
    let (out, _) = net.forward_tape(&mut graph, xv, BnMode::Infer, false)?;
    let mut select = Tensor::zeros(&[fh, fw, 1]);
    select.data_mut()[pos.0 * fw + pos.1] = T::one();
    let loss = graph.weighted_sum(out, select)?;
    let grads = graph.backward(loss)?;
    let gx = grads.get(xv).ok_or_else(|| Error::Graph("input received no gradient".into()))?;
    let s = x.shape();
    Ok(support_box(s[0], s[1], s[2], |i| gx.data()[i] != T::zero()))
}

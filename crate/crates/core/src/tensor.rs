//! Dense row-major tensors.
//!
//! Layout is channels-last: a single image is `(height, width, channels)`, a
//! minibatch is `(batch, height, width, channels)`. All reductions in this
//! crate traverse data in row-major order, so repeated runs produce
//! bit-identical results.

use std::fmt::Debug;
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

use crate::error::{Error, Result};

/// Floating point element type. Training runs at `f32`, the verification
/// harness at `f64`.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Sum + Debug + Default + Send + Sync + 'static
{
    fn from_f64_lossy(v: f64) -> Self {
        <Self as FromPrimitive>::from_f64(v).expect("finite conversion")
    }

    fn to_f64_lossy(self) -> f64 {
        ToPrimitive::to_f64(&self).unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    pub fn from_vec(shape: &[usize], data: Vec<T>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if shape.is_empty() || shape.contains(&0) {
            return Err(Error::Shape(format!("invalid shape {shape:?}")));
        }
        if expected != data.len() {
            return Err(Error::Shape(format!(
                "shape {shape:?} needs {expected} elements, got {}",
                data.len()
            )));
        }
        Ok(Self { shape: shape.to_vec(), data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, T::zero())
    }

    pub fn full(shape: &[usize], value: T) -> Self {
        let n = shape.iter().product();
        Self { shape: shape.to_vec(), data: vec![value; n] }
    }

    pub fn from_fn(shape: &[usize], mut f: impl FnMut(usize) -> T) -> Self {
        let n: usize = shape.iter().product();
        Self { shape: shape.to_vec(), data: (0..n).map(&mut f).collect() }
    }

    pub fn scalar(value: T) -> Self {
        Self { shape: vec![1], data: vec![value] }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    /// Reinterprets the data under a new shape with the same element count.
    pub fn reshape(mut self, shape: &[usize]) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != self.data.len() {
            return Err(Error::Shape(format!(
                "cannot reshape {:?} into {shape:?}",
                self.shape
            )));
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    /// Views a rank-3 image as a batch of one; rank-4 tensors pass through.
    pub fn as_batch(self) -> Result<Self> {
        match self.rank() {
            4 => Ok(self),
            3 => {
                let s = [1, self.shape[0], self.shape[1], self.shape[2]];
                self.reshape(&s)
            }
            _ => Err(Error::Shape(format!(
                "expected (h, w, c) or (n, h, w, c), got {:?}",
                self.shape
            ))),
        }
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self { shape: self.shape.clone(), data: self.data.iter().map(|&v| f(v)).collect() }
    }

    pub fn sum(&self) -> T {
        self.data.iter().fold(T::zero(), |acc, &v| acc + v)
    }

    pub fn mean(&self) -> T {
        self.sum() / T::from_usize(self.len()).unwrap()
    }

    pub fn dot(&self, other: &Self) -> Result<T> {
        if self.shape != other.shape {
            return Err(Error::Shape(format!(
                "dot of {:?} with {:?}",
                self.shape, other.shape
            )));
        }
        Ok(self.data.iter().zip(&other.data).fold(T::zero(), |acc, (&a, &b)| acc + a * b))
    }

    pub fn max_abs_diff(&self, other: &Self) -> Result<T> {
        if self.shape != other.shape {
            return Err(Error::Shape(format!(
                "compare {:?} with {:?}",
                self.shape, other.shape
            )));
        }
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .fold(T::zero(), |acc, (&a, &b)| acc.max((a - b).abs())))
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| U::from_f64_lossy(v.to_f64_lossy())).collect(),
        }
    }

    /// Rank-3 element accessor `(y, x, c)`.
    pub fn at3(&self, y: usize, x: usize, c: usize) -> T {
        debug_assert_eq!(self.rank(), 3);
        self.data[(y * self.shape[1] + x) * self.shape[2] + c]
    }

    /// Copies the sub-block `[y0, y1) x [x0, x1)` of a rank-3 tensor.
    pub fn crop3(&self, y0: usize, y1: usize, x0: usize, x1: usize) -> Result<Self> {
        if self.rank() != 3 {
            return Err(Error::Shape(format!("crop needs rank 3, got {:?}", self.shape)));
        }
        let (h, w, c) = (self.shape[0], self.shape[1], self.shape[2]);
        if y0 >= y1 || x0 >= x1 || y1 > h || x1 > w {
            return Err(Error::Shape(format!(
                "crop [{y0},{y1})x[{x0},{x1}) outside {h}x{w}"
            )));
        }
        let mut data = Vec::with_capacity((y1 - y0) * (x1 - x0) * c);
        for y in y0..y1 {
            let row = (y * w + x0) * c;
            data.extend_from_slice(&self.data[row..row + (x1 - x0) * c]);
        }
        Ok(Self { shape: vec![y1 - y0, x1 - x0, c], data })
    }

    /// Writes a rank-3 block into `self` at `(y0, x0)`.
    pub fn paste3(&mut self, block: &Self, y0: usize, x0: usize) -> Result<()> {
        let (h, w, c) = (self.shape[0], self.shape[1], self.shape[2]);
        let (bh, bw, bc) = (block.shape[0], block.shape[1], block.shape[2]);
        if self.rank() != 3 || block.rank() != 3 || bc != c || y0 + bh > h || x0 + bw > w {
            return Err(Error::Shape(format!(
                "cannot paste {:?} into {:?} at ({y0},{x0})",
                block.shape, self.shape
            )));
        }
        for y in 0..bh {
            let dst = ((y0 + y) * w + x0) * c;
            self.data[dst..dst + bw * c].copy_from_slice(&block.data[y * bw * c..(y + 1) * bw * c]);
        }
        Ok(())
    }

    /// Stacks rank-3 tensors of equal shape into a rank-4 batch.
    pub fn stack(items: &[Self]) -> Result<Self> {
        let first = items
            .first()
            .ok_or_else(|| Error::Shape("cannot stack an empty list".into()))?;
        let mut data = Vec::with_capacity(first.len() * items.len());
        for t in items {
            if t.shape != first.shape || t.rank() != 3 {
                return Err(Error::Shape(format!(
                    "stack of {:?} with {:?}",
                    first.shape, t.shape
                )));
            }
            data.extend_from_slice(&t.data);
        }
        let mut shape = vec![items.len()];
        shape.extend_from_slice(&first.shape);
        Ok(Self { shape, data })
    }

    /// Extracts batch element `i` of a rank-4 tensor as rank-3.
    pub fn batch_item(&self, i: usize) -> Result<Self> {
        if self.rank() != 4 || i >= self.shape[0] {
            return Err(Error::Shape(format!("no batch item {i} in {:?}", self.shape)));
        }
        let n = self.shape[1] * self.shape[2] * self.shape[3];
        Ok(Self { shape: self.shape[1..].to_vec(), data: self.data[i * n..(i + 1) * n].to_vec() })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_mismatched_length() {
        assert!(Tensor::<f64>::from_vec(&[2, 3], vec![0.0; 5]).is_err());
        assert!(Tensor::<f64>::from_vec(&[0, 3], vec![]).is_err());
    }

    #[test]
    fn crop_and_paste_are_inverse() {
        let t = Tensor::<f64>::from_fn(&[4, 5, 2], |i| i as f64);
        let block = t.crop3(1, 3, 2, 5).unwrap();
        assert_eq!(block.shape(), &[2, 3, 2]);
        assert_eq!(block.at3(0, 0, 1), t.at3(1, 2, 1));
        let mut z = Tensor::<f64>::zeros(&[4, 5, 2]);
        z.paste3(&block, 1, 2).unwrap();
        assert_eq!(z.at3(2, 4, 0), t.at3(2, 4, 0));
        assert_eq!(z.at3(0, 0, 0), 0.0);
    }

    #[test]
    fn stack_and_unstack() {
        let a = Tensor::<f32>::full(&[2, 2, 1], 1.0);
        let b = Tensor::<f32>::full(&[2, 2, 1], 2.0);
        let s = Tensor::stack(&[a.clone(), b.clone()]).unwrap();
        assert_eq!(s.shape(), &[2, 2, 2, 1]);
        assert_eq!(s.batch_item(1).unwrap(), b);
    }
}

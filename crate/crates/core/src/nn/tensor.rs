use crate::error::{shape_err, Result};
use crate::nn::Real;

/// Dense row-major tensor. Rank-2 tensors are laid out `channels × time`.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: Real> Tensor<T> {
    pub fn zeros(shape: &[usize]) -> Self {
        Self { shape: shape.to_vec(), data: vec![T::zero(); shape.iter().product()] }
    }

    pub fn full(shape: &[usize], value: T) -> Self {
        Self { shape: shape.to_vec(), data: vec![value; shape.iter().product()] }
    }

    pub fn from_vec(shape: &[usize], data: Vec<T>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(shape_err!("shape {:?} needs {} values, got {}", shape, n, data.len()));
        }
        Ok(Self { shape: shape.to_vec(), data })
    }

    /// Single-channel `1 × len` tensor.
    pub fn row(data: Vec<T>) -> Self {
        Self { shape: vec![1, data.len()], data }
    }

    pub fn scalar(v: T) -> Self {
        Self { shape: vec![1], data: vec![v] }
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

    /// Leading dimension of a rank-2 tensor.
    pub fn channels(&self) -> usize {
        self.shape[0]
    }

    /// Trailing dimension of a rank-2 tensor.
    pub fn time(&self) -> usize {
        if self.shape.len() < 2 {
            self.data.len()
        } else {
            self.shape[1]
        }
    }

    pub fn channel(&self, c: usize) -> &[T] {
        let t = self.time();
        &self.data[c * t..(c + 1) * t]
    }

    pub fn channel_mut(&mut self, c: usize) -> &mut [T] {
        let t = self.time();
        &mut self.data[c * t..(c + 1) * t]
    }

    pub fn reshaped(self, shape: &[usize]) -> Result<Self> {
        Self::from_vec(shape, self.data)
    }

    pub fn cast<U: Real>(&self) -> Tensor<U> {
        Tensor { shape: self.shape.clone(), data: self.data.iter().map(|v| U::lit(v.f64())).collect() }
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self { shape: self.shape.clone(), data: self.data.iter().map(|&v| f(v)).collect() }
    }

    pub fn sum(&self) -> T {
        self.data.iter().copied().sum()
    }

    pub fn mean(&self) -> T {
        if self.data.is_empty() {
            return T::zero();
        }
        self.sum() / T::lit(self.data.len() as f64)
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |m, v| m.max(v.abs()))
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn add_assign(&mut self, other: &Self) {
        debug_assert_eq!(self.shape, other.shape);
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a = *a + b;
        }
    }

    pub fn scale_assign(&mut self, s: T) {
        for a in &mut self.data {
            *a = *a * s;
        }
    }

    /// Columns `[start, end)` of a rank-2 tensor.
    pub fn slice_time(&self, start: usize, end: usize) -> Self {
        let c = self.channels();
        let mut data = Vec::with_capacity(c * (end - start));
        for ch in 0..c {
            data.extend_from_slice(&self.channel(ch)[start..end]);
        }
        Self { shape: vec![c, end - start], data }
    }

    /// Concatenate rank-2 tensors along time.
    pub fn cat_time(parts: &[Self]) -> Result<Self> {
        let Some(first) = parts.first() else {
            return Err(shape_err!("cat_time of nothing"));
        };
        let c = first.channels();
        if parts.iter().any(|p| p.channels() != c) {
            return Err(shape_err!("cat_time channel mismatch"));
        }
        let total: usize = parts.iter().map(|p| p.time()).sum();
        let mut data = Vec::with_capacity(c * total);
        for ch in 0..c {
            for p in parts {
                data.extend_from_slice(p.channel(ch));
            }
        }
        Ok(Self { shape: vec![c, total], data })
    }
}

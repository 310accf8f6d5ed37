use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, MulAssign, SubAssign};

use num_traits::Float;

use super::AutodiffError;

/// Scalar type of a tensor: `f64` for gradient checking, `f32` for training.
pub trait Real:
    Float + Default + Debug + Display + Send + Sync + Sum + AddAssign + SubAssign + MulAssign + 'static
{
    const NAME: &'static str;

    fn of(x: f64) -> Self;
    fn as_f64(self) -> f64;
    fn as_f32(self) -> f32;
}

impl Real for f32 {
    const NAME: &'static str = "f32";

    fn of(x: f64) -> Self {
        x as f32
    }

    fn as_f64(self) -> f64 {
        f64::from(self)
    }

    fn as_f32(self) -> f32 {
        self
    }
}

impl Real for f64 {
    const NAME: &'static str = "f64";

    fn of(x: f64) -> Self {
        x
    }

    fn as_f64(self) -> f64 {
        self
    }

    fn as_f32(self) -> f32 {
        self as f32
    }
}

/// Dense row-major array. Graph operations work on rank-2 tensors; vectors
/// are stored as `1 × n`.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: Real> Tensor<T> {
    pub fn new(shape: Vec<usize>, data: Vec<T>) -> Result<Self, AutodiffError> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(AutodiffError::DataLength {
                shape,
                len: data.len(),
            });
        }
        Ok(Tensor { shape, data })
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<T>) -> Result<Self, AutodiffError> {
        Tensor::new(vec![rows, cols], data)
    }

    /// Build from nested rows; panics on ragged input.
    pub fn from_rows(rows: &[&[f64]]) -> Self {
        let cols = rows.first().map_or(0, |r| r.len());
        assert!(rows.iter().all(|r| r.len() == cols), "ragged rows");
        Tensor {
            shape: vec![rows.len(), cols],
            data: rows
                .iter()
                .flat_map(|r| r.iter().map(|&x| T::of(x)))
                .collect(),
        }
    }

    pub fn row_vector(values: &[f64]) -> Self {
        Tensor::from_rows(&[values])
    }

    pub fn scalar(x: T) -> Self {
        Tensor {
            shape: vec![1, 1],
            data: vec![x],
        }
    }

    pub fn full(rows: usize, cols: usize, value: T) -> Self {
        Tensor {
            shape: vec![rows, cols],
            data: vec![value; rows * cols],
        }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Tensor::full(rows, cols, T::zero())
    }

    pub fn ones(rows: usize, cols: usize) -> Self {
        Tensor::full(rows, cols, T::one())
    }

    pub fn zeros_like(other: &Tensor<T>) -> Self {
        Tensor {
            shape: other.shape.clone(),
            data: vec![T::zero(); other.data.len()],
        }
    }

    pub fn ones_like(other: &Tensor<T>) -> Self {
        Tensor {
            shape: other.shape.clone(),
            data: vec![T::one(); other.data.len()],
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Tensor {
            shape: vec![rows, cols],
            data,
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn numel(&self) -> usize {
        self.data.len()
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

    /// Rows of a rank-2 tensor (1 for lower ranks).
    pub fn rows(&self) -> usize {
        if self.shape.len() >= 2 {
            self.shape[0]
        } else {
            1
        }
    }

    pub fn cols(&self) -> usize {
        *self.shape.last().unwrap_or(&1)
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[i * self.cols() + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: T) {
        let c = self.cols();
        self.data[i * c + j] = v;
    }

    pub fn row(&self, i: usize) -> &[T] {
        let c = self.cols();
        &self.data[i * c..(i + 1) * c]
    }

    pub fn item(&self) -> T {
        self.data[0]
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn cast<U: Real>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&x| U::of(x.as_f64())).collect(),
        }
    }

    pub fn transpose(&self) -> Self {
        let (r, c) = (self.rows(), self.cols());
        Tensor::from_fn(c, r, |i, j| self.data[j * c + i])
    }

    pub fn add_assign(&mut self, other: &Tensor<T>) {
        debug_assert_eq!(self.shape, other.shape);
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }
}

/// `a · b` for `a: m×k`, `b: k×n`.
pub(crate) fn matmul<T: Real>(a: &Tensor<T>, b: &Tensor<T>) -> Tensor<T> {
    let (m, k, n) = (a.rows(), a.cols(), b.cols());
    let mut out = vec![T::zero(); m * n];
    for i in 0..m {
        let orow = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a.data[i * k + p];
            let brow = &b.data[p * n..(p + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    Tensor {
        shape: vec![m, n],
        data: out,
    }
}

/// `a · bᵀ` for `a: m×k`, `b: n×k`.
pub(crate) fn matmul_nt<T: Real>(a: &Tensor<T>, b: &Tensor<T>) -> Tensor<T> {
    let (m, k, n) = (a.rows(), a.cols(), b.rows());
    let mut out = vec![T::zero(); m * n];
    for i in 0..m {
        let arow = &a.data[i * k..(i + 1) * k];
        for j in 0..n {
            let brow = &b.data[j * k..(j + 1) * k];
            let mut acc = T::zero();
            for (&x, &y) in arow.iter().zip(brow) {
                acc += x * y;
            }
            out[i * n + j] = acc;
        }
    }
    Tensor {
        shape: vec![m, n],
        data: out,
    }
}

/// `aᵀ · b` for `a: k×m`, `b: k×n`.
pub(crate) fn matmul_tn<T: Real>(a: &Tensor<T>, b: &Tensor<T>) -> Tensor<T> {
    let (k, m, n) = (a.rows(), a.cols(), b.cols());
    let mut out = vec![T::zero(); m * n];
    for p in 0..k {
        let arow = &a.data[p * m..(p + 1) * m];
        let brow = &b.data[p * n..(p + 1) * n];
        for (i, &av) in arow.iter().enumerate() {
            let orow = &mut out[i * n..(i + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    Tensor {
        shape: vec![m, n],
        data: out,
    }
}

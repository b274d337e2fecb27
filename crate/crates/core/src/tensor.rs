//! Dense rank-4 tensor in `(n, c, h, w)` row-major order.
//!
//! Matrices (logits, soft labels, flattened activations) are stored as
//! `(rows, cols, 1, 1)` tensors so every layer speaks the same type.

use std::fmt;

use crate::error::{Error, Result};

/// Shape of a rank-4 tensor: sample count, channels, rows, columns.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub struct Shape {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
}

impl Shape {
    pub const fn new(n: usize, c: usize, h: usize, w: usize) -> Self {
        Shape { n, c, h, w }
    }

    pub const fn matrix(rows: usize, cols: usize) -> Self {
        Shape::new(rows, cols, 1, 1)
    }

    pub const fn len(&self) -> usize {
        self.n * self.c * self.h * self.w
    }

    pub const fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Number of values belonging to one sample.
    pub const fn per_sample(&self) -> usize {
        self.c * self.h * self.w
    }

    pub const fn plane(&self) -> usize {
        self.h * self.w
    }

    pub const fn dims(&self) -> [usize; 4] {
        [self.n, self.c, self.h, self.w]
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {}, {})", self.n, self.c, self.h, self.w)
    }
}

#[derive(Clone, PartialEq, Debug)]
pub struct Tensor {
    shape: Shape,
    data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: Shape) -> Self {
        Tensor {
            shape,
            data: vec![0.0; shape.len()],
        }
    }

    pub fn full(shape: Shape, value: f64) -> Self {
        Tensor {
            shape,
            data: vec![value; shape.len()],
        }
    }

    pub fn from_vec(shape: Shape, data: Vec<f64>) -> Result<Self> {
        if data.len() != shape.len() {
            return Err(Error::dim(
                "Tensor::from_vec",
                format!("shape {shape} needs {} values, got {}", shape.len(), data.len()),
            ));
        }
        Ok(Tensor { shape, data })
    }

    /// Builds a `(rows, cols, 1, 1)` tensor.
    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        Tensor::from_vec(Shape::matrix(rows, cols), data)
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn index(&self, n: usize, c: usize, h: usize, w: usize) -> usize {
        let s = self.shape;
        ((n * s.c + c) * s.h + h) * s.w + w
    }

    #[inline]
    pub fn at(&self, n: usize, c: usize, h: usize, w: usize) -> f64 {
        self.data[self.index(n, c, h, w)]
    }

    #[inline]
    pub fn set(&mut self, n: usize, c: usize, h: usize, w: usize, v: f64) {
        let i = self.index(n, c, h, w);
        self.data[i] = v;
    }

    /// Values of sample `i` (all channels).
    pub fn sample(&self, i: usize) -> &[f64] {
        let step = self.shape.per_sample();
        &self.data[i * step..(i + 1) * step]
    }

    pub fn sample_mut(&mut self, i: usize) -> &mut [f64] {
        let step = self.shape.per_sample();
        &mut self.data[i * step..(i + 1) * step]
    }

    /// Same data viewed under a different shape of equal size.
    pub fn reshape(self, shape: Shape) -> Result<Self> {
        if shape.len() != self.data.len() {
            return Err(Error::dim(
                "Tensor::reshape",
                format!("cannot view {} as {shape}", self.shape),
            ));
        }
        Ok(Tensor {
            shape,
            data: self.data,
        })
    }

    /// `(n, c, h, w)` -> `(n, c*h*w, 1, 1)`.
    pub fn flatten(self) -> Self {
        let s = self.shape;
        Tensor {
            shape: Shape::matrix(s.n, s.per_sample()),
            data: self.data,
        }
    }

    /// New tensor holding the samples at `indices`, in that order.
    pub fn gather(&self, indices: &[usize]) -> Self {
        let step = self.shape.per_sample();
        let mut data = Vec::with_capacity(indices.len() * step);
        for &i in indices {
            data.extend_from_slice(self.sample(i));
        }
        Tensor {
            shape: Shape { n: indices.len(), ..self.shape },
            data,
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Tensor {
            shape: self.shape,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn max_abs_diff(&self, other: &Tensor) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub(crate) fn expect_shape(&self, op: &'static str, expected: Shape) -> Result<()> {
        if self.shape != expected {
            return Err(Error::dim(
                op,
                format!("expected shape {expected}, got {}", self.shape),
            ));
        }
        Ok(())
    }
}

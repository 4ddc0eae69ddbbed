//! Dense row-major n-dimensional array and the primitive kernels layers build on.
//!
//! Image batches follow the `N x H x W x C` convention (batch outermost,
//! channels innermost). Elements are `f32`; reductions that are sensitive to
//! rounding (matmul, convolution, statistics) accumulate in `f64` with a fixed
//! summation order, so repeated calls are bit-identical.

use crate::error::{Error, Result};
use std::fmt;

/// Ordered list of extents, outermost first. Rank 0 (scalar) is allowed and
/// zero extents are legal; the element count of a rank-0 shape is 1.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Shape {
    dims: Vec<usize>,
}

impl Shape {
    pub fn new(dims: impl Into<Vec<usize>>) -> Self {
        Shape { dims: dims.into() }
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn rank(&self) -> usize {
        self.dims.len()
    }

    /// Total element count (empty product = 1).
    pub fn numel(&self) -> usize {
        self.dims.iter().product()
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.dims.is_empty() {
            return write!(f, "scalar");
        }
        let parts: Vec<String> = self.dims.iter().map(|d| d.to_string()).collect();
        write!(f, "{}", parts.join("x"))
    }
}

impl From<&[usize]> for Shape {
    fn from(dims: &[usize]) -> Self {
        Shape::new(dims.to_vec())
    }
}

impl From<Vec<usize>> for Shape {
    fn from(dims: Vec<usize>) -> Self {
        Shape::new(dims)
    }
}

impl<const N: usize> From<[usize; N]> for Shape {
    fn from(dims: [usize; N]) -> Self {
        Shape::new(dims.to_vec())
    }
}

/// Dense row-major tensor. Immutable after construction; every op returns a
/// fresh value, so tensors are safe to share across threads.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Shape,
    data: Vec<f32>,
}

impl Tensor {
    /// Build a tensor from a flat row-major value sequence.
    pub fn from_values(shape: impl Into<Shape>, values: Vec<f32>) -> Result<Self> {
        let shape = shape.into();
        if values.len() != shape.numel() {
            return Err(Error::shape(format!(
                "value count {} does not match shape {} ({} elements)",
                values.len(),
                shape,
                shape.numel()
            )));
        }
        Ok(Tensor {
            shape,
            data: values,
        })
    }

    pub fn zeros(shape: impl Into<Shape>) -> Self {
        let shape = shape.into();
        let n = shape.numel();
        Tensor {
            shape,
            data: vec![0.0; n],
        }
    }

    pub fn full(shape: impl Into<Shape>, value: f32) -> Self {
        let shape = shape.into();
        let n = shape.numel();
        Tensor {
            shape,
            data: vec![value; n],
        }
    }

    /// Rank-2 identity matrix.
    pub fn identity(n: usize) -> Self {
        let mut t = Tensor::zeros([n, n]);
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        t
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn dims(&self) -> &[usize] {
        self.shape.dims()
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    /// Same data, new extents. The element count must be unchanged.
    pub fn reshape(&self, shape: impl Into<Shape>) -> Result<Self> {
        let shape = shape.into();
        if shape.numel() != self.data.len() {
            return Err(Error::shape(format!(
                "cannot reshape {} ({} elements) to {} ({} elements)",
                self.shape,
                self.data.len(),
                shape,
                shape.numel()
            )));
        }
        Ok(Tensor {
            shape,
            data: self.data.clone(),
        })
    }

    /// Row-major flat index for a rank-2 tensor.
    #[inline]
    pub fn at2(&self, i: usize, j: usize) -> f32 {
        let cols = self.dims()[1];
        self.data[i * cols + j]
    }

    /// Row-major flat index for a rank-4 tensor.
    #[inline]
    pub fn at4(&self, n: usize, h: usize, w: usize, c: usize) -> f32 {
        let d = self.dims();
        self.data[((n * d[1] + h) * d[2] + w) * d[3] + c]
    }

    pub fn map(&self, f: impl Fn(f32) -> f32) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    fn zip_with(&self, other: &Tensor, f: impl Fn(f32, f32) -> f32) -> Result<Tensor> {
        if self.shape != other.shape {
            return Err(Error::shape(format!(
                "elementwise op on mismatched shapes {} and {}",
                self.shape, other.shape
            )));
        }
        Ok(Tensor {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .zip(other.data.iter())
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    /// Pointwise sum; shapes must match exactly.
    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_with(other, |a, b| a + b)
    }

    /// Pointwise product; shapes must match exactly.
    pub fn mul(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_with(other, |a, b| a * b)
    }

    /// Rank-2 matrix product `[p,q] x [q,r] -> [p,r]`.
    ///
    /// Accumulates each output row in f64 with a fixed k-order, so the result
    /// is deterministic and tolerates long inner dimensions.
    pub fn matmul(&self, other: &Tensor) -> Result<Tensor> {
        if self.shape.rank() != 2 || other.shape.rank() != 2 {
            return Err(Error::shape(format!(
                "matmul expects rank-2 operands, got {} and {}",
                self.shape, other.shape
            )));
        }
        let (p, q) = (self.dims()[0], self.dims()[1]);
        let (q2, r) = (other.dims()[0], other.dims()[1]);
        if q != q2 {
            return Err(Error::shape(format!(
                "matmul inner extents differ: {} vs {}",
                self.shape, other.shape
            )));
        }
        let mut out = vec![0.0f32; p * r];
        let mut row_acc = vec![0.0f64; r];
        for i in 0..p {
            row_acc.iter_mut().for_each(|x| *x = 0.0);
            for k in 0..q {
                let a = self.data[i * q + k] as f64;
                if a == 0.0 {
                    continue;
                }
                let brow = &other.data[k * r..(k + 1) * r];
                for (acc, &b) in row_acc.iter_mut().zip(brow) {
                    *acc += a * b as f64;
                }
            }
            for (o, &acc) in out[i * r..(i + 1) * r].iter_mut().zip(row_acc.iter()) {
                *o = acc as f32;
            }
        }
        Tensor::from_values([p, r], out)
    }
}

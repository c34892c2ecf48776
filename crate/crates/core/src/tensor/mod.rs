//! Dense NCHW tensors and the inference kernels built on them.
//!
//! Every kernel is a pure function of its inputs. Where work is split across
//! threads it is split over output elements only, so each output value is
//! produced by one fixed sequence of floating point operations regardless of
//! the thread count.

mod conv;
mod pointwise;
mod sample;

pub use conv::{conv2d, ConvSpec};
pub use pointwise::{
    affine_norm, argmax_channels, concat_channels, elementwise_add, elementwise_mul, relu, softmax_channels,
};
pub(crate) use pointwise::{affine_norm_in_place, relu_in_place};
pub(crate) use sample::max_pool_plane;
pub use sample::{bilinear_upsample, max_pool2d};

use crate::error::{Error, Result};

/// Extents of a rank-4 `(batch, channel, row, column)` tensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Shape4 {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
}

impl Shape4 {
    pub const fn new(n: usize, c: usize, h: usize, w: usize) -> Self {
        Self { n, c, h, w }
    }

    pub const fn numel(&self) -> usize {
        self.n * self.c * self.h * self.w
    }

    /// Elements in one `(n, c)` plane.
    pub const fn plane(&self) -> usize {
        self.h * self.w
    }

    #[inline]
    pub const fn index(&self, n: usize, c: usize, y: usize, x: usize) -> usize {
        ((n * self.c + c) * self.h + y) * self.w + x
    }

    pub fn with_channels(self, c: usize) -> Self {
        Self { c, ..self }
    }

    fn validate(&self, op: &'static str) -> Result<()> {
        if self.n == 0 || self.c == 0 || self.h == 0 || self.w == 0 {
            return Err(Error::shape(op, format!("all dimensions must be >= 1, got {self}")));
        }
        Ok(())
    }
}

impl std::fmt::Display for Shape4 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}x{}x{}", self.n, self.c, self.h, self.w)
    }
}

/// Row-major rank-4 tensor of `f32`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor4 {
    shape: Shape4,
    data: Vec<f32>,
}

impl Tensor4 {
    pub fn new(shape: Shape4, data: Vec<f32>) -> Result<Self> {
        shape.validate("Tensor4::new")?;
        if data.len() != shape.numel() {
            return Err(Error::shape(
                "Tensor4::new",
                format!("{} elements for shape {shape}", data.len()),
            ));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Shape4) -> Result<Self> {
        Self::full(shape, 0.0)
    }

    pub fn full(shape: Shape4, value: f32) -> Result<Self> {
        shape.validate("Tensor4::full")?;
        Ok(Self {
            shape,
            data: vec![value; shape.numel()],
        })
    }

    /// Builds a tensor by evaluating `f(n, c, y, x)` for every element.
    pub fn from_fn(shape: Shape4, mut f: impl FnMut(usize, usize, usize, usize) -> f32) -> Result<Self> {
        shape.validate("Tensor4::from_fn")?;
        let mut data = Vec::with_capacity(shape.numel());
        for n in 0..shape.n {
            for c in 0..shape.c {
                for y in 0..shape.h {
                    for x in 0..shape.w {
                        data.push(f(n, c, y, x));
                    }
                }
            }
        }
        Ok(Self { shape, data })
    }

    /// Internal constructor for kernels that already guarantee the invariants.
    pub(crate) fn from_parts(shape: Shape4, data: Vec<f32>) -> Self {
        debug_assert_eq!(shape.numel(), data.len());
        Self { shape, data }
    }

    pub fn shape(&self) -> Shape4 {
        self.shape
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

    #[inline]
    pub fn get(&self, n: usize, c: usize, y: usize, x: usize) -> f32 {
        self.data[self.shape.index(n, c, y, x)]
    }

    #[inline]
    pub fn set(&mut self, n: usize, c: usize, y: usize, x: usize, value: f32) {
        let i = self.shape.index(n, c, y, x);
        self.data[i] = value;
    }

    pub fn plane(&self, n: usize, c: usize) -> &[f32] {
        let start = self.shape.index(n, c, 0, 0);
        &self.data[start..start + self.shape.plane()]
    }

    pub fn plane_mut(&mut self, n: usize, c: usize) -> &mut [f32] {
        let start = self.shape.index(n, c, 0, 0);
        let len = self.shape.plane();
        &mut self.data[start..start + len]
    }

    /// Bitwise equality, distinguishing `-0.0` from `0.0` and comparing NaN payloads.
    pub fn bitwise_eq(&self, other: &Tensor4) -> bool {
        self.shape == other.shape
            && self
                .data
                .iter()
                .zip(&other.data)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }

    pub fn max_abs_diff(&self, other: &Tensor4) -> f32 {
        assert_eq!(self.shape, other.shape, "max_abs_diff on different shapes");
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f32::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flat_index_layout() {
        let s = Shape4::new(2, 3, 4, 5);
        assert_eq!(s.index(1, 2, 3, 4), ((1 * 3 + 2) * 4 + 3) * 5 + 4);
        assert_eq!(s.index(1, 2, 3, 4), s.numel() - 1);
        let t = Tensor4::from_fn(s, |n, c, y, x| s.index(n, c, y, x) as f32).unwrap();
        assert!(t.data().iter().enumerate().all(|(i, v)| *v == i as f32));
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(Tensor4::new(Shape4::new(1, 0, 2, 2), vec![]).is_err());
        assert!(Tensor4::new(Shape4::new(1, 1, 2, 2), vec![0.0; 3]).is_err());
        assert!(Tensor4::zeros(Shape4::new(1, 1, 2, 2)).is_ok());
    }
}

//! Dense real and complex grids, seeded Gaussian sampling and the radix-2
//! 2-D DFT used by every operator and solver.

mod fft;
mod rng;

pub use fft::{circular_convolve, dft2, dft2_complex, embed_kernel, idft2, idft2_complex, kernel_transfer};
pub use rng::{sample_gaussian, Rng};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Height × width × channels of a grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Shape {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
}

impl Shape {
    pub fn new(height: usize, width: usize, channels: usize) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::shape(format!("empty grid {height}x{width}")));
        }
        if channels != 1 && channels != 3 {
            return Err(Error::shape(format!("channels must be 1 or 3, got {channels}")));
        }
        Ok(Self { height, width, channels })
    }

    /// Number of scalar entries.
    pub fn len(&self) -> usize {
        self.height * self.width * self.channels
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn pixels(&self) -> usize {
        self.height * self.width
    }

    pub fn is_pow2_grid(&self) -> bool {
        self.height.is_power_of_two() && self.width.is_power_of_two()
    }

    pub fn ensure_pow2(&self) -> Result<()> {
        if self.is_pow2_grid() {
            Ok(())
        } else {
            Err(Error::shape(format!(
                "grid {}x{} is not a power of two in both dimensions",
                self.height, self.width
            )))
        }
    }

    pub fn with_channels(&self, channels: usize) -> Shape {
        Shape { channels, ..*self }
    }
}

impl std::fmt::Display for Shape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}x{}", self.height, self.width, self.channels)
    }
}

/// A real-valued H×W×C grid stored row-major with the channel innermost.
///
/// Arithmetic helpers (`axpy`, `sub`, ...) panic on shape mismatch; public
/// operator entry points validate shapes first and return [`Error::Shape`].
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    shape: Shape,
    data: Vec<f64>,
}

impl Field {
    pub fn new(shape: Shape, data: Vec<f64>) -> Result<Self> {
        if data.len() != shape.len() {
            return Err(Error::shape(format!(
                "data length {} does not match shape {shape}",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::domain(format!("non-finite entry at index {i}")));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Shape) -> Self {
        Self::filled(shape, 0.0)
    }

    pub fn filled(shape: Shape, value: f64) -> Self {
        Self { shape, data: vec![value; shape.len()] }
    }

    pub fn from_fn(shape: Shape, mut f: impl FnMut(usize, usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(shape.len());
        for r in 0..shape.height {
            for c in 0..shape.width {
                for ch in 0..shape.channels {
                    data.push(f(r, c, ch));
                }
            }
        }
        Self { shape, data }
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn height(&self) -> usize {
        self.shape.height
    }

    pub fn width(&self) -> usize {
        self.shape.width
    }

    pub fn channels(&self) -> usize {
        self.shape.channels
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
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

    #[inline]
    pub fn index(&self, row: usize, col: usize, ch: usize) -> usize {
        (row * self.shape.width + col) * self.shape.channels + ch
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize, ch: usize) -> f64 {
        self.data[self.index(row, col, ch)]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, ch: usize, value: f64) {
        let i = self.index(row, col, ch);
        self.data[i] = value;
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn ensure_same_shape(&self, other: &Field) -> Result<()> {
        if self.shape == other.shape {
            Ok(())
        } else {
            Err(Error::shape(format!("shape {} does not match {}", self.shape, other.shape)))
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Field {
        Field { shape: self.shape, data: self.data.iter().map(|&v| f(v)).collect() }
    }

    pub fn zip_map(&self, other: &Field, f: impl Fn(f64, f64) -> f64) -> Field {
        assert_eq!(self.shape, other.shape, "zip_map shape mismatch");
        Field {
            shape: self.shape,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        }
    }

    pub fn scaled(&self, a: f64) -> Field {
        self.map(|v| a * v)
    }

    pub fn add(&self, other: &Field) -> Field {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Field) -> Field {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn mul(&self, other: &Field) -> Field {
        self.zip_map(other, |a, b| a * b)
    }

    /// `self += a * x`
    pub fn axpy(&mut self, a: f64, x: &Field) {
        assert_eq!(self.shape, x.shape, "axpy shape mismatch");
        for (s, &v) in self.data.iter_mut().zip(&x.data) {
            *s += a * v;
        }
    }

    /// `Σ coef_i · field_i`; every field must share one shape.
    pub fn linear_combination(terms: &[(f64, &Field)]) -> Field {
        let (first_coef, first) = terms[0];
        let mut out = first.scaled(first_coef);
        for &(coef, field) in &terms[1..] {
            out.axpy(coef, field);
        }
        out
    }

    pub fn dot(&self, other: &Field) -> f64 {
        assert_eq!(self.shape, other.shape, "dot shape mismatch");
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    pub fn norm_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn dist_sq(&self, other: &Field) -> f64 {
        assert_eq!(self.shape, other.shape, "dist_sq shape mismatch");
        self.data.iter().zip(&other.data).map(|(a, b)| (a - b) * (a - b)).sum()
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        self.sum() / self.data.len() as f64
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn max_abs_diff(&self, other: &Field) -> f64 {
        assert_eq!(self.shape, other.shape, "max_abs_diff shape mismatch");
        self.data.iter().zip(&other.data).fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    /// One channel as a row-major H×W plane.
    pub fn plane(&self, ch: usize) -> Vec<f64> {
        self.data.iter().skip(ch).step_by(self.shape.channels).copied().collect()
    }

    pub fn set_plane(&mut self, ch: usize, plane: &[f64]) {
        let c = self.shape.channels;
        for (i, &v) in plane.iter().enumerate() {
            self.data[i * c + ch] = v;
        }
    }
}

/// Complex counterpart of [`Field`] for Fourier-domain intermediates.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexField {
    shape: Shape,
    data: Vec<Complex64>,
}

impl ComplexField {
    pub fn new(shape: Shape, data: Vec<Complex64>) -> Result<Self> {
        if data.len() != shape.len() {
            return Err(Error::shape(format!(
                "data length {} does not match shape {shape}",
                data.len()
            )));
        }
        if data.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::domain("non-finite complex entry"));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Shape) -> Self {
        Self { shape, data: vec![Complex64::new(0.0, 0.0); shape.len()] }
    }

    pub fn from_real(field: &Field) -> Self {
        Self {
            shape: field.shape(),
            data: field.data().iter().map(|&v| Complex64::new(v, 0.0)).collect(),
        }
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize, ch: usize) -> Complex64 {
        self.data[(row * self.shape.width + col) * self.shape.channels + ch]
    }

    pub fn re(&self) -> Field {
        Field { shape: self.shape, data: self.data.iter().map(|z| z.re).collect() }
    }

    pub fn energy(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }

    pub(crate) fn plane(&self, ch: usize) -> Vec<Complex64> {
        self.data.iter().skip(ch).step_by(self.shape.channels).copied().collect()
    }

    pub(crate) fn set_plane(&mut self, ch: usize, plane: &[Complex64]) {
        let c = self.shape.channels;
        for (i, &v) in plane.iter().enumerate() {
            self.data[i * c + ch] = v;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_lengths_and_non_finite() {
        let s = Shape::new(2, 2, 1).unwrap();
        assert!(matches!(Field::new(s, vec![0.0; 3]), Err(Error::Shape(_))));
        assert!(matches!(Field::new(s, vec![0.0, 1.0, f64::NAN, 0.0]), Err(Error::Domain(_))));
        assert!(Shape::new(4, 4, 2).is_err());
        assert!(Shape::new(0, 4, 1).is_err());
    }

    #[test]
    fn layout_is_channel_innermost() {
        let s = Shape::new(2, 3, 3).unwrap();
        let f = Field::from_fn(s, |r, c, ch| (100 * r + 10 * c + ch) as f64);
        assert_eq!(f.data()[0..4], [0.0, 1.0, 2.0, 10.0]);
        assert_eq!(f.get(1, 2, 1), 121.0);
        assert_eq!(f.plane(2), vec![2.0, 12.0, 22.0, 102.0, 112.0, 122.0]);
    }

    #[test]
    fn linear_combination_matches_manual() {
        let s = Shape::new(2, 2, 1).unwrap();
        let a = Field::filled(s, 1.0);
        let b = Field::from_fn(s, |r, c, _| (r + c) as f64);
        let lc = Field::linear_combination(&[(2.0, &a), (-1.0, &b)]);
        assert_eq!(lc.data(), &[2.0, 1.0, 1.0, 0.0]);
    }
}

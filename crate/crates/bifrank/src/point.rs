//! Dense points: flat `f64` storage with a `(rows, cols)` shape.
//!
//! Vectors are `(n, 1)`; matrices are stored row-major. Everything at desk
//! scale is dense, so no sparse representation is provided.

use crate::error::{Error, Result};

/// A dense vector or matrix of 64-bit reals.
#[derive(Debug, Clone, PartialEq)]
pub struct Point {
    data: Vec<f64>,
    rows: usize,
    cols: usize,
}

impl Point {
    /// Build from raw storage; `data.len()` must equal `rows * cols`.
    pub fn new(data: Vec<f64>, rows: usize, cols: usize) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Usage(format!(
                "point storage length {} does not match shape {}x{}",
                data.len(),
                rows,
                cols
            )));
        }
        Ok(Point { data, rows, cols })
    }

    /// Column vector of length `n`.
    pub fn vector(data: Vec<f64>) -> Self {
        let rows = data.len();
        Point { data, rows, cols: 1 }
    }

    /// All-zeros point of the given shape.
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Point { data: vec![0.0; rows * cols], rows, cols }
    }

    /// Identity matrix of order `n`.
    pub fn identity(n: usize) -> Self {
        let mut p = Point::zeros(n, n);
        for i in 0..n {
            p.data[i * n + i] = 1.0;
        }
        p
    }

    /// Standard basis element `e_i` scaled by `value` (flat index).
    pub fn basis(rows: usize, cols: usize, index: usize, value: f64) -> Self {
        let mut p = Point::zeros(rows, cols);
        p.data[index] = value;
        p
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    /// Flat accessor.
    pub fn get(&self, i: usize) -> f64 {
        self.data[i]
    }

    /// Matrix accessor (row-major).
    pub fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn same_shape(&self, other: &Point) -> bool {
        self.rows == other.rows && self.cols == other.cols
    }

    fn check_shape(&self, other: &Point, op: &str) -> Result<()> {
        if !self.same_shape(other) {
            return Err(Error::Usage(format!(
                "{op}: shape mismatch {}x{} vs {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        Ok(())
    }

    /// True when every entry is finite.
    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Euclidean inner product (Frobenius for matrices).
    pub fn dot(&self, other: &Point) -> f64 {
        debug_assert!(self.same_shape(other));
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a * b)
            .sum()
    }

    /// Euclidean / Frobenius norm.
    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    /// ℓ1 norm of the flattened entries.
    pub fn norm_l1(&self) -> f64 {
        self.data.iter().map(|v| v.abs()).sum()
    }

    /// `self + c * other`, shape-checked.
    pub fn axpy(&self, c: f64, other: &Point) -> Result<Point> {
        self.check_shape(other, "axpy")?;
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a + c * b)
            .collect();
        Ok(Point { data, rows: self.rows, cols: self.cols })
    }

    pub fn add(&self, other: &Point) -> Result<Point> {
        self.axpy(1.0, other)
    }

    pub fn sub(&self, other: &Point) -> Result<Point> {
        self.axpy(-1.0, other)
    }

    pub fn scale(&self, c: f64) -> Point {
        Point {
            data: self.data.iter().map(|v| c * v).collect(),
            rows: self.rows,
            cols: self.cols,
        }
    }

    /// Matrix-vector product `self * v` for a `(rows, cols)` matrix.
    pub fn matvec(&self, v: &[f64]) -> Vec<f64> {
        debug_assert_eq!(v.len(), self.cols);
        let mut out = vec![0.0; self.rows];
        for r in 0..self.rows {
            let row = &self.data[r * self.cols..(r + 1) * self.cols];
            out[r] = row.iter().zip(v).map(|(a, b)| a * b).sum();
        }
        out
    }

    /// Transposed matrix-vector product `selfᵀ * u`.
    pub fn matvec_t(&self, u: &[f64]) -> Vec<f64> {
        debug_assert_eq!(u.len(), self.rows);
        let mut out = vec![0.0; self.cols];
        for r in 0..self.rows {
            let row = &self.data[r * self.cols..(r + 1) * self.cols];
            for (o, a) in out.iter_mut().zip(row) {
                *o += a * u[r];
            }
        }
        out
    }
}

/// Convex combination `(1-eta)·x + eta·s` (the Frank-Wolfe update).
///
/// With `eta` in `[0, 1]` the result stays inside any convex set containing
/// both arguments.
pub fn convex_step(x: &Point, s: &Point, eta: f64) -> Result<Point> {
    if !(0.0..=1.0).contains(&eta) {
        return Err(Error::Usage(format!("convex_step: eta {eta} outside [0,1]")));
    }
    x.check_shape(s, "convex_step")?;
    let data = x
        .data
        .iter()
        .zip(&s.data)
        .map(|(a, b)| (1.0 - eta) * a + eta * b)
        .collect();
    Ok(Point { data, rows: x.rows, cols: x.cols })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn convex_step_endpoints_and_midpoint() {
        let x = Point::vector(vec![1.0, 0.0]);
        let s = Point::vector(vec![0.0, 1.0]);
        assert_eq!(convex_step(&x, &s, 0.0).unwrap(), x);
        assert_eq!(convex_step(&x, &s, 1.0).unwrap(), s);
        let m = convex_step(
            &Point::vector(vec![2.0, 2.0]),
            &Point::vector(vec![0.0, 0.0]),
            0.5,
        )
        .unwrap();
        assert_eq!(m.as_slice(), &[1.0, 1.0]);
    }

    #[test]
    fn convex_step_rejects_mismatched_shapes() {
        let x = Point::vector(vec![1.0, 0.0]);
        let s = Point::vector(vec![1.0]);
        assert!(convex_step(&x, &s, 0.5).is_err());
    }

    #[test]
    fn matvec_roundtrip() {
        // [[1,2],[3,4],[5,6]] acting on (1,1) and its transpose on (1,1,1)
        let m = Point::new(vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0], 3, 2).unwrap();
        assert_eq!(m.matvec(&[1.0, 1.0]), vec![3.0, 7.0, 11.0]);
        assert_eq!(m.matvec_t(&[1.0, 1.0, 1.0]), vec![9.0, 12.0]);
    }

    #[test]
    fn norms() {
        let p = Point::vector(vec![3.0, -4.0]);
        assert_eq!(p.norm(), 5.0);
        assert_eq!(p.norm_l1(), 7.0);
    }
}

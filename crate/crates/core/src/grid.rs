//! Square spatial grids and matrix-valued fields on them.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mat::{self, C64, ONE, ZERO};

/// Relative tolerance used to certify compact support.
pub const SUPPORT_TOLERANCE: f64 = 1e-12;

/// Uniform `n x n` grid over `[-half_extent, half_extent]^2`, endpoints
/// included. Fields are supported in the disk of radius `radius`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub n: usize,
    pub half_extent: f64,
    pub radius: f64,
}

impl GridSpec {
    /// Grid covering `[-2R, 2R]^2`.
    pub fn new(n: usize, radius: f64) -> Result<Self> {
        Self::with_half_extent(n, 2.0 * radius, radius)
    }

    pub fn with_half_extent(n: usize, half_extent: f64, radius: f64) -> Result<Self> {
        let g = Self {
            n,
            half_extent,
            radius,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 16 || !self.n.is_power_of_two() {
            return Err(Error::InvalidGrid(format!(
                "n = {} must be a power of two and at least 16",
                self.n
            )));
        }
        if !(self.radius.is_finite() && self.radius > 0.0) {
            return Err(Error::InvalidGrid(format!(
                "radius {} must be positive",
                self.radius
            )));
        }
        if !(self.half_extent.is_finite() && self.half_extent > self.radius) {
            return Err(Error::InvalidGrid(format!(
                "half_extent {} must exceed the support radius {}",
                self.half_extent, self.radius
            )));
        }
        Ok(())
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.half_extent / (self.n - 1) as f64
    }

    pub fn coord(&self, i: usize) -> f64 {
        -self.half_extent + i as f64 * self.spacing()
    }

    pub fn len(&self) -> usize {
        self.n * self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// `(x1, x2)` of node `idx`; rows run along `x2`, columns along `x1`.
    pub fn point(&self, idx: usize) -> (f64, f64) {
        (self.coord(idx % self.n), self.coord(idx / self.n))
    }

    /// Continuous index of coordinate `x` (0 at `-half_extent`).
    pub fn fractional_index(&self, x: f64) -> f64 {
        (x + self.half_extent) / self.spacing()
    }

    pub fn cell_area(&self) -> f64 {
        let h = self.spacing();
        h * h
    }
}

/// A matrix (`rows x cols`) per grid node, node-major, row-major inside.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixField {
    pub grid: GridSpec,
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<C64>,
}

impl MatrixField {
    pub fn zeros(grid: GridSpec, rows: usize, cols: usize) -> Self {
        Self {
            grid,
            rows,
            cols,
            values: vec![ZERO; grid.len() * rows * cols],
        }
    }

    pub fn identity(grid: GridSpec, m: usize) -> Self {
        let mut f = Self::zeros(grid, m, m);
        for node in f.values.chunks_mut(m * m) {
            mat::identity_into(node, m);
        }
        f
    }

    /// Builds a field from a per-node closure writing `rows * cols` entries.
    pub fn from_fn<F>(grid: GridSpec, rows: usize, cols: usize, mut f: F) -> Self
    where
        F: FnMut(f64, f64, &mut [C64]),
    {
        let mut out = Self::zeros(grid, rows, cols);
        let block = rows * cols;
        for (idx, node) in out.values.chunks_mut(block).enumerate() {
            let (x1, x2) = grid.point(idx);
            f(x1, x2, node);
        }
        out
    }

    pub fn block(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn node(&self, idx: usize) -> &[C64] {
        let b = self.block();
        &self.values[idx * b..(idx + 1) * b]
    }

    pub fn node_mut(&mut self, idx: usize) -> &mut [C64] {
        let b = self.block();
        &mut self.values[idx * b..(idx + 1) * b]
    }

    /// One matrix entry as a scalar grid image.
    pub fn entry(&self, i: usize, j: usize) -> Vec<C64> {
        let b = self.block();
        let off = i * self.cols + j;
        self.values.iter().skip(off).step_by(b).copied().collect()
    }

    pub fn set_entry(&mut self, i: usize, j: usize, data: &[C64]) {
        let b = self.block();
        let off = i * self.cols + j;
        for (slot, v) in self.values.iter_mut().skip(off).step_by(b).zip(data) {
            *slot = *v;
        }
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.grid == other.grid && self.rows == other.rows && self.cols == other.cols
    }

    fn ensure_same_shape(&self, other: &Self) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::Shape(format!(
                "{}x{} field vs {}x{} field",
                self.rows, self.cols, other.rows, other.cols
            )))
        }
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.ensure_same_shape(other)?;
        Ok(self.zip_map(other, |a, b| a + b))
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.ensure_same_shape(other)?;
        Ok(self.zip_map(other, |a, b| a - b))
    }

    fn zip_map(&self, other: &Self, f: impl Fn(C64, C64) -> C64) -> Self {
        Self {
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| f(*a, *b))
                .collect(),
            ..*self
        }
    }

    pub fn scale(&self, s: C64) -> Self {
        Self {
            values: self.values.iter().map(|v| v * s).collect(),
            ..*self
        }
    }

    /// `alpha * self + beta * other`.
    pub fn combine(&self, alpha: C64, other: &Self, beta: C64) -> Result<Self> {
        self.ensure_same_shape(other)?;
        Ok(self.zip_map(other, |a, b| alpha * a + beta * b))
    }

    /// Pointwise matrix product `self(x) * other(x)`.
    pub fn matmul(&self, other: &Self) -> Result<Self> {
        if self.grid != other.grid || self.cols != other.rows {
            return Err(Error::Shape(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Self::zeros(self.grid, self.rows, other.cols);
        let (r, k, c) = (self.rows, self.cols, other.cols);
        for idx in 0..self.grid.len() {
            mat::mul_into(
                &self.values[idx * r * k..(idx + 1) * r * k],
                &other.values[idx * k * c..(idx + 1) * k * c],
                &mut out.values[idx * r * c..(idx + 1) * r * c],
                r,
                k,
                c,
            );
        }
        Ok(out)
    }

    /// Pointwise inverse of a square field.
    pub fn inverse(&self) -> Result<Self> {
        if !self.is_square() {
            return Err(Error::Shape("inverse of a non-square field".into()));
        }
        let m = self.rows;
        let mut out = Self::zeros(self.grid, m, m);
        for idx in 0..self.grid.len() {
            mat::inverse_into(
                &self.values[idx * m * m..(idx + 1) * m * m],
                &mut out.values[idx * m * m..(idx + 1) * m * m],
                m,
            )
            .map_err(|_| Error::SingularAt {
                context: "inverting a matrix field",
                node: idx,
            })?;
        }
        Ok(out)
    }

    /// Minimum of `|det|` over the grid.
    pub fn min_abs_det(&self) -> f64 {
        let m = self.rows;
        self.values
            .chunks(m * m)
            .map(|b| mat::det(b, m).norm())
            .fold(f64::INFINITY, f64::min)
    }

    /// Largest entry modulus.
    pub fn max_norm(&self) -> f64 {
        mat::max_abs(&self.values)
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Discrete L2 norm (entries summed, times the cell area).
    pub fn l2_norm(&self) -> f64 {
        (self.values.iter().map(|v| v.norm_sqr()).sum::<f64>() * self.grid.cell_area()).sqrt()
    }

    /// `||self - other|| / ||other||` in the discrete L2 norm.
    pub fn relative_l2_error(&self, reference: &Self) -> f64 {
        let num: f64 = self
            .values
            .iter()
            .zip(&reference.values)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum();
        let den: f64 = reference.values.iter().map(|v| v.norm_sqr()).sum();
        (num / den.max(f64::MIN_POSITIVE)).sqrt()
    }

    /// Largest entry modulus over nodes with `|x| >= r`.
    pub fn max_outside(&self, r: f64) -> f64 {
        let b = self.block();
        self.values
            .chunks(b)
            .enumerate()
            .filter(|(idx, _)| {
                let (x1, x2) = self.grid.point(*idx);
                x1.hypot(x2) >= r
            })
            .map(|(_, blk)| mat::max_abs(blk))
            .fold(0.0, f64::max)
    }

    /// Certifies `supp f ⊂ B_R` up to `tolerance` relative to the max norm.
    pub fn check_support(&self, tolerance: f64) -> Result<()> {
        let outside = self.max_outside(self.grid.radius);
        let scale = self.max_norm().max(f64::MIN_POSITIVE);
        if outside > tolerance * scale {
            return Err(Error::NotCompactlySupported {
                max_outside: outside / scale,
                tolerance,
            });
        }
        Ok(())
    }

    /// Largest deviation from the identity over nodes with `|x| >= r`.
    pub fn max_identity_deviation_outside(&self, r: f64) -> f64 {
        let m = self.rows;
        let mut eye = vec![ZERO; m * m];
        mat::identity_into(&mut eye, m);
        self.values
            .chunks(m * m)
            .enumerate()
            .filter(|(idx, _)| {
                let (x1, x2) = self.grid.point(*idx);
                x1.hypot(x2) >= r
            })
            .map(|(_, blk)| {
                blk.iter()
                    .zip(&eye)
                    .map(|(a, b)| (a - b).norm())
                    .fold(0.0, f64::max)
            })
            .fold(0.0, f64::max)
    }

    /// `self - I` for square fields.
    pub fn minus_identity(&self) -> Self {
        let m = self.rows;
        let mut out = self.clone();
        for blk in out.values.chunks_mut(m * m) {
            for i in 0..m {
                blk[i * m + i] -= ONE;
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_validation() {
        assert!(GridSpec::new(64, 1.0).is_ok());
        assert!(GridSpec::new(48, 1.0).is_err());
        assert!(GridSpec::new(8, 1.0).is_err());
        assert!(GridSpec::with_half_extent(64, 1.0, 1.0).is_err());
        assert!(GridSpec::new(64, f64::NAN).is_err());
        let g = GridSpec::new(64, 1.0).unwrap();
        assert!((g.coord(0) + 2.0).abs() < 1e-15);
        assert!((g.coord(63) - 2.0).abs() < 1e-14);
        assert!((g.fractional_index(g.coord(17)) - 17.0).abs() < 1e-12);
    }

    #[test]
    fn node_layout_is_rows_along_x2() {
        let g = GridSpec::new(16, 1.0).unwrap();
        let (x1, x2) = g.point(16 * 3 + 5);
        assert_eq!(x1, g.coord(5));
        assert_eq!(x2, g.coord(3));
    }

    #[test]
    fn pointwise_inverse_and_product() {
        let g = GridSpec::new(16, 1.0).unwrap();
        let f = MatrixField::from_fn(g, 2, 2, |x1, x2, out| {
            out[0] = C64::new(2.0 + x1, 0.0);
            out[1] = C64::new(x2, 1.0);
            out[2] = C64::new(0.0, 0.5);
            out[3] = C64::new(3.0, -x1);
        });
        let p = f.matmul(&f.inverse().unwrap()).unwrap();
        let eye = MatrixField::identity(g, 2);
        assert!(p.sub(&eye).unwrap().max_norm() < 1e-13);
    }

    #[test]
    fn support_check_flags_leaks() {
        let g = GridSpec::new(32, 1.0).unwrap();
        let inside = MatrixField::from_fn(g, 1, 1, |x1, x2, out| {
            if x1.hypot(x2) < 0.9 {
                out[0] = ONE;
            }
        });
        assert!(inside.check_support(SUPPORT_TOLERANCE).is_ok());
        let leaky = MatrixField::from_fn(g, 1, 1, |_, _, out| out[0] = ONE);
        assert!(leaky.check_support(SUPPORT_TOLERANCE).is_err());
    }
}

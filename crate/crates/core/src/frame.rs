//! Rotated ray frames: samples on `(y1, y2)` lattices aligned with a
//! direction `θ(φ)`, and the boundary operators `Π±(e^{iφ})` acting on them.
//!
//! Frame data is stored `[y1][y2][entry]`, so that each `y1` row is a
//! contiguous line in `y2`.

use crate::cauchy_ops::{RieszProjector, Sign};
use crate::fft::fd_derivative_line;
use crate::gauge_field::{nu, theta, RayGeometry};
use crate::grid::{GridSpec, MatrixField};
use crate::mat::{C64, ZERO};
use crate::par;
use crate::spline::{SplineField, SplineRect};

#[derive(Debug, Clone, PartialEq)]
pub struct RotatedFrame {
    pub grid: GridSpec,
    pub phi: f64,
    pub theta: [f64; 2],
    pub nu: [f64; 2],
    /// `y1 = -H + j h1`, `j < n1`.
    pub n1: usize,
    pub h1: f64,
    /// Central `y2 = -H + i h2`, `i < n2`.
    pub n2: usize,
    pub h2: f64,
    /// Extra `y2` nodes on each side of the central range.
    pub ext: usize,
}

impl RotatedFrame {
    /// Frame over `[-H, H]²` with `y1` refined by `oversample`; the extended
    /// `y2` range reaches past the grid corners.
    pub fn new(grid: GridSpec, phi: f64, oversample: usize) -> Self {
        let q = oversample.max(1);
        let h = grid.spacing();
        let ext = (((2f64.sqrt() - 1.0) * grid.half_extent) / h).ceil() as usize + 12;
        Self {
            grid,
            phi,
            theta: theta(phi),
            nu: nu(phi),
            n1: q * (grid.n - 1) + 1,
            h1: h / q as f64,
            n2: grid.n,
            h2: h,
            ext,
        }
    }

    pub fn y1(&self, j: usize) -> f64 {
        -self.grid.half_extent + j as f64 * self.h1
    }

    /// `y2` of central index `i` (negative indices reach the extension).
    pub fn y2(&self, i: isize) -> f64 {
        -self.grid.half_extent + i as f64 * self.h2
    }

    pub fn n2_ext(&self) -> usize {
        self.n2 + 2 * self.ext
    }

    pub fn point(&self, y1: f64, y2: f64) -> (f64, f64) {
        (
            y1 * self.theta[0] + y2 * self.nu[0],
            y1 * self.theta[1] + y2 * self.nu[1],
        )
    }

    /// Samples a spline on the central frame.
    pub fn sample(&self, spline: &SplineField) -> Vec<C64> {
        let b = spline.block();
        let rows: Vec<Vec<C64>> = par::map(self.n1, |j| {
            let y1 = self.y1(j);
            let mut row = vec![ZERO; self.n2 * b];
            for i in 0..self.n2 {
                let (x1, x2) = self.point(y1, self.y2(i as isize));
                spline.eval(x1, x2, &mut row[i * b..(i + 1) * b]);
            }
            row
        });
        rows.concat()
    }

    /// Spline through frame data; `extended` selects the layout.
    pub fn spline(&self, values: &[C64], block: usize, extended: bool) -> SplineRect {
        let (n_fast, start) = if extended {
            (self.n2_ext(), self.y2(-(self.ext as isize)))
        } else {
            (self.n2, self.y2(0))
        };
        SplineRect::new(
            n_fast,
            self.n1,
            [start, -self.grid.half_extent],
            [self.h2, self.h1],
            block,
            values.to_vec(),
        )
    }

    /// Resamples frame data onto the spatial grid. Values are clamped
    /// beyond the frame, which is exact for data constant in `y1` there.
    pub fn to_grid(&self, values: &[C64], rows: usize, cols: usize, extended: bool) -> MatrixField {
        let spl = self.spline(values, rows * cols, extended);
        let mut out = MatrixField::zeros(self.grid, rows, cols);
        for idx in 0..self.grid.len() {
            let (x1, x2) = self.grid.point(idx);
            let (y1, y2) = RayGeometry::coordinates(self.phi, x1, x2);
            spl.eval_clamped(y2, y1, out.node_mut(idx));
        }
        out
    }

    /// `∂/∂y1` of frame data by finite differences along `y1`.
    pub fn d_dy1(&self, values: &[C64], block: usize, width: usize) -> Vec<C64> {
        let stride = width * block;
        let mut out = vec![ZERO; values.len()];
        for col in 0..stride {
            let d = fd_derivative_line(values, col, stride, self.n1, self.h1);
            for (j, v) in d.into_iter().enumerate() {
                out[j * stride + col] = v;
            }
        }
        out
    }
}

/// Fourth-order cumulative integral along `y1` (stride `stride`):
/// `out[j] = ∫_{y1_0}^{y1_j} g`, with `g = 0` beyond the ends.
pub(crate) fn cumulative(g: &[C64], n1: usize, stride: usize, h: f64, out: &mut [C64]) {
    let w = h / 24.0;
    for col in 0..stride {
        let at = |k: isize| -> C64 {
            if k < 0 || k as usize >= n1 {
                ZERO
            } else {
                g[k as usize * stride + col]
            }
        };
        let mut acc = ZERO;
        out[col] = ZERO;
        for k in 0..n1 - 1 {
            let ki = k as isize;
            acc += (at(ki) * 13.0 + at(ki + 1) * 13.0 - at(ki - 1) - at(ki + 2)) * w;
            out[(k + 1) * stride + col] = acc;
        }
    }
}

/// `Π±(e^{iφ})` on frame data.
#[derive(Debug, Clone)]
pub struct BoundaryOperator {
    pub frame: RotatedFrame,
    riesz: RieszProjector,
}

impl BoundaryOperator {
    /// With `extended`, results cover the extended `y2` range.
    pub fn new(frame: RotatedFrame, extended: bool) -> Self {
        let ext = if extended { frame.ext } else { 0 };
        let riesz = RieszProjector::new(frame.n2, ext);
        Self { frame, riesz }
    }

    pub fn width(&self) -> usize {
        self.riesz.n_out()
    }

    /// `Π⁺` and `Π⁻` in `y2` of every `y1` row.
    pub fn project_rows(&self, values: &[C64], block: usize) -> (Vec<C64>, Vec<C64>) {
        let n2 = self.frame.n2;
        let w = self.width();
        let rows: Vec<(Vec<C64>, Vec<C64>)> = par::map(self.frame.n1, |j| {
            let src = &values[j * n2 * block..(j + 1) * n2 * block];
            let mut plus = vec![ZERO; w * block];
            let mut minus = vec![ZERO; w * block];
            if src.iter().all(|v| *v == ZERO) {
                return (plus, minus);
            }
            let mut line = vec![ZERO; n2];
            let mut p = vec![ZERO; w];
            let mut m = vec![ZERO; w];
            let mut scratch = Vec::new();
            for e in 0..block {
                for (k, l) in line.iter_mut().enumerate() {
                    *l = src[k * block + e];
                }
                self.riesz.project(&line, &mut p, &mut m, &mut scratch);
                for k in 0..w {
                    plus[k * block + e] = p[k];
                    minus[k * block + e] = m[k];
                }
            }
            (plus, minus)
        });
        let mut plus = Vec::with_capacity(self.frame.n1 * w * block);
        let mut minus = Vec::with_capacity(self.frame.n1 * w * block);
        for (p, m) in rows {
            plus.extend_from_slice(&p);
            minus.extend_from_slice(&m);
        }
        (plus, minus)
    }

    /// `Π₊f = ∫_{-∞}^{y1} Π⁺f − ∫_{y1}^{∞} Π⁻f` (`Plus`) or
    /// `Π₋f = ∫_{-∞}^{y1} Π⁻f − ∫_{y1}^{∞} Π⁺f` (`Minus`).
    pub fn apply(&self, values: &[C64], block: usize, sign: Sign) -> Vec<C64> {
        let (plus, minus) = self.project_rows(values, block);
        let (fwd, bwd) = match sign {
            Sign::Plus => (plus, minus),
            Sign::Minus => (minus, plus),
        };
        let n1 = self.frame.n1;
        let stride = self.width() * block;
        let mut cf = vec![ZERO; fwd.len()];
        let mut cb = vec![ZERO; bwd.len()];
        cumulative(&fwd, n1, stride, self.frame.h1, &mut cf);
        cumulative(&bwd, n1, stride, self.frame.h1, &mut cb);
        let last = (n1 - 1) * stride;
        let mut out = cf;
        for j in 0..n1 {
            for col in 0..stride {
                let k = j * stride + col;
                out[k] -= cb[last + col] - cb[k];
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phantom::bump;

    #[test]
    fn cumulative_is_fourth_order() {
        let errs: Vec<f64> = [64usize, 128]
            .iter()
            .map(|&n| {
                let h = 2.0 / (n - 1) as f64;
                let g: Vec<C64> = (0..n)
                    .map(|k| {
                        let y = -1.0 + k as f64 * h;
                        C64::new((-(y * y) / 0.05).exp(), 0.0)
                    })
                    .collect();
                let mut out = vec![ZERO; n];
                cumulative(&g, n, 1, h, &mut out);
                let total = (0.05 * std::f64::consts::PI).sqrt();
                (out[n - 1].re - total).abs()
            })
            .collect();
        assert!(errs[1] < 1e-7, "{errs:?}");
    }

    #[test]
    fn frame_round_trip() {
        let g = GridSpec::new(64, 1.0).unwrap();
        let f = MatrixField::from_fn(g, 1, 1, |x1, x2, o| {
            o[0] = C64::new(bump(x1, x2, [0.2, 0.1], 0.3, 1.0), 0.0)
        });
        let fr = RotatedFrame::new(g, 0.6, 1);
        let vals = fr.sample(&SplineField::new(&f));
        let back = fr.to_grid(&vals, 1, 1, false);
        assert!(back.relative_l2_error(&f) < 1e-3);
    }
}

//! Cubic B-spline interpolation of matrix-valued samples.
//!
//! The interpolant is C² (unlike cubic convolution), which keeps the RK4
//! transport integrator at its nominal order when it samples fields off the
//! grid. Coefficients come from the usual causal/anti-causal recursive
//! prefilter with mirror boundaries.

use crate::grid::{GridSpec, MatrixField};
use crate::mat::{C64, ZERO};

const POLE: f64 = -0.267_949_192_431_122_7; // sqrt(3) - 2

/// In-place prefilter of `n` samples spaced `stride` apart.
fn prefilter_line(data: &mut [C64], start: usize, stride: usize, n: usize) {
    if n < 2 {
        return;
    }
    let z = POLE;
    let at = |k: usize| start + k * stride;
    for k in 0..n {
        data[at(k)] *= 6.0;
    }
    // causal initialization, mirror boundary, truncated sum
    let horizon = n.min(40);
    let mut sum = data[at(0)];
    let mut zk = z;
    for k in 1..horizon {
        sum += data[at(k)] * zk;
        zk *= z;
    }
    data[at(0)] = sum;
    for k in 1..n {
        let prev = data[at(k - 1)];
        data[at(k)] += prev * z;
    }
    let last = data[at(n - 1)];
    let before = data[at(n - 2)];
    data[at(n - 1)] = (last + before * z) * (z / (z * z - 1.0));
    for k in (0..n - 1).rev() {
        let next = data[at(k + 1)];
        data[at(k)] = (next - data[at(k)]) * z;
    }
}

#[inline]
fn weights(t: f64) -> [f64; 4] {
    let t2 = t * t;
    let t3 = t2 * t;
    let u = 1.0 - t;
    [
        u * u * u / 6.0,
        (3.0 * t3 - 6.0 * t2 + 4.0) / 6.0,
        (-3.0 * t3 + 3.0 * t2 + 3.0 * t + 1.0) / 6.0,
        t3 / 6.0,
    ]
}

#[inline]
fn mirror(k: isize, n: usize) -> usize {
    let n = n as isize;
    if n == 1 {
        return 0;
    }
    let period = 2 * (n - 1);
    let mut k = k.rem_euclid(period);
    if k >= n {
        k = period - k;
    }
    k as usize
}

/// Spline coefficients of a matrix field on a square grid.
#[derive(Debug, Clone)]
pub struct SplineField {
    pub grid: GridSpec,
    pub rows: usize,
    pub cols: usize,
    coeffs: Vec<C64>,
}

impl SplineField {
    pub fn new(field: &MatrixField) -> Self {
        let n = field.grid.n;
        let b = field.block();
        let mut coeffs = field.values.clone();
        for e in 0..b {
            for r in 0..n {
                prefilter_line(&mut coeffs, r * n * b + e, b, n);
            }
            for c in 0..n {
                prefilter_line(&mut coeffs, c * b + e, n * b, n);
            }
        }
        Self {
            grid: field.grid,
            rows: field.rows,
            cols: field.cols,
            coeffs,
        }
    }

    /// Zero spline of the given shape.
    pub fn zeros(grid: GridSpec, rows: usize, cols: usize) -> Self {
        Self {
            grid,
            rows,
            cols,
            coeffs: vec![ZERO; grid.len() * rows * cols],
        }
    }

    /// `self += s * other` on coefficients (splines are linear in the data).
    pub fn add_scaled(&mut self, other: &SplineField, s: C64) {
        for (a, b) in self.coeffs.iter_mut().zip(&other.coeffs) {
            *a += b * s;
        }
    }

    pub fn block(&self) -> usize {
        self.rows * self.cols
    }

    /// Evaluates at physical coordinates; zero outside the grid square.
    pub fn eval(&self, x1: f64, x2: f64, out: &mut [C64]) {
        let b = self.block();
        let out = &mut out[..b];
        out.fill(ZERO);
        let n = self.grid.n;
        let u = self.grid.fractional_index(x1);
        let v = self.grid.fractional_index(x2);
        let hi = (n - 1) as f64;
        if !(u >= 0.0 && u <= hi && v >= 0.0 && v <= hi) {
            return;
        }
        let iu = (u.floor() as isize).min(n as isize - 2);
        let iv = (v.floor() as isize).min(n as isize - 2);
        let wu = weights(u - iu as f64);
        let wv = weights(v - iv as f64);
        for (a, wa) in wv.iter().enumerate() {
            let row = mirror(iv - 1 + a as isize, n);
            for (c, wc) in wu.iter().enumerate() {
                let col = mirror(iu - 1 + c as isize, n);
                let w = wa * wc;
                let base = (row * n + col) * b;
                for (o, coef) in out.iter_mut().zip(&self.coeffs[base..base + b]) {
                    *o += coef * w;
                }
            }
        }
    }

    /// Exact integral of the interpolant along the segment `p0 -> p1`
    /// (arc length measure). The segment is split at grid lines, where the
    /// interpolant restricted to the line is a polynomial of degree 6, and
    /// each piece is integrated by 4-point Gauss-Legendre.
    pub fn integrate_segment(&self, p0: [f64; 2], p1: [f64; 2], out: &mut [C64]) {
        let b = self.block();
        let out = &mut out[..b];
        out.fill(ZERO);
        let d = [p1[0] - p0[0], p1[1] - p0[1]];
        let len = d[0].hypot(d[1]);
        if len == 0.0 {
            return;
        }
        let mut cuts = vec![0.0, 1.0];
        for axis in 0..2 {
            if d[axis] == 0.0 {
                continue;
            }
            let a = self.grid.fractional_index(p0[axis]);
            let c = self.grid.fractional_index(p1[axis]);
            let (lo, hi) = if a < c { (a, c) } else { (c, a) };
            let mut k = lo.ceil();
            while k <= hi {
                let tau = (k - a) / (c - a);
                if tau > 0.0 && tau < 1.0 {
                    cuts.push(tau);
                }
                k += 1.0;
            }
        }
        cuts.sort_by(|x, y| x.partial_cmp(y).unwrap());
        let mut val = vec![ZERO; b];
        for w in cuts.windows(2) {
            let (ta, tb) = (w[0], w[1]);
            let half = 0.5 * (tb - ta);
            if half <= 0.0 {
                continue;
            }
            let mid = 0.5 * (ta + tb);
            for (node, wt) in GAUSS4 {
                let tau = mid + half * node;
                self.eval(p0[0] + tau * d[0], p0[1] + tau * d[1], &mut val);
                let s = wt * half * len;
                for (o, v) in out.iter_mut().zip(&val) {
                    *o += v * s;
                }
            }
        }
    }
}

const GAUSS4: [(f64, f64); 4] = [
    (-0.861_136_311_594_052_6, 0.347_854_845_137_453_9),
    (-0.339_981_043_584_856_3, 0.652_145_154_862_546_1),
    (0.339_981_043_584_856_3, 0.652_145_154_862_546_1),
    (0.861_136_311_594_052_6, 0.347_854_845_137_453_9),
];

/// Spline coefficients on a rectangular lattice, `n1` points along the fast
/// axis and `n2` along the slow one. Evaluation clamps to the lattice, which
/// is exact for data that is constant beyond the edges.
#[derive(Debug, Clone)]
pub struct SplineRect {
    pub n1: usize,
    pub n2: usize,
    pub start: [f64; 2],
    pub step: [f64; 2],
    pub block: usize,
    coeffs: Vec<C64>,
}

impl SplineRect {
    /// `values[(i2 * n1 + i1) * block + e]`.
    pub fn new(
        n1: usize,
        n2: usize,
        start: [f64; 2],
        step: [f64; 2],
        block: usize,
        values: Vec<C64>,
    ) -> Self {
        let mut coeffs = values;
        for e in 0..block {
            for r in 0..n2 {
                prefilter_line(&mut coeffs, r * n1 * block + e, block, n1);
            }
            for c in 0..n1 {
                prefilter_line(&mut coeffs, c * block + e, n1 * block, n2);
            }
        }
        Self {
            n1,
            n2,
            start,
            step,
            block,
            coeffs,
        }
    }

    pub fn eval_clamped(&self, y1: f64, y2: f64, out: &mut [C64]) {
        let b = self.block;
        let out = &mut out[..b];
        out.fill(ZERO);
        let u = ((y1 - self.start[0]) / self.step[0]).clamp(0.0, (self.n1 - 1) as f64);
        let v = ((y2 - self.start[1]) / self.step[1]).clamp(0.0, (self.n2 - 1) as f64);
        let iu = (u.floor() as isize).min(self.n1 as isize - 2);
        let iv = (v.floor() as isize).min(self.n2 as isize - 2);
        let wu = weights(u - iu as f64);
        let wv = weights(v - iv as f64);
        for (a, wa) in wv.iter().enumerate() {
            let row = mirror(iv - 1 + a as isize, self.n2);
            for (c, wc) in wu.iter().enumerate() {
                let col = mirror(iu - 1 + c as isize, self.n1);
                let w = wa * wc;
                let base = (row * self.n1 + col) * b;
                for (o, coef) in out.iter_mut().zip(&self.coeffs[base..base + b]) {
                    *o += coef * w;
                }
            }
        }
    }
}

/// Spline coefficients of matrix samples on a uniform line.
#[derive(Debug, Clone)]
pub struct SplineLine {
    pub start: f64,
    pub step: f64,
    pub len: usize,
    pub block: usize,
    coeffs: Vec<C64>,
}

impl SplineLine {
    /// `values` holds `len` blocks of `block` entries.
    pub fn new(start: f64, step: f64, block: usize, values: &[C64]) -> Self {
        let len = values.len() / block;
        let mut coeffs = values.to_vec();
        for e in 0..block {
            prefilter_line(&mut coeffs, e, block, len);
        }
        Self {
            start,
            step,
            len,
            block,
            coeffs,
        }
    }

    /// Evaluates at `y`, clamping to the end values outside the line.
    pub fn eval_clamped(&self, y: f64, out: &mut [C64]) {
        let out = &mut out[..self.block];
        let hi = (self.len - 1) as f64;
        let u = ((y - self.start) / self.step).clamp(0.0, hi);
        out.fill(ZERO);
        let iu = (u.floor() as isize).min(self.len as isize - 2);
        let w = weights(u - iu as f64);
        for (c, wc) in w.iter().enumerate() {
            let k = mirror(iu - 1 + c as isize, self.len);
            let base = k * self.block;
            for (o, coef) in out.iter_mut().zip(&self.coeffs[base..base + self.block]) {
                *o += coef * *wc;
            }
        }
    }
}

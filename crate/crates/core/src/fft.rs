//! FFT plumbing: square 2-D transforms and grid derivatives.

use std::sync::Arc;

use rustfft::{Fft, FftPlanner};

use crate::mat::{C64, ZERO};

/// Forward/inverse plans for an `n x n` transform (row-major data).
#[derive(Clone)]
pub struct Fft2 {
    n: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl Fft2 {
    pub fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            n,
            fwd: planner.plan_fft_forward(n),
            inv: planner.plan_fft_inverse(n),
        }
    }

    pub fn size(&self) -> usize {
        self.n
    }

    fn transform(&self, data: &mut [C64], plan: &Arc<dyn Fft<f64>>) {
        let n = self.n;
        plan.process(data);
        let mut col = vec![ZERO; n];
        for c in 0..n {
            for r in 0..n {
                col[r] = data[r * n + c];
            }
            plan.process(&mut col);
            for r in 0..n {
                data[r * n + c] = col[r];
            }
        }
    }

    pub fn forward(&self, data: &mut [C64]) {
        self.transform(data, &self.fwd);
    }

    /// Normalized inverse.
    pub fn inverse(&self, data: &mut [C64]) {
        self.transform(data, &self.inv);
        let s = 1.0 / (self.n * self.n) as f64;
        for v in data.iter_mut() {
            *v *= s;
        }
    }
}

/// Angular wavenumber of FFT bin `k` for `n` samples spaced `h`.
pub fn wavenumber(k: usize, n: usize, h: f64) -> f64 {
    let kk = if k <= n / 2 {
        k as f64
    } else {
        k as f64 - n as f64
    };
    2.0 * std::f64::consts::PI * kk / (n as f64 * h)
}

/// Spectral `(d/dx1, d/dx2)` of a periodic `n x n` image (rows along x2).
/// The Nyquist mode is dropped.
pub fn spectral_gradient(img: &[C64], n: usize, h: f64, plan: &Fft2) -> (Vec<C64>, Vec<C64>) {
    let mut spec = img.to_vec();
    plan.forward(&mut spec);
    let mut d1 = spec.clone();
    let mut d2 = spec;
    for r in 0..n {
        let k2 = if r == n / 2 { 0.0 } else { wavenumber(r, n, h) };
        for c in 0..n {
            let k1 = if c == n / 2 { 0.0 } else { wavenumber(c, n, h) };
            d1[r * n + c] *= C64::new(0.0, k1);
            d2[r * n + c] *= C64::new(0.0, k2);
        }
    }
    plan.inverse(&mut d1);
    plan.inverse(&mut d2);
    (d1, d2)
}

const CENTRAL8: [f64; 4] = [4.0 / 5.0, -1.0 / 5.0, 4.0 / 105.0, -1.0 / 280.0];

/// Weights of the derivative at node `k` of the Lagrange interpolant
/// through nodes `0..m`.
fn lagrange_derivative_weights(k: usize, m: usize) -> Vec<f64> {
    let x = |i: usize| i as f64;
    (0..m)
        .map(|j| {
            if j == k {
                (0..m)
                    .filter(|&i| i != k)
                    .map(|i| 1.0 / (x(k) - x(i)))
                    .sum()
            } else {
                let num: f64 = (0..m)
                    .filter(|&i| i != j && i != k)
                    .map(|i| x(k) - x(i))
                    .product();
                let den: f64 = (0..m).filter(|&i| i != j).map(|i| x(j) - x(i)).product();
                num / den
            }
        })
        .collect()
}

const EDGE_NODES: usize = 9;

/// First derivative of `len` samples (stride `stride`) by central
/// differences, 8th order, with one-sided 9-point stencils near the ends.
fn fd_line(src: &[C64], dst: &mut [C64], start: usize, stride: usize, len: usize, h: f64) {
    let at = |k: usize| src[start + k * stride];
    if len < EDGE_NODES {
        for k in 0..len {
            let v = if len < 2 {
                ZERO
            } else if k == 0 {
                at(1) - at(0)
            } else if k == len - 1 {
                at(k) - at(k - 1)
            } else {
                (at(k + 1) - at(k - 1)) * 0.5
            };
            dst[start + k * stride] = v / h;
        }
        return;
    }
    let edge: Vec<Vec<f64>> = (0..4)
        .map(|k| lagrange_derivative_weights(k, EDGE_NODES))
        .collect();
    for k in 0..len {
        let room = k.min(len - 1 - k);
        let v = if room >= 4 {
            stencil(&at, k, &CENTRAL8)
        } else if k < 4 {
            edge[k].iter().enumerate().map(|(j, w)| at(j) * *w).sum()
        } else {
            let r = len - 1 - k;
            edge[r]
                .iter()
                .enumerate()
                .map(|(j, w)| at(len - 1 - j) * -*w)
                .sum()
        };
        dst[start + k * stride] = v / h;
    }
}

#[inline]
fn stencil(at: &impl Fn(usize) -> C64, k: usize, coef: &[f64]) -> C64 {
    let mut acc = ZERO;
    for (j, c) in coef.iter().enumerate() {
        acc += (at(k + j + 1) - at(k - j - 1)) * *c;
    }
    acc
}

/// How grid derivatives are taken.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DerivativeScheme {
    /// FFT multiplier on the periodic extension.
    Spectral,
    /// Central differences, eighth order in the interior.
    #[default]
    FiniteDifference,
}

/// `(d/dx1, d/dx2)` of an `n x n` image with the chosen scheme.
pub fn gradient(img: &[C64], n: usize, h: f64, scheme: DerivativeScheme) -> (Vec<C64>, Vec<C64>) {
    match scheme {
        DerivativeScheme::Spectral => spectral_gradient(img, n, h, &Fft2::new(n)),
        DerivativeScheme::FiniteDifference => fd_gradient(img, n, h),
    }
}

/// Finite-difference `(d/dx1, d/dx2)` of an `n x n` image.
pub fn fd_gradient(img: &[C64], n: usize, h: f64) -> (Vec<C64>, Vec<C64>) {
    let mut d1 = vec![ZERO; n * n];
    let mut d2 = vec![ZERO; n * n];
    for r in 0..n {
        fd_line(img, &mut d1, r * n, 1, n, h);
    }
    for c in 0..n {
        fd_line(img, &mut d2, c, n, n, h);
    }
    (d1, d2)
}

/// Finite-difference derivative of a strided line (used along ray frames).
pub fn fd_derivative_line(
    src: &[C64],
    start: usize,
    stride: usize,
    len: usize,
    h: f64,
) -> Vec<C64> {
    let mut dst = vec![ZERO; src.len()];
    fd_line(src, &mut dst, start, stride, len, h);
    (0..len).map(|k| dst[start + k * stride]).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fft2_round_trip() {
        let n = 16;
        let data: Vec<C64> = (0..n * n)
            .map(|k| C64::new((k as f64).sin(), (k as f64 * 0.3).cos()))
            .collect();
        let plan = Fft2::new(n);
        let mut work = data.clone();
        plan.forward(&mut work);
        plan.inverse(&mut work);
        for (a, b) in work.iter().zip(&data) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn derivatives_of_gaussian() {
        let n = 64;
        let h = 4.0 / (n - 1) as f64;
        let x = |i: usize| -2.0 + i as f64 * h;
        let f = |a: f64, b: f64| (-(a * a + 2.0 * b * b) / 0.2).exp();
        let img: Vec<C64> = (0..n * n)
            .map(|k| C64::new(f(x(k % n), x(k / n)), 0.0))
            .collect();
        let (s1, s2) = spectral_gradient(&img, n, h, &Fft2::new(n));
        let (f1, f2) = fd_gradient(&img, n, h);
        let mut worst_s = 0.0f64;
        let mut worst_f = 0.0f64;
        for k in 0..n * n {
            let (a, b) = (x(k % n), x(k / n));
            let e1 = -2.0 * a / 0.2 * f(a, b);
            let e2 = -4.0 * b / 0.2 * f(a, b);
            worst_s = worst_s
                .max((s1[k].re - e1).abs())
                .max((s2[k].re - e2).abs());
            worst_f = worst_f
                .max((f1[k].re - e1).abs())
                .max((f2[k].re - e2).abs());
        }
        assert!(worst_s < 1e-6, "{worst_s}");
        assert!(worst_f < 1e-3, "{worst_f}");
    }
}

//! Singular integral operators: the solid Cauchy transform `S`, the inverse
//! `Π(t)` of `ζ(t)·∂`, the line projections `Π±` and the boundary
//! operators `Π±(e^{iφ})`, plus `∂̄` and `∂`.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft::{fd_gradient, gradient, DerivativeScheme, Fft2};
use crate::frame::{BoundaryOperator, RotatedFrame};
use crate::grid::{GridSpec, MatrixField};
use crate::mat::{C64, I, ZERO};
use crate::spline::SplineField;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    pub fn name(self) -> &'static str {
        match self {
            Sign::Plus => "plus",
            Sign::Minus => "minus",
        }
    }

    pub fn opposite(self) -> Sign {
        match self {
            Sign::Plus => Sign::Minus,
            Sign::Minus => Sign::Plus,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Region {
    Interior,
    BoundaryPlus,
    BoundaryMinus,
    Exterior,
    Infinity,
}

/// A point of the spectral plane with its complexified direction
/// `ζ(t) = ((t + 1/t)/2, (i/2)(t - 1/t))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralParam {
    /// `None` stands for `t = ∞`.
    pub t: Option<C64>,
    pub region: Region,
}

impl SpectralParam {
    /// A finite `t` off the unit circle.
    pub fn new(t: C64) -> Result<Self> {
        let r = t.norm();
        if !t.is_finite() || r == 0.0 {
            return Err(Error::InvalidArgument(
                "t must be finite and nonzero".into(),
            ));
        }
        if (r - 1.0).abs() < 1e-12 {
            return Err(Error::OnUnitCircle);
        }
        Ok(Self {
            t: Some(t),
            region: if r < 1.0 {
                Region::Interior
            } else {
                Region::Exterior
            },
        })
    }

    pub fn infinity() -> Self {
        Self {
            t: None,
            region: Region::Infinity,
        }
    }

    /// `t = e^{iφ}` approached from outside (`Plus`) or inside (`Minus`).
    pub fn boundary(phi: f64, sign: Sign) -> Self {
        Self {
            t: Some(C64::from_polar(1.0, phi)),
            region: match sign {
                Sign::Plus => Region::BoundaryPlus,
                Sign::Minus => Region::BoundaryMinus,
            },
        }
    }

    pub fn zeta(&self) -> Option<[C64; 2]> {
        self.t.map(zeta)
    }
}

pub fn zeta(t: C64) -> [C64; 2] {
    let inv = t.inv();
    [(t + inv) * 0.5, I * 0.5 * (t - inv)]
}

fn entrywise(h: &MatrixField, mut op: impl FnMut(&[C64]) -> Vec<C64>) -> MatrixField {
    let mut out = MatrixField::zeros(h.grid, h.rows, h.cols);
    for i in 0..h.rows {
        for j in 0..h.cols {
            out.set_entry(i, j, &op(&h.entry(i, j)));
        }
    }
    out
}

/// `∂/∂z̄ = (∂1 + i∂2)/2`.
pub fn dbar(h: &MatrixField, scheme: DerivativeScheme) -> MatrixField {
    let n = h.grid.n;
    let s = h.grid.spacing();
    entrywise(h, |e| {
        let (d1, d2) = gradient(e, n, s, scheme);
        d1.iter().zip(&d2).map(|(a, b)| (a + I * b) * 0.5).collect()
    })
}

/// `∂/∂z = (∂1 - i∂2)/2`.
pub fn d_z(h: &MatrixField, scheme: DerivativeScheme) -> MatrixField {
    let n = h.grid.n;
    let s = h.grid.spacing();
    entrywise(h, |e| {
        let (d1, d2) = gradient(e, n, s, scheme);
        d1.iter().zip(&d2).map(|(a, b)| (a - I * b) * 0.5).collect()
    })
}

/// `ζ·∂ = ζ1 ∂1 + ζ2 ∂2` with finite differences.
pub fn directional_derivative(h: &MatrixField, zeta: [C64; 2]) -> MatrixField {
    let n = h.grid.n;
    let s = h.grid.spacing();
    entrywise(h, |e| {
        let (d1, d2) = fd_gradient(e, n, s);
        d1.iter()
            .zip(&d2)
            .map(|(a, b)| zeta[0] * a + zeta[1] * b)
            .collect()
    })
}

/// Correction constants `Z_i` of the punctured lattice rule for a kernel
/// homogeneous of degree -1: the rule `h² Σ' E(x - x_j) f(x_j)` equals the
/// integral minus `h² Σ_i Z_i ∂_i f(x)` up to `O(h⁴)`.
pub fn lattice_constants(kernel: &dyn Fn(f64, f64) -> C64) -> [C64; 2] {
    let at = |m: f64| -> [C64; 2] {
        let k = (6.0 * m).ceil() as i64;
        let mut s = [ZERO; 2];
        for j2 in -k..=k {
            for j1 in -k..=k {
                if j1 == 0 && j2 == 0 {
                    continue;
                }
                let (a, b) = (j1 as f64, j2 as f64);
                let w = (-(a * a + b * b) / (m * m)).exp();
                if w < 1e-300 {
                    continue;
                }
                let e = kernel(a, b) * w;
                s[0] += e * a;
                s[1] += e * b;
            }
        }
        let q = 4096;
        let mut ang = [ZERO; 2];
        for i in 0..q {
            let al = 2.0 * PI * i as f64 / q as f64;
            let e = kernel(al.cos(), al.sin());
            ang[0] += e * al.cos();
            ang[1] += e * al.sin();
        }
        let scale = 0.5 * m * m * 2.0 * PI / q as f64;
        [s[0] - ang[0] * scale, s[1] - ang[1] * scale]
    };
    let (z8, z16, z32) = (at(8.0), at(16.0), at(32.0));
    let mut out = [ZERO; 2];
    for i in 0..2 {
        let r1 = (z16[i] * 4.0 - z8[i]) / 3.0;
        let r2 = (z32[i] * 4.0 - z16[i]) / 3.0;
        out[i] = (r2 * 16.0 - r1) / 15.0;
    }
    out
}

/// Aperiodic convolution with a kernel homogeneous of degree -1, by FFT on a
/// `2n x 2n` zero-padded grid, with the punctured centre cell and the
/// lattice correction.
#[derive(Clone)]
pub struct PlaneConvolver {
    grid: GridSpec,
    fft: Fft2,
    kernel_hat: Vec<C64>,
    lattice: [C64; 2],
}

impl PlaneConvolver {
    /// `kernel(u1, u2)` in physical units.
    pub fn new(grid: GridSpec, kernel: &dyn Fn(f64, f64) -> C64) -> Self {
        let n = grid.n;
        let nn = 2 * n;
        let h = grid.spacing();
        let mut table = vec![ZERO; nn * nn];
        for r in 0..nn {
            let k2 = if r < n {
                r as i64
            } else {
                r as i64 - nn as i64
            };
            if k2.unsigned_abs() as usize >= n {
                continue;
            }
            for c in 0..nn {
                let k1 = if c < n {
                    c as i64
                } else {
                    c as i64 - nn as i64
                };
                if k1.unsigned_abs() as usize >= n || (k1 == 0 && k2 == 0) {
                    continue;
                }
                table[r * nn + c] = kernel(k1 as f64 * h, k2 as f64 * h) * (h * h);
            }
        }
        let fft = Fft2::new(nn);
        fft.forward(&mut table);
        let lattice = lattice_constants(&|a, b| kernel(a, b));
        Self {
            grid,
            fft,
            kernel_hat: table,
            lattice,
        }
    }

    pub fn apply_scalar(&self, f: &[C64]) -> Vec<C64> {
        let n = self.grid.n;
        let nn = 2 * n;
        let h = self.grid.spacing();
        let mut buf = vec![ZERO; nn * nn];
        for r in 0..n {
            buf[r * nn..r * nn + n].copy_from_slice(&f[r * n..(r + 1) * n]);
        }
        self.fft.forward(&mut buf);
        for (b, k) in buf.iter_mut().zip(&self.kernel_hat) {
            *b *= k;
        }
        self.fft.inverse(&mut buf);
        let (d1, d2) = fd_gradient(f, n, h);
        let (z1, z2) = (self.lattice[0] * (h * h), self.lattice[1] * (h * h));
        let mut out = vec![ZERO; n * n];
        for r in 0..n {
            for c in 0..n {
                let k = r * n + c;
                out[k] = buf[r * nn + c] + z1 * d1[k] + z2 * d2[k];
            }
        }
        out
    }

    pub fn apply(&self, h: &MatrixField) -> MatrixField {
        entrywise(h, |e| self.apply_scalar(e))
    }
}

/// Kernel of the solid Cauchy transform, `1/(π z)`.
pub fn cauchy_kernel(u1: f64, u2: f64) -> C64 {
    C64::new(u1, u2).inv() / PI
}

/// Fundamental solution of `t ∂̄ + t⁻¹ ∂`:
/// `sign(|t| - 1) / (π (t u - ū / t))`.
pub fn pi_t_kernel(t: C64, u1: f64, u2: f64) -> C64 {
    let u = C64::new(u1, u2);
    let s = if t.norm() > 1.0 { 1.0 } else { -1.0 };
    C64::new(s / PI, 0.0) / (t * u - u.conj() / t)
}

/// `(Sh)(z) = (1/π) ∬ h(w) / (z - w) dw`, the right inverse of `∂̄`.
pub fn cauchy_solid(h: &MatrixField) -> MatrixField {
    PlaneConvolver::new(h.grid, &cauchy_kernel).apply(h)
}

/// `Π(t) h`, the right inverse of `ζ(t)·∂` for `|t| ≠ 1`.
pub fn pi_t(h: &MatrixField, t: &SpectralParam) -> Result<MatrixField> {
    match (t.region, t.t) {
        (Region::Interior | Region::Exterior, Some(tv)) => {
            Ok(PlaneConvolver::new(h.grid, &|a, b| pi_t_kernel(tv, a, b)).apply(h))
        }
        (Region::Infinity, _) => Err(Error::InvalidArgument(
            "Π(t) vanishes at t = ∞; use cauchy_solid for the leading term".into(),
        )),
        _ => Err(Error::OnUnitCircle),
    }
}

/// Half-line Riesz projections on a uniform line, as an aperiodic
/// convolution with the band-limited Hilbert kernel `2/(π d)` (odd `d`).
///
/// Input lives on indices `0..n_in`; output on `-extend..n_in + extend`.
/// `Π⁺` keeps negative frequencies (analytic for `Im y2 < 0`), `Π⁻` the
/// positive ones; the zero frequency is shared equally.
#[derive(Clone)]
pub struct RieszProjector {
    n_in: usize,
    extend: usize,
    len: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    kernel_hat: Vec<C64>,
}

impl std::fmt::Debug for RieszProjector {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RieszProjector")
            .field("n_in", &self.n_in)
            .field("extend", &self.extend)
            .field("len", &self.len)
            .finish()
    }
}

impl RieszProjector {
    pub fn new(n_in: usize, extend: usize) -> Self {
        let len = (2 * n_in + 2 * extend).next_power_of_two();
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(len);
        let inv = planner.plan_fft_inverse(len);
        let reach = (n_in + extend) as i64;
        let mut kernel = vec![ZERO; len];
        for d in -reach..=reach {
            if d.rem_euclid(2) == 1 {
                let idx = d.rem_euclid(len as i64) as usize;
                kernel[idx] = C64::new(2.0 / (PI * d as f64), 0.0);
            }
        }
        fwd.process(&mut kernel);
        let scale = 1.0 / len as f64;
        for k in kernel.iter_mut() {
            *k *= scale;
        }
        Self {
            n_in,
            extend,
            len,
            fwd,
            inv,
            kernel_hat: kernel,
        }
    }

    pub fn n_in(&self) -> usize {
        self.n_in
    }

    pub fn extend(&self) -> usize {
        self.extend
    }

    pub fn n_out(&self) -> usize {
        self.n_in + 2 * self.extend
    }

    /// Hilbert transform `(1/π) PV ∫ f(y')/(y - y') dy'` on the output range.
    pub fn hilbert(&self, input: &[C64], out: &mut [C64], scratch: &mut Vec<C64>) {
        scratch.clear();
        scratch.resize(self.len, ZERO);
        scratch[..self.n_in].copy_from_slice(&input[..self.n_in]);
        self.fwd.process(scratch);
        for (s, k) in scratch.iter_mut().zip(&self.kernel_hat) {
            *s *= k;
        }
        self.inv.process(scratch);
        let e = self.extend as i64;
        for (i, o) in out[..self.n_out()].iter_mut().enumerate() {
            let idx = (i as i64 - e).rem_euclid(self.len as i64) as usize;
            *o = scratch[idx];
        }
    }

    /// `(Π⁺f, Π⁻f)` on the output range.
    pub fn project(
        &self,
        input: &[C64],
        plus: &mut [C64],
        minus: &mut [C64],
        scratch: &mut Vec<C64>,
    ) {
        let n_out = self.n_out();
        self.hilbert(input, plus, scratch);
        for i in 0..n_out {
            let src = i as i64 - self.extend as i64;
            let f = if src >= 0 && (src as usize) < self.n_in {
                input[src as usize]
            } else {
                ZERO
            };
            let ih = I * plus[i];
            plus[i] = (f - ih) * 0.5;
            minus[i] = (f + ih) * 0.5;
        }
    }

    /// One projection of a strided block line: `block` interleaved entries.
    pub fn project_block(&self, input: &[C64], block: usize, sign: Sign, out: &mut [C64]) {
        let mut line = vec![ZERO; self.n_in];
        let mut plus = vec![ZERO; self.n_out()];
        let mut minus = vec![ZERO; self.n_out()];
        let mut scratch = Vec::new();
        for e in 0..block {
            for (k, l) in line.iter_mut().enumerate() {
                *l = input[k * block + e];
            }
            self.project(&line, &mut plus, &mut minus, &mut scratch);
            let src = if sign == Sign::Plus { &plus } else { &minus };
            for (k, v) in src.iter().enumerate() {
                out[k * block + e] = *v;
            }
        }
    }
}

/// `(Π⁺h, Π⁻h)` of samples on a line (same length as the input).
pub fn riesz_projections(h: &[C64]) -> (Vec<C64>, Vec<C64>) {
    let p = RieszProjector::new(h.len(), 0);
    let mut plus = vec![ZERO; h.len()];
    let mut minus = vec![ZERO; h.len()];
    p.project(h, &mut plus, &mut minus, &mut Vec::new());
    (plus, minus)
}

/// `Π±(e^{iφ}) h`: the projections in `y2` followed by the signed
/// `y1`-antiderivatives, computed in the rotated frame and resampled back.
pub fn pi_boundary(h: &MatrixField, phi: f64, sign: Sign) -> MatrixField {
    let frame = RotatedFrame::new(h.grid, phi, 1);
    let op = BoundaryOperator::new(frame.clone(), true);
    let spline = SplineField::new(h);
    let samples = frame.sample(&spline);
    let out = op.apply(&samples, h.block(), sign);
    frame.to_grid(&out, h.rows, h.cols, true)
}

/// One row of [`identity_suite`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentityCheck {
    pub name: String,
    /// Relative L2 error on the `n` grid (max error for the line check).
    pub error: f64,
    /// Error ratio between the `n` and `2n` grids; `None` for exact checks.
    pub improvement: Option<f64>,
    pub tolerance: f64,
    pub pass: bool,
}

fn suite_source(n: usize) -> Result<MatrixField> {
    let grid = GridSpec::new(n, 1.0)?;
    Ok(MatrixField::from_fn(grid, 1, 1, |x1, x2, o| {
        let r2 = (x1 - 0.1) * (x1 - 0.1) + (x2 + 0.05) * (x2 + 0.05);
        o[0] = C64::new((-r2 / 0.04).exp(), 0.0);
    }))
}

/// Checks the inverse relations `∂̄S = I`, `ζ(t)·∂ Π(t) = I` and
/// `θ·∂ Π± = I` on a Gaussian at `n` and `2n`, and `Π⁺ + Π⁻ = I` on a
/// line. A grid check passes when the error is at most `tolerance` and
/// halving the spacing improves it at least fourfold.
pub fn identity_suite(n: usize, tolerance: f64) -> Result<Vec<IdentityCheck>> {
    let line: Vec<C64> = (0..512)
        .map(|k| {
            let y = (k as f64 - 256.0) * 0.02;
            C64::new((-y * y).exp(), (y * 3.0).sin() * (-y * y).exp())
        })
        .collect();
    let (p, m) = riesz_projections(&line);
    let partition = p
        .iter()
        .zip(&m)
        .zip(&line)
        .map(|((a, b), f)| (a + b - f).norm())
        .fold(0.0, f64::max);
    let mut out = vec![IdentityCheck {
        name: "riesz partition".into(),
        error: partition,
        improvement: None,
        tolerance: 1e-12,
        pass: partition <= 1e-12,
    }];

    let t = C64::new(2.0, 0.0);
    let phi = 0.7;
    let th = crate::gauge_field::theta(phi);
    let th = [C64::new(th[0], 0.0), C64::new(th[1], 0.0)];
    let errors = |n: usize| -> Result<[f64; 4]> {
        let f = suite_source(n)?;
        let s = dbar(&cauchy_solid(&f), DerivativeScheme::FiniteDifference);
        let pt = directional_derivative(&pi_t(&f, &SpectralParam::new(t)?)?, zeta(t));
        let pp = directional_derivative(&pi_boundary(&f, phi, Sign::Plus), th);
        let pm = directional_derivative(&pi_boundary(&f, phi, Sign::Minus), th);
        Ok([s, pt, pp, pm].map(|g| g.relative_l2_error(&f)))
    };
    let coarse = errors(n)?;
    let fine = errors(2 * n)?;
    let names = ["dbar S", "zeta(2).d Pi(2)", "theta.d Pi+", "theta.d Pi-"];
    for k in 0..4 {
        let gain = coarse[k] / fine[k];
        out.push(IdentityCheck {
            name: names[k].into(),
            error: coarse[k],
            improvement: Some(gain),
            tolerance,
            pass: coarse[k] <= tolerance && gain >= 4.0,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phantom::bump;

    #[test]
    fn zeta_is_normalized_and_degenerates() {
        for t in [C64::new(2.0, 0.3), C64::new(0.2, -0.4), C64::new(-3.0, 7.0)] {
            let z = zeta(t);
            assert!((z[0] * z[0] + z[1] * z[1] - 1.0).norm() < 1e-12);
        }
        let phi = 0.77;
        let z = zeta(C64::from_polar(1.0, phi));
        assert!((z[0] - C64::new(phi.cos(), 0.0)).norm() < 1e-15);
        assert!((z[1] - C64::new(-phi.sin(), 0.0)).norm() < 1e-15);
        assert!(matches!(
            SpectralParam::new(C64::from_polar(1.0, 0.3)),
            Err(Error::OnUnitCircle)
        ));
    }

    #[test]
    fn lattice_constants_of_cauchy_kernel() {
        let z = lattice_constants(&|a, b| cauchy_kernel(a, b));
        assert!((z[0] - C64::new(-0.5 / PI, 0.0)).norm() < 1e-10);
        assert!((z[1] - C64::new(0.0, 0.5 / PI)).norm() < 1e-10);
    }

    #[test]
    fn riesz_partition_and_analyticity() {
        let n = 256;
        let h = 0.05;
        let f: Vec<C64> = (0..n)
            .map(|k| {
                let y = (k as f64 - 128.0) * h;
                C64::new((-y * y).exp(), 0.3 * y * (-y * y).exp())
            })
            .collect();
        let (p, m) = riesz_projections(&f);
        for k in 0..n {
            assert!((p[k] + m[k] - f[k]).norm() < 1e-14);
        }
        // Π⁺ of e^{-iωy}-dominated data keeps it, Π⁻ removes it
        let w: Vec<C64> = (0..n)
            .map(|k| {
                let y = (k as f64 - 128.0) * h;
                C64::from_polar((-y * y / 2.0).exp(), -10.0 * y)
            })
            .collect();
        let (p, m) = riesz_projections(&w);
        let err_p = p
            .iter()
            .zip(&w)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        let err_m = m.iter().map(|a| a.norm()).fold(0.0, f64::max);
        assert!(err_p < 1e-9 && err_m < 1e-9, "{err_p} {err_m}");
    }

    #[test]
    fn solid_cauchy_inverts_dbar() {
        let g = GridSpec::new(128, 1.0).unwrap();
        let f = MatrixField::from_fn(g, 1, 1, |x1, x2, o| {
            o[0] = C64::new(bump(x1, x2, [0.1, 0.0], 0.3, 1.0), 0.0)
        });
        let s = cauchy_solid(&f);
        let back = dbar(&s, DerivativeScheme::FiniteDifference);
        let err = back.relative_l2_error(&f);
        assert!(err < 1e-3, "{err}");
    }
}

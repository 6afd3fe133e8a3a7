//! Potential recovery from scattering-derived line functionals: synthesis
//! of `I±` and `J±` for known fields, recovery of the boundary traces and
//! the Riemann-Hilbert jump `b = c₋⁻¹ c₊`, the circle factorization for
//! small jumps, and the reconstruction of `V`.
//!
//! Everything runs with the coupling `-i`, so the family solves
//! `θ·∂c = -i (A·θ) c`.

use std::fs;
use std::path::{Path, PathBuf};

use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::attenuated_inversion::contour_sums;
use crate::cauchy_ops::{dbar, RieszProjector, Sign};
use crate::error::{Error, Result};
use crate::fft::DerivativeScheme;
use crate::frame::RotatedFrame;
use crate::gauge_field::{nu, GaugeField, RayGeometry};
use crate::grid::{GridSpec, MatrixField};
use crate::mat::{self, C64, ONE, ZERO};
use crate::narf::{self, NarfData};
use crate::par;
use crate::ray_transport::{
    ExtendedLines, FieldSplines, Sinogram, SinogramKind, TransportFrame, TransportOptions,
};
use crate::spectral_solutions::{
    solve_family_visit, BoundarySolution, Side, SolverOptions, SpectralFamily,
};
use crate::spline::SplineField;

/// The coupling of the scattering problem.
pub const SCATTERING_COUPLING: C64 = C64 { re: 0.0, im: -1.0 };

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScatteringOptions {
    pub solver: SolverOptions,
    pub transport: TransportOptions,
    /// Allowed gap between `I₊` and `c₊⁻¹(-∞) - c₊⁻¹(+∞)`, relative.
    pub telescoping_tolerance: f64,
}

impl Default for ScatteringOptions {
    fn default() -> Self {
        Self {
            solver: SolverOptions::default(),
            transport: TransportOptions::default(),
            telescoping_tolerance: 1e-4,
        }
    }
}

fn check_coupling(field: &GaugeField) -> Result<()> {
    if (field.coupling - SCATTERING_COUPLING).norm() > 1e-14 {
        return Err(Error::InvalidArgument(format!(
            "scattering functionals need coupling -i, got {}",
            field.coupling
        )));
    }
    Ok(())
}

/// The field `-i (A1, A2)` with `A0 = 0` built from the spatial components
/// of `field`.
pub fn condition_a(field: &GaugeField) -> Result<GaugeField> {
    let [a1, a2, a0] = field.components();
    GaugeField::new(
        a1.clone(),
        a2.clone(),
        MatrixField::zeros(a0.grid, a0.rows, a0.cols),
        SCATTERING_COUPLING,
    )
}

/// `I±(y2, φ)` and `J±(y2, φ)` on the sinogram offsets.
#[derive(Debug, Clone, PartialEq)]
pub struct ScatteringFunctionals {
    pub i_plus: Sinogram,
    pub i_minus: Sinogram,
    pub j_plus: Sinogram,
    pub j_minus: Sinogram,
}

impl ScatteringFunctionals {
    pub fn i(&self, sign: Sign) -> &Sinogram {
        match sign {
            Sign::Plus => &self.i_plus,
            Sign::Minus => &self.i_minus,
        }
    }

    pub fn j(&self, sign: Sign) -> &Sinogram {
        match sign {
            Sign::Plus => &self.j_plus,
            Sign::Minus => &self.j_minus,
        }
    }

    pub fn is_finite(&self) -> bool {
        [&self.i_plus, &self.i_minus, &self.j_plus, &self.j_minus]
            .iter()
            .all(|s| s.is_finite())
    }
}

fn inverses(c: &[C64], m: usize, context: &'static str) -> Result<Vec<C64>> {
    let mut out = vec![ZERO; c.len()];
    for (node, (src, dst)) in c.chunks(m * m).zip(out.chunks_mut(m * m)).enumerate() {
        mat::inverse_into(src, dst, m).map_err(|_| Error::SingularAt { context, node })?;
    }
    Ok(out)
}

/// `∫ g dy1` over the frame rows (trapezoid; `g` vanishes at both ends).
fn integrate_rows(g: &[C64], n1: usize, h1: f64) -> Vec<C64> {
    let stride = g.len() / n1;
    let mut out = vec![ZERO; stride];
    for row in g.chunks(stride) {
        for (o, v) in out.iter_mut().zip(row) {
            *o += v;
        }
    }
    for o in out.iter_mut() {
        *o *= h1;
    }
    out
}

/// `∫ c⁻¹ (κ A·θ) dy1` for one boundary solution.
pub fn i_functional(sol: &BoundarySolution) -> Result<Vec<C64>> {
    let m = sol.m;
    let inv = inverses(&sol.c, m, "inverting c± for I±")?;
    let mut g = vec![ZERO; inv.len()];
    for ((a, f), o) in inv
        .chunks(m * m)
        .zip(sol.field.chunks(m * m))
        .zip(g.chunks_mut(m * m))
    {
        mat::mul_into(a, f, o, m, m, m);
    }
    Ok(integrate_rows(&g, sol.frame.n1, sol.frame.h1))
}

/// `∫ c⁻¹ V c dy1` for one boundary solution, `V` sampled on its frame.
pub fn j_functional(sol: &BoundarySolution, v_frame: &[C64]) -> Result<Vec<C64>> {
    let m = sol.m;
    let inv = inverses(&sol.c, m, "inverting c± for J±")?;
    let mut g = vec![ZERO; inv.len()];
    let mut tmp = vec![ZERO; m * m];
    for (((a, v), c), o) in inv
        .chunks(m * m)
        .zip(v_frame.chunks(m * m))
        .zip(sol.c.chunks(m * m))
        .zip(g.chunks_mut(m * m))
    {
        mat::mul_into(a, v, &mut tmp, m, m, m);
        mat::mul_into(&tmp, c, o, m, m, m);
    }
    Ok(integrate_rows(&g, sol.frame.n1, sol.frame.h1))
}

/// `max |I - (c⁻¹(-∞) - c⁻¹(+∞))| / max(|I|, 1)` on one line.
fn telescoping_gap(i_line: &[C64], sol: &BoundarySolution) -> Result<f64> {
    let m = sol.m;
    let lo = inverses(&sol.trace(Side::MinusInfinity), m, "inverting c(-∞)")?;
    let hi = inverses(&sol.trace(Side::PlusInfinity), m, "inverting c(+∞)")?;
    let gap = i_line
        .iter()
        .zip(lo.iter().zip(&hi))
        .map(|(i, (l, h))| (i - (l - h)).norm())
        .fold(0.0, f64::max);
    Ok(gap / mat::max_abs(i_line).max(1.0))
}

/// Forward synthesis: the family, the functionals and the largest
/// telescoping gap.
#[derive(Debug, Clone)]
pub struct Synthesis {
    pub family: SpectralFamily,
    pub functionals: ScatteringFunctionals,
    pub telescoping_gap: f64,
}

/// Solves the family on `n_angles` angles and integrates `I±` and, when
/// `v` is given, `J±` along every ray.
pub fn synthesize(
    field: &GaugeField,
    v: Option<&MatrixField>,
    n_angles: usize,
    opts: &ScatteringOptions,
) -> Result<Synthesis> {
    check_coupling(field)?;
    let m = field.m();
    if let Some(v) = v {
        if v.grid != field.grid() || v.rows != m || v.cols != m {
            return Err(Error::Shape("V must be m x m on the field grid".into()));
        }
    }
    let v_spline = v.map(SplineField::new);
    let (family, lines) = solve_family_visit(field, n_angles, &opts.solver, |_, sol| {
        let i = i_functional(sol)?;
        let gap = telescoping_gap(&i, sol)?;
        let j = match &v_spline {
            Some(s) => j_functional(sol, &sol.frame.sample(s))?,
            None => vec![ZERO; i.len()],
        };
        Ok((i, j, gap))
    })?;
    let grid = field.grid();
    let blank = Sinogram::zeros(grid, n_angles, m, m, SinogramKind::Functional);
    let mut f = ScatteringFunctionals {
        i_plus: blank.clone(),
        i_minus: blank.clone(),
        j_plus: blank.clone(),
        j_minus: blank,
    };
    let mut worst = 0.0f64;
    for (k, [(ip, jp, gp), (im, jm, gm)]) in lines.into_iter().enumerate() {
        f.i_plus.line_mut(k).copy_from_slice(&ip);
        f.i_minus.line_mut(k).copy_from_slice(&im);
        f.j_plus.line_mut(k).copy_from_slice(&jp);
        f.j_minus.line_mut(k).copy_from_slice(&jm);
        worst = worst.max(gp).max(gm);
    }
    if worst > opts.telescoping_tolerance {
        return Err(Error::Disagreement {
            what: "I± quadrature and the telescoped traces",
            discrepancy: worst,
            tolerance: opts.telescoping_tolerance,
        });
    }
    Ok(Synthesis {
        family,
        functionals: f,
        telescoping_gap: worst,
    })
}

/// `(I₊, I₋)` on the angles of `family` (the boundary problems are solved
/// again, since the family keeps only traces).
pub fn synthesize_i(
    field: &GaugeField,
    family: &SpectralFamily,
    opts: &ScatteringOptions,
) -> Result<(Sinogram, Sinogram)> {
    let opts = ScatteringOptions {
        solver: family.options,
        ..*opts
    };
    let s = synthesize(field, None, family.angles.len(), &opts)?;
    Ok((s.functionals.i_plus, s.functionals.i_minus))
}

/// `(J₊, J₋)` on the angles of `family`.
pub fn synthesize_j(
    field: &GaugeField,
    v: &MatrixField,
    family: &SpectralFamily,
    opts: &ScatteringOptions,
) -> Result<(Sinogram, Sinogram)> {
    let opts = ScatteringOptions {
        solver: family.options,
        ..*opts
    };
    let s = synthesize(field, Some(v), family.angles.len(), &opts)?;
    Ok((s.functionals.j_plus, s.functionals.j_minus))
}

fn extension(grid: GridSpec) -> usize {
    RotatedFrame::new(grid, 0.0, 1).ext
}

/// `Π^sign` of every line of `s`, onto the window extended by `extend`.
fn project_lines(s: &Sinogram, sign: Sign, extend: usize) -> ExtendedLines {
    let riesz = RieszProjector::new(s.n_offsets(), extend);
    let b = s.block();
    let lines = par::map(s.n_angles(), |a| {
        let mut out = vec![ZERO; riesz.n_out() * b];
        riesz.project_block(s.line(a), b, sign, &mut out);
        out
    });
    ExtendedLines::from_lines(s.grid, s.angles.clone(), s.rows, s.cols, extend, lines)
        .expect("projected lines fill the window")
}

/// `I + s X` blockwise.
fn identity_plus(x: &ExtendedLines, s: f64) -> ExtendedLines {
    let m = x.rows;
    let mut out = x.clone();
    for blk in out.values.chunks_mut(m * m) {
        for (k, v) in blk.iter_mut().enumerate() {
            *v *= s;
            if k % (m + 1) == 0 {
                *v += ONE;
            }
        }
    }
    out
}

fn blockwise(
    a: &ExtendedLines,
    b: &ExtendedLines,
    f: impl Fn(&[C64], &[C64], &mut [C64]) -> Result<()>,
) -> Result<ExtendedLines> {
    let m = a.rows;
    let mut out = a.clone();
    for ((x, y), o) in a
        .values
        .chunks(m * m)
        .zip(b.values.chunks(m * m))
        .zip(out.values.chunks_mut(m * m))
    {
        f(x, y, o)?;
    }
    Ok(out)
}

fn invert_lines(x: &ExtendedLines, context: &'static str) -> Result<ExtendedLines> {
    let m = x.rows;
    let mut out = x.clone();
    for (node, (src, dst)) in x
        .values
        .chunks(m * m)
        .zip(out.values.chunks_mut(m * m))
        .enumerate()
    {
        mat::inverse_into(src, dst, m).map_err(|_| Error::SingularAt { context, node })?;
    }
    Ok(out)
}

/// `c±⁻¹(±∞, y2, φ)` recovered from `I±`, on the extended window.
#[derive(Debug, Clone, PartialEq)]
pub struct RecoveredTraces {
    pub inv_plus_lo: ExtendedLines,
    pub inv_plus_hi: ExtendedLines,
    pub inv_minus_lo: ExtendedLines,
    pub inv_minus_hi: ExtendedLines,
}

impl RecoveredTraces {
    /// `c±⁻¹` at `side`.
    pub fn inverse(&self, sign: Sign, side: Side) -> &ExtendedLines {
        match (sign, side) {
            (Sign::Plus, Side::MinusInfinity) => &self.inv_plus_lo,
            (Sign::Plus, Side::PlusInfinity) => &self.inv_plus_hi,
            (Sign::Minus, Side::MinusInfinity) => &self.inv_minus_lo,
            (Sign::Minus, Side::PlusInfinity) => &self.inv_minus_hi,
        }
    }

    /// `c±(side)` itself.
    pub fn trace(&self, sign: Sign, side: Side) -> Result<ExtendedLines> {
        invert_lines(self.inverse(sign, side), "inverting a recovered trace")
    }
}

/// `c₊⁻¹(±∞) = I ∓ Π^± I₊` and `c₋⁻¹(±∞) = I ∓ Π^∓ I₋`, the signs fixed
/// by `I = c⁻¹(-∞) - c⁻¹(+∞)`.
pub fn recover_boundary_from_i(i_plus: &Sinogram, i_minus: &Sinogram) -> Result<RecoveredTraces> {
    if !i_plus.same_layout(i_minus) || i_plus.rows != i_plus.cols {
        return Err(Error::Shape("I₊ and I₋ must share a square layout".into()));
    }
    if !i_plus.is_finite() || !i_minus.is_finite() {
        return Err(Error::InvalidArgument("functionals must be finite".into()));
    }
    let ext = extension(i_plus.grid);
    let rec = RecoveredTraces {
        inv_plus_lo: identity_plus(&project_lines(i_plus, Sign::Minus, ext), 1.0),
        inv_plus_hi: identity_plus(&project_lines(i_plus, Sign::Plus, ext), -1.0),
        inv_minus_lo: identity_plus(&project_lines(i_minus, Sign::Plus, ext), 1.0),
        inv_minus_hi: identity_plus(&project_lines(i_minus, Sign::Minus, ext), -1.0),
    };
    for sign in [Sign::Plus, Sign::Minus] {
        for side in [Side::MinusInfinity, Side::PlusInfinity] {
            rec.trace(sign, side)?;
        }
    }
    Ok(rec)
}

/// The jump `b(y2, φ) = c₋⁻¹(-∞) c₊(-∞)` on the extended window.
#[derive(Debug, Clone, PartialEq)]
pub struct RhJumpData {
    pub b: ExtendedLines,
}

impl RhJumpData {
    pub fn m(&self) -> usize {
        self.b.rows
    }

    /// `max |b - I|` (entrywise).
    pub fn max_deviation(&self) -> f64 {
        let m = self.m();
        self.b
            .values
            .chunks(m * m)
            .map(|blk| {
                blk.iter()
                    .enumerate()
                    .map(|(k, v)| (v - if k % (m + 1) == 0 { ONE } else { ZERO }).norm())
                    .fold(0.0, f64::max)
            })
            .fold(0.0, f64::max)
    }
}

pub fn build_rh_data(traces: &RecoveredTraces) -> Result<RhJumpData> {
    let m = traces.inv_plus_lo.rows;
    let c_plus = traces.trace(Sign::Plus, Side::MinusInfinity)?;
    let b = blockwise(&traces.inv_minus_lo, &c_plus, |x, y, o| {
        mat::mul_into(x, y, o, m, m, m);
        Ok(())
    })?;
    Ok(RhJumpData { b })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RhOptions {
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Largest accepted `max_φ |b - I|_F`; the iteration contracts below 1.
    pub contraction_limit: f64,
}

impl Default for RhOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-12,
            max_iterations: 200,
            contraction_limit: 0.5,
        }
    }
}

/// Factorization `b = c₋⁻¹ c₊` at one point, normalized by `c₊(∞) = I`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RhFactor {
    pub x: [f64; 2],
    /// `c₊(x, e^{iφ})` per angle, `m x m` blocks.
    pub plus: Vec<C64>,
    pub minus: Vec<C64>,
    pub iterations: usize,
    /// `max_φ |c₋⁻¹ c₊ - b|`.
    pub residual: f64,
    pub contraction: f64,
}

/// `b(x, e^{iφ}) = b(x·ν(φ), φ)` on all angles.
pub fn jump_at(b: &RhJumpData, x: [f64; 2]) -> Vec<C64> {
    let m = b.m();
    let lines = &b.b;
    let mut out = vec![ZERO; lines.n_angles() * m * m];
    for (a, &phi) in lines.angles.iter().enumerate() {
        let n = nu(phi);
        let y2 = x[0] * n[0] + x[1] * n[1];
        lines
            .spline(a)
            .eval_clamped(y2, &mut out[a * m * m..(a + 1) * m * m]);
    }
    out
}

/// Solves the circle problem `c₋⁻¹ c₊ = b` at each point by the Neumann
/// iteration `c₋ ← I - P_{≥0}[c₋ (b - I)]` on the angular Fourier modes;
/// `c₋` keeps modes `t^k, k ≥ 0` and `c₊ = c₋ b` keeps `k ≤ 0`.
pub fn rh_factorize(
    b: &RhJumpData,
    points: &[[f64; 2]],
    opts: &RhOptions,
) -> Result<Vec<RhFactor>> {
    let m = b.m();
    let n_angles = b.b.n_angles();
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(n_angles);
    let inv = planner.plan_fft_inverse(n_angles);
    let results: Vec<Result<RhFactor>> = par::map(points.len(), |p| {
        let x = points[p];
        let jump = jump_at(b, x);
        let mut dev = jump.clone();
        let mut contraction = 0.0f64;
        for blk in dev.chunks_mut(m * m) {
            for k in 0..m {
                blk[k * m + k] -= ONE;
            }
            contraction = contraction.max(mat::frob(blk));
        }
        if contraction > opts.contraction_limit {
            return Err(Error::NotContractive { norm: contraction });
        }
        let mut minus = vec![ZERO; jump.len()];
        for blk in minus.chunks_mut(m * m) {
            mat::identity_into(blk, m);
        }
        let mut f = vec![ZERO; jump.len()];
        let mut line = vec![ZERO; n_angles];
        let mut iterations = 0;
        loop {
            for ((c, d), o) in minus
                .chunks(m * m)
                .zip(dev.chunks(m * m))
                .zip(f.chunks_mut(m * m))
            {
                mat::mul_into(c, d, o, m, m, m);
            }
            // keep modes k >= 0 (k = 0 .. N/2 on the DFT index)
            for e in 0..m * m {
                for (a, v) in line.iter_mut().enumerate() {
                    *v = f[a * m * m + e];
                }
                fwd.process(&mut line);
                for (k, v) in line.iter_mut().enumerate() {
                    if k > n_angles / 2 {
                        *v = ZERO;
                    }
                }
                inv.process(&mut line);
                for (a, v) in line.iter().enumerate() {
                    f[a * m * m + e] = *v / n_angles as f64;
                }
            }
            let mut change = 0.0f64;
            for (blk, pf) in minus.chunks_mut(m * m).zip(f.chunks(m * m)) {
                for (k, (c, q)) in blk.iter_mut().zip(pf).enumerate() {
                    let id = if k % (m + 1) == 0 { ONE } else { ZERO };
                    let next = id - q;
                    change = change.max((next - *c).norm());
                    *c = next;
                }
            }
            iterations += 1;
            if change <= opts.tolerance {
                break;
            }
            if iterations >= opts.max_iterations {
                return Err(Error::NonConvergence {
                    iterations,
                    last: change,
                    history: Vec::new(),
                });
            }
        }
        let mut plus = vec![ZERO; jump.len()];
        let mut residual = 0.0f64;
        let mut ci = vec![ZERO; m * m];
        let mut back = vec![ZERO; m * m];
        for ((c, bj), o) in minus
            .chunks(m * m)
            .zip(jump.chunks(m * m))
            .zip(plus.chunks_mut(m * m))
        {
            mat::mul_into(c, bj, o, m, m, m);
            mat::inverse_into(c, &mut ci, m)?;
            mat::mul_into(&ci, o, &mut back, m, m, m);
            residual = residual.max(
                back.iter()
                    .zip(bj)
                    .map(|(u, w)| (u - w).norm())
                    .fold(0.0, f64::max),
            );
        }
        Ok(RhFactor {
            x,
            plus,
            minus,
            iterations,
            residual,
            contraction,
        })
    });
    results.into_iter().collect()
}

/// `c±(x, e^{iφ})` of the forward family at `points`, with the family.
pub fn boundary_values_at(
    field: &GaugeField,
    n_angles: usize,
    opts: &SolverOptions,
    points: &[[f64; 2]],
) -> Result<(SpectralFamily, [Vec<Vec<C64>>; 2])> {
    let m = field.m();
    let (family, per_angle) = solve_family_visit(field, n_angles, opts, |_, sol| {
        let spl = sol.frame.spline(&sol.extended(), m * m, true);
        let mut out = vec![ZERO; points.len() * m * m];
        for (p, x) in points.iter().enumerate() {
            let (y1, y2) = RayGeometry::coordinates(sol.phi, x[0], x[1]);
            spl.eval_clamped(y2, y1, &mut out[p * m * m..(p + 1) * m * m]);
        }
        Ok(out)
    })?;
    // regroup to [sign][point] -> angle-major blocks
    let mut values = [
        vec![vec![ZERO; n_angles * m * m]; points.len()],
        vec![vec![ZERO; n_angles * m * m]; points.len()],
    ];
    for (a, pair) in per_angle.into_iter().enumerate() {
        for (s, vals) in pair.into_iter().enumerate() {
            for p in 0..points.len() {
                values[s][p][a * m * m..(a + 1) * m * m]
                    .copy_from_slice(&vals[p * m * m..(p + 1) * m * m]);
            }
        }
    }
    Ok((family, values))
}

/// Relative spread over the angles of `G(φ) = c_rec(φ) c_true(φ)⁻¹`:
/// `max_φ |G(φ) - mean G| / |mean G|`. Zero when the two factorizations
/// differ by a left factor independent of `t`.
pub fn gauge_spread(recovered: &[C64], truth: &[C64], m: usize) -> Result<f64> {
    let n = recovered.len() / (m * m);
    let mut g = vec![ZERO; recovered.len()];
    let mut inv = vec![ZERO; m * m];
    for a in 0..n {
        let r = a * m * m..(a + 1) * m * m;
        mat::inverse_into(&truth[r.clone()], &mut inv, m)?;
        mat::mul_into(&recovered[r.clone()], &inv, &mut g[r], m, m, m);
    }
    let mut mean = vec![ZERO; m * m];
    for blk in g.chunks(m * m) {
        for (o, v) in mean.iter_mut().zip(blk) {
            *o += v / n as f64;
        }
    }
    let spread = g
        .chunks(m * m)
        .map(|blk| {
            blk.iter()
                .zip(&mean)
                .map(|(u, w)| (u - w).norm_sqr())
                .sum::<f64>()
                .sqrt()
        })
        .fold(0.0, f64::max);
    Ok(spread / mat::frob(&mean))
}

/// `B±(-∞, y2, φ)` on the extended window.
#[derive(Debug, Clone, PartialEq)]
pub struct BTraces {
    pub plus: ExtendedLines,
    pub minus: ExtendedLines,
}

impl BTraces {
    pub fn difference(&self) -> ExtendedLines {
        self.plus.sub(&self.minus).expect("traces share a layout")
    }
}

/// `B₊(-∞) = -c₊(-∞) (Π⁻J₊) c₊⁻¹(-∞)`, `B₋(-∞) = -c₋(-∞) (Π⁺J₋) c₋⁻¹(-∞)`.
pub fn recover_b_traces(
    j_plus: &Sinogram,
    j_minus: &Sinogram,
    traces: &RecoveredTraces,
) -> Result<BTraces> {
    let ext = traces.inv_plus_lo.extend;
    let m = j_plus.rows;
    if !j_plus.same_layout(j_minus) || traces.inv_plus_lo.n_angles() != j_plus.n_angles() {
        return Err(Error::Shape(
            "J± and the traces must share angles and m".into(),
        ));
    }
    let one = |j: &Sinogram, sign: Sign, proj: Sign| -> Result<ExtendedLines> {
        let pj = project_lines(j, proj, ext);
        let c = traces.trace(sign, Side::MinusInfinity)?;
        let ci = traces.inverse(sign, Side::MinusInfinity);
        let left = blockwise(&c, &pj, |x, y, o| {
            mat::mul_into(x, y, o, m, m, m);
            Ok(())
        })?;
        blockwise(&left, ci, |x, y, o| {
            mat::mul_into(x, y, o, m, m, m);
            o.iter_mut().for_each(|v| *v = -*v);
            Ok(())
        })
    };
    Ok(BTraces {
        plus: one(j_plus, Sign::Plus, Sign::Minus)?,
        minus: one(j_minus, Sign::Minus, Sign::Plus)?,
    })
}

/// `B(x, e^{iφ}) = c0(x, θ) ΔB(-∞, x·ν) c0⁻¹(x, θ)` at angle index `angle`.
pub fn propagate_b(diff: &ExtendedLines, angle: usize, c0: &TransportFrame) -> Result<MatrixField> {
    let grid = diff.grid;
    let m = diff.rows;
    let line = diff.spline(angle);
    let phi = diff.angles[angle];
    let mut out = MatrixField::zeros(grid, m, m);
    let (mut db, mut c, mut ci, mut tmp) = (
        vec![ZERO; m * m],
        vec![ZERO; m * m],
        vec![ZERO; m * m],
        vec![ZERO; m * m],
    );
    for idx in 0..grid.len() {
        let (x1, x2) = grid.point(idx);
        let (y1, y2) = RayGeometry::coordinates(phi, x1, x2);
        line.eval_clamped(y2, &mut db);
        c0.eval(y1, y2, &mut c);
        mat::inverse_into(&c, &mut ci, m).map_err(|_| Error::SingularAt {
            context: "inverting c0 for B",
            node: idx,
        })?;
        mat::mul_into(&c, &db, &mut tmp, m, m, m);
        mat::mul_into(&tmp, &ci, out.node_mut(idx), m, m, m);
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct PotentialRecovery {
    pub i_field: MatrixField,
    pub v_hat: MatrixField,
    /// `|I_N - I_{N/2}| / |I_N|`.
    pub contour_refinement: f64,
}

/// Propagates `B`, forms `I(x)` on the circle and returns
/// `V = c₊(x,∞) ∂̄[c₊⁻¹(x,∞) I c₊(x,∞)] c₊⁻¹(x,∞)`.
pub fn recover_potential(
    b: &BTraces,
    field: &GaugeField,
    c_inf: &MatrixField,
    opts: &TransportOptions,
) -> Result<PotentialRecovery> {
    check_coupling(field)?;
    let diff = b.difference();
    let splines = FieldSplines::new(field);
    let (i_field, half) = contour_sums(diff.grid, &diff.angles, diff.rows, diff.cols, |a| {
        let c0 = TransportFrame::new(&splines, diff.angles[a], opts)?;
        propagate_b(&diff, a, &c0)
    })?;
    let inv = c_inf.inverse()?;
    let inner = inv.matmul(&i_field)?.matmul(c_inf)?;
    let v_hat = c_inf
        .matmul(&dbar(&inner, DerivativeScheme::FiniteDifference))?
        .matmul(&inv)?;
    let norm = i_field.l2_norm();
    let contour_refinement = if norm > 0.0 {
        half.sub(&i_field)?.l2_norm() / norm
    } else {
        0.0
    };
    Ok(PotentialRecovery {
        i_field,
        v_hat,
        contour_refinement,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryDiagnostics {
    pub n_angles: usize,
    /// `max |b - I|` over the jump data.
    pub jump_deviation: f64,
    pub max_b_trace: f64,
    pub contour_refinement: f64,
    /// Largest relative mismatch between recovered and forward `c±⁻¹(±∞)`,
    /// when the forward family is known.
    pub trace_mismatch: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct ScatteringRecovery {
    pub traces: RecoveredTraces,
    pub jump: RhJumpData,
    pub b: BTraces,
    pub potential: PotentialRecovery,
    pub diagnostics: RecoveryDiagnostics,
}

/// Largest `|c_rec⁻¹ - c_fwd⁻¹| / max |c_fwd⁻¹|` over the four traces on
/// the sinogram offsets.
pub fn trace_mismatch(rec: &RecoveredTraces, family: &SpectralFamily) -> Result<f64> {
    let m = family.m;
    let mut worst = 0.0f64;
    for sign in [Sign::Plus, Sign::Minus] {
        for side in [Side::MinusInfinity, Side::PlusInfinity] {
            let fwd = &family.trace(sign, side).data;
            let fwd_inv = Sinogram {
                values: inverses(&fwd.values, m, "inverting forward traces")?,
                ..fwd.clone()
            };
            let got = rec.inverse(sign, side).central(fwd.kind);
            worst = worst.max(got.max_relative_difference(&fwd_inv)?);
        }
    }
    Ok(worst)
}

/// Traces from `I±`, `B` traces from `J±`, then `V`. `c₊(x, ∞)` and the
/// optional trace audit come from `family`.
pub fn recover_from_functionals(
    field: &GaugeField,
    functionals: &ScatteringFunctionals,
    family: &SpectralFamily,
    opts: &ScatteringOptions,
) -> Result<ScatteringRecovery> {
    let traces = recover_boundary_from_i(&functionals.i_plus, &functionals.i_minus)?;
    let jump = build_rh_data(&traces)?;
    let b = recover_b_traces(&functionals.j_plus, &functionals.j_minus, &traces)?;
    let potential = recover_potential(&b, field, &family.c_infinity, &opts.transport)?;
    let diagnostics = RecoveryDiagnostics {
        n_angles: functionals.i_plus.n_angles(),
        jump_deviation: jump.max_deviation(),
        max_b_trace: b.plus.max_norm().max(b.minus.max_norm()),
        contour_refinement: potential.contour_refinement,
        trace_mismatch: Some(trace_mismatch(&traces, family)?),
    };
    Ok(ScatteringRecovery {
        traces,
        jump,
        b,
        potential,
        diagnostics,
    })
}

/// SHA-256 of the functional values, hex encoded.
pub fn checksum(functionals: &ScatteringFunctionals) -> String {
    let mut h = Sha256::new();
    for s in [
        &functionals.i_plus,
        &functionals.i_minus,
        &functionals.j_plus,
        &functionals.j_minus,
    ] {
        for v in &s.values {
            h.update(v.re.to_le_bytes());
            h.update(v.im.to_le_bytes());
        }
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthesisManifest {
    pub n: usize,
    pub m: usize,
    pub n_angles: usize,
    pub coupling: [f64; 2],
    pub options: ScatteringOptions,
    pub telescoping_gap: f64,
    pub files: [String; 4],
    pub checksum: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryManifest {
    /// Path of the synthesis manifest this run consumed.
    pub synthesis: PathBuf,
    pub checksum: String,
    pub diagnostics: RecoveryDiagnostics,
    pub v_hat_file: String,
    /// Relative L2 error against a known `V`, when one was supplied.
    pub v_error: Option<f64>,
}

const FUNCTIONAL_FILES: [&str; 4] = ["i_plus.narf", "i_minus.narf", "j_plus.narf", "j_minus.narf"];
pub const SYNTHESIS_MANIFEST: &str = "synthesis.json";
pub const RECOVERY_MANIFEST: &str = "recovery.json";

/// Writes `I±`, `J±` as NARF files and `synthesis.json` into `dir`.
pub fn write_synthesis(
    dir: impl AsRef<Path>,
    s: &Synthesis,
    opts: &ScatteringOptions,
) -> Result<SynthesisManifest> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let f = &s.functionals;
    for (name, data) in FUNCTIONAL_FILES
        .iter()
        .zip([&f.i_plus, &f.i_minus, &f.j_plus, &f.j_minus])
    {
        narf::save(dir.join(name), &NarfData::Sinogram(data.clone()))?;
    }
    let manifest = SynthesisManifest {
        n: s.family.grid.n,
        m: s.family.m,
        n_angles: s.family.angles.len(),
        coupling: [s.family.coupling.re, s.family.coupling.im],
        options: *opts,
        telescoping_gap: s.telescoping_gap,
        files: FUNCTIONAL_FILES.map(String::from),
        checksum: checksum(f),
    };
    fs::write(
        dir.join(SYNTHESIS_MANIFEST),
        serde_json::to_string_pretty(&manifest)?,
    )?;
    Ok(manifest)
}

/// Reads the functionals named by a synthesis manifest and checks them
/// against its checksum.
pub fn read_synthesis(
    manifest_path: impl AsRef<Path>,
) -> Result<(SynthesisManifest, ScatteringFunctionals)> {
    let path = manifest_path.as_ref();
    let manifest: SynthesisManifest = serde_json::from_str(&fs::read_to_string(path)?)?;
    let dir = path.parent().unwrap_or(Path::new("."));
    let mut sinos = Vec::with_capacity(4);
    for name in &manifest.files {
        match narf::load(dir.join(name))? {
            NarfData::Sinogram(s) => sinos.push(s.with_kind(SinogramKind::Functional)),
            _ => return Err(Error::Format(format!("{name} is not line data"))),
        }
    }
    let mut it = sinos.into_iter();
    let f = ScatteringFunctionals {
        i_plus: it.next().unwrap(),
        i_minus: it.next().unwrap(),
        j_plus: it.next().unwrap(),
        j_minus: it.next().unwrap(),
    };
    if checksum(&f) != manifest.checksum {
        return Err(Error::Format(
            "functionals do not match the manifest checksum".into(),
        ));
    }
    Ok((manifest, f))
}

/// Writes `v_hat.narf` and `recovery.json` linking back to the synthesis.
pub fn write_recovery(
    dir: impl AsRef<Path>,
    r: &ScatteringRecovery,
    synthesis_manifest: impl AsRef<Path>,
    functionals: &ScatteringFunctionals,
    v_error: Option<f64>,
) -> Result<RecoveryManifest> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let v_file = "v_hat.narf".to_string();
    narf::save(
        dir.join(&v_file),
        &NarfData::Field {
            kind: "potential".into(),
            field: r.potential.v_hat.clone(),
        },
    )?;
    let manifest = RecoveryManifest {
        synthesis: synthesis_manifest.as_ref().to_path_buf(),
        checksum: checksum(functionals),
        diagnostics: r.diagnostics.clone(),
        v_hat_file: v_file,
        v_error,
    };
    fs::write(
        dir.join(RECOVERY_MANIFEST),
        serde_json::to_string_pretty(&manifest)?,
    )?;
    Ok(manifest)
}

//! Spectral solutions `c±(x, t)`: the `t = ∞` member, the unit-circle
//! limits `c±(x, e^{iφ})` and their boundary traces at `y1 = ∓∞`, built as
//! fixed points of `c = I + Π(κ A c)`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::anderson::{self, FixedPointOptions, FixedPointReport};
use crate::cauchy_ops::{
    cauchy_kernel, dbar, pi_t_kernel, PlaneConvolver, Region, RieszProjector, Sign, SpectralParam,
};
use crate::error::{Error, Result};
use crate::fft::DerivativeScheme;
use crate::frame::{cumulative, BoundaryOperator, RotatedFrame};
use crate::gauge_field::GaugeField;
use crate::grid::{GridSpec, MatrixField};
use crate::mat::{self, C64, ZERO};
use crate::narf::{self, NarfData};
use crate::par;
use crate::ray_transport::{uniform_angles, FieldSplines, Sinogram, SinogramKind};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverOptions {
    pub fixed_point: FixedPointOptions,
    /// Smallest admissible `|det c|`.
    pub det_floor: f64,
    /// `y1` refinement of the rotated frames.
    pub oversample: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            fixed_point: FixedPointOptions::default(),
            det_floor: 1e-6,
            oversample: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SolveDiagnostics {
    pub fixed_point: FixedPointReport,
    pub min_det: f64,
    /// Relative residual of the differential equation.
    pub equation_residual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    MinusInfinity,
    PlusInfinity,
}

impl Side {
    pub fn name(self) -> &'static str {
        match self {
            Side::MinusInfinity => "minus_inf",
            Side::PlusInfinity => "plus_inf",
        }
    }
}

/// Values of a solution at `y1 = -∞` or `+∞` on every line `(y2, φ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryTrace {
    pub side: Side,
    pub sign: Sign,
    pub data: Sinogram,
}

fn node_products(a: &[C64], c: &[C64], m: usize) -> Vec<C64> {
    let b = m * m;
    let mut out = vec![ZERO; c.len()];
    for ((o, a), c) in out.chunks_mut(b).zip(a.chunks(b)).zip(c.chunks(b)) {
        if a.iter().any(|v| *v != ZERO) {
            mat::mul_into(a, c, o, m, m, m);
        }
    }
    out
}

fn identity_blocks(nodes: usize, m: usize) -> Vec<C64> {
    let mut v = vec![ZERO; nodes * m * m];
    for blk in v.chunks_mut(m * m) {
        mat::identity_into(blk, m);
    }
    v
}

fn add_identity(v: &mut [C64], m: usize) {
    for blk in v.chunks_mut(m * m) {
        for i in 0..m {
            blk[i * m + i] += 1.0;
        }
    }
}

fn min_det(v: &[C64], m: usize) -> f64 {
    v.chunks(m * m)
        .map(|b| mat::det(b, m).norm())
        .fold(f64::INFINITY, f64::min)
}

fn l2(v: &[C64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

fn check_det(d: f64, opts: &SolverOptions) -> Result<()> {
    if d.is_nan() || d < opts.det_floor {
        return Err(Error::DetCollapse { min_det: d });
    }
    Ok(())
}

/// Solves `c = I + K(c)` on grid fields, `K` applied blockwise to `a c`.
fn solve_plane(
    a: &MatrixField,
    conv: &PlaneConvolver,
    opts: &SolverOptions,
) -> Result<(MatrixField, FixedPointReport)> {
    let (grid, m) = (a.grid, a.rows);
    let x0 = identity_blocks(grid.len(), m);
    if a.max_norm() == 0.0 {
        return Ok((
            MatrixField {
                grid,
                rows: m,
                cols: m,
                values: x0,
            },
            FixedPointReport {
                converged: true,
                residuals: vec![0.0],
                iterations: 0,
            },
        ));
    }
    let g = |x: &[C64]| {
        let prod = MatrixField {
            grid,
            rows: m,
            cols: m,
            values: node_products(&a.values, x, m),
        };
        let mut out = conv.apply(&prod).values;
        add_identity(&mut out, m);
        out
    };
    let (values, report) = anderson::solve(x0, g, &opts.fixed_point)?;
    Ok((
        MatrixField {
            grid,
            rows: m,
            cols: m,
            values,
        },
        report,
    ))
}

/// `c₊(x, ∞)`: `∂̄c = κ (A1 + i A2) c / 2`, `c → I`, as the fixed point of
/// `c = I + S[κ (A1 + i A2) c / 2]`.
pub fn solve_c_infinity(
    field: &GaugeField,
    opts: &SolverOptions,
) -> Result<(MatrixField, SolveDiagnostics)> {
    let h = field.holomorphic_part();
    let conv = PlaneConvolver::new(field.grid(), &cauchy_kernel);
    let (c, report) = solve_plane(&h, &conv, opts)?;
    let d = min_det(&c.values, c.rows);
    check_det(d, opts)?;
    let rhs = h.matmul(&c)?;
    let res = dbar(&c, DerivativeScheme::FiniteDifference).sub(&rhs)?;
    let scale = rhs.l2_norm();
    let diag = SolveDiagnostics {
        fixed_point: report,
        min_det: d,
        equation_residual: if scale > 0.0 {
            res.l2_norm() / scale
        } else {
            res.l2_norm()
        },
    };
    Ok((c, diag))
}

/// `c(x, t)` off the unit circle: `ζ(t)·∂c = A(x, ζ(t)) c`, `c → I`, as
/// the fixed point of `c = I + Π(t)[A(·, ζ(t)) c]`.
pub fn solve_c_off_circle(
    field: &GaugeField,
    t: &SpectralParam,
    opts: &SolverOptions,
) -> Result<(MatrixField, SolveDiagnostics)> {
    let tv = match (t.region, t.t) {
        (Region::Interior | Region::Exterior, Some(tv)) => tv,
        (Region::Infinity, _) => {
            return Err(Error::InvalidArgument(
                "use solve_c_infinity at t = ∞".into(),
            ))
        }
        _ => return Err(Error::OnUnitCircle),
    };
    let a = field.eval_direction(t.zeta().unwrap())?;
    let conv = PlaneConvolver::new(field.grid(), &|u1, u2| pi_t_kernel(tv, u1, u2));
    let (c, report) = solve_plane(&a, &conv, opts)?;
    let d = min_det(&c.values, c.rows);
    check_det(d, opts)?;
    Ok((
        c,
        SolveDiagnostics {
            fixed_point: report,
            min_det: d,
            equation_residual: f64::NAN,
        },
    ))
}

/// `c±(x, e^{iφ})` on the rotated frame of `φ`.
#[derive(Debug, Clone)]
pub struct BoundarySolution {
    pub phi: f64,
    pub sign: Sign,
    pub m: usize,
    pub frame: RotatedFrame,
    /// `κ A(x, θ(φ))` on the central frame.
    pub field: Vec<C64>,
    /// `c` on the central frame.
    pub c: Vec<C64>,
    pub diagnostics: SolveDiagnostics,
}

impl BoundarySolution {
    fn block(&self) -> usize {
        self.m * self.m
    }

    /// Trace on the central `y2` lines.
    pub fn trace(&self, side: Side) -> Vec<C64> {
        let w = self.frame.n2 * self.block();
        let j = match side {
            Side::MinusInfinity => 0,
            Side::PlusInfinity => self.frame.n1 - 1,
        };
        self.c[j * w..(j + 1) * w].to_vec()
    }

    /// `G(y2) = ∫ κ A c dy1` on the central `y2` lines.
    pub fn integrated_source(&self) -> Vec<C64> {
        let (n1, n2) = (self.frame.n1, self.frame.n2);
        let stride = n2 * self.block();
        let g = node_products(&self.field, &self.c, self.m);
        let mut cum = vec![ZERO; g.len()];
        cumulative(&g, n1, stride, self.frame.h1, &mut cum);
        cum[(n1 - 1) * stride..].to_vec()
    }

    /// Traces from `c(±∞) = I ± ∫ Π^±(κ A c) dy1` (integrating first).
    pub fn quadrature_traces(&self) -> (Vec<C64>, Vec<C64>) {
        let riesz = RieszProjector::new(self.frame.n2, 0);
        traces_from_integrated(&self.integrated_source(), self.sign, self.m, &riesz)
    }

    /// `c` on the extended frame (reaching the grid corners).
    pub fn extended(&self) -> Vec<C64> {
        let op = BoundaryOperator::new(self.frame.clone(), true);
        let mut out = op.apply(
            &node_products(&self.field, &self.c, self.m),
            self.block(),
            self.sign,
        );
        add_identity(&mut out, self.m);
        out
    }

    /// `c±(x, e^{iφ})` on the spatial grid.
    pub fn to_grid(&self) -> MatrixField {
        self.frame.to_grid(&self.extended(), self.m, self.m, true)
    }
}

/// `(c(-∞), c(+∞))` from `G = ∫ κ A c dy1` on the output window of `riesz`:
/// `c₊(-∞) = I - Π⁻G`, `c₊(+∞) = I + Π⁺G`, `c₋(-∞) = I - Π⁺G`,
/// `c₋(+∞) = I + Π⁻G`.
pub fn traces_from_integrated(
    g: &[C64],
    sign: Sign,
    m: usize,
    riesz: &RieszProjector,
) -> (Vec<C64>, Vec<C64>) {
    let b = m * m;
    let len = riesz.n_out() * b;
    let mut plus = vec![ZERO; len];
    let mut minus = vec![ZERO; len];
    riesz.project_block(g, b, Sign::Plus, &mut plus);
    riesz.project_block(g, b, Sign::Minus, &mut minus);
    let (fwd, bwd) = match sign {
        Sign::Plus => (plus, minus),
        Sign::Minus => (minus, plus),
    };
    let mut lo: Vec<C64> = bwd.iter().map(|v| -v).collect();
    let mut hi = fwd;
    add_identity(&mut lo, m);
    add_identity(&mut hi, m);
    (lo, hi)
}

/// Solves for `c±(x, e^{iφ})` given precomputed field splines.
pub fn solve_c_boundary_with(
    splines: &FieldSplines,
    phi: f64,
    sign: Sign,
    opts: &SolverOptions,
) -> Result<BoundarySolution> {
    let m = splines.m;
    let b = m * m;
    let frame = RotatedFrame::new(splines.grid, phi, opts.oversample);
    let field = frame.sample(&splines.along(phi));
    let op = BoundaryOperator::new(frame.clone(), false);
    let x0 = identity_blocks(frame.n1 * frame.n2, m);
    let (c, report) = if field.iter().all(|v| *v == ZERO) {
        (
            x0,
            FixedPointReport {
                converged: true,
                residuals: vec![0.0],
                iterations: 0,
            },
        )
    } else {
        let g = |x: &[C64]| {
            let mut out = op.apply(&node_products(&field, x, m), b, sign);
            add_identity(&mut out, m);
            out
        };
        anderson::solve(x0, g, &opts.fixed_point)?
    };
    let d = min_det(&c, m);
    check_det(d, opts)?;
    let ac = node_products(&field, &c, m);
    let dc = frame.d_dy1(&c, b, frame.n2);
    let res: Vec<C64> = dc.iter().zip(&ac).map(|(x, y)| x - y).collect();
    let scale = l2(&ac);
    let residual = if scale > 0.0 {
        l2(&res) / scale
    } else {
        l2(&res)
    };
    Ok(BoundarySolution {
        phi,
        sign,
        m,
        frame,
        field,
        c,
        diagnostics: SolveDiagnostics {
            fixed_point: report,
            min_det: d,
            equation_residual: residual,
        },
    })
}

/// Solves `c = I + Π±(e^{iφ})[κ A(·, θ(φ)) c]`.
pub fn solve_c_boundary(
    field: &GaugeField,
    phi: f64,
    sign: Sign,
    opts: &SolverOptions,
) -> Result<BoundarySolution> {
    solve_c_boundary_with(&FieldSplines::new(field), phi, sign, opts)
}

/// Per-angle diagnostics of both boundary solutions.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct AngleDiagnostics {
    pub phi: f64,
    pub plus: SolveDiagnostics,
    pub minus: SolveDiagnostics,
    /// Largest disagreement between read-off and quadrature traces.
    pub trace_crosscheck: f64,
}

/// `c₊(x, ∞)` and the traces of `c±(x, e^{iφ})` on a uniform angle grid.
#[derive(Debug, Clone)]
pub struct SpectralFamily {
    pub grid: GridSpec,
    pub m: usize,
    pub coupling: C64,
    pub angles: Vec<f64>,
    pub c_infinity: MatrixField,
    pub c_infinity_diagnostics: SolveDiagnostics,
    /// Ordered `c₊(-∞)`, `c₊(+∞)`, `c₋(-∞)`, `c₋(+∞)`.
    pub traces: Vec<BoundaryTrace>,
    /// `∫ κ A c± dy1` per line, ordered plus, minus.
    pub integrated: Vec<Sinogram>,
    pub angle_diagnostics: Vec<AngleDiagnostics>,
    pub options: SolverOptions,
}

fn trace_index(sign: Sign, side: Side) -> usize {
    (match sign {
        Sign::Plus => 0,
        Sign::Minus => 2,
    }) + match side {
        Side::MinusInfinity => 0,
        Side::PlusInfinity => 1,
    }
}

impl SpectralFamily {
    pub fn trace(&self, sign: Sign, side: Side) -> &BoundaryTrace {
        &self.traces[trace_index(sign, side)]
    }

    pub fn integrated(&self, sign: Sign) -> &Sinogram {
        &self.integrated[match sign {
            Sign::Plus => 0,
            Sign::Minus => 1,
        }]
    }

    /// Traces at angle index `angle` on the `y2` window of `riesz` (built on
    /// the central offsets), which may extend past the grid.
    pub fn traces_on(
        &self,
        sign: Sign,
        angle: usize,
        riesz: &RieszProjector,
    ) -> (Vec<C64>, Vec<C64>) {
        traces_from_integrated(self.integrated(sign).line(angle), sign, self.m, riesz)
    }

    pub fn min_det(&self) -> f64 {
        self.angle_diagnostics
            .iter()
            .flat_map(|a| [a.plus.min_det, a.minus.min_det])
            .fold(self.c_infinity_diagnostics.min_det, f64::min)
    }

    /// `c±(+∞) c±(-∞)⁻¹`, which equals `S(A)`.
    pub fn trace_factorization(&self, sign: Sign) -> Result<Sinogram> {
        let lo = &self.trace(sign, Side::MinusInfinity).data;
        let hi = &self.trace(sign, Side::PlusInfinity).data;
        let m = self.m;
        let mut out = hi.clone().with_kind(SinogramKind::ScatteringData);
        let mut inv = vec![ZERO; m * m];
        for ((o, h), l) in out
            .values
            .chunks_mut(m * m)
            .zip(hi.values.chunks(m * m))
            .zip(lo.values.chunks(m * m))
        {
            mat::inverse_into(l, &mut inv, m)?;
            mat::mul_into(h, &inv, o, m, m, m);
        }
        Ok(out)
    }
}

/// Solves every boundary problem on `n_angles` uniform angles and hands
/// each solution to `visit` before discarding it.
pub fn solve_family_visit<T: Send>(
    field: &GaugeField,
    n_angles: usize,
    opts: &SolverOptions,
    visit: impl Fn(usize, &BoundarySolution) -> Result<T> + Sync + Send,
) -> Result<(SpectralFamily, Vec<[T; 2]>)> {
    if n_angles == 0 {
        return Err(Error::InvalidArgument(
            "at least one angle is required".into(),
        ));
    }
    let (grid, m) = (field.grid(), field.m());
    let (c_inf, c_inf_diag) = solve_c_infinity(field, opts)?;
    let splines = FieldSplines::new(field);
    let angles = uniform_angles(n_angles);
    let tol = (10.0 * opts.fixed_point.tolerance).max(1e-10);
    let per_angle: Vec<Result<_>> = par::map(n_angles, |k| {
        let phi = angles[k];
        let mut sols = Vec::with_capacity(2);
        let mut visited = Vec::with_capacity(2);
        let mut cross = 0.0f64;
        for sign in [Sign::Plus, Sign::Minus] {
            let sol = solve_c_boundary_with(&splines, phi, sign, opts)?;
            let (qm, qp) = sol.quadrature_traces();
            let (rm, rp) = (
                sol.trace(Side::MinusInfinity),
                sol.trace(Side::PlusInfinity),
            );
            let scale = mat::max_abs(&rm).max(mat::max_abs(&rp)).max(1.0);
            for (a, b) in [(&qm, &rm), (&qp, &rp)] {
                let d = a
                    .iter()
                    .zip(b.iter())
                    .map(|(x, y)| (x - y).norm())
                    .fold(0.0, f64::max)
                    / scale;
                cross = cross.max(d);
            }
            visited.push(visit(k, &sol)?);
            sols.push((rm, rp, sol.integrated_source(), sol.diagnostics));
        }
        if cross > tol && opts.fixed_point.tolerance > 0.0 && !opts.fixed_point.allow_unconverged {
            return Err(Error::Disagreement {
                what: "read-off and quadrature boundary traces",
                discrepancy: cross,
                tolerance: tol,
            });
        }
        let v_minus = visited.pop().unwrap();
        let v_plus = visited.pop().unwrap();
        let (minus_lo, minus_hi, g_minus, d_minus) = sols.pop().unwrap();
        let (plus_lo, plus_hi, g_plus, d_plus) = sols.pop().unwrap();
        let diag = AngleDiagnostics {
            phi,
            plus: d_plus,
            minus: d_minus,
            trace_crosscheck: cross,
        };
        Ok((
            [plus_lo, plus_hi, minus_lo, minus_hi],
            [g_plus, g_minus],
            diag,
            [v_plus, v_minus],
        ))
    });
    let mut traces: Vec<BoundaryTrace> = [
        (Sign::Plus, Side::MinusInfinity),
        (Sign::Plus, Side::PlusInfinity),
        (Sign::Minus, Side::MinusInfinity),
        (Sign::Minus, Side::PlusInfinity),
    ]
    .into_iter()
    .map(|(sign, side)| BoundaryTrace {
        side,
        sign,
        data: Sinogram::zeros(grid, n_angles, m, m, SinogramKind::Functional),
    })
    .collect();
    let mut integrated = vec![Sinogram::zeros(grid, n_angles, m, m, SinogramKind::Functional); 2];
    let mut diags = Vec::with_capacity(n_angles);
    let mut visits = Vec::with_capacity(n_angles);
    for (k, r) in per_angle.into_iter().enumerate() {
        let (tr, gs, d, v) = r?;
        for (dst, src) in traces.iter_mut().zip(tr) {
            dst.data.line_mut(k).copy_from_slice(&src);
        }
        for (dst, src) in integrated.iter_mut().zip(gs) {
            dst.line_mut(k).copy_from_slice(&src);
        }
        diags.push(d);
        visits.push(v);
    }
    Ok((
        SpectralFamily {
            grid,
            m,
            coupling: field.coupling,
            angles,
            c_infinity: c_inf,
            c_infinity_diagnostics: c_inf_diag,
            traces,
            integrated,
            angle_diagnostics: diags,
            options: *opts,
        },
        visits,
    ))
}

pub fn solve_family(
    field: &GaugeField,
    n_angles: usize,
    opts: &SolverOptions,
) -> Result<SpectralFamily> {
    Ok(solve_family_visit(field, n_angles, opts, |_, _| Ok(()))?.0)
}

/// Traces of `c±` at `y1 = -∞` and `+∞`.
pub fn boundary_traces(family: &SpectralFamily, sign: Sign) -> (&BoundaryTrace, &BoundaryTrace) {
    (
        family.trace(sign, Side::MinusInfinity),
        family.trace(sign, Side::PlusInfinity),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LemmaReport {
    pub min_det: f64,
    pub max_transport_residual: f64,
    pub c_infinity_residual: f64,
    pub max_fixed_point_residual: f64,
    pub all_converged: bool,
    /// `max |c₊(x, ∞) - I|` on the outer margin `|x| >= 1.9 R`.
    pub margin_deviation: f64,
    /// Same, weighted by `|x|` (bounded for the `1/z` decay).
    pub margin_decay_constant: f64,
    pub max_trace_crosscheck: f64,
    /// Four-point Cauchy-Riemann residual in `t` of `c(x, t)` at an exterior
    /// point, when requested.
    pub analyticity_residual: Option<f64>,
}

/// Collects the solver diagnostics of a family; with `analyticity`, also
/// solves four exterior problems around `t0 = 1.6 + 0.6i`.
pub fn verify_lemma_properties(
    field: &GaugeField,
    family: &SpectralFamily,
    analyticity: bool,
) -> Result<LemmaReport> {
    let diags = family
        .angle_diagnostics
        .iter()
        .flat_map(|a| [&a.plus, &a.minus])
        .chain(std::iter::once(&family.c_infinity_diagnostics));
    let mut max_tr = 0.0f64;
    let mut max_fp = 0.0f64;
    let mut conv = true;
    for d in diags.clone() {
        max_fp = max_fp.max(d.fixed_point.final_residual());
        conv &= d.fixed_point.converged;
    }
    for a in &family.angle_diagnostics {
        max_tr = max_tr
            .max(a.plus.equation_residual)
            .max(a.minus.equation_residual);
    }
    let c = &family.c_infinity;
    let m = family.m;
    let edge = 1.9 * family.grid.radius;
    let mut dev = 0.0f64;
    let mut decay = 0.0f64;
    for idx in 0..c.grid.len() {
        let (x1, x2) = c.grid.point(idx);
        let r = x1.hypot(x2);
        if r >= edge {
            let blk = c.node(idx);
            let d = (0..m * m)
                .map(|e| (blk[e] - if e % (m + 1) == 0 { 1.0 } else { 0.0 }).norm())
                .fold(0.0, f64::max);
            dev = dev.max(d);
            decay = decay.max(d * r);
        }
    }
    let analyticity_residual = if analyticity {
        let t0 = C64::new(1.6, 0.6);
        let d = 1e-2;
        let eval = |t: C64| -> Result<MatrixField> {
            Ok(solve_c_off_circle(field, &SpectralParam::new(t)?, &family.options)?.0)
        };
        let dx = eval(t0 + d)?.sub(&eval(t0 - d)?)?;
        let dy = eval(t0 + C64::new(0.0, d))?.sub(&eval(t0 - C64::new(0.0, d))?)?;
        let scale = dx.l2_norm();
        let r = dy.sub(&dx.scale(C64::new(0.0, 1.0)))?.l2_norm();
        Some(if scale > 0.0 { r / scale } else { r })
    } else {
        None
    };
    Ok(LemmaReport {
        min_det: family.min_det(),
        max_transport_residual: max_tr,
        c_infinity_residual: family.c_infinity_diagnostics.equation_residual,
        max_fixed_point_residual: max_fp,
        all_converged: conv,
        margin_deviation: dev,
        margin_decay_constant: decay,
        max_trace_crosscheck: family
            .angle_diagnostics
            .iter()
            .map(|a| a.trace_crosscheck)
            .fold(0.0, f64::max),
        analyticity_residual,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Manifest {
    grid: GridSpec,
    m: usize,
    coupling: [f64; 2],
    n_angles: usize,
    signs: Vec<Sign>,
    options: SolverOptions,
    c_infinity_file: String,
    c_infinity: SolveDiagnostics,
    traces: Vec<TraceEntry>,
    integrated_files: Vec<String>,
    angles: Vec<AngleDiagnostics>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TraceEntry {
    sign: Sign,
    side: Side,
    file: String,
}

const MANIFEST: &str = "manifest.json";

/// Writes the family as NARF files plus `manifest.json`.
pub fn write_family(dir: impl AsRef<Path>, family: &SpectralFamily) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let c_file = "c_infinity.narf".to_string();
    narf::save(
        dir.join(&c_file),
        &NarfData::Field {
            kind: "c_infinity".into(),
            field: family.c_infinity.clone(),
        },
    )?;
    let mut entries = Vec::new();
    for t in &family.traces {
        let file = format!("c_{}_{}.narf", t.sign.name(), t.side.name());
        narf::save(dir.join(&file), &NarfData::Sinogram(t.data.clone()))?;
        entries.push(TraceEntry {
            sign: t.sign,
            side: t.side,
            file,
        });
    }
    let mut integrated_files = Vec::new();
    for (sign, g) in [Sign::Plus, Sign::Minus].iter().zip(&family.integrated) {
        let file = format!("integrated_{}.narf", sign.name());
        narf::save(dir.join(&file), &NarfData::Sinogram(g.clone()))?;
        integrated_files.push(file);
    }
    let manifest = Manifest {
        grid: family.grid,
        m: family.m,
        coupling: [family.coupling.re, family.coupling.im],
        n_angles: family.angles.len(),
        signs: vec![Sign::Plus, Sign::Minus],
        options: family.options,
        c_infinity_file: c_file,
        c_infinity: family.c_infinity_diagnostics.clone(),
        traces: entries,
        integrated_files,
        angles: family.angle_diagnostics.clone(),
    };
    fs::write(dir.join(MANIFEST), serde_json::to_string_pretty(&manifest)?)?;
    Ok(())
}

pub fn read_family(dir: impl AsRef<Path>) -> Result<SpectralFamily> {
    let dir = dir.as_ref();
    let manifest: Manifest = serde_json::from_str(&fs::read_to_string(dir.join(MANIFEST))?)?;
    let c_infinity = match narf::load(dir.join(&manifest.c_infinity_file))? {
        NarfData::Field { field, .. } => field,
        _ => return Err(Error::Format("c_infinity must be a grid field".into())),
    };
    let mut traces = Vec::new();
    for (sign, side) in [
        (Sign::Plus, Side::MinusInfinity),
        (Sign::Plus, Side::PlusInfinity),
        (Sign::Minus, Side::MinusInfinity),
        (Sign::Minus, Side::PlusInfinity),
    ] {
        let entry = manifest
            .traces
            .iter()
            .find(|e| e.sign == sign && e.side == side)
            .ok_or_else(|| {
                Error::Format(format!(
                    "manifest lacks the {} {} trace",
                    sign.name(),
                    side.name()
                ))
            })?;
        let data = match narf::load(dir.join(&entry.file))? {
            NarfData::Sinogram(s) => s,
            _ => return Err(Error::Format("traces must be sinograms".into())),
        };
        if data.n_angles() != manifest.n_angles {
            return Err(Error::Format(
                "trace angle count differs from the manifest".into(),
            ));
        }
        traces.push(BoundaryTrace { side, sign, data });
    }
    let mut integrated = Vec::new();
    for file in &manifest.integrated_files {
        match narf::load(dir.join(file))? {
            NarfData::Sinogram(s) if s.n_angles() == manifest.n_angles => integrated.push(s),
            _ => return Err(Error::Format(format!("{file} is not a matching sinogram"))),
        }
    }
    if integrated.len() != 2 {
        return Err(Error::Format(
            "manifest must list two integrated sources".into(),
        ));
    }
    Ok(SpectralFamily {
        grid: manifest.grid,
        m: manifest.m,
        coupling: C64::new(manifest.coupling[0], manifest.coupling[1]),
        angles: uniform_angles(manifest.n_angles),
        c_infinity,
        c_infinity_diagnostics: manifest.c_infinity,
        traces,
        integrated,
        angle_diagnostics: manifest.angles,
        options: manifest.options,
    })
}

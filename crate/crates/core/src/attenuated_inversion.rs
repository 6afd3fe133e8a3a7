//! Inversion of the attenuated transform `R_A f = ∫ c0⁻¹ f dy1`: boundary
//! traces `u±(-∞)` from the data, their propagation by `c0`, the contour
//! integral `I(x)` over the unit circle and `f = c₊(x,∞) ∂̄[c₊⁻¹(x,∞) I]`.

use serde::{Deserialize, Serialize};

use crate::cauchy_ops::{dbar, RieszProjector, Sign};
use crate::error::{Error, Result};
use crate::fft::DerivativeScheme;
use crate::frame::RotatedFrame;
use crate::gauge_field::{GaugeField, RayGeometry};
use crate::grid::{GridSpec, MatrixField};
use crate::mat::{self, C64, ZERO};
use crate::par;
use crate::ray_transport::{
    ExtendedLines, FieldSplines, Sinogram, SinogramKind, TransportFrame, TransportOptions,
};
use crate::spectral_solutions::{solve_family, SolverOptions, SpectralFamily};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct InversionOptions {
    pub solver: SolverOptions,
    pub transport: TransportOptions,
}

/// `u±(-∞, y2, φ)` on the extended `y2` window.
#[derive(Debug, Clone, PartialEq)]
pub struct UTraces {
    pub plus: ExtendedLines,
    pub minus: ExtendedLines,
}

impl UTraces {
    pub fn get(&self, sign: Sign) -> &ExtendedLines {
        match sign {
            Sign::Plus => &self.plus,
            Sign::Minus => &self.minus,
        }
    }

    /// `u₊(-∞) - u₋(-∞)`.
    pub fn difference(&self) -> ExtendedLines {
        self.plus.sub(&self.minus).expect("traces share a layout")
    }

    /// The traces restricted to the sinogram offsets.
    pub fn central(&self, sign: Sign) -> Sinogram {
        self.get(sign).central(SinogramKind::Functional)
    }
}

fn check_layout(data: &Sinogram, family: &SpectralFamily) -> Result<()> {
    if data.kind != SinogramKind::Attenuated {
        return Err(Error::InvalidArgument(
            "data must hold the attenuated transform".into(),
        ));
    }
    if data.grid != family.grid || data.n_angles() != family.angles.len() || data.rows != family.m {
        return Err(Error::Shape(
            "data and spectral family use different grids, angles or m".into(),
        ));
    }
    Ok(())
}

/// `u±(-∞) = -c±(-∞) Π^∓[c±⁻¹(-∞) R_A f]` with the projections in `y2`.
pub fn u_traces_from_data(data: &Sinogram, family: &SpectralFamily) -> Result<UTraces> {
    check_layout(data, family)?;
    let grid = data.grid;
    let (m, k) = (data.rows, data.cols);
    let n = grid.n;
    let extend = RotatedFrame::new(grid, 0.0, 1).ext;
    let riesz = RieszProjector::new(n, extend);
    let width = riesz.n_out();
    let lines: Vec<Result<[Vec<C64>; 2]>> = par::map(data.n_angles(), |a| {
        let rf = data.line(a);
        let mut out: [Vec<C64>; 2] = [Vec::new(), Vec::new()];
        for (slot, sign) in [Sign::Plus, Sign::Minus].into_iter().enumerate() {
            let (lo, _) = family.traces_on(sign, a, &riesz);
            let mut w = vec![ZERO; n * m * k];
            let mut inv = vec![ZERO; m * m];
            for o in 0..n {
                let c = &lo[(extend + o) * m * m..(extend + o + 1) * m * m];
                mat::inverse_into(c, &mut inv, m).map_err(|_| Error::SingularAt {
                    context: "inverting c(-∞) for the u traces",
                    node: a * n + o,
                })?;
                mat::mul_into(
                    &inv,
                    &rf[o * m * k..(o + 1) * m * k],
                    &mut w[o * m * k..(o + 1) * m * k],
                    m,
                    m,
                    k,
                );
            }
            let mut proj = vec![ZERO; width * m * k];
            riesz.project_block(&w, m * k, sign.opposite(), &mut proj);
            let mut u = vec![ZERO; width * m * k];
            for o in 0..width {
                let c = &lo[o * m * m..(o + 1) * m * m];
                let dst = &mut u[o * m * k..(o + 1) * m * k];
                mat::mul_into(c, &proj[o * m * k..(o + 1) * m * k], dst, m, m, k);
                for v in dst.iter_mut() {
                    *v = -*v;
                }
            }
            out[slot] = u;
        }
        Ok(out)
    });
    let mut plus = Vec::with_capacity(data.n_angles());
    let mut minus = Vec::with_capacity(data.n_angles());
    for l in lines {
        let [p, q] = l?;
        plus.push(p);
        minus.push(q);
    }
    let lines = |v| ExtendedLines::from_lines(grid, data.angles.clone(), m, k, extend, v);
    Ok(UTraces {
        plus: lines(plus)?,
        minus: lines(minus)?,
    })
}

/// `(u₊ - u₋)(x, e^{iφ}) = c0(x, θ) [u₊ - u₋](-∞, x·ν)` on the grid for
/// angle index `angle` of the trace difference `diff`, given `c0` there.
pub fn u_difference_field(diff: &ExtendedLines, angle: usize, c0: &TransportFrame) -> MatrixField {
    let grid = diff.grid;
    let (m, k) = (diff.rows, diff.cols);
    let line = diff.spline(angle);
    let phi = diff.angles[angle];
    let mut out = MatrixField::zeros(grid, m, k);
    let mut du = vec![ZERO; m * k];
    let mut c = vec![ZERO; m * m];
    for idx in 0..grid.len() {
        let (x1, x2) = grid.point(idx);
        let (y1, y2) = RayGeometry::coordinates(phi, x1, x2);
        line.eval_clamped(y2, &mut du);
        c0.eval(y1, y2, &mut c);
        mat::mul_into(&c, &du, out.node_mut(idx), m, m, k);
    }
    out
}

/// `I(x) = (1/2πi) ∮ (u₊ - u₋) dt ≈ (1/N) Σ_φ (u₊ - u₋)(x, e^{iφ}) e^{iφ}`
/// over `N` uniform angles.
pub fn contour_integral<'a>(
    diffs: impl IntoIterator<Item = (f64, &'a MatrixField)>,
    n_angles: usize,
) -> Result<MatrixField> {
    let mut acc: Option<MatrixField> = None;
    for (phi, d) in diffs {
        let w = C64::from_polar(1.0 / n_angles as f64, phi);
        acc = Some(match acc {
            None => d.scale(w),
            Some(a) => a.combine(C64::new(1.0, 0.0), d, w)?,
        });
    }
    acc.ok_or_else(|| Error::InvalidArgument("no angles".into()))
}

/// `f = c₊(x,∞) ∂̄[c₊⁻¹(x,∞) I(x)]`.
pub fn reconstruct_source(i_field: &MatrixField, c_inf: &MatrixField) -> Result<MatrixField> {
    let inv = c_inf.inverse()?;
    let inner = inv.matmul(i_field)?;
    c_inf.matmul(&dbar(&inner, DerivativeScheme::FiniteDifference))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InversionDiagnostics {
    pub n_angles: usize,
    pub max_u_plus: f64,
    pub max_u_minus: f64,
    pub min_det_family: f64,
    /// `|I_N - I_{N/2}| / |I_N|`, with `I_{N/2}` from every other angle.
    pub contour_refinement: f64,
    pub c_infinity_iterations: usize,
    pub max_condition_c_infinity: f64,
}

#[derive(Debug, Clone)]
pub struct Inversion {
    pub family: SpectralFamily,
    pub u: UTraces,
    pub i_field: MatrixField,
    pub f_hat: MatrixField,
    pub diagnostics: InversionDiagnostics,
}

/// Contour sums `(1/N) Σ F_a e^{iφ_a}` over all angles and over the
/// even-indexed half, with `F_a` built in parallel chunks.
pub(crate) fn contour_sums(
    grid: GridSpec,
    angles: &[f64],
    rows: usize,
    cols: usize,
    field_at: impl Fn(usize) -> Result<MatrixField> + Sync,
) -> Result<(MatrixField, MatrixField)> {
    let n_angles = angles.len();
    let mut full = MatrixField::zeros(grid, rows, cols);
    let mut half = MatrixField::zeros(grid, rows, cols);
    let nh = n_angles.div_ceil(2) as f64;
    let chunk = 16;
    for start in (0..n_angles).step_by(chunk) {
        let count = chunk.min(n_angles - start);
        let parts: Vec<Result<MatrixField>> = par::map(count, |j| field_at(start + j));
        for (j, p) in parts.into_iter().enumerate() {
            let a = start + j;
            let d = p?;
            let w = C64::from_polar(1.0, angles[a]);
            for (f, v) in full.values.iter_mut().zip(&d.values) {
                *f += w * v / n_angles as f64;
            }
            if a % 2 == 0 {
                for (f, v) in half.values.iter_mut().zip(&d.values) {
                    *f += w * v / nh;
                }
            }
        }
    }
    Ok((full, half))
}

fn contour_from_traces(
    field: &GaugeField,
    u: &UTraces,
    opts: &TransportOptions,
) -> Result<(MatrixField, MatrixField)> {
    let splines = FieldSplines::new(field);
    let diff = u.difference();
    contour_sums(diff.grid, &diff.angles, diff.rows, diff.cols, |a| {
        let c0 = TransportFrame::new(&splines, diff.angles[a], opts)?;
        Ok(u_difference_field(&diff, a, &c0))
    })
}

/// Recovers `f` from `R_A f` for a known field: traces, propagation,
/// contour integral and the `t = ∞` residue.
pub fn invert_attenuated(
    field: &GaugeField,
    data: &Sinogram,
    opts: &InversionOptions,
) -> Result<Inversion> {
    let family = solve_family(field, data.n_angles(), &opts.solver)?;
    invert_with_family(field, data, family, opts)
}

/// As [`invert_attenuated`] with a precomputed family.
pub fn invert_with_family(
    field: &GaugeField,
    data: &Sinogram,
    family: SpectralFamily,
    opts: &InversionOptions,
) -> Result<Inversion> {
    if field.grid() != data.grid || field.m() != data.rows {
        return Err(Error::Shape("field and data disagree on grid or m".into()));
    }
    let u = u_traces_from_data(data, &family)?;
    let (i_field, i_half) = contour_from_traces(field, &u, &opts.transport)?;
    if !i_field.is_finite() {
        return Err(Error::Disagreement {
            what: "contour integral finiteness",
            discrepancy: f64::INFINITY,
            tolerance: 0.0,
        });
    }
    let f_hat = reconstruct_source(&i_field, &family.c_infinity)?;
    let norm = i_field.l2_norm();
    let refinement = if norm > 0.0 {
        i_half.sub(&i_field)?.l2_norm() / norm
    } else {
        0.0
    };
    let m = family.m;
    let cond = family
        .c_infinity
        .values
        .chunks(m * m)
        .map(|b| mat::condition_number(b, m))
        .fold(0.0, f64::max);
    if cond > 1e6 {
        log::warn!("c(x, ∞) is ill-conditioned: condition number {cond:.3e}");
    }
    let diagnostics = InversionDiagnostics {
        n_angles: data.n_angles(),
        max_u_plus: u.plus.max_norm(),
        max_u_minus: u.minus.max_norm(),
        min_det_family: family.min_det(),
        contour_refinement: refinement,
        c_infinity_iterations: family.c_infinity_diagnostics.fixed_point.iterations,
        max_condition_c_infinity: cond,
    };
    Ok(Inversion {
        family,
        u,
        i_field,
        f_hat,
        diagnostics,
    })
}

//! Matrix transport along straight lines: the non-abelian Radon transform,
//! the attenuated transform and the scalar closed form.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gauge_field::{nu, theta, GaugeField, RayGeometry};
use crate::grid::{GridSpec, MatrixField};
use crate::mat::{self, C64, ZERO};
use crate::par;
use crate::spline::{SplineField, SplineLine, SplineRect};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SinogramKind {
    /// `S(A)`.
    ScatteringData,
    /// `R_A f`.
    Attenuated,
    /// Line functionals (`I±`, `J±`) and boundary traces.
    Functional,
}

impl SinogramKind {
    pub fn name(self) -> &'static str {
        match self {
            SinogramKind::ScatteringData => "scattering_data",
            SinogramKind::Attenuated => "attenuated",
            SinogramKind::Functional => "functional",
        }
    }
}

/// Matrix samples on (angle, offset). Offsets are uniform on
/// `[-half_extent, half_extent]`; angles are uniform on `[0, 2π)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Sinogram {
    pub grid: GridSpec,
    pub offsets: Vec<f64>,
    pub angles: Vec<f64>,
    pub rows: usize,
    pub cols: usize,
    /// `values[((a * offsets.len()) + o) * rows * cols ..]`.
    pub values: Vec<C64>,
    pub kind: SinogramKind,
}

/// `count` uniform angles on `[0, 2π)`.
pub fn uniform_angles(count: usize) -> Vec<f64> {
    (0..count).map(|k| TAU * k as f64 / count as f64).collect()
}

/// Offsets matching the spatial grid coordinates.
pub fn default_offsets(grid: GridSpec) -> Vec<f64> {
    (0..grid.n).map(|i| grid.coord(i)).collect()
}

impl Sinogram {
    pub fn zeros(
        grid: GridSpec,
        n_angles: usize,
        rows: usize,
        cols: usize,
        kind: SinogramKind,
    ) -> Self {
        let offsets = default_offsets(grid);
        let values = vec![ZERO; offsets.len() * n_angles * rows * cols];
        Self {
            grid,
            offsets,
            angles: uniform_angles(n_angles),
            rows,
            cols,
            values,
            kind,
        }
    }

    pub fn identity(grid: GridSpec, n_angles: usize, m: usize, kind: SinogramKind) -> Self {
        let mut s = Self::zeros(grid, n_angles, m, m, kind);
        for blk in s.values.chunks_mut(m * m) {
            mat::identity_into(blk, m);
        }
        s
    }

    pub fn block(&self) -> usize {
        self.rows * self.cols
    }

    pub fn n_offsets(&self) -> usize {
        self.offsets.len()
    }

    pub fn n_angles(&self) -> usize {
        self.angles.len()
    }

    pub fn at(&self, angle: usize, offset: usize) -> &[C64] {
        let b = self.block();
        let i = (angle * self.n_offsets() + offset) * b;
        &self.values[i..i + b]
    }

    pub fn at_mut(&mut self, angle: usize, offset: usize) -> &mut [C64] {
        let b = self.block();
        let i = (angle * self.n_offsets() + offset) * b;
        &mut self.values[i..i + b]
    }

    /// All offsets at one angle, contiguous.
    pub fn line(&self, angle: usize) -> &[C64] {
        let l = self.n_offsets() * self.block();
        &self.values[angle * l..(angle + 1) * l]
    }

    pub fn line_mut(&mut self, angle: usize) -> &mut [C64] {
        let l = self.n_offsets() * self.block();
        &mut self.values[angle * l..(angle + 1) * l]
    }

    pub fn with_kind(mut self, kind: SinogramKind) -> Self {
        self.kind = kind;
        self
    }

    pub fn same_layout(&self, other: &Self) -> bool {
        self.offsets.len() == other.offsets.len()
            && self.angles.len() == other.angles.len()
            && self.rows == other.rows
            && self.cols == other.cols
    }

    pub fn max_norm(&self) -> f64 {
        mat::max_abs(&self.values)
    }

    /// Largest entrywise difference.
    pub fn max_difference(&self, other: &Self) -> Result<f64> {
        if !self.same_layout(other) {
            return Err(Error::Shape("sinogram layouts differ".into()));
        }
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .fold(0.0, |acc, (a, b)| acc.max((a - b).norm())))
    }

    /// `max |self - other| / max |other|`.
    pub fn max_relative_difference(&self, other: &Self) -> Result<f64> {
        Ok(self.max_difference(other)? / other.max_norm().max(f64::MIN_POSITIVE))
    }

    pub fn map_blocks(
        &self,
        rows: usize,
        cols: usize,
        mut f: impl FnMut(&[C64], &mut [C64]),
    ) -> Self {
        let mut out = Self {
            grid: self.grid,
            offsets: self.offsets.clone(),
            angles: self.angles.clone(),
            rows,
            cols,
            values: vec![ZERO; self.n_offsets() * self.n_angles() * rows * cols],
            kind: self.kind,
        };
        let (bi, bo) = (self.block(), rows * cols);
        for (src, dst) in self.values.chunks(bi).zip(out.values.chunks_mut(bo)) {
            f(src, dst);
        }
        out
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        if !self.same_layout(other) {
            return Err(Error::Shape("sinogram layouts differ".into()));
        }
        let mut out = self.clone();
        for (a, b) in out.values.iter_mut().zip(&other.values) {
            *a -= b;
        }
        Ok(out)
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

/// Matrix line data like a [`Sinogram`], with `extend` extra `y2` nodes
/// on each side of the offsets so that every grid point, corners
/// included, projects inside the line.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtendedLines {
    pub grid: GridSpec,
    pub angles: Vec<f64>,
    pub rows: usize,
    pub cols: usize,
    pub extend: usize,
    /// `[angle][y2][entry]`.
    pub values: Vec<C64>,
}

impl ExtendedLines {
    pub fn zeros(
        grid: GridSpec,
        angles: Vec<f64>,
        rows: usize,
        cols: usize,
        extend: usize,
    ) -> Self {
        let len = angles.len() * (grid.n + 2 * extend) * rows * cols;
        Self {
            grid,
            angles,
            rows,
            cols,
            extend,
            values: vec![ZERO; len],
        }
    }

    pub fn block(&self) -> usize {
        self.rows * self.cols
    }

    /// Nodes per line.
    pub fn width(&self) -> usize {
        self.grid.n + 2 * self.extend
    }

    pub fn n_angles(&self) -> usize {
        self.angles.len()
    }

    /// `y2` of the first node.
    pub fn start(&self) -> f64 {
        -self.grid.half_extent - self.extend as f64 * self.grid.spacing()
    }

    pub fn line(&self, angle: usize) -> &[C64] {
        let l = self.width() * self.block();
        &self.values[angle * l..(angle + 1) * l]
    }

    pub fn line_mut(&mut self, angle: usize) -> &mut [C64] {
        let l = self.width() * self.block();
        &mut self.values[angle * l..(angle + 1) * l]
    }

    /// Builds from per-angle lines of `width()` blocks.
    pub fn from_lines(
        grid: GridSpec,
        angles: Vec<f64>,
        rows: usize,
        cols: usize,
        extend: usize,
        lines: Vec<Vec<C64>>,
    ) -> Result<Self> {
        let mut out = Self::zeros(grid, angles, rows, cols, extend);
        if lines.len() != out.n_angles() {
            return Err(Error::Shape("one line per angle is required".into()));
        }
        let l = out.width() * out.block();
        for (a, line) in lines.into_iter().enumerate() {
            if line.len() != l {
                return Err(Error::Shape("line length does not match the window".into()));
            }
            out.line_mut(a).copy_from_slice(&line);
        }
        Ok(out)
    }

    /// The part on the sinogram offsets.
    pub fn central(&self, kind: SinogramKind) -> Sinogram {
        let b = self.block();
        let mut s = Sinogram::zeros(self.grid, self.n_angles(), self.rows, self.cols, kind);
        s.angles = self.angles.clone();
        for a in 0..self.n_angles() {
            let src = &self.line(a)[self.extend * b..(self.extend + self.grid.n) * b];
            s.line_mut(a).copy_from_slice(src);
        }
        s
    }

    /// Cubic spline in `y2` through line `angle`.
    pub fn spline(&self, angle: usize) -> SplineLine {
        SplineLine::new(
            self.start(),
            self.grid.spacing(),
            self.block(),
            self.line(angle),
        )
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        if self.values.len() != other.values.len() || self.block() != other.block() {
            return Err(Error::Shape("line layouts differ".into()));
        }
        let mut out = self.clone();
        for (a, b) in out.values.iter_mut().zip(&other.values) {
            *a -= b;
        }
        Ok(out)
    }

    pub fn max_norm(&self) -> f64 {
        mat::max_abs(&self.values)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Integrator {
    /// Classical fourth-order Runge-Kutta.
    #[default]
    Rk4,
    /// Exponential midpoint rule (second-order Magnus).
    Magnus2,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TransportOptions {
    pub integrator: Integrator,
    /// Ray step as a fraction of the grid spacing (at most 1).
    pub step_fraction: f64,
}

impl Default for TransportOptions {
    fn default() -> Self {
        Self {
            integrator: Integrator::Rk4,
            step_fraction: 0.5,
        }
    }
}

impl TransportOptions {
    fn steps(&self, grid: GridSpec) -> Result<usize> {
        if !(self.step_fraction > 0.0 && self.step_fraction <= 1.0) {
            return Err(Error::InvalidArgument(
                "ray step must be positive and at most the grid spacing".into(),
            ));
        }
        let target = grid.spacing() * self.step_fraction;
        Ok(((2.0 * grid.half_extent / target) - 1e-9).ceil() as usize)
    }
}

/// Splines of `(A1, A2, A0)`, combined per angle into the ray field.
#[derive(Debug, Clone)]
pub struct FieldSplines {
    pub grid: GridSpec,
    pub m: usize,
    coupling: C64,
    parts: [SplineField; 3],
}

impl FieldSplines {
    pub fn new(field: &GaugeField) -> Self {
        Self {
            grid: field.grid(),
            m: field.m(),
            coupling: field.coupling,
            parts: [
                SplineField::new(&field.a1),
                SplineField::new(&field.a2),
                SplineField::new(&field.a0),
            ],
        }
    }

    /// Spline of `coupling * (A1 θ1 + A2 θ2 + A0)`.
    pub fn along(&self, phi: f64) -> SplineField {
        let t = theta(phi);
        let mut s = SplineField::zeros(self.grid, self.m, self.m);
        let k = self.coupling;
        s.add_scaled(&self.parts[0], k * t[0]);
        s.add_scaled(&self.parts[1], k * t[1]);
        s.add_scaled(&self.parts[2], k);
        s
    }
}

/// Samples of a transport solution along one ray.
#[derive(Debug, Clone, PartialEq)]
pub struct RaySolution {
    pub y1: Vec<f64>,
    pub m: usize,
    /// `c0` at every `y1` sample, `m x m` blocks.
    pub c0: Vec<C64>,
    /// `u = c0 ∫ c0⁻¹ f` at every sample when a source was given, `m x k` blocks.
    pub u: Option<Vec<C64>>,
    pub k: usize,
}

impl RaySolution {
    pub fn c0_at(&self, i: usize) -> &[C64] {
        let b = self.m * self.m;
        &self.c0[i * b..(i + 1) * b]
    }

    pub fn exit(&self) -> &[C64] {
        self.c0_at(self.y1.len() - 1)
    }
}

/// State of the augmented system `c' = A c`, `w' = -w A`, `v' = w f`.
struct RayEnd {
    c: Vec<C64>,
    v: Vec<C64>,
}

/// One ray integration. `record` receives `(step index, c, w, v)` after
/// each step (and index 0 for the initial state).
#[allow(clippy::too_many_arguments)]
fn integrate(
    a: &SplineField,
    f: Option<&SplineField>,
    phi: f64,
    y2: f64,
    half: f64,
    steps: usize,
    integrator: Integrator,
    need_c: bool,
    mut record: impl FnMut(usize, &[C64], &[C64], &[C64]),
) -> RayEnd {
    let m = a.rows;
    let mm = m * m;
    let k = f.map_or(0, |f| f.cols);
    let mk = m * k;
    let th = theta(phi);
    let nv = nu(phi);
    let s = 2.0 * half / steps as f64;
    let pos = |y1: f64| (y1 * th[0] + y2 * nv[0], y1 * th[1] + y2 * nv[1]);
    let need_w = f.is_some();

    let mut c = vec![ZERO; mm];
    mat::identity_into(&mut c, m);
    let mut w = c.clone();
    let mut v = vec![ZERO; mk];
    record(0, &c, &w, &v);

    let mut a0 = vec![ZERO; mm];
    let mut am = vec![ZERO; mm];
    let mut a1 = vec![ZERO; mm];
    let mut f0 = vec![ZERO; mk];
    let mut fm = vec![ZERO; mk];
    let mut f1 = vec![ZERO; mk];
    let (x, y) = pos(-half);
    a.eval(x, y, &mut a0);
    if let Some(f) = f {
        f.eval(x, y, &mut f0);
    }
    let mut tmp = vec![ZERO; mm];
    let mut k1 = vec![ZERO; mm];
    let mut k2 = vec![ZERO; mm];
    let mut k3 = vec![ZERO; mm];
    let mut k4 = vec![ZERO; mm];
    let mut l1 = vec![ZERO; mm];
    let mut l2 = vec![ZERO; mm];
    let mut l3 = vec![ZERO; mm];
    let mut l4 = vec![ZERO; mm];
    let mut wt = vec![ZERO; mm];
    let mut e = vec![ZERO; mm];
    let mut ev = vec![ZERO; mk];
    for step in 0..steps {
        let y0 = -half + step as f64 * s;
        let (x, y) = pos(y0 + 0.5 * s);
        a.eval(x, y, &mut am);
        let (x, y) = pos(y0 + s);
        a.eval(x, y, &mut a1);
        if let Some(f) = f {
            let (x, y) = pos(y0 + 0.5 * s);
            f.eval(x, y, &mut fm);
            let (x, y) = pos(y0 + s);
            f.eval(x, y, &mut f1);
        }
        let zero = a0.iter().chain(&am).chain(&a1).all(|v| *v == ZERO)
            && f0.iter().chain(&fm).chain(&f1).all(|v| *v == ZERO);
        if !zero {
            match integrator {
                Integrator::Rk4 => {
                    if need_c {
                        mat::mul_into(&a0, &c, &mut k1, m, m, m);
                        axpy(&c, &k1, 0.5 * s, &mut tmp);
                        mat::mul_into(&am, &tmp, &mut k2, m, m, m);
                        axpy(&c, &k2, 0.5 * s, &mut tmp);
                        mat::mul_into(&am, &tmp, &mut k3, m, m, m);
                        axpy(&c, &k3, s, &mut tmp);
                        mat::mul_into(&a1, &tmp, &mut k4, m, m, m);
                        rk_combine(&mut c, &k1, &k2, &k3, &k4, s);
                    }
                    if need_w {
                        // w' = -w A and v' = w f share the stages
                        let fv = (&f0, &fm, &f1);
                        mat::mul_into(&w, &a0, &mut l1, m, m, m);
                        neg(&mut l1);
                        mat::mul_into(&w, fv.0, &mut ev, m, m, k);
                        let mut dv = ev.clone();
                        axpy(&w, &l1, 0.5 * s, &mut wt);
                        mat::mul_into(&wt, &am, &mut l2, m, m, m);
                        neg(&mut l2);
                        mat::mul_into(&wt, fv.1, &mut ev, m, m, k);
                        acc(&mut dv, &ev, 2.0);
                        axpy(&w, &l2, 0.5 * s, &mut wt);
                        mat::mul_into(&wt, &am, &mut l3, m, m, m);
                        neg(&mut l3);
                        mat::mul_into(&wt, fv.1, &mut ev, m, m, k);
                        acc(&mut dv, &ev, 2.0);
                        axpy(&w, &l3, s, &mut wt);
                        mat::mul_into(&wt, &a1, &mut l4, m, m, m);
                        neg(&mut l4);
                        mat::mul_into(&wt, fv.2, &mut ev, m, m, k);
                        acc(&mut dv, &ev, 1.0);
                        rk_combine(&mut w, &l1, &l2, &l3, &l4, s);
                        acc(&mut v, &dv, s / 6.0);
                    }
                }
                Integrator::Magnus2 => {
                    for (t, v) in tmp.iter_mut().zip(&am) {
                        *t = v * s;
                    }
                    mat::expm_into(&tmp, &mut e, m);
                    if need_c {
                        mat::mul_into(&e, &c, &mut k1, m, m, m);
                        c.copy_from_slice(&k1);
                    }
                    if need_w {
                        for t in tmp.iter_mut() {
                            *t *= -0.5;
                        }
                        mat::expm_into(&tmp, &mut k2, m);
                        mat::mul_into(&w, &k2, &mut wt, m, m, m);
                        mat::mul_into(&wt, &fm, &mut ev, m, m, k);
                        acc(&mut v, &ev, s);
                        mat::mul_into(&wt, &k2, &mut w, m, m, m);
                    }
                }
            }
        }
        record(step + 1, &c, &w, &v);
        std::mem::swap(&mut a0, &mut a1);
        std::mem::swap(&mut f0, &mut f1);
    }
    RayEnd { c, v }
}

#[inline]
fn axpy(x: &[C64], d: &[C64], s: f64, out: &mut [C64]) {
    for ((o, a), b) in out.iter_mut().zip(x).zip(d) {
        *o = a + b * s;
    }
}

#[inline]
fn acc(out: &mut [C64], d: &[C64], s: f64) {
    for (o, b) in out.iter_mut().zip(d) {
        *o += b * s;
    }
}

#[inline]
fn neg(x: &mut [C64]) {
    for v in x.iter_mut() {
        *v = -*v;
    }
}

#[inline]
fn rk_combine(x: &mut [C64], k1: &[C64], k2: &[C64], k3: &[C64], k4: &[C64], s: f64) {
    let w = s / 6.0;
    for i in 0..x.len() {
        x[i] += (k1[i] + (k2[i] + k3[i]) * 2.0 + k4[i]) * w;
    }
}

fn check_source(field: &GaugeField, f: &MatrixField) -> Result<()> {
    if f.grid != field.grid() || f.rows != field.m() {
        return Err(Error::Shape(
            "source must share the grid and have m rows".into(),
        ));
    }
    f.check_support(crate::grid::SUPPORT_TOLERANCE)
}

/// Solves `θ·∂c0 = A(x,θ) c0` along a ray with `c0 = I` at the entry point,
/// and optionally `u = c0 ∫ c0⁻¹ f`.
pub fn transport_solve(
    field: &GaugeField,
    ray: &RayGeometry,
    rhs: Option<&MatrixField>,
    opts: &TransportOptions,
) -> Result<RaySolution> {
    let grid = field.grid();
    if let Some(f) = rhs {
        check_source(field, f)?;
    }
    if ray.samples < 2 || ray.y1_step > grid.spacing() * (1.0 + 1e-12) {
        return Err(Error::InvalidArgument(
            "ray step must not exceed the grid spacing".into(),
        ));
    }
    let half = -ray.y1_start;
    let steps = ray.samples - 1;
    let a = FieldSplines::new(field).along(ray.phi);
    let fs = rhs.map(SplineField::new);
    let m = field.m();
    let k = rhs.map_or(0, |f| f.cols);
    let mut c0 = Vec::with_capacity(ray.samples * m * m);
    let mut u = rhs.map(|_| Vec::with_capacity(ray.samples * m * k));
    let mut tmp = vec![ZERO; m * k];
    integrate(
        &a,
        fs.as_ref(),
        ray.phi,
        ray.y2,
        half,
        steps,
        opts.integrator,
        true,
        |_, c, _, v| {
            c0.extend_from_slice(c);
            if let Some(u) = u.as_mut() {
                mat::mul_into(c, v, &mut tmp, m, m, k);
                u.extend_from_slice(&tmp);
            }
        },
    );
    Ok(RaySolution {
        y1: (0..ray.samples).map(|i| ray.y1(i)).collect(),
        m,
        c0,
        u,
        k,
    })
}

/// `S(A)(y2, φ)`: the transport matrix at the exit point of every ray.
pub fn nonabelian_radon(
    field: &GaugeField,
    n_angles: usize,
    opts: &TransportOptions,
) -> Result<Sinogram> {
    let grid = field.grid();
    let steps = opts.steps(grid)?;
    let m = field.m();
    let mut sino = Sinogram::identity(grid, n_angles, m, SinogramKind::ScatteringData);
    let fs = FieldSplines::new(field);
    let angles = sino.angles.clone();
    let offsets = sino.offsets.clone();
    let per_angle: Vec<Vec<C64>> = par::map(n_angles, |ai| {
        let a = fs.along(angles[ai]);
        let mut line = Vec::with_capacity(offsets.len() * m * m);
        for &y2 in &offsets {
            if y2.abs() >= grid.radius + 2.0 * grid.spacing() {
                let mut id = vec![ZERO; m * m];
                mat::identity_into(&mut id, m);
                line.extend_from_slice(&id);
                continue;
            }
            let end = integrate(
                &a,
                None,
                angles[ai],
                y2,
                grid.half_extent,
                steps,
                opts.integrator,
                true,
                |_, _, _, _| {},
            );
            line.extend_from_slice(&end.c);
        }
        line
    });
    for (ai, line) in per_angle.into_iter().enumerate() {
        sino.line_mut(ai).copy_from_slice(&line);
    }
    Ok(sino)
}

/// `det c0` at the exit and `exp(∫ tr A dy1)` for every ray, the latter by
/// exact segment quadrature of the interpolated field.
pub fn determinant_check(
    field: &GaugeField,
    n_angles: usize,
    opts: &TransportOptions,
) -> Result<Vec<(C64, C64)>> {
    let grid = field.grid();
    let steps = opts.steps(grid)?;
    let m = field.m();
    let fs = FieldSplines::new(field);
    let angles = uniform_angles(n_angles);
    let offsets = default_offsets(grid);
    let nested: Vec<Vec<(C64, C64)>> = par::map(n_angles, |ai| {
        let phi = angles[ai];
        let a = fs.along(phi);
        let (th, nv) = (theta(phi), nu(phi));
        let h = grid.half_extent;
        let mut integral = vec![ZERO; m * m];
        offsets
            .iter()
            .map(|&y2| {
                let end = integrate(
                    &a,
                    None,
                    phi,
                    y2,
                    h,
                    steps,
                    opts.integrator,
                    true,
                    |_, _, _, _| {},
                );
                let p0 = [-h * th[0] + y2 * nv[0], -h * th[1] + y2 * nv[1]];
                let p1 = [h * th[0] + y2 * nv[0], h * th[1] + y2 * nv[1]];
                a.integrate_segment(p0, p1, &mut integral);
                let tr: C64 = (0..m).map(|i| integral[i * m + i]).sum();
                (mat::det(&end.c, m), tr.exp())
            })
            .collect()
    });
    Ok(nested.into_iter().flatten().collect())
}

/// `R_A f (y2, φ) = ∫ c0⁻¹ f dy1`.
pub fn attenuated_radon(
    field: &GaugeField,
    f: &MatrixField,
    n_angles: usize,
    opts: &TransportOptions,
) -> Result<Sinogram> {
    check_source(field, f)?;
    let grid = field.grid();
    let steps = opts.steps(grid)?;
    let m = field.m();
    let k = f.cols;
    let mut sino = Sinogram::zeros(grid, n_angles, m, k, SinogramKind::Attenuated);
    let fs = FieldSplines::new(field);
    let src = SplineField::new(f);
    let angles = sino.angles.clone();
    let offsets = sino.offsets.clone();
    let per_angle: Vec<Vec<C64>> = par::map(n_angles, |ai| {
        let a = fs.along(angles[ai]);
        let mut line = Vec::with_capacity(offsets.len() * m * k);
        for &y2 in &offsets {
            if y2.abs() >= grid.radius + 2.0 * grid.spacing() {
                line.extend(std::iter::repeat_n(ZERO, m * k));
                continue;
            }
            let end = integrate(
                &a,
                Some(&src),
                angles[ai],
                y2,
                grid.half_extent,
                steps,
                opts.integrator,
                false,
                |_, _, _, _| {},
            );
            line.extend_from_slice(&end.v);
        }
        line
    });
    for (ai, line) in per_angle.into_iter().enumerate() {
        sino.line_mut(ai).copy_from_slice(&line);
    }
    Ok(sino)
}

/// Scalar fields only: `exp(R(A))` with the line integrals of the
/// interpolated field computed by exact segment quadrature.
pub fn abelian_closed_form(field: &GaugeField, n_angles: usize) -> Result<Sinogram> {
    if field.m() != 1 {
        return Err(Error::InvalidArgument("the closed form needs m = 1".into()));
    }
    let grid = field.grid();
    let mut sino = Sinogram::identity(grid, n_angles, 1, SinogramKind::ScatteringData);
    let fs = FieldSplines::new(field);
    let angles = sino.angles.clone();
    let offsets = sino.offsets.clone();
    let h = grid.half_extent;
    let lines: Vec<Vec<C64>> = par::map(n_angles, |ai| {
        let phi = angles[ai];
        let a = fs.along(phi);
        let (th, nv) = (theta(phi), nu(phi));
        let mut out = [ZERO];
        offsets
            .iter()
            .map(|&y2| {
                let p0 = [-h * th[0] + y2 * nv[0], -h * th[1] + y2 * nv[1]];
                let p1 = [h * th[0] + y2 * nv[0], h * th[1] + y2 * nv[1]];
                a.integrate_segment(p0, p1, &mut out);
                out[0].exp()
            })
            .collect()
    });
    for (ai, line) in lines.into_iter().enumerate() {
        sino.line_mut(ai).copy_from_slice(&line);
    }
    Ok(sino)
}

/// `c0(x, θ(φ))` on a rotated lattice: `y1` at the ray steps, `y2` at the
/// given offsets. Beyond the sampled range the solution is constant in
/// `y1` and equal to `I` in `y2`, so clamped evaluation is exact there.
#[derive(Debug, Clone)]
pub struct TransportFrame {
    pub phi: f64,
    pub m: usize,
    spline: SplineRect,
    y2_max: f64,
}

impl TransportFrame {
    pub fn new(splines: &FieldSplines, phi: f64, opts: &TransportOptions) -> Result<Self> {
        let grid = splines.grid;
        let steps = opts.steps(grid)?;
        let m = splines.m;
        let mm = m * m;
        let a = splines.along(phi);
        let h = grid.spacing();
        // offsets cover the support plus a spline halo
        let half_count = ((grid.radius / h).ceil() as usize) + 3;
        let n2 = 2 * half_count + 1;
        let y2s: Vec<f64> = (0..n2)
            .map(|i| (i as f64 - half_count as f64) * h)
            .collect();
        let n1 = steps + 1;
        let rows: Vec<Vec<C64>> = y2s
            .iter()
            .map(|&y2| {
                let mut row = vec![ZERO; n1 * mm];
                integrate(
                    &a,
                    None,
                    phi,
                    y2,
                    grid.half_extent,
                    steps,
                    opts.integrator,
                    true,
                    |i, c, _, _| {
                        row[i * mm..(i + 1) * mm].copy_from_slice(c);
                    },
                );
                row
            })
            .collect();
        let values: Vec<C64> = rows.into_iter().flatten().collect();
        let s = 2.0 * grid.half_extent / steps as f64;
        Ok(Self {
            phi,
            m,
            spline: SplineRect::new(n1, n2, [-grid.half_extent, y2s[0]], [s, h], mm, values),
            y2_max: y2s[n2 - 1],
        })
    }

    /// `c0` at ray coordinates.
    pub fn eval(&self, y1: f64, y2: f64, out: &mut [C64]) {
        if y2.abs() > self.y2_max {
            mat::identity_into(out, self.m);
            return;
        }
        self.spline.eval_clamped(y1, y2, out);
    }

    /// `c0(x, θ)` on the spatial grid.
    pub fn to_field(&self, grid: GridSpec) -> MatrixField {
        let mut out = MatrixField::zeros(grid, self.m, self.m);
        for idx in 0..grid.len() {
            let (x1, x2) = grid.point(idx);
            let (y1, y2) = RayGeometry::coordinates(self.phi, x1, x2);
            self.eval(y1, y2, out.node_mut(idx));
        }
        out
    }
}

/// Identity check helper for sinograms of `S(A)`.
pub fn min_abs_det(sino: &Sinogram) -> f64 {
    let m = sino.rows;
    sino.values
        .chunks(sino.block())
        .map(|b| mat::det(b, m).norm())
        .fold(f64::INFINITY, f64::min)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mat::ONE;
    use crate::phantom::{bump, disk_profile, make_phantom, PhantomKind, PhantomSpec};

    fn grid(n: usize) -> GridSpec {
        GridSpec::new(n, 1.0).unwrap()
    }

    #[test]
    fn zero_field_gives_identity() {
        let a = GaugeField::zero(grid(32), 2);
        let s = nonabelian_radon(&a, 8, &TransportOptions::default()).unwrap();
        assert_eq!(
            s,
            Sinogram::identity(grid(32), 8, 2, SinogramKind::ScatteringData)
        );
        let ray = RayGeometry::new(0.3, 0.1, 2.0, 129);
        let sol = transport_solve(&a, &ray, None, &TransportOptions::default()).unwrap();
        assert!(sol.c0.chunks(4).all(|b| b == [ONE, ZERO, ZERO, ONE]));
    }

    #[test]
    fn disk_chord_law() {
        let g = grid(128);
        let amp = 0.4;
        let a = make_phantom(&PhantomSpec::new(PhantomKind::Disk, 1, 0).amplitude(amp), g)
            .unwrap()
            .into_gauge()
            .unwrap();
        let ray = RayGeometry::new(0.7, 0.25, g.half_extent, 2 * (g.n - 1) + 1);
        let sol = transport_solve(&a, &ray, None, &TransportOptions::default()).unwrap();
        // oracle: fine midpoint quadrature of the radial profile along the chord
        let k = 200_000;
        let mut integral = 0.0;
        for i in 0..k {
            let y1 = -1.0 + 2.0 * (i as f64 + 0.5) / k as f64;
            integral += disk_profile(y1.hypot(0.25), 1.0);
        }
        integral *= 2.0 / k as f64;
        let want = (amp * integral).exp();
        let got = sol.exit()[0];
        assert!((got.re - want).abs() < 2e-3 * want, "{got} {want}");
    }

    #[test]
    fn nilpotent_exit_is_unipotent() {
        let g = grid(64);
        let a = make_phantom(&PhantomSpec::new(PhantomKind::NilpotentUpper, 2, 0), g)
            .unwrap()
            .into_gauge()
            .unwrap();
        let ray = RayGeometry::new(1.1, -0.2, g.half_extent, 2 * (g.n - 1) + 1);
        let sol = transport_solve(&a, &ray, None, &TransportOptions::default()).unwrap();
        let e = sol.exit();
        let spl = SplineField::new(&a.a0);
        let mut b = [ZERO; 4];
        let (p0, p1) = (ray.point(-2.0), ray.point(2.0));
        spl.integrate_segment([p0.0, p0.1], [p1.0, p1.1], &mut b);
        assert!((e[0] - ONE).norm() < 1e-14 && (e[3] - ONE).norm() < 1e-14 && e[2].norm() < 1e-14);
        assert!((e[1] - b[1]).norm() < 1e-7, "{} {}", e[1], b[1]);
    }

    #[test]
    fn attenuated_with_zero_field_is_radon() {
        let g = grid(64);
        let f = MatrixField::from_fn(g, 1, 1, |x1, x2, o| {
            o[0] = C64::new(bump(x1, x2, [0.1, 0.0], 0.3, 1.0), 0.0)
        });
        let a = GaugeField::zero(g, 1);
        let r = attenuated_radon(&a, &f, 6, &TransportOptions::default()).unwrap();
        let fa = GaugeField::scalar_potential(f.clone()).unwrap();
        let e = abelian_closed_form(&fa, 6).unwrap();
        for (x, y) in r.values.iter().zip(&e.values) {
            assert!((x - y.ln()).norm() < 1e-6, "{x} {}", y.ln());
        }
        let z = attenuated_radon(
            &a,
            &MatrixField::zeros(g, 1, 1),
            6,
            &TransportOptions::default(),
        )
        .unwrap();
        assert_eq!(z.max_norm(), 0.0);
    }

    #[test]
    fn magnus_agrees_with_rk4() {
        let g = grid(64);
        let a = make_phantom(
            &PhantomSpec::new(PhantomKind::SmoothRandom, 2, 4).amplitude(0.5),
            g,
        )
        .unwrap()
        .into_gauge()
        .unwrap();
        let s1 = nonabelian_radon(&a, 4, &TransportOptions::default()).unwrap();
        let opts = TransportOptions {
            integrator: Integrator::Magnus2,
            step_fraction: 0.125,
        };
        let s2 = nonabelian_radon(&a, 4, &opts).unwrap();
        assert!(s1.max_difference(&s2).unwrap() < 1e-3);
    }

    #[test]
    fn transport_frame_matches_rays() {
        let g = grid(64);
        let a = make_phantom(
            &PhantomSpec::new(PhantomKind::SmoothRandom, 2, 9).amplitude(0.5),
            g,
        )
        .unwrap()
        .into_gauge()
        .unwrap();
        let opts = TransportOptions::default();
        let fr = TransportFrame::new(&FieldSplines::new(&a), 0.4, &opts).unwrap();
        let ray = RayGeometry::new(0.4, 0.3, g.half_extent, 2 * (g.n - 1) + 1);
        let sol = transport_solve(&a, &ray, None, &opts).unwrap();
        let mut v = [ZERO; 4];
        for i in [10usize, 60, 64, 100, 126] {
            fr.eval(sol.y1[i], 0.3, &mut v);
            let err = mat::max_abs(
                &v.iter()
                    .zip(sol.c0_at(i))
                    .map(|(a, b)| a - b)
                    .collect::<Vec<_>>(),
            );
            assert!(err < 1e-4, "{i} {err}");
        }
        fr.eval(0.0, 1.9, &mut v);
        assert_eq!(v, [ONE, ZERO, ZERO, ONE]);
    }
}

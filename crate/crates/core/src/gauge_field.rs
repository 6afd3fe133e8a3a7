//! Gauge fields on the plane: the triple `(A1, A2, A0)` of matrix fields,
//! the gauge-group action and evaluation along a (complexified) direction.

use crate::error::{Error, Result};
use crate::fft::{gradient, DerivativeScheme};
use crate::grid::{GridSpec, MatrixField, SUPPORT_TOLERANCE};
use crate::mat::{self, C64, ONE};

/// `A(x, zeta) = coupling * (A1 zeta1 + A2 zeta2 + A0)`.
///
/// The coupling is 1 for the transport problems and `-i` for the
/// Schrödinger/Yang-Mills setting, where `A0` is absent.
#[derive(Debug, Clone, PartialEq)]
pub struct GaugeField {
    pub a1: MatrixField,
    pub a2: MatrixField,
    pub a0: MatrixField,
    pub coupling: C64,
}

impl GaugeField {
    pub fn new(a1: MatrixField, a2: MatrixField, a0: MatrixField, coupling: C64) -> Result<Self> {
        if !(a1.same_shape(&a2) && a1.same_shape(&a0)) || !a1.is_square() {
            return Err(Error::Shape(
                "gauge components must be square and share grid and dimension".into(),
            ));
        }
        let f = Self {
            a1,
            a2,
            a0,
            coupling,
        };
        for c in f.components() {
            if !c.is_finite() {
                return Err(Error::InvalidArgument(
                    "non-finite gauge field entry".into(),
                ));
            }
            c.check_support(SUPPORT_TOLERANCE)?;
        }
        Ok(f)
    }

    pub fn zero(grid: GridSpec, m: usize) -> Self {
        let z = MatrixField::zeros(grid, m, m);
        Self {
            a1: z.clone(),
            a2: z.clone(),
            a0: z,
            coupling: ONE,
        }
    }

    /// Only `A0` nonzero.
    pub fn scalar_potential(a0: MatrixField) -> Result<Self> {
        let z = MatrixField::zeros(a0.grid, a0.rows, a0.cols);
        Self::new(z.clone(), z, a0, ONE)
    }

    pub fn with_coupling(mut self, coupling: C64) -> Self {
        self.coupling = coupling;
        self
    }

    pub fn grid(&self) -> GridSpec {
        self.a0.grid
    }

    pub fn m(&self) -> usize {
        self.a0.rows
    }

    pub fn components(&self) -> [&MatrixField; 3] {
        [&self.a1, &self.a2, &self.a0]
    }

    /// Multiplies all components by a real factor.
    pub fn scaled(&self, s: f64) -> Self {
        let s = C64::new(s, 0.0);
        Self {
            a1: self.a1.scale(s),
            a2: self.a2.scale(s),
            a0: self.a0.scale(s),
            coupling: self.coupling,
        }
    }

    /// Largest entry modulus over the three components.
    pub fn max_norm(&self) -> f64 {
        self.components()
            .iter()
            .map(|c| c.max_norm())
            .fold(0.0, f64::max)
    }

    /// `coupling * (A1 cos(phi) - A2 sin(phi) + A0)`, the field seen by a ray
    /// travelling along `theta(phi)`.
    pub fn along(&self, phi: f64) -> MatrixField {
        let t = theta(phi);
        self.eval_direction_unchecked(C64::new(t[0], 0.0), C64::new(t[1], 0.0))
    }

    /// Field along a complexified direction with `zeta1^2 + zeta2^2 = 1`.
    pub fn eval_direction(&self, zeta: [C64; 2]) -> Result<MatrixField> {
        let defect = (zeta[0] * zeta[0] + zeta[1] * zeta[1] - ONE).norm();
        let scale = 1.0 + zeta[0].norm_sqr() + zeta[1].norm_sqr();
        if defect > 1e-10 * scale {
            return Err(Error::NonNormalized { defect });
        }
        Ok(self.eval_direction_unchecked(zeta[0], zeta[1]))
    }

    pub(crate) fn eval_direction_unchecked(&self, z1: C64, z2: C64) -> MatrixField {
        let k = self.coupling;
        let mut out = self.a0.clone();
        for ((o, a1), a2) in out
            .values
            .iter_mut()
            .zip(&self.a1.values)
            .zip(&self.a2.values)
        {
            *o = k * (*a1 * z1 + *a2 * z2 + *o);
        }
        out
    }

    /// `coupling * (A1 + i A2) / 2`, the right-hand side of the `t = ∞`
    /// equation `dbar c = coupling (A1 + i A2) c / 2`.
    pub fn holomorphic_part(&self) -> MatrixField {
        let half = self.coupling * 0.5;
        let mut out = self.a1.clone();
        for (o, a2) in out.values.iter_mut().zip(&self.a2.values) {
            *o = half * (*o + mat::I * *a2);
        }
        out
    }
}

/// Ray direction `theta(phi) = (cos phi, -sin phi)`.
pub fn theta(phi: f64) -> [f64; 2] {
    [phi.cos(), -phi.sin()]
}

/// Offset direction `nu(phi) = (sin phi, cos phi)`.
pub fn nu(phi: f64) -> [f64; 2] {
    [phi.sin(), phi.cos()]
}

/// A straight line `x = y1 theta + y2 nu` sampled uniformly in `y1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RayGeometry {
    pub phi: f64,
    pub theta: [f64; 2],
    pub nu: [f64; 2],
    pub y2: f64,
    pub y1_start: f64,
    pub y1_step: f64,
    pub samples: usize,
}

impl RayGeometry {
    /// Ray across `[-half_extent, half_extent]` with `samples` points.
    pub fn new(phi: f64, y2: f64, half_extent: f64, samples: usize) -> Self {
        Self {
            phi,
            theta: theta(phi),
            nu: nu(phi),
            y2,
            y1_start: -half_extent,
            y1_step: 2.0 * half_extent / (samples - 1) as f64,
            samples,
        }
    }

    pub fn y1(&self, k: usize) -> f64 {
        self.y1_start + k as f64 * self.y1_step
    }

    pub fn point(&self, y1: f64) -> (f64, f64) {
        (
            y1 * self.theta[0] + self.y2 * self.nu[0],
            y1 * self.theta[1] + self.y2 * self.nu[1],
        )
    }

    /// Ray coordinates `(y1, y2)` of a point.
    pub fn coordinates(phi: f64, x1: f64, x2: f64) -> (f64, f64) {
        let t = theta(phi);
        let n = nu(phi);
        (x1 * t[0] + x2 * t[1], x1 * n[0] + x2 * n[1])
    }
}

/// Gauge action `(g A1 g⁻¹ + κ⁻¹ ∂1g g⁻¹, g A2 g⁻¹ + κ⁻¹ ∂2g g⁻¹, g A0 g⁻¹)`.
///
/// The derivative term is divided by the coupling κ so that the effective
/// field κA transforms as a connection; with κ = 1 this is the usual rule.
/// Derivatives of `g - I` are local finite differences, so the shift term
/// vanishes exactly wherever `g = I` on the whole stencil.
pub fn apply_gauge(field: &GaugeField, g: &MatrixField) -> Result<GaugeField> {
    apply_gauge_with(field, g, DerivativeScheme::FiniteDifference)
}

/// [`apply_gauge`] with an explicit derivative scheme.
pub fn apply_gauge_with(
    field: &GaugeField,
    g: &MatrixField,
    scheme: DerivativeScheme,
) -> Result<GaugeField> {
    let grid = field.grid();
    let m = field.m();
    if g.grid != grid || g.rows != m || !g.is_square() {
        return Err(Error::Shape(
            "gauge must match the field's grid and dimension".into(),
        ));
    }
    let deviation = g.max_identity_deviation_outside(grid.radius);
    if deviation > SUPPORT_TOLERANCE * g.max_norm().max(1.0) {
        return Err(Error::GaugeNotIdentity { deviation });
    }
    let g_inv = g.inverse()?;
    let n = grid.n;
    let h = grid.spacing();
    let shifted = g.minus_identity();
    let mut dg1 = MatrixField::zeros(grid, m, m);
    let mut dg2 = MatrixField::zeros(grid, m, m);
    for i in 0..m {
        for j in 0..m {
            let (d1, d2) = gradient(&shifted.entry(i, j), n, h, scheme);
            dg1.set_entry(i, j, &d1);
            dg2.set_entry(i, j, &d2);
        }
    }
    let kinv = field.coupling.inv();
    let conj = |a: &MatrixField| -> Result<MatrixField> { g.matmul(a)?.matmul(&g_inv) };
    let a1 = conj(&field.a1)?.add(&dg1.matmul(&g_inv)?.scale(kinv))?;
    let a2 = conj(&field.a2)?.add(&dg2.matmul(&g_inv)?.scale(kinv))?;
    let a0 = conj(&field.a0)?;
    Ok(GaugeField {
        a1,
        a2,
        a0,
        coupling: field.coupling,
    })
}

/// Pointwise `exp(X)` for a compactly supported generator `X`; the result
/// equals the identity outside the support of `X`.
pub fn gauge_from_generator(generator: &MatrixField) -> MatrixField {
    let m = generator.rows;
    let mut out = MatrixField::zeros(generator.grid, m, m);
    for idx in 0..generator.grid.len() {
        mat::expm_into(generator.node(idx), out.node_mut(idx), m);
    }
    out
}

/// Pointwise matrix inverse of a gauge (convenience wrapper).
pub fn invert_gauge(g: &MatrixField) -> Result<MatrixField> {
    g.inverse()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mat::ZERO;
    use crate::phantom::{make_phantom, random_gauge, PhantomKind, PhantomSpec};

    fn grid() -> GridSpec {
        GridSpec::new(128, 1.0).unwrap()
    }

    #[test]
    fn geometry_is_orthonormal() {
        for k in 0..17 {
            let phi = 0.37 * k as f64;
            let t = theta(phi);
            let n = nu(phi);
            assert!((t[0] * n[0] + t[1] * n[1]).abs() < 1e-15);
            assert!((t[0].hypot(t[1]) - 1.0).abs() < 1e-15);
            let ray = RayGeometry::new(phi, 0.3, 2.0, 65);
            let (x1, x2) = ray.point(-0.7);
            let (y1, y2) = RayGeometry::coordinates(phi, x1, x2);
            assert!((y1 + 0.7).abs() < 1e-14 && (y2 - 0.3).abs() < 1e-14);
        }
    }

    #[test]
    fn identity_gauge_leaves_field_unchanged() {
        let a = make_phantom(&PhantomSpec::new(PhantomKind::SmoothRandom, 2, 3), grid())
            .unwrap()
            .into_gauge()
            .unwrap();
        let b = apply_gauge(&a, &MatrixField::identity(grid(), 2)).unwrap();
        for (x, y) in a.components().iter().zip(b.components()) {
            assert!(x.sub(y).unwrap().max_norm() < 1e-13);
        }
    }

    #[test]
    fn abelian_gauge_shifts_by_gradient() {
        let g0 = grid();
        let psi = |x1: f64, x2: f64| 0.4 * crate::phantom::bump(x1, x2, [0.1, 0.0], 0.3, 1.0);
        let gen = MatrixField::from_fn(g0, 1, 1, |x1, x2, o| o[0] = C64::new(psi(x1, x2), 0.0));
        let g = gauge_from_generator(&gen);
        let a = GaugeField::zero(g0, 1);
        let b = apply_gauge(&a, &g).unwrap();
        let eps = 1e-5;
        let mut worst = 0.0f64;
        for idx in (0..g0.len()).step_by(37) {
            let (x1, x2) = g0.point(idx);
            let d1 = (psi(x1 + eps, x2) - psi(x1 - eps, x2)) / (2.0 * eps);
            worst = worst.max((b.a1.node(idx)[0].re - d1).abs());
        }
        assert!(worst < 1e-4, "{worst}");
        assert!(b.a0.max_norm() < 1e-14);
    }

    #[test]
    fn gauge_round_trip_recovers_field() {
        let g0 = grid();
        let a = make_phantom(&PhantomSpec::new(PhantomKind::SmoothRandom, 2, 11), g0)
            .unwrap()
            .into_gauge()
            .unwrap();
        let g = random_gauge(g0, 2, 5, 0.5);
        let g_inv = g.inverse().unwrap();
        let back = apply_gauge(&apply_gauge(&a, &g).unwrap(), &g_inv).unwrap();
        let scale = a.max_norm();
        for (x, y) in a.components().iter().zip(back.components()) {
            let err = x.sub(y).unwrap().max_norm();
            assert!(err < 1e-4 * scale.max(1.0), "{err}");
        }
    }

    #[test]
    fn gauge_must_be_identity_outside() {
        let g0 = grid();
        let a = GaugeField::zero(g0, 1);
        let g = MatrixField::from_fn(g0, 1, 1, |_, _, o| o[0] = C64::new(2.0, 0.0));
        assert!(matches!(
            apply_gauge(&a, &g),
            Err(Error::GaugeNotIdentity { .. })
        ));
    }

    #[test]
    fn singular_gauge_is_rejected() {
        let g0 = grid();
        let a = GaugeField::zero(g0, 1);
        let g = MatrixField::from_fn(g0, 1, 1, |x1, x2, o| {
            o[0] = if x1.hypot(x2) < 0.2 { ZERO } else { ONE };
        });
        assert!(apply_gauge(&a, &g).is_err());
    }

    #[test]
    fn eval_direction_rules() {
        let g0 = grid();
        let a = make_phantom(&PhantomSpec::new(PhantomKind::SmoothRandom, 2, 1), g0)
            .unwrap()
            .into_gauge()
            .unwrap();
        let e = a.eval_direction([ONE, ZERO]).unwrap();
        assert!(e.sub(&a.a1.add(&a.a0).unwrap()).unwrap().max_norm() < 1e-15);
        assert!(a.eval_direction([ONE, ONE]).is_err());
        // complex unit direction zeta(t) for t = 2
        let t = C64::new(2.0, 0.0);
        let z = [(t + t.inv()) * 0.5, mat::I * 0.5 * (t - t.inv())];
        assert!(a.eval_direction(z).is_ok());
        let phi = 0.9;
        let th = theta(phi);
        let along = a.along(phi);
        let direct = a
            .eval_direction([C64::new(th[0], 0.0), C64::new(th[1], 0.0)])
            .unwrap();
        assert!(along.sub(&direct).unwrap().max_norm() < 1e-15);
        let zero = GaugeField::zero(g0, 2).eval_direction(z).unwrap();
        assert_eq!(zero.max_norm(), 0.0);
    }
}

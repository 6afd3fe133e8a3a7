//! Test fields: smooth, compactly supported phantoms and random gauges.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gauge_field::{gauge_from_generator, GaugeField};
use crate::grid::{GridSpec, MatrixField};
use crate::mat::{C64, ONE, ZERO};

/// `exp(1 - 1/(1 - (r/R)^2))` inside the disk, 0 outside; equals 1 at r = 0.
pub fn mollifier(r: f64, radius: f64) -> f64 {
    let s = r / radius;
    if s >= 1.0 {
        return 0.0;
    }
    let v = 1.0 - 1.0 / (1.0 - s * s);
    if v < -700.0 {
        0.0
    } else {
        v.exp()
    }
}

fn psi(s: f64) -> f64 {
    if s <= 0.0 {
        0.0
    } else {
        (-1.0 / s).exp()
    }
}

/// C^∞ step: 1 for r ≤ inner, 0 for r ≥ outer.
pub fn smooth_step(r: f64, inner: f64, outer: f64) -> f64 {
    let s = (outer - r) / (outer - inner);
    let a = psi(s);
    let b = psi(1.0 - s);
    if a + b == 0.0 {
        return if s > 0.5 { 1.0 } else { 0.0 };
    }
    a / (a + b)
}

/// Disk profile used by the `disk` phantom: 1 inside `0.8 R`, smoothly 0 at `R`.
pub fn disk_profile(r: f64, radius: f64) -> f64 {
    smooth_step(r, 0.8 * radius, radius)
}

/// Gaussian blob at `center` times the support mollifier.
pub fn bump(x1: f64, x2: f64, center: [f64; 2], sigma: f64, radius: f64) -> f64 {
    let d1 = x1 - center[0];
    let d2 = x2 - center[1];
    (-(d1 * d1 + d2 * d2) / (2.0 * sigma * sigma)).exp() * mollifier(x1.hypot(x2), radius)
}

/// Width of the `gaussian_bump` phantom relative to `R`.
pub const BUMP_WIDTH: f64 = 0.3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhantomKind {
    GaussianBump,
    Disk,
    NilpotentUpper,
    SmoothRandom,
    ScalarSource,
}

impl PhantomKind {
    pub const ALL: [PhantomKind; 5] = [
        PhantomKind::GaussianBump,
        PhantomKind::Disk,
        PhantomKind::NilpotentUpper,
        PhantomKind::SmoothRandom,
        PhantomKind::ScalarSource,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PhantomKind::GaussianBump => "gaussian_bump",
            PhantomKind::Disk => "disk",
            PhantomKind::NilpotentUpper => "nilpotent_upper",
            PhantomKind::SmoothRandom => "smooth_random",
            PhantomKind::ScalarSource => "scalar_source",
        }
    }
}

impl fmt::Display for PhantomKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PhantomKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PhantomKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown phantom kind '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhantomSpec {
    pub kind: PhantomKind,
    pub m: usize,
    pub seed: u64,
    pub amplitude: f64,
}

impl PhantomSpec {
    pub fn new(kind: PhantomKind, m: usize, seed: u64) -> Self {
        Self {
            kind,
            m,
            seed,
            amplitude: 1.0,
        }
    }

    pub fn amplitude(mut self, a: f64) -> Self {
        self.amplitude = a;
        self
    }
}

#[derive(Debug, Clone)]
pub enum Phantom {
    Gauge(GaugeField),
    Source(MatrixField),
}

impl Phantom {
    pub fn into_gauge(self) -> Result<GaugeField> {
        match self {
            Phantom::Gauge(g) => Ok(g),
            Phantom::Source(_) => Err(Error::InvalidArgument(
                "phantom is a source, not a gauge field".into(),
            )),
        }
    }

    pub fn into_source(self) -> Result<MatrixField> {
        match self {
            Phantom::Source(f) => Ok(f),
            Phantom::Gauge(_) => Err(Error::InvalidArgument(
                "phantom is a gauge field, not a source".into(),
            )),
        }
    }
}

fn scalar_times_identity(
    grid: GridSpec,
    m: usize,
    profile: impl Fn(f64, f64) -> f64,
) -> MatrixField {
    MatrixField::from_fn(grid, m, m, |x1, x2, out| {
        let v = profile(x1, x2);
        for i in 0..m {
            out[i * m + i] = C64::new(v, 0.0);
        }
    })
}

/// A few random Gaussian blobs with complex weights, mollified.
#[derive(Debug, Clone)]
struct Blobs {
    centers: Vec<[f64; 2]>,
    sigmas: Vec<f64>,
    weights: Vec<C64>,
}

impl Blobs {
    fn random(rng: &mut ChaCha8Rng, count: usize, radius: f64, amplitude: f64) -> Self {
        let mut centers = Vec::with_capacity(count);
        let mut sigmas = Vec::with_capacity(count);
        let mut weights = Vec::with_capacity(count);
        for _ in 0..count {
            let rho = 0.3 * radius * rng.gen::<f64>().sqrt();
            let ang = rng.gen::<f64>() * std::f64::consts::TAU;
            centers.push([rho * ang.cos(), rho * ang.sin()]);
            sigmas.push(radius * rng.gen_range(0.2..0.3));
            let wr = amplitude * rng.gen::<f64>().sqrt();
            let wa = rng.gen::<f64>() * std::f64::consts::TAU;
            weights.push(C64::from_polar(wr, wa));
        }
        Self {
            centers,
            sigmas,
            weights,
        }
    }

    fn eval(&self, x1: f64, x2: f64, radius: f64) -> C64 {
        let mut s = ZERO;
        for ((c, sg), w) in self.centers.iter().zip(&self.sigmas).zip(&self.weights) {
            s += w * bump(x1, x2, *c, *sg, radius);
        }
        s
    }
}

fn random_matrix_field(
    grid: GridSpec,
    rows: usize,
    cols: usize,
    rng: &mut ChaCha8Rng,
    amplitude: f64,
) -> MatrixField {
    let blobs: Vec<Blobs> = (0..rows * cols)
        .map(|_| Blobs::random(rng, 3, grid.radius, amplitude))
        .collect();
    MatrixField::from_fn(grid, rows, cols, |x1, x2, out| {
        for (o, b) in out.iter_mut().zip(&blobs) {
            *o = b.eval(x1, x2, grid.radius);
        }
    })
}

/// Builds a phantom. Gauge kinds put the field in `A0` (or in all three
/// components for `smooth_random`); `scalar_source` returns an `m x 1` source.
pub fn make_phantom(spec: &PhantomSpec, grid: GridSpec) -> Result<Phantom> {
    grid.validate()?;
    let m = spec.m;
    if m < 1 {
        return Err(Error::InvalidArgument(
            "matrix dimension m must be at least 1".into(),
        ));
    }
    if !spec.amplitude.is_finite() {
        return Err(Error::InvalidArgument("amplitude must be finite".into()));
    }
    let r = grid.radius;
    let a = spec.amplitude;
    let phantom =
        match spec.kind {
            PhantomKind::GaussianBump => Phantom::Gauge(GaugeField::scalar_potential(
                scalar_times_identity(grid, m, |x1, x2| {
                    a * bump(x1, x2, [0.0, 0.0], BUMP_WIDTH * r, r)
                }),
            )?),
            PhantomKind::Disk => Phantom::Gauge(GaugeField::scalar_potential(
                scalar_times_identity(grid, m, |x1, x2| a * disk_profile(x1.hypot(x2), r)),
            )?),
            PhantomKind::NilpotentUpper => {
                if m < 2 {
                    return Err(Error::InvalidArgument(
                        "nilpotent_upper needs m >= 2".into(),
                    ));
                }
                let a0 = MatrixField::from_fn(grid, m, m, |x1, x2, out| {
                    let b = a * bump(x1, x2, [0.1 * r, -0.05 * r], BUMP_WIDTH * r, r);
                    for i in 0..m - 1 {
                        out[i * m + i + 1] = C64::new(b, 0.0);
                    }
                });
                Phantom::Gauge(GaugeField::scalar_potential(a0)?)
            }
            PhantomKind::SmoothRandom => {
                let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
                let a1 = random_matrix_field(grid, m, m, &mut rng, a);
                let a2 = random_matrix_field(grid, m, m, &mut rng, a);
                let a0 = random_matrix_field(grid, m, m, &mut rng, a);
                Phantom::Gauge(GaugeField::new(a1, a2, a0, ONE)?)
            }
            PhantomKind::ScalarSource => {
                let f = MatrixField::from_fn(grid, m, 1, |x1, x2, out| {
                    for (i, o) in out.iter_mut().enumerate() {
                        let ang = std::f64::consts::TAU * i as f64 / m as f64 + 0.3;
                        let c = [0.15 * r * ang.cos(), 0.15 * r * ang.sin()];
                        *o = C64::new(a * bump(x1, x2, c, 0.3 * r, r), 0.0);
                    }
                });
                Phantom::Source(f)
            }
        };
    Ok(phantom)
}

/// Random smooth source `rows x cols` supported in the disk.
pub fn random_source(
    grid: GridSpec,
    rows: usize,
    cols: usize,
    seed: u64,
    amplitude: f64,
) -> MatrixField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    random_matrix_field(grid, rows, cols, &mut rng, amplitude)
}

/// Random generator `X` (complex entries, blob sums) supported in the disk.
pub fn random_generator(grid: GridSpec, m: usize, seed: u64, amplitude: f64) -> MatrixField {
    random_source(grid, m, m, seed ^ 0x9e37_79b9_7f4a_7c15, amplitude)
}

/// Random admissible gauge `g = exp(X)`; equals `I` outside the disk.
pub fn random_gauge(grid: GridSpec, m: usize, seed: u64, amplitude: f64) -> MatrixField {
    gauge_from_generator(&random_generator(grid, m, seed, amplitude))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::SUPPORT_TOLERANCE;

    fn grid() -> GridSpec {
        GridSpec::new(64, 1.0).unwrap()
    }

    #[test]
    fn profiles() {
        assert_eq!(mollifier(0.0, 1.0), 1.0);
        assert_eq!(mollifier(1.0, 1.0), 0.0);
        assert_eq!(disk_profile(0.5, 1.0), 1.0);
        assert_eq!(disk_profile(1.0, 1.0), 0.0);
        let mid = disk_profile(0.9, 1.0);
        assert!((mid - 0.5).abs() < 1e-12);
    }

    #[test]
    fn disk_amplitude_inside() {
        let f = make_phantom(
            &PhantomSpec::new(PhantomKind::Disk, 1, 0).amplitude(0.7),
            grid(),
        )
        .unwrap()
        .into_gauge()
        .unwrap();
        let g = grid();
        for idx in 0..g.len() {
            let (x1, x2) = g.point(idx);
            if x1.hypot(x2) < 0.8 {
                assert!((f.a0.node(idx)[0].re - 0.7).abs() < 1e-15);
            }
        }
        assert_eq!(f.a1.max_norm(), 0.0);
    }

    #[test]
    fn nilpotent_structure() {
        let f = make_phantom(&PhantomSpec::new(PhantomKind::NilpotentUpper, 2, 0), grid())
            .unwrap()
            .into_gauge()
            .unwrap();
        for idx in 0..grid().len() {
            let b = f.a0.node(idx);
            assert_eq!(b[0], ZERO);
            assert_eq!(b[2], ZERO);
            assert_eq!(b[3], ZERO);
        }
        assert!(f.a0.max_norm() > 0.5);
        assert!(
            make_phantom(&PhantomSpec::new(PhantomKind::NilpotentUpper, 1, 0), grid()).is_err()
        );
    }

    #[test]
    fn all_kinds_supported_and_deterministic() {
        for kind in PhantomKind::ALL {
            let spec = PhantomSpec::new(kind, 2, 7);
            let a = make_phantom(&spec, grid()).unwrap();
            let b = make_phantom(&spec, grid()).unwrap();
            let (fa, fb): (Vec<&MatrixField>, Vec<&MatrixField>) = match (&a, &b) {
                (Phantom::Gauge(x), Phantom::Gauge(y)) => {
                    (x.components().to_vec(), y.components().to_vec())
                }
                (Phantom::Source(x), Phantom::Source(y)) => (vec![x], vec![y]),
                _ => panic!("kind changed"),
            };
            for (x, y) in fa.iter().zip(&fb) {
                assert_eq!(x.values, y.values);
                assert!(x.check_support(SUPPORT_TOLERANCE).is_ok(), "{kind}");
            }
        }
    }

    #[test]
    fn rejects_bad_input() {
        assert!(make_phantom(&PhantomSpec::new(PhantomKind::Disk, 0, 0), grid()).is_err());
        assert!("checkerboard".parse::<PhantomKind>().is_err());
        assert_eq!(
            "smooth_random".parse::<PhantomKind>().unwrap(),
            PhantomKind::SmoothRandom
        );
    }

    #[test]
    fn random_gauge_is_identity_outside() {
        let g = random_gauge(grid(), 2, 3, 0.5);
        assert!(g.max_identity_deviation_outside(1.0) == 0.0);
        assert!(g.min_abs_det() > 0.0);
    }
}

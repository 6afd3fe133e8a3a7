//! Acceptance suite. Each test prints one PASS/FAIL line with the measured
//! value and the threshold.

use std::sync::OnceLock;
use std::time::Instant;

use nonabelian_radon::anderson::FixedPointOptions;
use nonabelian_radon::attenuated_inversion::{invert_attenuated, InversionOptions};
use nonabelian_radon::cauchy_ops::{
    cauchy_solid, dbar, directional_derivative, pi_boundary, pi_t, riesz_projections, zeta, Sign,
    SpectralParam,
};
use nonabelian_radon::fft::DerivativeScheme;
use nonabelian_radon::gauge_field::{apply_gauge, nu, theta};
use nonabelian_radon::phantom::{
    bump, make_phantom, random_gauge, random_source, PhantomKind, PhantomSpec, BUMP_WIDTH,
};
use nonabelian_radon::ray_transport::{
    attenuated_radon, determinant_check, nonabelian_radon, TransportOptions,
};
use nonabelian_radon::scattering_recovery::{
    boundary_values_at, build_rh_data, condition_a, gauge_spread, recover_boundary_from_i,
    recover_from_functionals, rh_factorize, synthesize, RhOptions, ScatteringOptions,
    ScatteringRecovery, Synthesis,
};
use nonabelian_radon::spectral_solutions::{solve_family, SolverOptions};
use nonabelian_radon::{GaugeField, GridSpec, MatrixField, C64};

fn report(id: u32, name: &str, measured: f64, threshold: f64, pass: bool, extra: &str) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    // straight to the handle so the line survives output capture
    let line = format!(
        "criterion {id:>2} [{verdict}] {name}: measured {measured:.3e}, threshold {threshold:.1e}{extra}\n"
    );
    let _ = std::io::Write::write_all(&mut std::io::stdout(), line.as_bytes());
}

/// Composite Gauss-Legendre on `[a, b]`.
fn gauss_legendre(f: impl Fn(f64) -> f64, a: f64, b: f64, panels: usize) -> f64 {
    const X: [f64; 5] = [
        -0.906_179_845_938_664,
        -0.538_469_310_105_683,
        0.0,
        0.538_469_310_105_683,
        0.906_179_845_938_664,
    ];
    const W: [f64; 5] = [
        0.236_926_885_056_189,
        0.478_628_670_499_366,
        0.568_888_888_888_889,
        0.478_628_670_499_366,
        0.236_926_885_056_189,
    ];
    let w = (b - a) / panels as f64;
    let mut s = 0.0;
    for p in 0..panels {
        let mid = a + (p as f64 + 0.5) * w;
        for (x, wt) in X.iter().zip(W) {
            s += wt * f(mid + 0.5 * w * x);
        }
    }
    s * 0.5 * w
}

#[test]
fn criterion_01_abelian_exponential_identity() {
    let start = Instant::now();
    let radius = 1.0;
    let grid = GridSpec::new(128, radius).unwrap();
    let amp = 1.0;
    let a = make_phantom(
        &PhantomSpec::new(PhantomKind::GaussianBump, 1, 0).amplitude(amp),
        grid,
    )
    .unwrap()
    .into_gauge()
    .unwrap();
    let sino = nonabelian_radon(&a, 180, &TransportOptions::default()).unwrap();
    let sigma = BUMP_WIDTH * radius;
    let mut worst = 0.0f64;
    for (ai, &phi) in sino.angles.iter().enumerate() {
        let (th, nv) = (theta(phi), nu(phi));
        for (oi, &y2) in sino.offsets.iter().enumerate() {
            let half = (radius * radius - y2 * y2).max(0.0).sqrt();
            let r = if half > 0.0 {
                gauss_legendre(
                    |y1| {
                        let x1 = y1 * th[0] + y2 * nv[0];
                        let x2 = y1 * th[1] + y2 * nv[1];
                        amp * bump(x1, x2, [0.0, 0.0], sigma, radius)
                    },
                    -half,
                    half,
                    400,
                )
            } else {
                0.0
            };
            let want = r.exp();
            let got = sino.at(ai, oi)[0];
            worst = worst.max((got - want).norm() / want);
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let pass = worst <= 1e-5 && secs <= 30.0;
    report(
        1,
        "abelian exponential identity",
        worst,
        1e-5,
        pass,
        &format!(" ({secs:.1} s)"),
    );
    assert!(pass);
}

/// Ray step used for the criterion 2 and 3 runs (a quarter of the spacing).
const GAUGE_RUN: TransportOptions = TransportOptions {
    integrator: nonabelian_radon::ray_transport::Integrator::Rk4,
    step_fraction: 0.25,
};

fn criterion_two_setup() -> (GaugeField, GaugeField) {
    let grid = GridSpec::new(128, 1.0).unwrap();
    let a = make_phantom(
        &PhantomSpec::new(PhantomKind::SmoothRandom, 2, 7).amplitude(0.5),
        grid,
    )
    .unwrap()
    .into_gauge()
    .unwrap();
    let g = random_gauge(grid, 2, 11, 0.5);
    let b = apply_gauge(&a, &g).unwrap();
    (a, b)
}

#[test]
fn criterion_02_gauge_invariance() {
    let (a, b) = criterion_two_setup();
    let opts = GAUGE_RUN;
    let sa = nonabelian_radon(&a, 128, &opts).unwrap();
    let sb = nonabelian_radon(&b, 128, &opts).unwrap();
    let rel = sb.max_relative_difference(&sa).unwrap();
    let pass = rel <= 1e-4;
    report(2, "gauge invariance of S(A)", rel, 1e-4, pass, "");
    assert!(pass);
}

#[test]
fn criterion_03_determinant_trace_identity() {
    let (a, b) = criterion_two_setup();
    let opts = GAUGE_RUN;
    let mut worst = 0.0f64;
    for field in [&a, &b] {
        for (det, exp_tr) in determinant_check(field, 128, &opts).unwrap() {
            worst = worst.max((det - exp_tr).norm() / exp_tr.norm());
        }
    }
    let pass = worst <= 1e-8;
    report(
        3,
        "det c0 = exp(int tr A) on every ray",
        worst,
        1e-8,
        pass,
        "",
    );
    assert!(pass);
}

#[test]
fn criterion_11_rk4_order() {
    let grid = GridSpec::new(64, 1.0).unwrap();
    let a = make_phantom(
        &PhantomSpec::new(PhantomKind::SmoothRandom, 2, 3).amplitude(1.0),
        grid,
    )
    .unwrap()
    .into_gauge()
    .unwrap();
    let run = |frac: f64| {
        nonabelian_radon(
            &a,
            16,
            &TransportOptions {
                step_fraction: frac,
                ..Default::default()
            },
        )
        .unwrap()
    };
    let reference = run(1.0 / 128.0);
    let fracs = [0.5, 0.25, 0.125, 0.0625];
    let errs: Vec<f64> = fracs
        .iter()
        .map(|&f| run(f).max_difference(&reference).unwrap())
        .collect();
    let orders: Vec<f64> = errs.windows(2).map(|w| (w[0] / w[1]).log2()).collect();
    let xs: Vec<f64> = fracs.iter().map(|f: &f64| f.log2()).collect();
    let ys: Vec<f64> = errs.iter().map(|e| e.log2()).collect();
    let (mx, my) = (xs.iter().sum::<f64>() / 4.0, ys.iter().sum::<f64>() / 4.0);
    let slope = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (x - mx) * (y - my))
        .sum::<f64>()
        / xs.iter().map(|x| (x - mx) * (x - mx)).sum::<f64>();
    let pass = (3.5..=4.5).contains(&slope);
    report(
        11,
        "RK4 observed order over a 4-level step ladder",
        slope,
        4.0,
        pass,
        &format!(
            " (accepted range [3.5, 4.5]; pairwise {orders:.2?}; errors {:?})",
            errs.iter().map(|e| format!("{e:.2e}")).collect::<Vec<_>>()
        ),
    );
    assert!(pass);
}

fn gaussian_field(n: usize) -> MatrixField {
    let grid = GridSpec::new(n, 1.0).unwrap();
    MatrixField::from_fn(grid, 1, 1, |x1, x2, o| {
        let r2 = (x1 - 0.1) * (x1 - 0.1) + (x2 + 0.05) * (x2 + 0.05);
        o[0] = C64::new((-r2 / 0.04).exp(), 0.0);
    })
}

#[test]
fn criterion_04_operator_identities() {
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
    let ok_partition = partition <= 1e-12;
    report(4, "Riesz partition", partition, 1e-12, ok_partition, "");

    let t = C64::new(2.0, 0.0);
    let phi = 0.7;
    let th = theta(phi);
    let th = [C64::new(th[0], 0.0), C64::new(th[1], 0.0)];
    let identities = |n: usize| -> [f64; 4] {
        let f = gaussian_field(n);
        let s = dbar(&cauchy_solid(&f), DerivativeScheme::FiniteDifference);
        let pt = pi_t(&f, &SpectralParam::new(t).unwrap()).unwrap();
        let pt = directional_derivative(&pt, zeta(t));
        let pp = directional_derivative(&pi_boundary(&f, phi, Sign::Plus), th);
        let pm = directional_derivative(&pi_boundary(&f, phi, Sign::Minus), th);
        [s, pt, pp, pm].map(|g| g.relative_l2_error(&f))
    };
    let coarse = identities(256);
    let fine = identities(512);
    let names = [
        "dbar o S",
        "zeta(2).d o Pi(2)",
        "theta.d o Pi+",
        "theta.d o Pi-",
    ];
    let mut all = ok_partition;
    for k in 0..4 {
        let gain = coarse[k] / fine[k];
        let pass = coarse[k] <= 1e-3 && gain >= 4.0;
        all &= pass;
        report(
            4,
            names[k],
            coarse[k],
            1e-3,
            pass,
            &format!(
                " (n=512: {:.3e}, improvement {gain:.1}x, required >= 4x)",
                fine[k]
            ),
        );
    }
    assert!(all);
}

#[test]
fn criterion_05_trace_factorization() {
    let grid = GridSpec::new(64, 1.0).unwrap();
    let a = make_phantom(
        &PhantomSpec::new(PhantomKind::SmoothRandom, 2, 5).amplitude(0.3),
        grid,
    )
    .unwrap()
    .into_gauge()
    .unwrap();
    // plain Picard must contract within 50 iterations at this norm
    let opts = SolverOptions {
        fixed_point: FixedPointOptions {
            depth: 0,
            max_iterations: 50,
            ..Default::default()
        },
        ..Default::default()
    };
    let family = solve_family(&a, 64, &opts).unwrap();
    let s = nonabelian_radon(
        &a,
        64,
        &TransportOptions {
            step_fraction: 0.25,
            ..Default::default()
        },
    )
    .unwrap();
    let worst = [Sign::Plus, Sign::Minus]
        .into_iter()
        .map(|sign| {
            family
                .trace_factorization(sign)
                .unwrap()
                .max_relative_difference(&s)
                .unwrap()
        })
        .fold(0.0, f64::max);
    report(
        5,
        "trace factorization reproduces S(A)",
        worst,
        1e-3,
        worst <= 1e-3,
        "",
    );
    assert!(worst <= 1e-3);
}

fn disk_round_trip(n: usize, n_angles: usize) -> f64 {
    let grid = GridSpec::new(n, 1.0).unwrap();
    let a = make_phantom(&PhantomSpec::new(PhantomKind::Disk, 1, 0), grid)
        .unwrap()
        .into_gauge()
        .unwrap();
    let f = MatrixField::from_fn(grid, 1, 1, |x1, x2, o| {
        o[0] = C64::new(bump(x1, x2, [0.15, -0.1], 0.25, 1.0), 0.0)
    });
    let data = attenuated_radon(&a, &f, n_angles, &TransportOptions::default()).unwrap();
    let inv = invert_attenuated(&a, &data, &InversionOptions::default()).unwrap();
    inv.f_hat.relative_l2_error(&f)
}

#[test]
fn criterion_06_attenuated_round_trip_abelian() {
    let start = Instant::now();
    let coarse = disk_round_trip(128, 256);
    let secs = start.elapsed().as_secs_f64();
    let ok = coarse <= 0.05 && secs <= 300.0;
    report(
        6,
        "abelian attenuated round trip, n = 128",
        coarse,
        0.05,
        ok,
        &format!(" ({secs:.1} s)"),
    );
    let fine = disk_round_trip(256, 256);
    report(
        6,
        "abelian attenuated round trip, n = 256",
        fine,
        0.02,
        fine <= 0.02,
        "",
    );
    assert!(ok && fine <= 0.02);
}

#[test]
fn criterion_07_attenuated_round_trip_nonabelian() {
    let errs: Vec<f64> = [32usize, 64, 128]
        .into_iter()
        .map(|n| {
            let grid = GridSpec::new(n, 1.0).unwrap();
            let a = make_phantom(
                &PhantomSpec::new(PhantomKind::SmoothRandom, 2, 5).amplitude(0.3),
                grid,
            )
            .unwrap()
            .into_gauge()
            .unwrap();
            let f = random_source(grid, 2, 1, 11, 1.0);
            let data = attenuated_radon(&a, &f, 2 * n, &TransportOptions::default()).unwrap();
            invert_attenuated(&a, &data, &InversionOptions::default())
                .unwrap()
                .f_hat
                .relative_l2_error(&f)
        })
        .collect();
    let last = errs[2];
    let monotone = errs.windows(2).all(|w| w[1] < w[0]);
    let ok = last <= 0.10 && monotone;
    report(
        7,
        "non-abelian attenuated round trip, n = 128",
        last,
        0.10,
        ok,
        &format!(
            " (ladder {})",
            errs.iter()
                .map(|e| format!("{e:.2e}"))
                .collect::<Vec<_>>()
                .join(", ")
        ),
    );
    assert!(ok);
}

fn scattering_field(n: usize, m: usize, amp: f64) -> GaugeField {
    let a = make_phantom(
        &PhantomSpec::new(PhantomKind::SmoothRandom, m, 5).amplitude(amp),
        GridSpec::new(n, 1.0).unwrap(),
    )
    .unwrap()
    .into_gauge()
    .unwrap();
    condition_a(&a).unwrap()
}

struct ScatteringRun {
    v: MatrixField,
    synthesis: Synthesis,
    recovery: ScatteringRecovery,
    secs: f64,
}

/// One m = 2 synthesis and recovery at n = 128, shared by criteria 8 and 9.
fn scattering_run() -> &'static ScatteringRun {
    static RUN: OnceLock<ScatteringRun> = OnceLock::new();
    RUN.get_or_init(|| {
        let start = Instant::now();
        let a = scattering_field(128, 2, 0.3);
        let v = random_source(a.grid(), 2, 2, 21, 1.0);
        // measure the telescoping gap rather than reject on it
        let opts = ScatteringOptions {
            telescoping_tolerance: f64::INFINITY,
            ..Default::default()
        };
        let synthesis = synthesize(&a, Some(&v), 256, &opts).unwrap();
        let recovery =
            recover_from_functionals(&a, &synthesis.functionals, &synthesis.family, &opts).unwrap();
        ScatteringRun {
            v,
            synthesis,
            recovery,
            secs: start.elapsed().as_secs_f64(),
        }
    })
}

#[test]
fn criterion_08_scattering_trace_recovery() {
    let run = scattering_run();
    let mismatch = run.recovery.diagnostics.trace_mismatch.unwrap();
    report(
        8,
        "recovered inverse traces vs forward family",
        mismatch,
        1e-3,
        mismatch <= 1e-3,
        "",
    );
    let gap = run.synthesis.telescoping_gap;
    report(8, "telescoping identity", gap, 1e-6, gap <= 1e-6, "");
    assert!(mismatch <= 1e-3 && gap <= 1e-6);
}

fn scalar_potential_recovery(a: &GaugeField, v: &MatrixField) -> MatrixField {
    let opts = ScatteringOptions::default();
    let s = synthesize(a, Some(v), 256, &opts).unwrap();
    recover_from_functionals(a, &s.functionals, &s.family, &opts)
        .unwrap()
        .potential
        .v_hat
}

#[test]
fn criterion_09_potential_round_trip() {
    let run = scattering_run();
    let err = run.recovery.potential.v_hat.relative_l2_error(&run.v);
    report(
        9,
        "potential round trip, m = 2, n = 128",
        err,
        0.10,
        err <= 0.10,
        &format!(" ({:.1} s)", run.secs),
    );

    let grid = GridSpec::new(128, 1.0).unwrap();
    let v = random_source(grid, 1, 1, 22, 1.0);
    let with_a = scalar_potential_recovery(&scattering_field(128, 1, 0.5), &v);
    let without = scalar_potential_recovery(&condition_a(&GaugeField::zero(grid, 1)).unwrap(), &v);
    let spread = with_a.relative_l2_error(&without);
    report(
        9,
        "abelian potential independent of A",
        spread,
        1e-4,
        spread <= 1e-4,
        "",
    );
    assert!(err <= 0.10 && spread <= 1e-4);
}

#[test]
fn criterion_10_rh_factorization() {
    let a = scattering_field(64, 2, 0.12);
    let n_angles = 128;
    let opts = ScatteringOptions::default();
    let s = synthesize(&a, None, n_angles, &opts).unwrap();
    let traces = recover_boundary_from_i(&s.functionals.i_plus, &s.functionals.i_minus).unwrap();
    let b = build_rh_data(&traces).unwrap();
    let deviation = b.max_deviation();
    let points = [[0.0, 0.0], [0.3, -0.2], [-0.5, 0.4], [0.1, 0.7], [1.5, 0.3]];
    let factors = rh_factorize(&b, &points, &RhOptions::default()).unwrap();
    let (_, truth) = boundary_values_at(&a, n_angles, &opts.solver, &points).unwrap();
    let mut residual = 0.0f64;
    let mut spread = 0.0f64;
    for (p, f) in factors.iter().enumerate() {
        residual = residual.max(f.residual);
        spread = spread
            .max(gauge_spread(&f.plus, &truth[0][p], 2).unwrap())
            .max(gauge_spread(&f.minus, &truth[1][p], 2).unwrap());
    }
    report(
        10,
        "RH factorization residual",
        residual,
        1e-6,
        residual <= 1e-6,
        &format!(" (|b - I| = {deviation:.3})"),
    );
    report(
        10,
        "gauge-freedom witness",
        spread,
        1e-4,
        spread <= 1e-4,
        "",
    );
    assert!(deviation <= 0.1 && residual <= 1e-6 && spread <= 1e-4);
}

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use nonabelian_radon::gauge_field::{apply_gauge, gauge_from_generator};
use nonabelian_radon::narf::{self, NarfData};
use nonabelian_radon::phantom::{bump, disk_profile, make_phantom, PhantomKind, PhantomSpec};
use nonabelian_radon::ray_transport::Sinogram;
use nonabelian_radon::{GaugeField, GridSpec, MatrixField, C64};
use serde_json::Value;

fn narf(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_narf"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> Output {
    let out = narf(dir, args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn json(path: PathBuf) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn sinogram(path: PathBuf) -> Sinogram {
    match narf::load(path).unwrap() {
        NarfData::Sinogram(s) => s,
        other => panic!("{other:?}"),
    }
}

fn field(path: PathBuf) -> MatrixField {
    match narf::load(path).unwrap() {
        NarfData::Field { field, .. } => field,
        other => panic!("{other:?}"),
    }
}

fn gauss_legendre(f: impl Fn(f64) -> f64, a: f64, b: f64, panels: usize) -> f64 {
    const X: [f64; 3] = [-0.774_596_669_241_483, 0.0, 0.774_596_669_241_483];
    const W: [f64; 3] = [5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0];
    let w = (b - a) / panels as f64;
    (0..panels)
        .map(|p| {
            let mid = a + (p as f64 + 0.5) * w;
            X.iter()
                .zip(W)
                .map(|(x, wt)| wt * f(mid + 0.5 * w * x))
                .sum::<f64>()
        })
        .sum::<f64>()
        * 0.5
        * w
}

#[test]
fn phantom_is_reproducible_and_reported() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let args = |out: &'static str| {
        [
            "phantom", "--kind", "disk", "--n", "64", "--m", "1", "--out", out,
        ]
    };
    let stdout = ok(d, &args("a.narf")).stdout;
    ok(d, &args("b.narf"));
    assert_eq!(
        fs::read(d.join("a.narf")).unwrap(),
        fs::read(d.join("b.narf")).unwrap()
    );
    let report = json(d.join("a.json"));
    assert_eq!(report["support_ok"], Value::Bool(true));
    assert_eq!(report, serde_json::from_slice::<Value>(&stdout).unwrap());
}

#[test]
fn invalid_configuration_exits_with_2_and_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let out = narf(d, &["phantom", "--m", "0", "--out", "x/a.narf"]);
    assert_eq!(out.status.code(), Some(2));
    let out = narf(d, &["phantom", "--n", "100", "--out", "x/a.narf"]);
    assert_eq!(out.status.code(), Some(2));
    let out = narf(d, &["forward", "--field", "missing.narf", "--out", "x"]);
    assert_eq!(out.status.code(), Some(2));
    fs::write(d.join("bad.json"), r#"{"n": 64, "angels": 12}"#).unwrap();
    let out = narf(d, &["--config", "bad.json", "check"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!d.join("x").exists());
}

#[test]
fn flags_override_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(
        d.join("c.json"),
        r#"{"n": 32, "m": 2, "kind": "nilpotent_upper", "out": "from_config.narf"}"#,
    )
    .unwrap();
    ok(d, &["--config", "c.json", "phantom", "--n", "16"]);
    match narf::load(d.join("from_config.narf")).unwrap() {
        NarfData::Gauge(g) => {
            assert_eq!(g.grid().n, 16);
            assert_eq!(g.m(), 2);
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn zero_field_gives_the_identity_sinogram() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    narf::save(
        d.join("zero.narf"),
        &NarfData::Gauge(GaugeField::zero(GridSpec::new(32, 1.0).unwrap(), 2)),
    )
    .unwrap();
    ok(
        d,
        &[
            "forward",
            "--field",
            "zero.narf",
            "--angles",
            "8",
            "--out",
            "fwd",
        ],
    );
    let s = sinogram(d.join("fwd/nonabelian.narf"));
    for blk in s.values.chunks(4) {
        assert_eq!(blk[0].re, 1.0);
        assert_eq!(blk[3].re, 1.0);
        assert_eq!(blk[1].norm() + blk[2].norm(), 0.0);
    }
    let csv = fs::read_to_string(d.join("fwd/nonabelian.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 8 * 32);
}

#[test]
fn disk_sinogram_follows_the_chord_integral() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(
        d,
        &[
            "phantom",
            "--kind",
            "disk",
            "--n",
            "128",
            "--amplitude",
            "0.8",
            "--out",
            "disk.narf",
        ],
    );
    ok(
        d,
        &[
            "forward",
            "--field",
            "disk.narf",
            "--angles",
            "6",
            "--heatmap",
            "--out",
            "fwd",
        ],
    );
    assert!(d.join("fwd/nonabelian.pgm").exists());
    let s = sinogram(d.join("fwd/nonabelian.narf"));
    let mut worst = 0.0f64;
    for k in 0..s.n_angles() {
        for (o, &y2) in s.offsets.iter().enumerate() {
            let half = (1.0 - y2 * y2).max(0.0).sqrt();
            let chord = if half > 0.0 {
                gauss_legendre(|y1| 0.8 * disk_profile(y1.hypot(y2), 1.0), -half, half, 200)
            } else {
                0.0
            };
            worst = worst.max((s.at(k, o)[0].re - chord.exp()).abs() / chord.exp());
        }
    }
    assert!(worst < 1e-3, "{worst}");
}

#[test]
fn gauge_pair_transforms_agree() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let grid = GridSpec::new(128, 1.0).unwrap();
    let a = make_phantom(
        &PhantomSpec::new(PhantomKind::SmoothRandom, 2, 3).amplitude(0.4),
        grid,
    )
    .unwrap()
    .into_gauge()
    .unwrap();
    // generator supported in |x| < 0.7, so the derivative stencil stays inside R
    let generator = MatrixField::from_fn(grid, 2, 2, |x1, x2, o| {
        let w = bump(x1, x2, [0.1, -0.05], 0.2, 0.7);
        o[0] = C64::new(0.3 * w, 0.0);
        o[1] = C64::new(0.0, 0.2 * w);
        o[2] = C64::new(-0.1 * w, 0.0);
        o[3] = C64::new(-0.3 * w, 0.1 * w);
    });
    let b = apply_gauge(&a, &gauge_from_generator(&generator)).unwrap();
    narf::save(d.join("a.narf"), &NarfData::Gauge(a)).unwrap();
    narf::save(d.join("b.narf"), &NarfData::Gauge(b)).unwrap();
    ok(
        d,
        &[
            "forward",
            "--field",
            "a.narf",
            "--compare",
            "b.narf",
            "--angles",
            "16",
            "--out",
            "fwd",
        ],
    );
    let report = json(d.join("fwd/forward.json"));
    let gap = report["compare_max_relative_difference"].as_f64().unwrap();
    assert!(gap < 1e-3, "{gap}");
    assert!(report["determinant_trace_gap"].as_f64().unwrap() < 1e-5);
}

fn round_trip_error(d: &Path, angles: &str) -> f64 {
    let out = format!("fwd{angles}");
    let inv = format!("inv{angles}");
    ok(
        d,
        &[
            "forward", "--field", "a.narf", "--source", "f.narf", "--angles", angles, "--out", &out,
        ],
    );
    ok(
        d,
        &[
            "invert",
            "--field",
            "a.narf",
            "--data",
            &format!("{out}/attenuated.narf"),
            "--truth",
            "f.narf",
            "--out",
            &inv,
        ],
    );
    json(d.join(inv).join("invert.json"))["truth"]["relative_l2_error"]
        .as_f64()
        .unwrap()
}

#[test]
fn inversion_improves_with_angles_and_maps_zero_to_zero() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(
        d,
        &[
            "phantom",
            "--kind",
            "smooth_random",
            "--n",
            "32",
            "--m",
            "2",
            "--amplitude",
            "0.3",
            "--out",
            "a.narf",
        ],
    );
    ok(
        d,
        &[
            "phantom",
            "--kind",
            "random_source",
            "--n",
            "32",
            "--m",
            "2",
            "--seed",
            "3",
            "--out",
            "f.narf",
        ],
    );
    let coarse = round_trip_error(d, "16");
    let fine = round_trip_error(d, "64");
    assert!(fine < coarse, "{fine} {coarse}");

    let data = sinogram(d.join("fwd16/attenuated.narf"));
    let zero = Sinogram {
        values: vec![Default::default(); data.values.len()],
        ..data
    };
    narf::save(d.join("zero.narf"), &NarfData::Sinogram(zero)).unwrap();
    ok(
        d,
        &[
            "invert",
            "--field",
            "a.narf",
            "--data",
            "zero.narf",
            "--out",
            "inv0",
        ],
    );
    assert_eq!(field(d.join("inv0/f_hat.narf")).max_norm(), 0.0);
}

#[test]
fn demo_config_reproduces_the_matrix_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let demo = Path::new(env!("CARGO_MANIFEST_DIR")).join("demo");
    fs::copy(demo.join("config.json"), d.join("config.json")).unwrap();
    let c = ["--config", "config.json"];
    ok(d, &[&c[..], &["phantom", "--out", "out/a.narf"]].concat());
    ok(
        d,
        &[
            &c[..],
            &[
                "phantom",
                "--kind",
                "random_source",
                "--seed",
                "11",
                "--amplitude",
                "1",
                "--out",
                "out/f.narf",
            ],
        ]
        .concat(),
    );
    ok(d, &[&c[..], &["forward", "--out", "out/forward"]].concat());
    ok(d, &[&c[..], &["invert", "--out", "out/invert"]].concat());
    let err = json(d.join("out/invert/invert.json"))["truth"]["relative_l2_error"]
        .as_f64()
        .unwrap();
    // the library run at the same settings gives 1.17e-5
    assert!((err - 1.17e-5).abs() < 0.05e-5, "{err}");
    assert!(d.join("out/invert/f_hat.pgm").exists());
}

#[test]
fn scatter_runs_are_audited_and_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(
        d,
        &[
            "phantom",
            "--kind",
            "smooth_random",
            "--n",
            "32",
            "--m",
            "2",
            "--amplitude",
            "0.12",
            "--out",
            "a.narf",
        ],
    );
    // V = 0
    ok(
        d,
        &[
            "scatter",
            "--field",
            "a.narf",
            "--angles",
            "32",
            "--rh-point",
            "0.1,0.2",
            "--out",
            "zero",
        ],
    );
    assert!(field(d.join("zero/v_hat.narf")).max_norm() < 1e-12);
    let report = json(d.join("zero/scatter.json"));
    assert!(report["rh"]["points"][0]["residual"].as_f64().unwrap() < 1e-12);
    let recovery = json(d.join("zero/recovery.json"));
    let synthesis = json(d.join("zero/synthesis/synthesis.json"));
    assert_eq!(recovery["checksum"], synthesis["checksum"]);

    ok(
        d,
        &[
            "phantom",
            "--kind",
            "random_potential",
            "--n",
            "32",
            "--m",
            "2",
            "--seed",
            "4",
            "--out",
            "v.narf",
        ],
    );
    for (run, threads) in [("one", "1"), ("two", "2")] {
        ok(
            d,
            &[
                "scatter",
                "--field",
                "a.narf",
                "--potential",
                "v.narf",
                "--angles",
                "32",
                "--threads",
                threads,
                "--out",
                run,
            ],
        );
    }
    assert_eq!(
        fs::read(d.join("one/v_hat.narf")).unwrap(),
        fs::read(d.join("two/v_hat.narf")).unwrap()
    );
}

#[test]
fn abelian_scatter_ignores_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    for (name, seed) in [("a.narf", "1"), ("b.narf", "2")] {
        ok(
            d,
            &[
                "phantom",
                "--kind",
                "smooth_random",
                "--n",
                "32",
                "--seed",
                seed,
                "--amplitude",
                "0.3",
                "--out",
                name,
            ],
        );
    }
    ok(
        d,
        &[
            "phantom",
            "--kind",
            "random_potential",
            "--n",
            "32",
            "--seed",
            "9",
            "--out",
            "v.narf",
        ],
    );
    for (field, out) in [("a.narf", "ra"), ("b.narf", "rb")] {
        ok(
            d,
            &[
                "scatter",
                "--field",
                field,
                "--potential",
                "v.narf",
                "--angles",
                "32",
                "--out",
                out,
            ],
        );
    }
    let va = field(d.join("ra/v_hat.narf"));
    let vb = field(d.join("rb/v_hat.narf"));
    assert!(va.relative_l2_error(&vb) < 1e-10);
}

#[test]
fn rh_failure_is_reported_and_the_run_continues() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(
        d,
        &[
            "phantom",
            "--kind",
            "smooth_random",
            "--n",
            "32",
            "--m",
            "2",
            "--amplitude",
            "2",
            "--out",
            "a.narf",
        ],
    );
    ok(
        d,
        &[
            "scatter",
            "--field",
            "a.narf",
            "--angles",
            "16",
            "--telescoping-tolerance",
            "1",
            "--rh-point",
            "0,0",
            "--out",
            "big",
        ],
    );
    let report = json(d.join("big/scatter.json"));
    assert!(report["rh"]["error"].as_str().unwrap().contains("contract"));
    assert!(d.join("big/v_hat.narf").exists());
}

#[test]
fn numerical_failure_exits_with_3_and_writes_diagnostics() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(
        d,
        &[
            "phantom",
            "--kind",
            "smooth_random",
            "--n",
            "32",
            "--m",
            "2",
            "--out",
            "a.narf",
        ],
    );
    let out = narf(
        d,
        &[
            "scatter",
            "--field",
            "a.narf",
            "--angles",
            "8",
            "--telescoping-tolerance",
            "1e-16",
            "--out",
            "fail",
        ],
    );
    assert_eq!(out.status.code(), Some(3));
    let report = json(d.join("fail/failure.json"));
    assert_eq!(report["command"], "scatter");
}

#[test]
fn self_check_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = ok(dir.path(), &["check", "--n", "128", "--out", "check.json"]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.matches("PASS").count(), 5, "{text}");
    let rows = json(dir.path().join("check.json"));
    assert_eq!(rows.as_array().unwrap().len(), 5);
}

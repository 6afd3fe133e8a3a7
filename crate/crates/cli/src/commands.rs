use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{bail, Context};
use nonabelian_radon::attenuated_inversion::{invert_attenuated, InversionOptions};
use nonabelian_radon::cauchy_ops::identity_suite;
use nonabelian_radon::narf::{self, NarfData};
use nonabelian_radon::phantom::{make_phantom, random_source, Phantom, PhantomSpec};
use nonabelian_radon::ray_transport::{
    attenuated_radon, determinant_check, min_abs_det, nonabelian_radon, Sinogram,
};
use nonabelian_radon::scattering_recovery::{
    boundary_values_at, build_rh_data, condition_a, gauge_spread, read_synthesis,
    recover_from_functionals, rh_factorize, synthesize, write_recovery, write_synthesis,
    ScatteringOptions, SYNTHESIS_MANIFEST,
};
use nonabelian_radon::{Error, GaugeField, MatrixField};
use serde::Serialize;
use serde_json::json;

use crate::config::{require_file, PhantomChoice, RunConfig};

fn write_json(path: &Path, value: &impl Serialize) -> anyhow::Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)? + "\n")
        .with_context(|| format!("writing {}", path.display()))
}

fn create(path: &Path) -> anyhow::Result<BufWriter<File>> {
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

fn load_gauge(path: &Path) -> anyhow::Result<GaugeField> {
    match narf::load(path)? {
        NarfData::Gauge(g) => Ok(g),
        NarfData::Field { kind, field } if field.is_square() => {
            // a bare m x m field is read as A0
            log::info!("{}: using the {kind} field as A0", path.display());
            Ok(GaugeField::scalar_potential(field)?)
        }
        _ => bail!("{} does not hold a gauge field", path.display()),
    }
}

fn load_field(path: &Path) -> anyhow::Result<MatrixField> {
    match narf::load(path)? {
        NarfData::Field { field, .. } => Ok(field),
        _ => bail!("{} does not hold a matrix field", path.display()),
    }
}

fn load_sinogram(path: &Path) -> anyhow::Result<Sinogram> {
    match narf::load(path)? {
        NarfData::Sinogram(s) => Ok(s),
        _ => bail!("{} does not hold line data", path.display()),
    }
}

fn save_sinogram(dir: &Path, stem: &str, s: &Sinogram, heatmap: bool) -> anyhow::Result<()> {
    narf::save(
        dir.join(format!("{stem}.narf")),
        &NarfData::Sinogram(s.clone()),
    )?;
    let mut csv = create(&dir.join(format!("{stem}.csv")))?;
    narf::write_sinogram_csv(&mut csv, s)?;
    csv.flush()?;
    if heatmap {
        let mut pgm = create(&dir.join(format!("{stem}.pgm")))?;
        narf::sinogram_heatmap(&mut pgm, s)?;
        pgm.flush()?;
    }
    Ok(())
}

fn save_field(
    dir: &Path,
    stem: &str,
    kind: &str,
    f: &MatrixField,
    heatmap: bool,
) -> anyhow::Result<()> {
    narf::save(
        dir.join(format!("{stem}.narf")),
        &NarfData::Field {
            kind: kind.into(),
            field: f.clone(),
        },
    )?;
    if heatmap {
        let mut pgm = create(&dir.join(format!("{stem}.pgm")))?;
        narf::field_heatmap(&mut pgm, f)?;
        pgm.flush()?;
    }
    Ok(())
}

pub fn phantom(cfg: &RunConfig) -> anyhow::Result<()> {
    cfg.validate_common()?;
    let grid = cfg.grid()?;
    let out = cfg.out()?.to_path_buf();
    let data = match cfg.kind.library_kind() {
        Some(kind) => {
            let spec = PhantomSpec::new(kind, cfg.m, cfg.seed).amplitude(cfg.amplitude);
            match make_phantom(&spec, grid)? {
                Phantom::Gauge(g) => NarfData::Gauge(g),
                Phantom::Source(f) => NarfData::Field {
                    kind: "source".into(),
                    field: f,
                },
            }
        }
        None => {
            let (cols, kind) = match cfg.kind {
                PhantomChoice::RandomSource => (1, "source"),
                _ => (cfg.m, "potential"),
            };
            NarfData::Field {
                kind: kind.into(),
                field: random_source(grid, cfg.m, cols, cfg.seed, cfg.amplitude),
            }
        }
    };
    let outside = match &data {
        NarfData::Gauge(g) => g
            .components()
            .iter()
            .map(|c| c.max_outside(grid.radius))
            .fold(0.0, f64::max),
        NarfData::Field { field, .. } => field.max_outside(grid.radius),
        NarfData::Sinogram(_) => unreachable!(),
    };
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    narf::save(&out, &data)?;
    let report = json!({
        "file": out,
        "kind": cfg.kind,
        "n": cfg.n,
        "m": cfg.m,
        "seed": cfg.seed,
        "amplitude": cfg.amplitude,
        "max_outside_support": outside,
        "support_ok": outside <= nonabelian_radon::grid::SUPPORT_TOLERANCE,
    });
    write_json(&out.with_extension("json"), &report)?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

pub fn forward(cfg: &RunConfig) -> anyhow::Result<()> {
    cfg.validate_common()?;
    let field_path = require_file("field", &cfg.field)?;
    let source_path = cfg
        .source
        .as_ref()
        .map(|_| require_file("source", &cfg.source))
        .transpose()?;
    let compare_path = cfg
        .compare
        .as_ref()
        .map(|_| require_file("compare", &cfg.compare))
        .transpose()?;
    let out = cfg.out()?.to_path_buf();
    let a = load_gauge(&field_path)?;
    let f = source_path.as_deref().map(load_field).transpose()?;
    let b = compare_path.as_deref().map(load_gauge).transpose()?;
    fs::create_dir_all(&out)?;

    let s = nonabelian_radon(&a, cfg.angles, &cfg.transport)?;
    save_sinogram(&out, "nonabelian", &s, cfg.heatmap)?;
    let dets = determinant_check(&a, cfg.angles, &cfg.transport)?;
    let det_gap = dets
        .iter()
        .map(|(d, e)| (d - e).norm() / e.norm().max(1.0))
        .fold(0.0, f64::max);
    let mut report = json!({
        "n_angles": cfg.angles,
        "m": a.m(),
        "min_abs_det": min_abs_det(&s),
        "determinant_trace_gap": det_gap,
    });
    if let Some(f) = f {
        let r = attenuated_radon(&a, &f, cfg.angles, &cfg.transport)?;
        save_sinogram(&out, "attenuated", &r, cfg.heatmap)?;
        report["attenuated_max"] = json!(r.max_norm());
    }
    if let Some(b) = b {
        let sb = nonabelian_radon(&b, cfg.angles, &cfg.transport)?;
        report["compare_max_difference"] = json!(s.max_difference(&sb)?);
        report["compare_max_relative_difference"] = json!(s.max_relative_difference(&sb)?);
    }
    write_json(&out.join("forward.json"), &report)?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

fn truth_table(f_hat: &MatrixField, truth: &MatrixField) -> anyhow::Result<serde_json::Value> {
    Ok(json!({
        "relative_l2_error": f_hat.relative_l2_error(truth),
        "max_error": f_hat.sub(truth)?.max_norm(),
        "max_outside_support": f_hat.max_outside(truth.grid.radius),
    }))
}

pub fn invert(cfg: &RunConfig) -> anyhow::Result<()> {
    cfg.validate_common()?;
    let field_path = require_file("field", &cfg.field)?;
    let data_path = require_file("data", &cfg.data)?;
    let truth_path = cfg
        .truth
        .as_ref()
        .map(|_| require_file("truth", &cfg.truth))
        .transpose()?;
    let out = cfg.out()?.to_path_buf();
    let a = load_gauge(&field_path)?;
    let data = load_sinogram(&data_path)?;
    let truth = truth_path.as_deref().map(load_field).transpose()?;
    fs::create_dir_all(&out)?;

    let opts = InversionOptions {
        solver: cfg.solver,
        transport: cfg.transport,
    };
    let inv = invert_attenuated(&a, &data, &opts)?;
    save_field(&out, "f_hat", "source", &inv.f_hat, cfg.heatmap)?;
    let mut report = json!({ "diagnostics": inv.diagnostics });
    if let Some(t) = truth {
        report["truth"] = truth_table(&inv.f_hat, &t)?;
    }
    write_json(&out.join("invert.json"), &report)?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

pub fn scatter(cfg: &RunConfig) -> anyhow::Result<()> {
    cfg.validate_common()?;
    let field_path = require_file("field", &cfg.field)?;
    let potential_path = cfg
        .potential
        .as_ref()
        .map(|_| require_file("potential", &cfg.potential))
        .transpose()?;
    let out = cfg.out()?.to_path_buf();
    let a = condition_a(&load_gauge(&field_path)?)?;
    let v = match potential_path {
        Some(p) => load_field(&p)?,
        None => MatrixField::zeros(a.grid(), a.m(), a.m()),
    };
    fs::create_dir_all(&out)?;

    let opts = ScatteringOptions {
        solver: cfg.solver,
        transport: cfg.transport,
        telescoping_tolerance: cfg.telescoping_tolerance,
    };
    let synth_dir = out.join("synthesis");
    let s = synthesize(&a, Some(&v), cfg.angles, &opts)?;
    write_synthesis(&synth_dir, &s, &opts)?;
    let manifest = synth_dir.join(SYNTHESIS_MANIFEST);
    let (_, functionals) = read_synthesis(&manifest)?;
    let r = recover_from_functionals(&a, &functionals, &s.family, &opts)?;
    let v_error = (v.max_norm() > 0.0).then(|| r.potential.v_hat.relative_l2_error(&v));
    let rec = write_recovery(&out, &r, &manifest, &functionals, v_error)?;
    if cfg.heatmap {
        let mut pgm = create(&out.join("v_hat.pgm"))?;
        narf::field_heatmap(&mut pgm, &r.potential.v_hat)?;
        pgm.flush()?;
    }

    let mut report = json!({
        "telescoping_gap": s.telescoping_gap,
        "checksum": rec.checksum,
        "diagnostics": rec.diagnostics,
        "v_error": v_error,
        "v_hat_max": r.potential.v_hat.max_norm(),
    });
    if !cfg.rh_points.is_empty() {
        let jump = build_rh_data(&r.traces)?;
        report["rh"] = match rh_factorize(&jump, &cfg.rh_points, &cfg.rh) {
            Ok(factors) => {
                let (_, truth) = boundary_values_at(&a, cfg.angles, &cfg.solver, &cfg.rh_points)?;
                let m = a.m();
                let mut rows = Vec::new();
                for (p, f) in factors.iter().enumerate() {
                    rows.push(json!({
                        "x": f.x,
                        "iterations": f.iterations,
                        "residual": f.residual,
                        "contraction": f.contraction,
                        "gauge_spread_plus": gauge_spread(&f.plus, &truth[0][p], m)?,
                        "gauge_spread_minus": gauge_spread(&f.minus, &truth[1][p], m)?,
                    }));
                }
                json!({ "points": rows })
            }
            Err(e @ Error::NotContractive { .. }) => {
                log::warn!("RH factorization skipped: {e}");
                json!({ "error": e.to_string() })
            }
            Err(e) => return Err(e.into()),
        };
    }
    write_json(&out.join("scatter.json"), &report)?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

/// Returns whether every identity passed.
pub fn check(cfg: &RunConfig) -> anyhow::Result<bool> {
    if cfg.check_n < 16 || !cfg.check_n.is_power_of_two() {
        bail!("check grid size must be a power of two and at least 16");
    }
    let rows = identity_suite(cfg.check_n, cfg.check_tolerance)?;
    println!(
        "{:<18} {:>11} {:>11} {:>10}  result",
        "identity", "error", "tolerance", "gain"
    );
    for r in &rows {
        let gain = r
            .improvement
            .map_or("-".to_string(), |g| format!("{g:.1}x"));
        println!(
            "{:<18} {:>11.3e} {:>11.1e} {:>10}  {}",
            r.name,
            r.error,
            r.tolerance,
            gain,
            if r.pass { "PASS" } else { "FAIL" }
        );
    }
    if let Some(out) = &cfg.out {
        if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir)?;
        }
        write_json(out, &rows)?;
    }
    Ok(rows.iter().all(|r| r.pass))
}

//! `narf`: batch front end for phantoms, forward transforms, attenuated
//! inversion and scattering-data recovery.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use config::{PhantomChoice, RunConfig};
use serde_json::json;

/// Exit status for invalid configuration or unusable inputs.
const EXIT_CONFIG: u8 = 2;
/// Exit status for a numerical failure (diagnostics are written).
const EXIT_NUMERICAL: u8 = 3;

#[derive(Parser, Debug)]
#[command(name = "narf", version, about = "Non-abelian Radon transform toolkit")]
struct Cli {
    /// JSON config; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker thread cap.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// More log output (repeat for debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a phantom field or source as NARF, with a support report.
    Phantom(PhantomArgs),
    /// Non-abelian and attenuated Radon transforms of stored fields.
    Forward(ForwardArgs),
    /// Reconstruct a source from attenuated line data.
    Invert(InvertArgs),
    /// Synthesize scattering functionals and recover the potential.
    Scatter(ScatterArgs),
    /// Run the operator identity self-test.
    Check(CheckArgs),
}

#[derive(Args, Debug, Default)]
struct PhantomArgs {
    #[arg(long)]
    kind: Option<PhantomChoice>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    m: Option<usize>,
    /// Support radius R.
    #[arg(long)]
    radius: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    amplitude: Option<f64>,
    /// Output NARF file; the report goes next to it as JSON.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Default)]
struct ForwardArgs {
    #[arg(long)]
    field: Option<PathBuf>,
    /// Source for the attenuated transform.
    #[arg(long)]
    source: Option<PathBuf>,
    /// Second field whose transform is compared to the first.
    #[arg(long)]
    compare: Option<PathBuf>,
    #[arg(long)]
    angles: Option<usize>,
    #[arg(long)]
    step_fraction: Option<f64>,
    /// Also write PGM heatmaps.
    #[arg(long)]
    heatmap: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Default)]
struct InvertArgs {
    #[arg(long)]
    field: Option<PathBuf>,
    #[arg(long)]
    data: Option<PathBuf>,
    /// Known source for the error table.
    #[arg(long)]
    truth: Option<PathBuf>,
    #[arg(long)]
    heatmap: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Default)]
struct ScatterArgs {
    /// Field whose A1, A2 enter with coupling -i.
    #[arg(long)]
    field: Option<PathBuf>,
    /// Potential V (zero when omitted).
    #[arg(long)]
    potential: Option<PathBuf>,
    #[arg(long)]
    angles: Option<usize>,
    /// Points for the circle factorization, as `x1,x2` (repeatable).
    #[arg(long = "rh-point", value_parser = parse_point)]
    rh_points: Vec<[f64; 2]>,
    #[arg(long)]
    telescoping_tolerance: Option<f64>,
    #[arg(long)]
    heatmap: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Default)]
struct CheckArgs {
    /// Coarse grid size (the fine grid doubles it).
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    tolerance: Option<f64>,
    /// Optional JSON copy of the table.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_point(s: &str) -> Result<[f64; 2], String> {
    let (a, b) = s
        .split_once(',')
        .ok_or_else(|| format!("expected x1,x2, got '{s}'"))?;
    let p = |t: &str| t.trim().parse::<f64>().map_err(|e| e.to_string());
    Ok([p(a)?, p(b)?])
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn set_path(slot: &mut Option<PathBuf>, value: &Option<PathBuf>) {
    if value.is_some() {
        slot.clone_from(value);
    }
}

impl Command {
    fn apply(&self, cfg: &mut RunConfig) {
        match self {
            Command::Phantom(a) => {
                set(&mut cfg.kind, a.kind);
                set(&mut cfg.n, a.n);
                set(&mut cfg.m, a.m);
                set(&mut cfg.radius, a.radius);
                set(&mut cfg.seed, a.seed);
                set(&mut cfg.amplitude, a.amplitude);
                set_path(&mut cfg.out, &a.out);
            }
            Command::Forward(a) => {
                set_path(&mut cfg.field, &a.field);
                set_path(&mut cfg.source, &a.source);
                set_path(&mut cfg.compare, &a.compare);
                set(&mut cfg.angles, a.angles);
                set(&mut cfg.transport.step_fraction, a.step_fraction);
                cfg.heatmap |= a.heatmap;
                set_path(&mut cfg.out, &a.out);
            }
            Command::Invert(a) => {
                set_path(&mut cfg.field, &a.field);
                set_path(&mut cfg.data, &a.data);
                set_path(&mut cfg.truth, &a.truth);
                cfg.heatmap |= a.heatmap;
                set_path(&mut cfg.out, &a.out);
            }
            Command::Scatter(a) => {
                set_path(&mut cfg.field, &a.field);
                set_path(&mut cfg.potential, &a.potential);
                set(&mut cfg.angles, a.angles);
                if !a.rh_points.is_empty() {
                    cfg.rh_points.clone_from(&a.rh_points);
                }
                set(&mut cfg.telescoping_tolerance, a.telescoping_tolerance);
                cfg.heatmap |= a.heatmap;
                set_path(&mut cfg.out, &a.out);
            }
            Command::Check(a) => {
                set(&mut cfg.check_n, a.n);
                set(&mut cfg.check_tolerance, a.tolerance);
                set_path(&mut cfg.out, &a.out);
            }
        }
    }

    fn name(&self) -> &'static str {
        match self {
            Command::Phantom(_) => "phantom",
            Command::Forward(_) => "forward",
            Command::Invert(_) => "invert",
            Command::Scatter(_) => "scatter",
            Command::Check(_) => "check",
        }
    }
}

fn numerical(e: &anyhow::Error) -> Option<&nonabelian_radon::Error> {
    e.chain()
        .filter_map(|c| c.downcast_ref::<nonabelian_radon::Error>())
        .find(|e| e.is_numerical())
}

fn run(cli: &Cli) -> anyhow::Result<ExitCode> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    cli.command.apply(&mut cfg);
    if cli.threads.is_some() {
        cfg.threads = cli.threads;
    }
    if let Some(t) = cfg.threads {
        if t == 0 {
            anyhow::bail!("--threads must be positive");
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()?;
    }
    log::debug!("{cfg:?}");
    let result = match &cli.command {
        Command::Phantom(_) => commands::phantom(&cfg),
        Command::Forward(_) => commands::forward(&cfg),
        Command::Invert(_) => commands::invert(&cfg),
        Command::Scatter(_) => commands::scatter(&cfg),
        Command::Check(_) => {
            return commands::check(&cfg).map(|ok| {
                if ok {
                    ExitCode::SUCCESS
                } else {
                    ExitCode::from(EXIT_NUMERICAL)
                }
            })
        }
    };
    match result {
        Ok(()) => Ok(ExitCode::SUCCESS),
        Err(e) => {
            if let (Some(num), Some(out)) = (numerical(&e), &cfg.out) {
                // leave the failure next to the partial outputs
                let dir = if cli.command.name() == "phantom" {
                    out.parent().map(|p| p.to_path_buf()).unwrap_or_default()
                } else {
                    out.clone()
                };
                let report = json!({
                    "command": cli.command.name(),
                    "error": num.to_string(),
                    "detail": format!("{num:?}"),
                });
                if std::fs::create_dir_all(&dir).is_ok() {
                    let _ = std::fs::write(
                        dir.join("failure.json"),
                        serde_json::to_string_pretty(&report).unwrap_or_default(),
                    );
                }
            }
            Err(e)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            if numerical(&e).is_some() {
                ExitCode::from(EXIT_NUMERICAL)
            } else {
                ExitCode::from(EXIT_CONFIG)
            }
        }
    }
}

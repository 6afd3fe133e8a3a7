use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use nonabelian_radon::phantom::PhantomKind;
use nonabelian_radon::ray_transport::TransportOptions;
use nonabelian_radon::scattering_recovery::RhOptions;
use nonabelian_radon::spectral_solutions::SolverOptions;
use nonabelian_radon::GridSpec;
use serde::{Deserialize, Serialize};

/// What `phantom` writes: a library phantom or a random smooth field.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhantomChoice {
    GaussianBump,
    Disk,
    NilpotentUpper,
    SmoothRandom,
    ScalarSource,
    /// `m x 1` random source.
    RandomSource,
    /// `m x m` random potential.
    RandomPotential,
}

impl PhantomChoice {
    pub fn library_kind(self) -> Option<PhantomKind> {
        Some(match self {
            PhantomChoice::GaussianBump => PhantomKind::GaussianBump,
            PhantomChoice::Disk => PhantomKind::Disk,
            PhantomChoice::NilpotentUpper => PhantomKind::NilpotentUpper,
            PhantomChoice::SmoothRandom => PhantomKind::SmoothRandom,
            PhantomChoice::ScalarSource => PhantomKind::ScalarSource,
            PhantomChoice::RandomSource | PhantomChoice::RandomPotential => return None,
        })
    }
}

impl std::str::FromStr for PhantomChoice {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        serde_json::from_value(serde_json::Value::String(s.to_string()))
            .map_err(|_| format!("unknown phantom kind '{s}'"))
    }
}

/// Every parameter a command can take. Read from a JSON file, then
/// overridden by flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub n: usize,
    pub radius: f64,
    pub m: usize,
    pub kind: PhantomChoice,
    pub seed: u64,
    pub amplitude: f64,
    pub angles: usize,
    pub field: Option<PathBuf>,
    pub source: Option<PathBuf>,
    pub data: Option<PathBuf>,
    pub truth: Option<PathBuf>,
    pub potential: Option<PathBuf>,
    pub compare: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub heatmap: bool,
    pub rh_points: Vec<[f64; 2]>,
    pub check_n: usize,
    pub check_tolerance: f64,
    pub telescoping_tolerance: f64,
    pub solver: SolverOptions,
    pub transport: TransportOptions,
    pub rh: RhOptions,
    pub threads: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            n: 128,
            radius: 1.0,
            m: 1,
            kind: PhantomChoice::Disk,
            seed: 0,
            amplitude: 1.0,
            angles: 256,
            field: None,
            source: None,
            data: None,
            truth: None,
            potential: None,
            compare: None,
            out: None,
            heatmap: false,
            rh_points: Vec::new(),
            check_n: 256,
            check_tolerance: 1e-3,
            telescoping_tolerance: 1e-4,
            solver: SolverOptions::default(),
            transport: TransportOptions::default(),
            rh: RhOptions::default(),
            threads: None,
        }
    }
}

impl RunConfig {
    /// Reads a config file; relative paths inside it resolve against the
    /// file's directory.
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg: RunConfig = serde_json::from_str(&text)
            .with_context(|| format!("parsing config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [
            &mut cfg.field,
            &mut cfg.source,
            &mut cfg.data,
            &mut cfg.truth,
            &mut cfg.potential,
            &mut cfg.compare,
            &mut cfg.out,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn grid(&self) -> anyhow::Result<GridSpec> {
        Ok(GridSpec::new(self.n, self.radius)?)
    }

    pub fn out(&self) -> anyhow::Result<&Path> {
        match &self.out {
            Some(p) => Ok(p),
            None => bail!("an output path is required (--out)"),
        }
    }

    pub fn validate_common(&self) -> anyhow::Result<()> {
        if self.m < 1 {
            bail!("m must be at least 1");
        }
        if self.angles < 2 {
            bail!("at least two angles are needed");
        }
        if !(self.amplitude.is_finite()) {
            bail!("amplitude must be finite");
        }
        if self.threads == Some(0) {
            bail!("--threads must be positive");
        }
        if !(self.transport.step_fraction > 0.0 && self.transport.step_fraction <= 1.0) {
            bail!("transport.step_fraction must lie in (0, 1]");
        }
        Ok(())
    }
}

/// Fails unless `path` names an existing file.
pub fn require_file(what: &str, path: &Option<PathBuf>) -> anyhow::Result<PathBuf> {
    match path {
        Some(p) if p.is_file() => Ok(p.clone()),
        Some(p) => bail!("{what} file {} does not exist", p.display()),
        None => bail!("a {what} file is required (--{what})"),
    }
}

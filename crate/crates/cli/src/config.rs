//! Experiment configuration: CLI flags merged over an optional TOML-style
//! key=value file, validated into one struct shared by all experiment kinds.

use std::collections::BTreeMap;
use std::path::PathBuf;

use crate::error::{CliError, Result};

/// Which experiment family to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentKind {
    ErrorVsK,
    CpuTime,
    EpsSweep,
    QerrVsK,
    Variance,
    Lloyd,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::ErrorVsK => "error-vs-k",
            ExperimentKind::CpuTime => "cpu-time",
            ExperimentKind::EpsSweep => "eps-sweep",
            ExperimentKind::QerrVsK => "qerr",
            ExperimentKind::Variance => "variance",
            ExperimentKind::Lloyd => "lloyd",
        }
    }
}

/// Seeding rule selector mirrored from the library, carrying the chain
/// length beside it so the CSV can record both.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Seeding {
    KmeansPlusPlus,
    AfkMc2,
}

impl Seeding {
    pub fn name(self) -> &'static str {
        match self {
            Seeding::KmeansPlusPlus => "kmeanspp",
            Seeding::AfkMc2 => "afkmc2",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "kmeanspp" => Ok(Seeding::KmeansPlusPlus),
            "afkmc2" => Ok(Seeding::AfkMc2),
            other => Err(CliError::Config(format!(
                "unknown seeding \"{other}\" (expected kmeanspp or afkmc2)"
            ))),
        }
    }
}

/// Fully resolved configuration for one experiment run.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub dataset: String,
    pub k_grid: Vec<usize>,
    pub eps_grid: Vec<f64>,
    pub kappas: Vec<f64>,
    pub seeding: Seeding,
    pub chain_length: usize,
    pub lloyd_iters: usize,
    pub reps: usize,
    pub base_seed: u64,
    pub out: Option<PathBuf>,
    pub jobs: usize,
    pub pin_timing: bool,
    /// Points per side when a continuous dataset must be materialized
    /// (eps-sweep) or sampled for quantization-error runs; 0 picks the
    /// experiment default (2000 for eps-sweep, 1000 for qerr).
    pub sample_n: usize,
    /// Largest cloud the exact reference solver accepts before advising
    /// subsampling.
    pub max_ref_n: usize,
}

impl ExperimentConfig {
    pub fn effective_sample_n(&self) -> usize {
        if self.sample_n > 0 {
            return self.sample_n;
        }
        match self.kind {
            ExperimentKind::EpsSweep => 2000,
            ExperimentKind::QerrVsK => 1000,
            _ => 1000,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dataset.is_empty() {
            return Err(CliError::Config("--dataset is required".into()));
        }
        if self.reps < 1 {
            return Err(CliError::Config("--reps must be >= 1".into()));
        }
        if self.kind == ExperimentKind::Variance && self.reps < 2 {
            return Err(CliError::Config(
                "variance runs need --reps >= 2 (standard deviation needs at least two runs)"
                    .into(),
            ));
        }
        if self.kind == ExperimentKind::EpsSweep {
            ensure_strictly_increasing_f64(&self.eps_grid, "--eps-grid")?;
            if self.eps_grid.iter().any(|&e| e <= 0.0) {
                return Err(CliError::Config(
                    "--eps-grid values must be positive".into(),
                ));
            }
        } else {
            ensure_strictly_increasing_usize(&self.k_grid, "--k-grid")?;
            if self.k_grid.first().is_some_and(|&k| k == 0) {
                return Err(CliError::Config("--k-grid values must be >= 1".into()));
            }
        }
        for &kappa in &self.kappas {
            if !(kappa > 0.0 && kappa <= 1.0) {
                return Err(CliError::Config(format!(
                    "--kappa values must lie in (0, 1], got {kappa}"
                )));
            }
        }
        if self.kappas.is_empty() {
            return Err(CliError::Config("--kappa needs at least one value".into()));
        }
        if self.chain_length == 0 {
            return Err(CliError::Config("--chain-length must be >= 1".into()));
        }
        Ok(())
    }
}

fn ensure_strictly_increasing_usize(grid: &[usize], what: &str) -> Result<()> {
    if grid.is_empty() {
        return Err(CliError::Config(format!("{what} must not be empty")));
    }
    if grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(CliError::Config(format!(
            "{what} must be strictly increasing"
        )));
    }
    Ok(())
}

fn ensure_strictly_increasing_f64(grid: &[f64], what: &str) -> Result<()> {
    if grid.is_empty() {
        return Err(CliError::Config(format!("{what} must not be empty")));
    }
    if grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(CliError::Config(format!(
            "{what} must be strictly increasing"
        )));
    }
    Ok(())
}

/// Default k grid: 9 values evenly log-spaced over [1, 100].
pub fn default_k_grid() -> Vec<usize> {
    let mut grid: Vec<usize> = (0..9)
        .map(|i| 100f64.powf(i as f64 / 8.0).round() as usize)
        .collect();
    grid.dedup();
    grid
}

/// Default epsilon grid (absolute distance scale; override per dataset).
pub fn default_eps_grid() -> Vec<f64> {
    vec![0.02, 0.05, 0.1, 0.2, 0.5]
}

pub fn parse_usize_grid(s: &str) -> Result<Vec<usize>> {
    s.split(',')
        .map(|t| {
            t.trim()
                .parse::<usize>()
                .map_err(|_| CliError::Config(format!("invalid grid entry \"{t}\"")))
        })
        .collect()
}

pub fn parse_f64_grid(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| CliError::Config(format!("invalid grid entry \"{t}\"")))
        })
        .collect()
}

/// Reads a flat TOML-style `key = value` file into string pairs. Values may
/// be quoted; comments start with `#`.
pub fn read_config_file(path: &PathBuf) -> Result<BTreeMap<String, String>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Data(format!("cannot read config {}: {e}", path.display())))?;
    let table: toml::Table = text
        .parse()
        .map_err(|e| CliError::Config(format!("config {}: {e}", path.display())))?;
    let mut out = BTreeMap::new();
    for (key, value) in table {
        let rendered = match value {
            toml::Value::String(s) => s,
            toml::Value::Integer(i) => i.to_string(),
            toml::Value::Float(f) => f.to_string(),
            toml::Value::Boolean(b) => b.to_string(),
            other => {
                return Err(CliError::Config(format!(
                    "config key \"{key}\" has unsupported type ({other})"
                )))
            }
        };
        out.insert(key, rendered);
    }
    Ok(out)
}

/// Canonical one-line rendering of the config, hashed into CSV metadata.
pub fn canonical_string(cfg: &ExperimentConfig) -> String {
    format!(
        "kind={};dataset={};k_grid={:?};eps_grid={:?};kappas={:?};seeding={};chain={};lloyd={};reps={};seed={};sample_n={};max_ref_n={}",
        cfg.kind.name(),
        cfg.dataset,
        cfg.k_grid,
        cfg.eps_grid,
        cfg.kappas,
        cfg.seeding.name(),
        cfg.chain_length,
        cfg.lloyd_iters,
        cfg.reps,
        cfg.base_seed,
        cfg.effective_sample_n(),
        cfg.max_ref_n,
    )
}

//! Dataset specification strings and their resolution into sampler pairs
//! and (for discrete families) the underlying point clouds.
//!
//! Grammar: `name:key=value,key=value,...` with families
//! `gaussian`, `hypercube`, `dirac`, `mixtures`, `csv`, `pgm`.
//! File-backed specs list their two paths first: `csv:left.csv,right.csv[,standardize][,weight-col=K]`.

use std::path::Path;
use std::sync::Arc;

use quantot_core::datasets::DiscreteCloudSampler;
use quantot_core::{
    dirac_pair, fragmented_hypercube, gaussian_pair, load_csv_pointcloud, load_grid_image,
    sampled_mixtures, DatasetPair, DiscreteMeasure,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{CliError, Result};

/// A resolved dataset: always provides a sampler pair; discrete families
/// additionally expose the frozen clouds behind the samplers.
pub struct ResolvedDataset {
    pub pair: DatasetPair,
    /// The full point clouds for discrete datasets (mixtures, csv, pgm).
    pub clouds: Option<(DiscreteMeasure, DiscreteMeasure)>,
}

impl ResolvedDataset {
    pub fn is_discrete(&self) -> bool {
        self.clouds.is_some()
    }
}

struct SpecArgs<'a> {
    positional: Vec<&'a str>,
    named: Vec<(&'a str, &'a str)>,
}

fn split_spec(spec: &str) -> Result<(&str, SpecArgs<'_>)> {
    let (name, rest) = spec.split_once(':').unwrap_or((spec, ""));
    let mut positional = Vec::new();
    let mut named = Vec::new();
    for piece in rest.split(',').filter(|p| !p.is_empty()) {
        match piece.split_once('=') {
            Some((k, v)) => named.push((k.trim(), v.trim())),
            None => positional.push(piece.trim()),
        }
    }
    Ok((name, SpecArgs { positional, named }))
}

fn named_usize(args: &SpecArgs, key: &str) -> Result<Option<usize>> {
    for (k, v) in &args.named {
        if *k == key {
            return v.parse::<usize>().map(Some).map_err(|_| {
                CliError::Config(format!("dataset spec: {key}={v} is not an integer"))
            });
        }
    }
    Ok(None)
}

fn named_f64(args: &SpecArgs, key: &str) -> Result<Option<f64>> {
    for (k, v) in &args.named {
        if *k == key {
            return v
                .parse::<f64>()
                .map(Some)
                .map_err(|_| CliError::Config(format!("dataset spec: {key}={v} is not a number")));
        }
    }
    Ok(None)
}

fn named_u64(args: &SpecArgs, key: &str) -> Result<Option<u64>> {
    for (k, v) in &args.named {
        if *k == key {
            return v.parse::<u64>().map(Some).map_err(|_| {
                CliError::Config(format!("dataset spec: {key}={v} is not an integer"))
            });
        }
    }
    Ok(None)
}

fn discrete_pair(
    mu: DiscreteMeasure,
    nu: DiscreteMeasure,
    descriptor: String,
) -> Result<ResolvedDataset> {
    let sampler_mu = DiscreteCloudSampler::new(mu.clone(), format!("{descriptor}:mu"))?;
    let sampler_nu = DiscreteCloudSampler::new(nu.clone(), format!("{descriptor}:nu"))?;
    Ok(ResolvedDataset {
        pair: DatasetPair {
            mu: Arc::new(sampler_mu),
            nu: Arc::new(sampler_nu),
            true_w2: None,
            descriptor,
        },
        clouds: Some((mu, nu)),
    })
}

/// Parses and instantiates a dataset spec string.
pub fn resolve(spec: &str) -> Result<ResolvedDataset> {
    let (name, args) = split_spec(spec)?;
    match name {
        "gaussian" => {
            let d = named_usize(&args, "d")?.unwrap_or(5);
            let tau = named_f64(&args, "tau")?.unwrap_or(1e-4);
            Ok(ResolvedDataset {
                pair: gaussian_pair(d, tau)?,
                clouds: None,
            })
        }
        "hypercube" => {
            let d = named_usize(&args, "d")?.unwrap_or(2);
            Ok(ResolvedDataset {
                pair: fragmented_hypercube(d)?,
                clouds: None,
            })
        }
        "dirac" => {
            let d = named_usize(&args, "d")?.unwrap_or(1);
            Ok(ResolvedDataset {
                pair: dirac_pair(d)?,
                clouds: None,
            })
        }
        "mixtures" => {
            let m = named_usize(&args, "m")?.unwrap_or(10);
            let d = named_usize(&args, "d")?.unwrap_or(15);
            let tau = named_f64(&args, "tau")?.unwrap_or(1e-4);
            let n_tot = named_usize(&args, "n")?.unwrap_or(10_000);
            let seed = named_u64(&args, "seed")?.unwrap_or(0);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (mu, nu) = sampled_mixtures(m, d, tau, n_tot, &mut rng)?;
            discrete_pair(mu, nu, format!("mixtures(m={m},d={d},tau={tau},n={n_tot},seed={seed})"))
        }
        "csv" => {
            if args.positional.len() != 2 {
                return Err(CliError::Config(
                    "csv dataset needs exactly two paths: csv:left.csv,right.csv".into(),
                ));
            }
            let standardize = args.positional.contains(&"standardize")
                || args.named.iter().any(|(k, v)| *k == "standardize" && *v == "true");
            let weight_col = named_usize(&args, "weight-col")?;
            let mu = load_csv_pointcloud(Path::new(args.positional[0]), standardize, weight_col)?;
            let nu = load_csv_pointcloud(Path::new(args.positional[1]), standardize, weight_col)?;
            discrete_pair(
                mu,
                nu,
                format!("csv({},{})", args.positional[0], args.positional[1]),
            )
        }
        "pgm" => {
            if args.positional.len() != 2 {
                return Err(CliError::Config(
                    "pgm dataset needs exactly two paths: pgm:left.pgm,right.pgm".into(),
                ));
            }
            let mu = load_grid_image(Path::new(args.positional[0]))?;
            let nu = load_grid_image(Path::new(args.positional[1]))?;
            discrete_pair(
                mu,
                nu,
                format!("pgm({},{})", args.positional[0], args.positional[1]),
            )
        }
        other => Err(CliError::Config(format!(
            "unknown dataset family \"{other}\" (expected gaussian, hypercube, dirac, mixtures, csv, or pgm)"
        ))),
    }
}

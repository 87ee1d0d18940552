//! The experiment families behind the CLI subcommands. Each run function
//! resolves its dataset and reference, executes the (estimator, grid, rep)
//! cells on a worker pool, and renders one CSV document with a metadata
//! comment line.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::time::Instant;

use quantot_core::estimators::quantized_eps_estimate_with;
use quantot_core::quantize::{afk_mc2_seed, kmeanspp_seed};
use quantot_core::sinkhorn::approx_solve_with;
use quantot_core::{
    oversample_budget, plugin_estimate, quantized_estimate, squared_euclidean_cost, w2_distance,
    DatasetPair, DiscreteMeasure, EstimateRecord, SeedingMethod,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::cache::{config_hash, dataset_hash, RefCache};
use crate::config::{canonical_string, ExperimentConfig, ExperimentKind, Seeding};
use crate::dataset::{resolve, ResolvedDataset};
use crate::error::{CliError, Result};
use crate::seeds::{aux_seed, cell_seed};

const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Dispatch a validated config to its experiment family; returns CSV text.
pub fn run(cfg: &ExperimentConfig) -> Result<String> {
    cfg.validate()?;
    match cfg.kind {
        ExperimentKind::ErrorVsK => run_error_vs_k(cfg),
        ExperimentKind::CpuTime => run_cpu_time(cfg),
        ExperimentKind::EpsSweep => run_eps_sweep(cfg),
        ExperimentKind::QerrVsK => run_qerr_vs_k(cfg),
        ExperimentKind::Variance => run_variance(cfg),
        ExperimentKind::Lloyd => run_lloyd(cfg),
    }
}

fn meta_line(cfg: &ExperimentConfig, extra: &str) -> String {
    let hash = config_hash(&canonical_string(cfg));
    let mut line = format!(
        "# quantot v{VERSION} experiment={} dataset={} config_sha={} base_seed={}",
        cfg.kind.name(),
        cfg.dataset,
        hash,
        cfg.base_seed
    );
    if !extra.is_empty() {
        line.push(' ');
        line.push_str(extra);
    }
    line
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Sample standard deviation; zero for fewer than two values.
fn sample_std(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let m = mean(values);
    let var = values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (values.len() - 1) as f64;
    var.sqrt()
}

/// Ordinary least squares slope of `ys` on `xs` with its standard error.
/// Returns NaN sentinels when the fit is undefined (fewer than two points or
/// non-finite values).
pub fn ols_slope(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    if xs.len() != ys.len() || xs.len() < 2 {
        return (f64::NAN, f64::NAN);
    }
    if xs.iter().chain(ys.iter()).any(|v| !v.is_finite()) {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mx = mean(xs);
    let my = mean(ys);
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return (f64::NAN, f64::NAN);
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    if xs.len() == 2 {
        return (slope, f64::NAN);
    }
    let rss: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    let stderr = (rss / (n - 2.0) / sxx).sqrt();
    (slope, stderr)
}

/// Log-log regression of mean errors on k over the upper half of the grid.
fn log_log_slope(ks: &[usize], errs: &[f64]) -> (f64, f64) {
    let start = ks.len() / 2;
    let xs: Vec<f64> = ks[start..].iter().map(|&k| (k as f64).ln()).collect();
    let ys: Vec<f64> = errs[start..]
        .iter()
        .map(|&e| if e > 0.0 { e.ln() } else { f64::NAN })
        .collect();
    ols_slope(&xs, &ys)
}

fn with_pool<T: Send>(jobs: usize, work: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    if jobs == 0 {
        return work();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| CliError::Config(format!("cannot build worker pool: {e}")))?;
    pool.install(work)
}

fn run_cells<C: Sync, T: Send>(
    cells: &[C],
    sequential: bool,
    f: impl Fn(&C) -> Result<T> + Sync,
) -> Result<Vec<T>> {
    if sequential {
        cells.iter().map(&f).collect()
    } else {
        use rayon::prelude::*;
        cells.par_iter().map(&f).collect()
    }
}

/// Reference distance: closed form when the dataset has one, otherwise the
/// exact full-cloud value, cached in the output directory's sidecar.
fn resolve_reference(cfg: &ExperimentConfig, ds: &ResolvedDataset) -> Result<f64> {
    if let Some(w) = ds.pair.true_w2 {
        return Ok(w);
    }
    let (mu, nu) = ds
        .clouds
        .as_ref()
        .expect("datasets without closed form carry clouds");
    reference_for_clouds(cfg, mu, nu)
}

fn reference_for_clouds(
    cfg: &ExperimentConfig,
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
) -> Result<f64> {
    let n = mu.len().max(nu.len());
    if n > cfg.max_ref_n {
        return Err(CliError::Config(format!(
            "exact reference infeasible for n = {n} (cap {}); subsample the dataset (e.g. mixtures:...,n=2000) or raise --max-ref-n",
            cfg.max_ref_n
        )));
    }
    let dir = cache_dir(cfg);
    let mut cache = RefCache::open(&dir);
    let key = dataset_hash(mu, nu);
    cache.get_or_compute(&key, || Ok(w2_distance(mu, nu)?))
}

fn cache_dir(cfg: &ExperimentConfig) -> PathBuf {
    cfg.out
        .as_ref()
        .and_then(|p| p.parent().map(|d| d.to_path_buf()))
        .filter(|d| !d.as_os_str().is_empty())
        .unwrap_or_else(|| PathBuf::from("."))
}

/// One estimator column in the k-indexed experiment families.
#[derive(Debug, Clone, Copy)]
struct EstimatorSpec {
    plugin: bool,
    seeding: Seeding,
    kappa: f64,
    lloyd_iters: usize,
}

impl EstimatorSpec {
    fn plugin() -> Self {
        EstimatorSpec {
            plugin: true,
            seeding: Seeding::KmeansPlusPlus,
            kappa: 1.0,
            lloyd_iters: 0,
        }
    }

    fn quantized(seeding: Seeding, kappa: f64, lloyd_iters: usize) -> Self {
        EstimatorSpec {
            plugin: false,
            seeding,
            kappa,
            lloyd_iters,
        }
    }

    fn label(&self) -> String {
        if self.plugin {
            "plugin".into()
        } else {
            format!("quantized-{}", self.seeding.name())
        }
    }

    fn budget(&self, k: usize) -> usize {
        if self.plugin {
            k
        } else {
            oversample_budget(k, self.kappa)
        }
    }

    /// Stable tag for seed derivation; distinct per estimator variant.
    fn tag(&self) -> u64 {
        if self.plugin {
            1
        } else {
            let s = match self.seeding {
                Seeding::KmeansPlusPlus => 2,
                Seeding::AfkMc2 => 3,
            };
            let kappa_tag = (self.kappa * 1000.0).round() as u64;
            let lloyd = self.lloyd_iters as u64;
            (s << 32) ^ (kappa_tag << 8) ^ lloyd
        }
    }

    fn estimate(
        &self,
        pair: &DatasetPair,
        k: usize,
        chain_length: usize,
        seed: u64,
    ) -> Result<EstimateRecord> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let start = Instant::now();
        let value = if self.plugin {
            plugin_estimate(pair.mu.as_ref(), pair.nu.as_ref(), k, &mut rng)?
        } else {
            let method = match self.seeding {
                Seeding::KmeansPlusPlus => SeedingMethod::KmeansPlusPlus,
                Seeding::AfkMc2 => SeedingMethod::AfkMc2 { chain_length },
            };
            quantized_estimate(
                pair.mu.as_ref(),
                pair.nu.as_ref(),
                k,
                self.kappa,
                method,
                self.lloyd_iters,
                &mut rng,
            )?
        };
        Ok(EstimateRecord {
            estimator: self.label(),
            k,
            n: self.budget(k),
            kappa: self.kappa,
            estimate: value,
            wall_time_s: start.elapsed().as_secs_f64(),
            seed,
        })
    }
}

struct Cell {
    est: usize,
    k_idx: usize,
    rep: usize,
}

/// `[estimator][k index][rep] -> one observation`.
type GroupedEstimates = Vec<Vec<Vec<EstimateRecord>>>;

fn k_family_estimates(
    cfg: &ExperimentConfig,
    pair: &DatasetPair,
    estimators: &[EstimatorSpec],
    warm_up: bool,
) -> Result<GroupedEstimates> {
    let mut cells = Vec::new();
    for est in 0..estimators.len() {
        for k_idx in 0..cfg.k_grid.len() {
            for rep in 0..cfg.reps {
                cells.push(Cell { est, k_idx, rep });
            }
        }
    }
    let sequential = cfg.pin_timing || cfg.jobs == 1;
    let results = with_pool(cfg.jobs, || {
        run_cells(&cells, sequential, |cell| {
            let spec = &estimators[cell.est];
            let k = cfg.k_grid[cell.k_idx];
            let seed = cell_seed(cfg.base_seed, spec.tag(), cell.k_idx, cell.rep);
            if warm_up {
                // Discarded warm-up keeps cache and allocator effects out of
                // the timed run; a distinct stream preserves the canonical
                // estimate of this cell.
                spec.estimate(pair, k, cfg.chain_length, seed ^ 0x00c0_ffee)?;
            }
            spec.estimate(pair, k, cfg.chain_length, seed)
        })
    })?;
    // Regroup flat results as [estimator][k][rep].
    let mut grouped = vec![vec![Vec::with_capacity(cfg.reps); cfg.k_grid.len()]; estimators.len()];
    for (cell, value) in cells.iter().zip(results) {
        grouped[cell.est][cell.k_idx].push(value);
    }
    Ok(grouped)
}

fn rel_err(estimate: f64, reference: f64) -> f64 {
    if reference > 0.0 {
        (estimate - reference).abs() / reference
    } else {
        f64::NAN
    }
}

/// Mean relative error vs. k for the plug-in and quantized estimators, with
/// the log-log slope of the upper half of the grid per estimator.
pub fn run_error_vs_k(cfg: &ExperimentConfig) -> Result<String> {
    let ds = resolve(&cfg.dataset)?;
    let reference = resolve_reference(cfg, &ds)?;
    let estimators = vec![
        EstimatorSpec::plugin(),
        EstimatorSpec::quantized(cfg.seeding, cfg.kappas[0], cfg.lloyd_iters),
    ];
    let grouped = k_family_estimates(cfg, &ds.pair, &estimators, false)?;

    let mut out = String::new();
    writeln!(out, "{}", meta_line(cfg, &format!("reference={reference}"))).unwrap();
    writeln!(out, "estimator,k,n,mean_rel_err,std_rel_err,runs").unwrap();
    let mut slopes = Vec::new();
    for (spec, per_k) in estimators.iter().zip(&grouped) {
        let mut means = Vec::new();
        for (k_idx, reps) in per_k.iter().enumerate() {
            let k = cfg.k_grid[k_idx];
            let errs: Vec<f64> = reps.iter().map(|r| rel_err(r.estimate, reference)).collect();
            let m = mean(&errs);
            means.push(m);
            writeln!(
                out,
                "{},{},{},{},{},{}",
                spec.label(),
                k,
                spec.budget(k),
                m,
                sample_std(&errs),
                reps.len()
            )
            .unwrap();
        }
        slopes.push((spec.label(), log_log_slope(&cfg.k_grid, &means)));
    }
    for (label, (slope, stderr)) in slopes {
        writeln!(
            out,
            "# slope,estimator={label},slope={slope},stderr={stderr}"
        )
        .unwrap();
    }
    Ok(out)
}

/// Mean relative error and mean wall time per (estimator, seeding, kappa, k).
/// Runs the plug-in plus both quantized variants for every configured kappa;
/// timing covers the whole pipeline (sampling, seeding, weighting, solve).
pub fn run_cpu_time(cfg: &ExperimentConfig) -> Result<String> {
    let ds = resolve(&cfg.dataset)?;
    let reference = resolve_reference(cfg, &ds)?;
    let mut estimators = vec![EstimatorSpec::plugin()];
    for &kappa in &cfg.kappas {
        estimators.push(EstimatorSpec::quantized(
            Seeding::KmeansPlusPlus,
            kappa,
            cfg.lloyd_iters,
        ));
        estimators.push(EstimatorSpec::quantized(
            Seeding::AfkMc2,
            kappa,
            cfg.lloyd_iters,
        ));
    }
    let grouped = k_family_estimates(cfg, &ds.pair, &estimators, true)?;

    let mut out = String::new();
    writeln!(out, "{}", meta_line(cfg, &format!("reference={reference}"))).unwrap();
    writeln!(
        out,
        "estimator,seeding,kappa,k,mean_rel_err,mean_wall_time_s"
    )
    .unwrap();
    for (spec, per_k) in estimators.iter().zip(&grouped) {
        for (k_idx, reps) in per_k.iter().enumerate() {
            let errs: Vec<f64> = reps.iter().map(|r| rel_err(r.estimate, reference)).collect();
            let times: Vec<f64> = reps.iter().map(|r| r.wall_time_s).collect();
            let (seeding, kappa) = if spec.plugin {
                ("-".to_string(), "-".to_string())
            } else {
                (spec.seeding.name().to_string(), spec.kappa.to_string())
            };
            writeln!(
                out,
                "{},{},{},{},{},{}",
                spec.label(),
                seeding,
                kappa,
                cfg.k_grid[k_idx],
                mean(&errs),
                mean(&times)
            )
            .unwrap();
        }
    }
    Ok(out)
}

/// Materializes the epsilon-sweep input clouds: discrete datasets pass
/// through, continuous ones are sampled once with a dedicated seed stream.
fn eps_clouds(
    cfg: &ExperimentConfig,
    ds: &ResolvedDataset,
) -> Result<(DiscreteMeasure, DiscreteMeasure)> {
    if let Some((mu, nu)) = &ds.clouds {
        return Ok((mu.clone(), nu.clone()));
    }
    let n = cfg.effective_sample_n();
    let mut rng = ChaCha8Rng::seed_from_u64(aux_seed(cfg.base_seed, "materialize"));
    let mu = DiscreteMeasure::uniform(ds.pair.mu.draw(n, &mut rng))?;
    let nu = DiscreteMeasure::uniform(ds.pair.nu.draw(n, &mut rng))?;
    Ok((mu, nu))
}

/// CPU time and absolute error vs. epsilon for the quantized pipeline and
/// the bare approximate solver, both guaranteed 3-epsilon approximations of
/// the exact distance on the same clouds.
pub fn run_eps_sweep(cfg: &ExperimentConfig) -> Result<String> {
    let ds = resolve(&cfg.dataset)?;
    let (mu, nu) = eps_clouds(cfg, &ds)?;
    let reference = reference_for_clouds(cfg, &mu, &nu)?;
    let n_max = mu.len().max(nu.len());

    struct Row {
        method: &'static str,
        eps: f64,
        rep: usize,
        wall_time_s: f64,
        abs_error: f64,
        k_mu: usize,
        k_nu: usize,
        converged: bool,
    }

    let mut cells = Vec::new();
    for (eps_idx, _) in cfg.eps_grid.iter().enumerate() {
        for rep in 0..cfg.reps {
            for method in 0..2usize {
                cells.push((eps_idx, rep, method));
            }
        }
    }
    let sequential = cfg.pin_timing || cfg.jobs == 1;
    let rows: Vec<Row> = with_pool(cfg.jobs, || {
        run_cells(&cells, sequential, |&(eps_idx, rep, method)| {
            let eps = cfg.eps_grid[eps_idx];
            let seed = cell_seed(cfg.base_seed, 100 + method as u64, eps_idx, rep);
            if method == 0 {
                // Warm-up discarded, then the timed quantized pipeline.
                let mut warm = ChaCha8Rng::seed_from_u64(seed ^ 0x00c0_ffee);
                quantized_eps_estimate_with(&mu, &nu, eps, &mut warm, 10_000)?;
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let start = Instant::now();
                let est = quantized_eps_estimate_with(&mu, &nu, eps, &mut rng, 10_000)?;
                let wall = start.elapsed().as_secs_f64();
                Ok(Row {
                    method: "quantized",
                    eps,
                    rep,
                    wall_time_s: wall,
                    abs_error: (est.distance - reference).abs(),
                    k_mu: est.k_eps_mu,
                    k_nu: est.k_eps_nu,
                    converged: est.report.converged,
                })
            } else {
                // Bare solver at 3 eps on the distance scale, i.e. (3 eps)^2
                // on the cost scale; timing includes the cost matrix build.
                let start = Instant::now();
                let cost = squared_euclidean_cost(mu.support(), nu.support())?;
                let cost_eps = (3.0 * eps) * (3.0 * eps);
                let report =
                    approx_solve_with(mu.weights(), nu.weights(), &cost, cost_eps, 10_000)?;
                let wall = start.elapsed().as_secs_f64();
                Ok(Row {
                    method: "bare",
                    eps,
                    rep,
                    wall_time_s: wall,
                    abs_error: (report.cost.max(0.0).sqrt() - reference).abs(),
                    k_mu: mu.len(),
                    k_nu: nu.len(),
                    converged: report.converged,
                })
            }
        })
    })?;

    let mut out = String::new();
    writeln!(
        out,
        "{}",
        meta_line(cfg, &format!("reference={reference} n={n_max}"))
    )
    .unwrap();
    writeln!(
        out,
        "method,eps,rep,wall_time_s,abs_error,k_eps_mu,k_eps_nu,converged"
    )
    .unwrap();
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.method, r.eps, r.rep, r.wall_time_s, r.abs_error, r.k_mu, r.k_nu, r.converged
        )
        .unwrap();
    }
    Ok(out)
}

/// Quantization error vs. k with the log-log decay slope.
pub fn run_qerr_vs_k(cfg: &ExperimentConfig) -> Result<String> {
    let ds = resolve(&cfg.dataset)?;
    let sample_n = cfg.effective_sample_n();

    let mut cells = Vec::new();
    for k_idx in 0..cfg.k_grid.len() {
        for rep in 0..cfg.reps {
            cells.push((k_idx, rep));
        }
    }
    let sequential = cfg.pin_timing || cfg.jobs == 1;
    let results: Vec<f64> = with_pool(cfg.jobs, || {
        run_cells(&cells, sequential, |&(k_idx, rep)| {
            let k = cfg.k_grid[k_idx];
            let seed = cell_seed(cfg.base_seed, 200, k_idx, rep);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let measure = match &ds.clouds {
                Some((mu, _)) => mu.clone(),
                None => DiscreteMeasure::uniform(ds.pair.mu.draw(sample_n, &mut rng))
                    .map_err(CliError::from)?,
            };
            if k > measure.len() {
                return Err(CliError::Config(format!(
                    "k = {k} exceeds the {} available points",
                    measure.len()
                )));
            }
            let result = match cfg.seeding {
                Seeding::KmeansPlusPlus => kmeanspp_seed(&measure, k, &mut rng),
                Seeding::AfkMc2 => afk_mc2_seed(&measure, k, cfg.chain_length, &mut rng),
            }?;
            Ok(result.error)
        })
    })?;

    let mut per_k: Vec<Vec<f64>> = vec![Vec::with_capacity(cfg.reps); cfg.k_grid.len()];
    for (&(k_idx, _), err) in cells.iter().zip(results) {
        per_k[k_idx].push(err);
    }
    let means: Vec<f64> = per_k.iter().map(|v| mean(v)).collect();
    let (slope, stderr) = log_log_slope(&cfg.k_grid, &means);

    let mut out = String::new();
    writeln!(out, "{}", meta_line(cfg, "")).unwrap();
    writeln!(out, "k,mean_qerr,std_qerr,slope,slope_stderr").unwrap();
    for (k_idx, reps) in per_k.iter().enumerate() {
        writeln!(
            out,
            "{},{},{},{},{}",
            cfg.k_grid[k_idx],
            means[k_idx],
            sample_std(reps),
            slope,
            stderr
        )
        .unwrap();
    }
    Ok(out)
}

/// Empirical standard deviation of the raw estimates per (estimator, k).
pub fn run_variance(cfg: &ExperimentConfig) -> Result<String> {
    let ds = resolve(&cfg.dataset)?;
    let estimators = vec![
        EstimatorSpec::plugin(),
        EstimatorSpec::quantized(cfg.seeding, cfg.kappas[0], cfg.lloyd_iters),
    ];
    let grouped = k_family_estimates(cfg, &ds.pair, &estimators, false)?;

    let mut out = String::new();
    writeln!(out, "{}", meta_line(cfg, "")).unwrap();
    writeln!(out, "estimator,k,std_estimate,runs").unwrap();
    for (spec, per_k) in estimators.iter().zip(&grouped) {
        for (k_idx, reps) in per_k.iter().enumerate() {
            let estimates: Vec<f64> = reps.iter().map(|r| r.estimate).collect();
            writeln!(
                out,
                "{},{},{},{}",
                spec.label(),
                cfg.k_grid[k_idx],
                sample_std(&estimates),
                estimates.len()
            )
            .unwrap();
        }
    }
    Ok(out)
}

/// Error-vs-k rows for the quantized estimator with and without Lloyd
/// refinement.
pub fn run_lloyd(cfg: &ExperimentConfig) -> Result<String> {
    let ds = resolve(&cfg.dataset)?;
    let reference = resolve_reference(cfg, &ds)?;
    let lloyd_iters = if cfg.lloyd_iters == 0 {
        5
    } else {
        cfg.lloyd_iters
    };
    let estimators = vec![
        EstimatorSpec::quantized(cfg.seeding, cfg.kappas[0], 0),
        EstimatorSpec::quantized(cfg.seeding, cfg.kappas[0], lloyd_iters),
    ];
    let grouped = k_family_estimates(cfg, &ds.pair, &estimators, false)?;

    let mut out = String::new();
    writeln!(out, "{}", meta_line(cfg, &format!("reference={reference}"))).unwrap();
    writeln!(
        out,
        "estimator,lloyd_iters,k,n,mean_rel_err,std_rel_err,runs"
    )
    .unwrap();
    for (spec, per_k) in estimators.iter().zip(&grouped) {
        for (k_idx, reps) in per_k.iter().enumerate() {
            let k = cfg.k_grid[k_idx];
            let errs: Vec<f64> = reps.iter().map(|r| rel_err(r.estimate, reference)).collect();
            writeln!(
                out,
                "{},{},{},{},{},{},{}",
                spec.label(),
                spec.lloyd_iters,
                k,
                spec.budget(k),
                mean(&errs),
                sample_std(&errs),
                reps.len()
            )
            .unwrap();
        }
    }
    Ok(out)
}

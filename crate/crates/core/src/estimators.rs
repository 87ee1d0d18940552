//! The estimators under comparison: the plug-in estimator, the quantized
//! oversampling estimator, and the quantized epsilon-guaranteed pipeline for
//! entropic solvers.

use std::sync::Arc;

use ndarray::Array2;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::exact::w2_distance;
use crate::measure::{squared_euclidean_cost, DiscreteMeasure};
use crate::quantize::{afk_mc2_seed, kmeanspp_seed, lloyd_refine, quantize_to_precision};
use crate::sinkhorn::{approx_solve_with, ApproxSolveReport, DEFAULT_MAX_ITER};

/// Cheap sample access to one side of a transport problem. Implementations
/// must be deterministic given the generator state and draw points of the
/// declared dimension.
pub trait Sampler: Send + Sync {
    fn dim(&self) -> usize;
    /// Dataset identity string for logs and CSV metadata.
    fn descriptor(&self) -> String;
    /// Draws `count` i.i.d. points as a `count x dim` matrix.
    fn draw(&self, count: usize, rng: &mut ChaCha8Rng) -> Array2<f64>;
}

/// A pair of samplers with an optional closed-form reference distance.
#[derive(Clone)]
pub struct DatasetPair {
    pub mu: Arc<dyn Sampler>,
    pub nu: Arc<dyn Sampler>,
    /// Closed-form `W_2(mu, nu)` when the dataset provides one.
    pub true_w2: Option<f64>,
    pub descriptor: String,
}

/// One benchmark observation for the k-indexed experiment families.
#[derive(Debug, Clone)]
pub struct EstimateRecord {
    pub estimator: String,
    pub k: usize,
    /// Oversampling budget actually used (`n = k` for the plug-in).
    pub n: usize,
    pub kappa: f64,
    pub estimate: f64,
    pub wall_time_s: f64,
    pub seed: u64,
}

/// Which seeding rule the quantized estimator uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeedingMethod {
    KmeansPlusPlus,
    AfkMc2 { chain_length: usize },
}

/// Default Markov chain length for AFK-MC^2 seeding.
pub const DEFAULT_CHAIN_LENGTH: usize = 200;

/// Oversampling budget `n = max(k, ceil(kappa * k^2 * ln k))`. The floor to
/// `k` keeps quantization well-posed for small `k`, where `k^2 ln k < k`.
pub fn oversample_budget(k: usize, kappa: f64) -> usize {
    debug_assert!(k >= 1, "k must be >= 1");
    debug_assert!(kappa > 0.0 && kappa <= 1.0, "kappa must lie in (0, 1]");
    let raw = kappa * (k * k) as f64 * (k as f64).ln();
    k.max(raw.ceil() as usize)
}

/// Plug-in estimator: `W_2` between uniform empirical measures of `k` fresh
/// samples per side.
pub fn plugin_estimate(
    mu: &dyn Sampler,
    nu: &dyn Sampler,
    k: usize,
    rng: &mut ChaCha8Rng,
) -> Result<f64> {
    if k == 0 {
        return Err(Error::InvalidArgument("k must be >= 1".into()));
    }
    let x = DiscreteMeasure::uniform(mu.draw(k, rng))?;
    let y = DiscreteMeasure::uniform(nu.draw(k, rng))?;
    w2_distance(&x, &y)
}

fn seed_measure(
    measure: &DiscreteMeasure,
    k: usize,
    seeding: SeedingMethod,
    lloyd_iters: usize,
    rng: &mut ChaCha8Rng,
) -> Result<DiscreteMeasure> {
    let result = match seeding {
        SeedingMethod::KmeansPlusPlus => kmeanspp_seed(measure, k, rng)?,
        SeedingMethod::AfkMc2 { chain_length } => afk_mc2_seed(measure, k, chain_length, rng)?,
    };
    let result = if lloyd_iters > 0 {
        lloyd_refine(measure, &result, lloyd_iters)?
    } else {
        result
    };
    result.to_measure()
}

/// Quantized oversampling estimator: draw `n = oversample_budget(k, kappa)`
/// samples per side, quantize each cloud to `k` weighted anchor points, and
/// return the exact `W_2` between the two weighted measures. Coincides in law
/// with [`plugin_estimate`] whenever `n = k`.
pub fn quantized_estimate(
    mu: &dyn Sampler,
    nu: &dyn Sampler,
    k: usize,
    kappa: f64,
    seeding: SeedingMethod,
    lloyd_iters: usize,
    rng: &mut ChaCha8Rng,
) -> Result<f64> {
    if k == 0 {
        return Err(Error::InvalidArgument("k must be >= 1".into()));
    }
    if !kappa.is_finite() || kappa <= 0.0 || kappa > 1.0 {
        return Err(Error::InvalidArgument(format!(
            "kappa must lie in (0, 1], got {kappa}"
        )));
    }
    let n = oversample_budget(k, kappa);
    let x = DiscreteMeasure::uniform(mu.draw(n, rng))?;
    let y = DiscreteMeasure::uniform(nu.draw(n, rng))?;
    let qx = seed_measure(&x, k, seeding, lloyd_iters, rng)?;
    let qy = seed_measure(&y, k, seeding, lloyd_iters, rng)?;
    w2_distance(&qx, &qy)
}

/// Output of the quantized epsilon-guaranteed pipeline.
#[derive(Debug, Clone)]
pub struct EpsEstimate {
    /// Estimated distance: the square root of the reported transport cost.
    /// Within `3 * eps` of `W_2(mu_n, nu_n)`.
    pub distance: f64,
    /// Accounting of the inner approximate solve (cost scale).
    pub report: ApproxSolveReport,
    /// Number of centers retained on each side.
    pub k_eps_mu: usize,
    pub k_eps_nu: usize,
    /// Achieved quantization errors (each at most `eps^2` on the cost scale).
    pub quantization_error_mu: f64,
    pub quantization_error_nu: f64,
    /// Precision handed to the approximate solver on the cost scale: `eps^2`,
    /// so that the solver contributes at most `eps` on the distance scale.
    pub cost_epsilon: f64,
}

/// Quantize both finite inputs to distance precision `eps`, then run the
/// entropic approximate solver at cost precision `eps^2`. The returned
/// distance is a `3 eps`-approximation of `W_2(mu_n, nu_n)`: one `eps` per
/// quantization stage and one from the solver.
pub fn quantized_eps_estimate(
    mu_n: &DiscreteMeasure,
    nu_n: &DiscreteMeasure,
    eps: f64,
    rng: &mut ChaCha8Rng,
) -> Result<EpsEstimate> {
    quantized_eps_estimate_with(mu_n, nu_n, eps, rng, DEFAULT_MAX_ITER)
}

/// [`quantized_eps_estimate`] with an explicit solver iteration cap.
pub fn quantized_eps_estimate_with(
    mu_n: &DiscreteMeasure,
    nu_n: &DiscreteMeasure,
    eps: f64,
    rng: &mut ChaCha8Rng,
    max_iter: usize,
) -> Result<EpsEstimate> {
    if mu_n.dim() != nu_n.dim() {
        return Err(Error::DimensionMismatch {
            left: mu_n.dim(),
            right: nu_n.dim(),
        });
    }
    let qm = quantize_to_precision(mu_n, eps, rng)?;
    let qn = quantize_to_precision(nu_n, eps, rng)?;
    let a = qm.to_measure()?;
    let b = qn.to_measure()?;
    let cost = squared_euclidean_cost(a.support(), b.support())?;
    let cost_epsilon = eps * eps;
    let report = approx_solve_with(a.weights(), b.weights(), &cost, cost_epsilon, max_iter)?;
    Ok(EpsEstimate {
        distance: report.cost.max(0.0).sqrt(),
        k_eps_mu: a.len(),
        k_eps_nu: b.len(),
        quantization_error_mu: qm.error,
        quantization_error_nu: qn.error,
        cost_epsilon,
        report,
    })
}

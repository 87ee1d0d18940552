//! Weighted quantizers: k-means++ D^2 seeding, AFK-MC^2 Markov-chain seeding,
//! Lloyd refinement, precision-targeted quantization, and a brute-force
//! optimum oracle for tests.
//!
//! All seeding rules are weighted: the D^2 mass of a point is `w_i * d(x_i, S)^2`,
//! which reduces to the classical rule under uniform weights.

use ndarray::{Array1, Array2, ArrayView2};
use rand::distr::weighted::WeightedIndex;
use rand::prelude::*;

use crate::error::{Error, Result};
use crate::measure::{nearest_neighbor_assign, squared_distance, DiscreteMeasure};

/// Output of a quantizer: centers, per-point assignments, aggregated Voronoi
/// weights, and the achieved weighted quantization error.
#[derive(Debug, Clone)]
pub struct QuantizationResult {
    /// Chosen centers, one row per center. May have fewer rows than the
    /// requested `k` when the input has fewer distinct points.
    pub centers: Array2<f64>,
    /// Index of the nearest center for every support point (ties to the
    /// lowest center index).
    pub assignments: Vec<usize>,
    /// Total input weight landing in each center's Voronoi region.
    pub aggregated_weights: Array1<f64>,
    /// `sum_i w_i d(x_i, centers)^2`.
    pub error: f64,
}

impl QuantizationResult {
    /// Assigns every point of `measure` to its nearest center and computes
    /// the aggregated weights and the weighted quantization error.
    pub fn evaluate(measure: &DiscreteMeasure, centers: Array2<f64>) -> Result<Self> {
        let (assignments, dists) = nearest_neighbor_assign(measure.support(), centers.view())?;
        let weights = measure.weights();
        let mut aggregated = Array1::zeros(centers.nrows());
        let mut error = 0.0;
        for (i, (&l, &d)) in assignments.iter().zip(dists.iter()).enumerate() {
            aggregated[l] += weights[i];
            error += weights[i] * d;
        }
        Ok(Self {
            centers,
            assignments,
            aggregated_weights: aggregated,
            error,
        })
    }

    /// Number of centers actually returned.
    pub fn k(&self) -> usize {
        self.centers.nrows()
    }

    /// The weighted measure carried by the centers, with zero-mass centers
    /// pruned. Equivalent to pushing the source measure forward onto the
    /// centers, without re-running the assignment.
    pub fn to_measure(&self) -> Result<DiscreteMeasure> {
        let kept: Vec<usize> = (0..self.k())
            .filter(|&l| self.aggregated_weights[l] > 0.0)
            .collect();
        let mut support = Array2::zeros((kept.len(), self.centers.ncols()));
        let mut weights = Array1::zeros(kept.len());
        for (row, &l) in kept.iter().enumerate() {
            support.row_mut(row).assign(&self.centers.row(l));
            weights[row] = self.aggregated_weights[l];
        }
        DiscreteMeasure::new(support, weights)
    }
}

fn gather_rows(support: ArrayView2<f64>, indices: &[usize]) -> Array2<f64> {
    let mut out = Array2::zeros((indices.len(), support.ncols()));
    for (row, &i) in indices.iter().enumerate() {
        out.row_mut(row).assign(&support.row(i));
    }
    out
}

fn row_slice(support: ArrayView2<f64>, i: usize) -> Vec<f64> {
    support.row(i).to_vec()
}

/// Refresh `d2` against a newly added center, returning the new total
/// weighted D^2 mass.
fn update_min_d2(support: ArrayView2<f64>, weights: &[f64], center: &[f64], d2: &mut [f64]) -> f64 {
    let mut total = 0.0;
    for (i, p) in support.outer_iter().enumerate() {
        let d = squared_distance(p.to_slice().expect("row-major support"), center);
        if d < d2[i] {
            d2[i] = d;
        }
        total += weights[i] * d2[i];
    }
    total
}

/// Fills `chosen` with distinct support points not yet used as centers, drawn
/// uniformly at random, until `k` centers exist or the distinct pool is
/// exhausted (in which case `k` is silently truncated).
fn fill_from_distinct(
    support: ArrayView2<f64>,
    chosen: &mut Vec<usize>,
    k: usize,
    rng: &mut impl Rng,
) {
    let mut pool: Vec<usize> = Vec::new();
    'points: for i in 0..support.nrows() {
        let pi = support.row(i);
        for &c in chosen.iter() {
            if support.row(c) == pi {
                continue 'points;
            }
        }
        for &p in pool.iter() {
            if support.row(p) == pi {
                continue 'points;
            }
        }
        pool.push(i);
    }
    while chosen.len() < k && !pool.is_empty() {
        let at = rng.random_range(0..pool.len());
        chosen.push(pool.swap_remove(at));
    }
}

fn validate_k(measure: &DiscreteMeasure, k: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::InvalidArgument("k must be >= 1".into()));
    }
    if k > measure.len() {
        return Err(Error::InvalidArgument(format!(
            "k = {k} exceeds the number of support points n = {}",
            measure.len()
        )));
    }
    Ok(())
}

/// k-means++ seeding by weighted D^2 sampling.
///
/// The first center is drawn proportionally to the weights; each subsequent
/// center is drawn with probability proportional to `w_i * d(x_i, S)^2`.
/// When all remaining D^2 mass is zero (duplicated points), the remaining
/// centers are drawn uniformly from distinct unused support points, and `k`
/// is truncated to the distinct-point count if necessary.
pub fn kmeanspp_seed(
    measure: &DiscreteMeasure,
    k: usize,
    rng: &mut impl Rng,
) -> Result<QuantizationResult> {
    validate_k(measure, k)?;
    let support = measure.support();
    let weights: Vec<f64> = measure.weights().to_vec();

    let first = WeightedIndex::new(&weights)
        .map_err(|e| Error::InvalidWeights(format!("cannot draw seed: {e}")))?
        .sample(rng);
    let mut chosen = vec![first];
    let mut d2 = vec![f64::INFINITY; measure.len()];
    let mut total = update_min_d2(support, &weights, &row_slice(support, first), &mut d2);

    while chosen.len() < k {
        if total <= 0.0 {
            fill_from_distinct(support, &mut chosen, k, rng);
            break;
        }
        let masses: Vec<f64> = weights.iter().zip(d2.iter()).map(|(w, d)| w * d).collect();
        let idx = WeightedIndex::new(&masses)
            .map_err(|e| Error::Numerical {
                op: "kmeanspp_seed",
                detail: format!("D^2 sampling failed: {e}"),
            })?
            .sample(rng);
        chosen.push(idx);
        total = update_min_d2(support, &weights, &row_slice(support, idx), &mut d2);
    }

    QuantizationResult::evaluate(measure, gather_rows(support, &chosen))
}

/// AFK-MC^2 seeding: the first center is a weighted draw, and each subsequent
/// center is picked by a Metropolis-Hastings chain of `chain_length` steps
/// targeting the weighted D^2 distribution, with the mixture proposal
/// `q(x) ∝ 0.5 * w_x d(x, c_1)^2 / phi_1 + 0.5 * w_x`.
pub fn afk_mc2_seed(
    measure: &DiscreteMeasure,
    k: usize,
    chain_length: usize,
    rng: &mut impl Rng,
) -> Result<QuantizationResult> {
    validate_k(measure, k)?;
    if chain_length == 0 {
        return Err(Error::InvalidArgument("chain_length must be >= 1".into()));
    }
    let support = measure.support();
    let weights: Vec<f64> = measure.weights().to_vec();
    let n = measure.len();

    let first = WeightedIndex::new(&weights)
        .map_err(|e| Error::InvalidWeights(format!("cannot draw seed: {e}")))?
        .sample(rng);
    let mut chosen = vec![first];

    // Proposal distribution, built once from distances to the first center.
    let c1 = row_slice(support, first);
    let mut d2_c1 = vec![0.0f64; n];
    let mut phi1 = 0.0;
    for (i, p) in support.outer_iter().enumerate() {
        d2_c1[i] = squared_distance(p.to_slice().expect("row-major support"), &c1);
        phi1 += weights[i] * d2_c1[i];
    }
    let proposal_mass: Vec<f64> = if phi1 > 0.0 {
        (0..n)
            .map(|i| 0.5 * weights[i] * d2_c1[i] / phi1 + 0.5 * weights[i])
            .collect()
    } else {
        weights.clone()
    };
    let proposal = WeightedIndex::new(&proposal_mass).map_err(|e| Error::Numerical {
        op: "afk_mc2_seed",
        detail: format!("proposal construction failed: {e}"),
    })?;

    let target = |i: usize, chosen: &[usize]| -> f64 {
        let p = support.row(i);
        let p = p.to_slice().expect("row-major support");
        let mut best = f64::INFINITY;
        for &c in chosen {
            let d = squared_distance(p, support.row(c).to_slice().expect("row-major support"));
            if d < best {
                best = d;
            }
        }
        weights[i] * best
    };

    while chosen.len() < k {
        let mut x = proposal.sample(rng);
        let mut px = target(x, &chosen);
        let mut qx = proposal_mass[x];
        for _ in 1..chain_length {
            let y = proposal.sample(rng);
            let py = target(y, &chosen);
            let qy = proposal_mass[y];
            let accept = if px * qy <= 0.0 {
                py > 0.0
            } else {
                rng.random::<f64>() < (py * qx) / (px * qy)
            };
            if accept {
                x = y;
                px = py;
                qx = qy;
            }
        }
        if px > 0.0 {
            chosen.push(x);
            continue;
        }
        // The chain ended on a covered point. Fall back to an exact D^2 draw
        // so no duplicate center is emitted; if every point is covered, fill
        // from distinct points and truncate.
        let masses: Vec<f64> = (0..n).map(|i| target(i, &chosen)).collect();
        if masses.iter().sum::<f64>() > 0.0 {
            let idx = WeightedIndex::new(&masses)
                .map_err(|e| Error::Numerical {
                    op: "afk_mc2_seed",
                    detail: format!("fallback D^2 draw failed: {e}"),
                })?
                .sample(rng);
            chosen.push(idx);
        } else {
            fill_from_distinct(support, &mut chosen, k, rng);
            break;
        }
    }

    QuantizationResult::evaluate(measure, gather_rows(support, &chosen))
}

/// Lloyd refinement: alternates weighted-centroid updates and reassignment
/// until assignments stabilize or `max_iter` is reached. Never increases the
/// quantization error; `max_iter = 0` returns the input verbatim.
pub fn lloyd_refine(
    measure: &DiscreteMeasure,
    result: &QuantizationResult,
    max_iter: usize,
) -> Result<QuantizationResult> {
    if result.assignments.len() != measure.len() {
        return Err(Error::ShapeMismatch {
            context: "quantization result vs measure",
            expected: measure.len().to_string(),
            got: result.assignments.len().to_string(),
        });
    }
    if result.centers.ncols() != measure.dim() {
        return Err(Error::DimensionMismatch {
            left: result.centers.ncols(),
            right: measure.dim(),
        });
    }
    if max_iter == 0 {
        return Ok(result.clone());
    }

    let support = measure.support();
    let weights = measure.weights();
    let k = result.k();
    let d = measure.dim();
    let mut centers = result.centers.clone();
    let mut assignments = result.assignments.clone();
    let mut previous_error = result.error;

    for _ in 0..max_iter {
        // Weighted centroid update; empty clusters keep their center.
        let mut sums = Array2::<f64>::zeros((k, d));
        let mut mass = vec![0.0f64; k];
        for (i, &l) in assignments.iter().enumerate() {
            let w = weights[i];
            mass[l] += w;
            let mut row = sums.row_mut(l);
            row.scaled_add(w, &support.row(i));
        }
        for l in 0..k {
            if mass[l] > 0.0 {
                let mut row = centers.row_mut(l);
                row.assign(&sums.row(l));
                row.mapv_inplace(|v| v / mass[l]);
            }
        }

        let (next, dists) = nearest_neighbor_assign(support, centers.view())?;
        let error: f64 = next
            .iter()
            .zip(dists.iter())
            .enumerate()
            .map(|(i, (_, &di))| weights[i] * di)
            .sum();
        debug_assert!(
            error <= previous_error + 1e-12 * (1.0 + previous_error.abs()),
            "Lloyd iteration increased error: {previous_error} -> {error}"
        );
        previous_error = error;
        let stable = next == assignments;
        assignments = next;
        if stable {
            break;
        }
    }

    let refined = QuantizationResult::evaluate(measure, centers)?;
    debug_assert!(refined.error <= result.error + 1e-12 * (1.0 + result.error.abs()));
    Ok(refined)
}

/// Weighted quantization error `sum_i w_i d(x_i, S)^2`. Under uniform weights
/// `1/n`, the unweighted quantity of Definition-1 style statements is `n`
/// times this value.
pub fn quantization_error(measure: &DiscreteMeasure, centers: ArrayView2<f64>) -> Result<f64> {
    let (_, dists) = nearest_neighbor_assign(measure.support(), centers)?;
    Ok(measure
        .weights()
        .iter()
        .zip(dists.iter())
        .map(|(w, d)| w * d)
        .sum())
}

/// Precision-targeted quantization: seeds one weight-proportional support
/// point, then repeatedly adds the support point with maximal `w_i d(x_i, S)^2`
/// until the total weighted error is at most `eps^2`. Always terminates since
/// the full support achieves error 0.
pub fn quantize_to_precision(
    measure: &DiscreteMeasure,
    eps: f64,
    rng: &mut impl Rng,
) -> Result<QuantizationResult> {
    if !eps.is_finite() || eps <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "eps must be positive, got {eps}"
        )));
    }
    let support = measure.support();
    let weights: Vec<f64> = measure.weights().to_vec();
    let budget = eps * eps;

    let first = WeightedIndex::new(&weights)
        .map_err(|e| Error::InvalidWeights(format!("cannot draw seed: {e}")))?
        .sample(rng);
    let mut chosen = vec![first];
    let mut d2 = vec![f64::INFINITY; measure.len()];
    let mut total = update_min_d2(support, &weights, &row_slice(support, first), &mut d2);

    while total > budget {
        let mut best = usize::MAX;
        let mut best_mass = -1.0;
        for i in 0..measure.len() {
            let m = weights[i] * d2[i];
            if m > best_mass {
                best_mass = m;
                best = i;
            }
        }
        if best_mass <= 0.0 {
            break; // everything covered; total is zero up to rounding
        }
        chosen.push(best);
        total = update_min_d2(support, &weights, &row_slice(support, best), &mut d2);
    }

    let result = QuantizationResult::evaluate(measure, gather_rows(support, &chosen))?;
    debug_assert!(result.error <= budget);
    Ok(result)
}

/// Optimal weighted quantization error for `k` centers, for test oracles.
///
/// In dimension 1 this is the exact optimum over arbitrary (continuous)
/// centers, via dynamic programming over sorted points. Otherwise the
/// instance must have `n <= 15` points and the minimum is taken over all
/// k-subsets of the support.
pub fn optimal_quantization_bruteforce(measure: &DiscreteMeasure, k: usize) -> Result<f64> {
    validate_k(measure, k)?;
    if measure.dim() == 1 {
        return Ok(one_dimensional_dp(measure, k));
    }
    let n = measure.len();
    if n > 15 {
        return Err(Error::InstanceTooLarge {
            op: "optimal_quantization_bruteforce",
            detail: format!("n = {n} > 15 and d = {} > 1", measure.dim()),
        });
    }
    let support = measure.support();
    let weights = measure.weights();
    let mut best = f64::INFINITY;
    let mut subset: Vec<usize> = (0..k).collect();
    loop {
        let mut err = 0.0;
        for (i, p) in support.outer_iter().enumerate() {
            let p = p.to_slice().expect("row-major support");
            let mut d = f64::INFINITY;
            for &c in &subset {
                let dc = squared_distance(p, support.row(c).to_slice().expect("row-major support"));
                if dc < d {
                    d = dc;
                }
            }
            err += weights[i] * d;
        }
        if err < best {
            best = err;
        }
        // Next k-combination of 0..n in lexicographic order.
        let mut i = k;
        loop {
            if i == 0 {
                return Ok(best);
            }
            i -= 1;
            if subset[i] != i + n - k {
                subset[i] += 1;
                for j in i + 1..k {
                    subset[j] = subset[j - 1] + 1;
                }
                break;
            }
        }
    }
}

/// Exact 1-D weighted k-means via interval dynamic programming.
fn one_dimensional_dp(measure: &DiscreteMeasure, k: usize) -> f64 {
    let n = measure.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        measure.support()[(a, 0)]
            .partial_cmp(&measure.support()[(b, 0)])
            .expect("finite coordinates")
    });
    // Prefix sums of w, w*x, w*x^2 over the sorted order.
    let mut pw = vec![0.0; n + 1];
    let mut pwx = vec![0.0; n + 1];
    let mut pwx2 = vec![0.0; n + 1];
    for (pos, &i) in order.iter().enumerate() {
        let w = measure.weights()[i];
        let x = measure.support()[(i, 0)];
        pw[pos + 1] = pw[pos] + w;
        pwx[pos + 1] = pwx[pos] + w * x;
        pwx2[pos + 1] = pwx2[pos] + w * x * x;
    }
    // Weighted within-cluster sum of squares for sorted points l..r (exclusive r).
    let segment_cost = |l: usize, r: usize| -> f64 {
        if r - l == 1 {
            return 0.0;
        }
        let w = pw[r] - pw[l];
        if w <= 0.0 {
            return 0.0;
        }
        let sx = pwx[r] - pwx[l];
        let sx2 = pwx2[r] - pwx2[l];
        (sx2 - sx * sx / w).max(0.0)
    };
    let inf = f64::INFINITY;
    let mut dp = vec![vec![inf; n + 1]; k + 1];
    dp[0][0] = 0.0;
    for j in 1..=k {
        for r in 1..=n {
            for l in (j - 1)..r {
                let prev = dp[j - 1][l];
                if prev < inf {
                    let cand = prev + segment_cost(l, r);
                    if cand < dp[j][r] {
                        dp[j][r] = cand;
                    }
                }
            }
        }
    }
    // With fewer clusters than points the optimum can only improve with more
    // clusters, so take the best over <= k segments.
    (1..=k).map(|j| dp[j][n]).fold(inf, f64::min)
}

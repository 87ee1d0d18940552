//! Entropy-regularized approximate transport: log-domain Sinkhorn scaling,
//! marginal-feasibility rounding, and an epsilon-guaranteed approximate
//! solver for the unregularized cost.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::error::{Error, Result};
use crate::measure::{CostMatrix, TransportPlan};

/// Default iteration cap for the scaling loop.
pub const DEFAULT_MAX_ITER: usize = 10_000;

/// Exponent cutoff below the per-row maximum; skipped terms contribute less
/// than `n * exp(-40)` in relative mass.
const EXP_CUTOFF: f64 = -40.0;

/// Scaled coupling together with the dual potentials that generate it.
#[derive(Debug, Clone)]
pub struct SinkhornOutput {
    /// `pi_ij = exp((f_i + g_j - C_ij) / eta)`, generally infeasible.
    pub coupling: Array2<f64>,
    pub row_potential: Array1<f64>,
    pub col_potential: Array1<f64>,
    pub iterations: usize,
    /// Final L1 marginal deviation (rows plus columns).
    pub marginal_violation: f64,
    /// Whether the stop tolerance was met within the iteration cap.
    pub converged: bool,
}

/// Solver accounting for one epsilon-guaranteed approximate solve.
#[derive(Debug, Clone)]
pub struct ApproxSolveReport {
    /// `<C, pi_hat>` of the rounded, feasible plan.
    pub cost: f64,
    pub iterations: usize,
    /// Requested guarantee on the unregularized cost.
    pub epsilon: f64,
    /// Regularization actually used.
    pub eta: f64,
    /// L1 marginal deviation before rounding.
    pub marginal_violation: f64,
    pub converged: bool,
    /// The rounded feasible plan realizing `cost`.
    pub plan: TransportPlan,
}

fn validate_positive_weights(name: &'static str, w: ArrayView1<f64>) -> Result<()> {
    for &x in w.iter() {
        if !x.is_finite() || x <= 0.0 {
            return Err(Error::InvalidWeights(format!(
                "{name} must be strictly positive for entropic scaling (zero-weight atoms are pruned upstream), got {x}"
            )));
        }
    }
    Ok(())
}

/// Alternating marginal scaling on the Gibbs kernel `exp(-C/eta)`, performed
/// in the log domain. Stops when the L1 marginal deviation drops to `stop` or
/// the iteration cap is hit; a capped run returns the best iterate flagged
/// non-converged so the caller can decide.
pub fn sinkhorn_scale(
    a: ArrayView1<f64>,
    b: ArrayView1<f64>,
    cost: &CostMatrix,
    eta: f64,
    stop: f64,
    max_iter: usize,
) -> Result<SinkhornOutput> {
    if a.len() != cost.nrows() || b.len() != cost.ncols() {
        return Err(Error::ShapeMismatch {
            context: "marginals vs cost matrix",
            expected: format!("{}x{}", cost.nrows(), cost.ncols()),
            got: format!("{}x{}", a.len(), b.len()),
        });
    }
    if !eta.is_finite() || eta <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "eta must be positive, got {eta}"
        )));
    }
    if stop.is_nan() || stop < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "stop tolerance must be >= 0, got {stop}"
        )));
    }
    if max_iter == 0 {
        return Err(Error::InvalidArgument("max_iter must be >= 1".into()));
    }
    validate_positive_weights("row marginal", a)?;
    validate_positive_weights("col marginal", b)?;

    let n1 = a.len();
    let n2 = b.len();
    let c = cost.entries();
    let ln_a: Vec<f64> = a.iter().map(|x| x.ln()).collect();
    let ln_b: Vec<f64> = b.iter().map(|x| x.ln()).collect();
    let mut f = vec![0.0f64; n1];
    let mut g = vec![0.0f64; n2];
    let mut iterations = 0;
    let mut violation = f64::INFINITY;
    let mut converged = false;

    let mut col_max = vec![0.0f64; n2];
    let mut col_sum = vec![0.0f64; n2];

    while iterations < max_iter {
        iterations += 1;

        // Row update: enforce row marginals given g.
        for i in 0..n1 {
            let row = c.row(i);
            let row = row.to_slice().expect("row-major cost");
            let mut m = f64::NEG_INFINITY;
            for (j, &cij) in row.iter().enumerate() {
                let t = (g[j] - cij) / eta;
                if t > m {
                    m = t;
                }
            }
            let mut s = 0.0;
            for (j, &cij) in row.iter().enumerate() {
                let t = (g[j] - cij) / eta - m;
                if t > EXP_CUTOFF {
                    s += t.exp();
                }
            }
            f[i] = eta * (ln_a[i] - (m + s.ln()));
        }

        // Column update: enforce column marginals given f.
        col_max.iter_mut().for_each(|x| *x = f64::NEG_INFINITY);
        for i in 0..n1 {
            let row = c.row(i);
            let row = row.to_slice().expect("row-major cost");
            let fi = f[i];
            for (j, &cij) in row.iter().enumerate() {
                let t = (fi - cij) / eta;
                if t > col_max[j] {
                    col_max[j] = t;
                }
            }
        }
        col_sum.iter_mut().for_each(|x| *x = 0.0);
        for i in 0..n1 {
            let row = c.row(i);
            let row = row.to_slice().expect("row-major cost");
            let fi = f[i];
            for (j, &cij) in row.iter().enumerate() {
                let t = (fi - cij) / eta - col_max[j];
                if t > EXP_CUTOFF {
                    col_sum[j] += t.exp();
                }
            }
        }
        for j in 0..n2 {
            g[j] = eta * (ln_b[j] - (col_max[j] + col_sum[j].ln()));
        }

        // Marginal deviation of the current iterate.
        let mut row_sums = vec![0.0f64; n1];
        let mut col_sums = vec![0.0f64; n2];
        for i in 0..n1 {
            let row = c.row(i);
            let row = row.to_slice().expect("row-major cost");
            let fi = f[i];
            let mut acc = 0.0;
            for (j, &cij) in row.iter().enumerate() {
                let p = ((fi + g[j] - cij) / eta).exp();
                acc += p;
                col_sums[j] += p;
            }
            row_sums[i] = acc;
        }
        violation = row_sums
            .iter()
            .zip(a.iter())
            .map(|(r, x)| (r - x).abs())
            .sum::<f64>()
            + col_sums
                .iter()
                .zip(b.iter())
                .map(|(cj, x)| (cj - x).abs())
                .sum::<f64>();
        if violation <= stop {
            converged = true;
            break;
        }
    }

    let mut coupling = Array2::zeros((n1, n2));
    for i in 0..n1 {
        for j in 0..n2 {
            coupling[(i, j)] = ((f[i] + g[j] - c[(i, j)]) / eta).exp();
        }
    }
    if coupling.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numerical {
            op: "sinkhorn_scale",
            detail: "non-finite coupling entry".into(),
        });
    }
    Ok(SinkhornOutput {
        coupling,
        row_potential: Array1::from_vec(f),
        col_potential: Array1::from_vec(g),
        iterations,
        marginal_violation: violation,
        converged,
    })
}

/// Projects a nonnegative coupling onto the feasible polytope: scale rows and
/// columns down to their targets, then patch the residual with a rank-one
/// correction. The output moves at most twice the input's L1 marginal
/// violation in L1 distance.
pub fn round_to_feasible(
    coupling: ArrayView2<f64>,
    a: ArrayView1<f64>,
    b: ArrayView1<f64>,
) -> Result<TransportPlan> {
    let n1 = a.len();
    let n2 = b.len();
    if coupling.nrows() != n1 || coupling.ncols() != n2 {
        return Err(Error::ShapeMismatch {
            context: "coupling vs marginals",
            expected: format!("{n1}x{n2}"),
            got: format!("{}x{}", coupling.nrows(), coupling.ncols()),
        });
    }
    if coupling.iter().any(|&x| !x.is_finite() || x < 0.0) {
        return Err(Error::InvalidArgument(
            "coupling entries must be finite and nonnegative".into(),
        ));
    }
    let mut out = coupling.to_owned();

    for (i, mut row) in out.outer_iter_mut().enumerate() {
        let s: f64 = row.sum();
        if s > a[i] && s > 0.0 {
            let factor = a[i] / s;
            row.mapv_inplace(|x| x * factor);
        }
    }
    let mut col_sums = vec![0.0f64; n2];
    for row in out.outer_iter() {
        for (j, &x) in row.iter().enumerate() {
            col_sums[j] += x;
        }
    }
    let col_factor: Vec<f64> = (0..n2)
        .map(|j| {
            if col_sums[j] > b[j] && col_sums[j] > 0.0 {
                b[j] / col_sums[j]
            } else {
                1.0
            }
        })
        .collect();
    for mut row in out.outer_iter_mut() {
        for (j, x) in row.iter_mut().enumerate() {
            *x *= col_factor[j];
        }
    }

    let mut err_r = vec![0.0f64; n1];
    let mut err_c = vec![0.0f64; n2];
    let mut col_now = vec![0.0f64; n2];
    for (i, row) in out.outer_iter().enumerate() {
        let mut s = 0.0;
        for (j, &x) in row.iter().enumerate() {
            s += x;
            col_now[j] += x;
        }
        err_r[i] = (a[i] - s).max(0.0);
    }
    for j in 0..n2 {
        err_c[j] = (b[j] - col_now[j]).max(0.0);
    }
    let sr: f64 = err_r.iter().sum();
    let sc: f64 = err_c.iter().sum();
    if sr > 0.0 && sc > 0.0 {
        for i in 0..n1 {
            if err_r[i] == 0.0 {
                continue;
            }
            let scale = err_r[i] / sr;
            for j in 0..n2 {
                out[(i, j)] += scale * err_c[j];
            }
        }
    }
    TransportPlan::new(out, a.to_owned(), b.to_owned())
}

/// Approximate the unregularized transport cost to within `eps`:
/// `eta = eps / (4 ln max(n1, n2))` (floored at 1e-9), scaling stopped at an
/// L1 marginal violation of `eps / (8 ||C||_inf)`, then rounding. Uses the
/// default iteration cap of [`DEFAULT_MAX_ITER`].
pub fn approx_solve(
    a: ArrayView1<f64>,
    b: ArrayView1<f64>,
    cost: &CostMatrix,
    eps: f64,
) -> Result<ApproxSolveReport> {
    approx_solve_with(a, b, cost, eps, DEFAULT_MAX_ITER)
}

/// [`approx_solve`] with an explicit iteration cap, for callers retrying a
/// run that came back flagged non-converged.
pub fn approx_solve_with(
    a: ArrayView1<f64>,
    b: ArrayView1<f64>,
    cost: &CostMatrix,
    eps: f64,
    max_iter: usize,
) -> Result<ApproxSolveReport> {
    if !eps.is_finite() || eps <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "eps must be positive, got {eps}"
        )));
    }
    let n = cost.nrows().max(cost.ncols()).max(2);
    let eta = (eps / (4.0 * (n as f64).ln())).max(1e-9);

    if cost.max_entry() == 0.0 {
        // Every feasible plan costs zero; the independent coupling is one.
        let mut m = Array2::zeros((a.len(), b.len()));
        for (i, &ai) in a.iter().enumerate() {
            for (j, &bj) in b.iter().enumerate() {
                m[(i, j)] = ai * bj;
            }
        }
        let plan = TransportPlan::new(m, a.to_owned(), b.to_owned())?;
        return Ok(ApproxSolveReport {
            cost: 0.0,
            iterations: 0,
            epsilon: eps,
            eta,
            marginal_violation: 0.0,
            converged: true,
            plan,
        });
    }

    let stop = eps / (8.0 * cost.max_entry());
    let scaled = sinkhorn_scale(a, b, cost, eta, stop, max_iter)?;
    let plan = round_to_feasible(scaled.coupling.view(), a, b)?;
    let value: f64 = plan
        .matrix()
        .iter()
        .zip(cost.entries().iter())
        .map(|(p, c)| p * c)
        .sum();
    Ok(ApproxSolveReport {
        cost: value,
        iterations: scaled.iterations,
        epsilon: eps,
        eta,
        marginal_violation: scaled.marginal_violation,
        converged: scaled.converged,
        plan,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::solve_exact;
    use crate::measure::squared_euclidean_cost;
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn uniform(n: usize) -> Array1<f64> {
        Array1::from_elem(n, 1.0 / n as f64)
    }

    fn random_instance(n: usize, d: usize, seed: u64) -> (Array1<f64>, Array1<f64>, CostMatrix) {
        let mut r = rng(seed);
        let x: Vec<f64> = (0..n * d).map(|_| r.random::<f64>() * 2.0).collect();
        let y: Vec<f64> = (0..n * d).map(|_| r.random::<f64>() * 2.0 + 0.3).collect();
        let x = Array2::from_shape_vec((n, d), x).unwrap();
        let y = Array2::from_shape_vec((n, d), y).unwrap();
        let cost = squared_euclidean_cost(x.view(), y.view()).unwrap();
        (uniform(n), uniform(n), cost)
    }

    #[test]
    fn one_by_one_converges_immediately() {
        let cost = CostMatrix::new(array![[2.0]]).unwrap();
        let a = Array1::from_elem(1, 1.0);
        let out = sinkhorn_scale(a.view(), a.view(), &cost, 0.5, 1e-12, 100).unwrap();
        assert_eq!(out.iterations, 1);
        assert!(out.converged);
        assert_abs_diff_eq!(out.coupling[(0, 0)], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn large_eta_gives_independent_coupling() {
        let cost = CostMatrix::new(array![[0.0, 1.0], [1.0, 0.0]]).unwrap();
        let a = uniform(2);
        let out = sinkhorn_scale(a.view(), a.view(), &cost, 1e6, 1e-10, 1000).unwrap();
        for &p in out.coupling.iter() {
            assert_abs_diff_eq!(p, 0.25, epsilon = 1e-4);
        }
    }

    #[test]
    fn dual_potential_objective_decreases() {
        let (a, b, cost) = random_instance(6, 2, 5);
        let eta = 0.3;
        let phi = |f: &Array1<f64>, g: &Array1<f64>| -> f64 {
            let mut mass = 0.0;
            for i in 0..a.len() {
                for j in 0..b.len() {
                    mass += ((f[i] + g[j] - cost.entries()[(i, j)]) / eta).exp();
                }
            }
            let fa: f64 = f.iter().zip(a.iter()).map(|(x, y)| x * y).sum();
            let gb: f64 = g.iter().zip(b.iter()).map(|(x, y)| x * y).sum();
            eta * mass - fa - gb
        };
        let mut prev = f64::INFINITY;
        for t in 1..=10 {
            let out = sinkhorn_scale(a.view(), b.view(), &cost, eta, 0.0, t).unwrap();
            let val = phi(&out.row_potential, &out.col_potential);
            assert!(
                val <= prev + 1e-9,
                "scaling objective increased at iteration {t}: {prev} -> {val}"
            );
            prev = val;
        }
    }

    #[test]
    fn rounding_keeps_feasible_plan_unchanged() {
        let a = uniform(3);
        let mut m = Array2::zeros((3, 3));
        for i in 0..3 {
            m[(i, i)] = 1.0 / 3.0;
        }
        let plan = round_to_feasible(m.view(), a.view(), a.view()).unwrap();
        assert_eq!(plan.matrix(), m.view());
    }

    #[test]
    fn rounding_restores_perturbed_marginals_exactly() {
        let a = uniform(4);
        let mut r = rng(3);
        let mut m = Array2::zeros((4, 4));
        for i in 0..4 {
            for j in 0..4 {
                m[(i, j)] = a[i] * a[j] * (1.0 + 0.3 * (r.random::<f64>() - 0.5));
            }
        }
        let plan = round_to_feasible(m.view(), a.view(), a.view()).unwrap();
        for i in 0..4 {
            let s: f64 = plan.matrix().row(i).sum();
            assert_abs_diff_eq!(s, a[i], epsilon = 1e-12);
        }
        for j in 0..4 {
            let s: f64 = plan.matrix().column(j).sum();
            assert_abs_diff_eq!(s, a[j], epsilon = 1e-12);
        }
    }

    #[test]
    fn rounding_moves_at_most_twice_the_violation() {
        for seed in 0..30u64 {
            let mut r = rng(100 + seed);
            let n1 = 3 + (seed as usize % 4);
            let n2 = 2 + (seed as usize % 5);
            let a = uniform(n1);
            let b = uniform(n2);
            let mut m = Array2::zeros((n1, n2));
            for i in 0..n1 {
                for j in 0..n2 {
                    m[(i, j)] = r.random::<f64>() / (n1 * n2) as f64 * 2.0;
                }
            }
            let row_violation: f64 = (0..n1).map(|i| (m.row(i).sum() - a[i]).abs()).sum();
            let col_violation: f64 = (0..n2).map(|j| (m.column(j).sum() - b[j]).abs()).sum();
            let plan = round_to_feasible(m.view(), a.view(), b.view()).unwrap();
            let moved: f64 = plan
                .matrix()
                .iter()
                .zip(m.iter())
                .map(|(x, y)| (x - y).abs())
                .sum();
            assert!(
                moved <= 2.0 * (row_violation + col_violation) + 1e-12,
                "rounding moved {moved}, violation bound {}",
                2.0 * (row_violation + col_violation)
            );
        }
    }

    #[test]
    fn approx_solve_on_diracs_is_exact() {
        let cost = CostMatrix::new(array![[4.5]]).unwrap();
        let one = Array1::from_elem(1, 1.0);
        for eps in [1e-3, 0.1, 10.0] {
            let rep = approx_solve(one.view(), one.view(), &cost, eps).unwrap();
            assert_abs_diff_eq!(rep.cost, 4.5, epsilon = 1e-12);
        }
    }

    #[test]
    fn approx_solve_meets_guarantee_against_exact() {
        for seed in 0..10u64 {
            let (a, b, cost) = random_instance(20, 2, seed);
            let exact = solve_exact(a.view(), b.view(), &cost).unwrap().cost;
            for frac in [0.05, 0.1] {
                let eps = frac * cost.max_entry();
                let rep = approx_solve(a.view(), b.view(), &cost, eps).unwrap();
                assert!(
                    (rep.cost - exact).abs() <= eps,
                    "guarantee broken (seed {seed}, eps {eps}): approx {} vs exact {exact}",
                    rep.cost
                );
            }
        }
    }

    #[test]
    fn approx_solve_with_slack_epsilon_still_valid() {
        let (a, b, cost) = random_instance(10, 2, 77);
        let exact = solve_exact(a.view(), b.view(), &cost).unwrap().cost;
        let eps = cost.max_entry() * 2.0;
        let rep = approx_solve(a.view(), b.view(), &cost, eps).unwrap();
        assert!(rep.eta > 0.0);
        // A feasible plan's cost sits within [exact, exact + eps] trivially.
        assert!(rep.cost >= exact - 1e-9 && rep.cost <= exact + eps);
    }

    #[test]
    fn log_domain_stays_finite_for_small_eta_and_large_costs() {
        let mut r = rng(9);
        let n = 12;
        let mut c = Array2::zeros((n, n));
        for i in 0..n {
            for j in 0..n {
                c[(i, j)] = r.random::<f64>() * 1e6;
            }
        }
        let cost = CostMatrix::new(c).unwrap();
        let a = uniform(n);
        let eta = 1e-3 * cost.max_entry();
        let out = sinkhorn_scale(a.view(), a.view(), &cost, eta, 1e-6, 500).unwrap();
        assert!(out.row_potential.iter().all(|x| x.is_finite()));
        assert!(out.col_potential.iter().all(|x| x.is_finite()));
        assert!(out.coupling.iter().all(|x| x.is_finite()));
    }

    #[test]
    fn iterations_monotone_in_epsilon() {
        let (a, b, cost) = random_instance(15, 2, 21);
        let mut prev = usize::MAX;
        for frac in [0.01, 0.05, 0.1] {
            let eps = frac * cost.max_entry();
            let rep = approx_solve(a.view(), b.view(), &cost, eps).unwrap();
            assert!(
                rep.iterations <= prev,
                "iterations grew with eps: {} -> {}",
                prev,
                rep.iterations
            );
            prev = rep.iterations;
        }
    }
}

//! Discrete measures, pairwise cost matrices, transport plans, and the
//! nearest-neighbor pushforward that the quantizers and solvers build on.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::error::{Error, Result};

/// Tolerance on the total mass of a weight vector at construction time.
pub const MASS_TOLERANCE: f64 = 1e-9;

/// Tolerance on marginal agreement of a transport plan (infinity norm).
pub const MARGINAL_TOLERANCE: f64 = 1e-8;

/// A weighted point cloud: `n` support points in `R^d` with a probability
/// weight vector. Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteMeasure {
    support: Array2<f64>,
    weights: Array1<f64>,
}

impl DiscreteMeasure {
    /// Builds a measure, validating that weights are nonnegative, match the
    /// support row count, and sum to 1 within [`MASS_TOLERANCE`]. Inputs
    /// outside tolerance are rejected rather than silently renormalized.
    pub fn new(support: Array2<f64>, weights: Array1<f64>) -> Result<Self> {
        let n = support.nrows();
        let d = support.ncols();
        if n == 0 {
            return Err(Error::EmptyInput("measure support"));
        }
        if d == 0 {
            return Err(Error::InvalidArgument(
                "support dimension must be >= 1".into(),
            ));
        }
        if weights.len() != n {
            return Err(Error::ShapeMismatch {
                context: "measure weights vs support rows",
                expected: n.to_string(),
                got: weights.len().to_string(),
            });
        }
        let mut total = 0.0;
        for (i, &w) in weights.iter().enumerate() {
            if !w.is_finite() || w < 0.0 {
                return Err(Error::InvalidWeights(format!(
                    "weight {w} at index {i} is negative or non-finite"
                )));
            }
            total += w;
        }
        if (total - 1.0).abs() > MASS_TOLERANCE {
            return Err(Error::InvalidWeights(format!(
                "weights sum to {total}, expected 1 within {MASS_TOLERANCE}"
            )));
        }
        if support.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidArgument(
                "support contains non-finite coordinates".into(),
            ));
        }
        Ok(Self { support, weights })
    }

    /// Uniform weights `1/n` on the given support.
    pub fn uniform(support: Array2<f64>) -> Result<Self> {
        let n = support.nrows();
        if n == 0 {
            return Err(Error::EmptyInput("measure support"));
        }
        let weights = Array1::from_elem(n, 1.0 / n as f64);
        Self::new(support, weights)
    }

    /// A single atom of mass 1.
    pub fn dirac(point: &[f64]) -> Result<Self> {
        let support = Array2::from_shape_vec((1, point.len()), point.to_vec())
            .expect("1 x d shape always valid");
        Self::new(support, Array1::from_elem(1, 1.0))
    }

    pub fn len(&self) -> usize {
        self.support.nrows()
    }

    pub fn is_empty(&self) -> bool {
        false // n >= 1 by construction
    }

    pub fn dim(&self) -> usize {
        self.support.ncols()
    }

    pub fn support(&self) -> ArrayView2<'_, f64> {
        self.support.view()
    }

    pub fn weights(&self) -> ArrayView1<'_, f64> {
        self.weights.view()
    }
}

/// Dense pairwise transport costs with the cached maximum entry.
#[derive(Debug, Clone)]
pub struct CostMatrix {
    entries: Array2<f64>,
    max_entry: f64,
}

impl CostMatrix {
    /// Wraps a precomputed nonnegative cost table.
    pub fn new(entries: Array2<f64>) -> Result<Self> {
        if entries.nrows() == 0 || entries.ncols() == 0 {
            return Err(Error::EmptyInput("cost matrix"));
        }
        let mut max_entry = 0.0f64;
        for &c in entries.iter() {
            if !c.is_finite() || c < 0.0 {
                return Err(Error::InvalidArgument(format!(
                    "cost entries must be finite and nonnegative, got {c}"
                )));
            }
            max_entry = max_entry.max(c);
        }
        Ok(Self { entries, max_entry })
    }

    pub fn entries(&self) -> ArrayView2<'_, f64> {
        self.entries.view()
    }

    /// Cached `max_ij C_ij`.
    pub fn max_entry(&self) -> f64 {
        self.max_entry
    }

    pub fn nrows(&self) -> usize {
        self.entries.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.entries.ncols()
    }
}

/// Squared Euclidean distance between two coordinate slices.
#[inline]
pub(crate) fn squared_distance(x: &[f64], y: &[f64]) -> f64 {
    debug_assert_eq!(x.len(), y.len());
    let mut acc = 0.0;
    for (a, b) in x.iter().zip(y) {
        let diff = a - b;
        acc += diff * diff;
    }
    acc
}

fn check_same_dim(x: &ArrayView2<f64>, y: &ArrayView2<f64>) -> Result<()> {
    if x.ncols() != y.ncols() {
        return Err(Error::DimensionMismatch {
            left: x.ncols(),
            right: y.ncols(),
        });
    }
    Ok(())
}

/// `C_ij = ||x_i - y_j||^2` with the cached maximum entry.
pub fn squared_euclidean_cost(x: ArrayView2<f64>, y: ArrayView2<f64>) -> Result<CostMatrix> {
    euclidean_cost_with_exponent(x, y, 2.0)
}

/// `C_ij = ||x_i - y_j||^p`. The exponent hook exists for p-Wasserstein
/// experiments; only `p = 2` is exercised by the benchmark pipelines.
pub fn euclidean_cost_with_exponent(
    x: ArrayView2<f64>,
    y: ArrayView2<f64>,
    p: f64,
) -> Result<CostMatrix> {
    check_same_dim(&x, &y)?;
    if !p.is_finite() || p <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "cost exponent must be positive, got {p}"
        )));
    }
    let (n1, n2) = (x.nrows(), y.nrows());
    let mut entries = Array2::zeros((n1, n2));
    for (i, xi) in x.outer_iter().enumerate() {
        let xi = xi.to_slice().expect("row-major support");
        for (j, yj) in y.outer_iter().enumerate() {
            let yj = yj.to_slice().expect("row-major support");
            let d2 = squared_distance(xi, yj);
            entries[(i, j)] = if p == 2.0 { d2 } else { d2.sqrt().powf(p) };
        }
    }
    CostMatrix::new(entries)
}

/// For each point, the index of its nearest center (ties broken by lowest
/// center index) and the attained squared distance.
pub fn nearest_neighbor_assign(
    points: ArrayView2<f64>,
    centers: ArrayView2<f64>,
) -> Result<(Vec<usize>, Vec<f64>)> {
    if centers.nrows() == 0 {
        return Err(Error::EmptyInput("center set"));
    }
    check_same_dim(&points, &centers)?;
    let mut assignment = Vec::with_capacity(points.nrows());
    let mut distances = Vec::with_capacity(points.nrows());
    for p in points.outer_iter() {
        let p = p.to_slice().expect("row-major support");
        let mut best = usize::MAX;
        let mut best_d = f64::INFINITY;
        for (l, c) in centers.outer_iter().enumerate() {
            let c = c.to_slice().expect("row-major support");
            let d = squared_distance(p, c);
            if d < best_d {
                best_d = d;
                best = l;
            }
        }
        assignment.push(best);
        distances.push(best_d);
    }
    Ok((assignment, distances))
}

/// Moves every atom of `measure` to its nearest center, accumulating weights
/// per Voronoi region. Centers receiving zero mass are dropped, so the output
/// support is the subset of `centers` with positive aggregated weight.
pub fn pushforward(measure: &DiscreteMeasure, centers: ArrayView2<f64>) -> Result<DiscreteMeasure> {
    let (assignment, _) = nearest_neighbor_assign(measure.support(), centers)?;
    let k = centers.nrows();
    let mut agg = vec![0.0f64; k];
    for (i, &l) in assignment.iter().enumerate() {
        agg[l] += measure.weights()[i];
    }
    let kept: Vec<usize> = (0..k).filter(|&l| agg[l] > 0.0).collect();
    if kept.is_empty() {
        // Total mass is 1, so at least one center must receive mass.
        return Err(Error::Numerical {
            op: "pushforward",
            detail: "no center received positive mass".into(),
        });
    }
    let d = centers.ncols();
    let mut support = Array2::zeros((kept.len(), d));
    let mut weights = Array1::zeros(kept.len());
    for (row, &l) in kept.iter().enumerate() {
        support.row_mut(row).assign(&centers.row(l));
        weights[row] = agg[l];
    }
    DiscreteMeasure::new(support, weights)
}

/// Nonnegative coupling matrix with prescribed marginals.
#[derive(Debug, Clone)]
pub struct TransportPlan {
    matrix: Array2<f64>,
    row_marginal: Array1<f64>,
    col_marginal: Array1<f64>,
}

impl TransportPlan {
    /// Validates entry nonnegativity and marginal agreement within
    /// [`MARGINAL_TOLERANCE`] in the infinity norm.
    pub fn new(
        matrix: Array2<f64>,
        row_marginal: Array1<f64>,
        col_marginal: Array1<f64>,
    ) -> Result<Self> {
        if matrix.nrows() != row_marginal.len() || matrix.ncols() != col_marginal.len() {
            return Err(Error::ShapeMismatch {
                context: "plan matrix vs marginals",
                expected: format!("{}x{}", row_marginal.len(), col_marginal.len()),
                got: format!("{}x{}", matrix.nrows(), matrix.ncols()),
            });
        }
        if matrix.iter().any(|&x| !x.is_finite() || x < 0.0) {
            return Err(Error::InvalidArgument(
                "plan entries must be finite and nonnegative".into(),
            ));
        }
        let row_sums = matrix.sum_axis(Axis(1));
        let col_sums = matrix.sum_axis(Axis(0));
        let row_dev = row_sums
            .iter()
            .zip(row_marginal.iter())
            .map(|(s, a)| (s - a).abs())
            .fold(0.0f64, f64::max);
        let col_dev = col_sums
            .iter()
            .zip(col_marginal.iter())
            .map(|(s, b)| (s - b).abs())
            .fold(0.0f64, f64::max);
        if row_dev > MARGINAL_TOLERANCE || col_dev > MARGINAL_TOLERANCE {
            return Err(Error::InvalidArgument(format!(
                "plan marginals deviate by {:.3e} (rows) / {:.3e} (cols), tolerance {MARGINAL_TOLERANCE}",
                row_dev, col_dev
            )));
        }
        Ok(Self {
            matrix,
            row_marginal,
            col_marginal,
        })
    }

    pub fn matrix(&self) -> ArrayView2<'_, f64> {
        self.matrix.view()
    }

    pub fn row_marginal(&self) -> ArrayView1<'_, f64> {
        self.row_marginal.view()
    }

    pub fn col_marginal(&self) -> ArrayView1<'_, f64> {
        self.col_marginal.view()
    }
}

/// `<C, pi> = sum_ij C_ij pi_ij`.
pub fn transport_cost(plan: &TransportPlan, cost: &CostMatrix) -> Result<f64> {
    if plan.matrix.nrows() != cost.nrows() || plan.matrix.ncols() != cost.ncols() {
        return Err(Error::ShapeMismatch {
            context: "plan vs cost matrix",
            expected: format!("{}x{}", cost.nrows(), cost.ncols()),
            got: format!("{}x{}", plan.matrix.nrows(), plan.matrix.ncols()),
        });
    }
    Ok(plan
        .matrix
        .iter()
        .zip(cost.entries.iter())
        .map(|(p, c)| p * c)
        .sum())
}

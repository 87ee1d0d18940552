//! Exact discrete optimal transport via a dense transportation network
//! simplex, plus a brute-force assignment oracle for tiny instances.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::error::{Error, Result};
use crate::measure::{
    squared_distance, squared_euclidean_cost, CostMatrix, DiscreteMeasure, TransportPlan,
};

/// Absolute tolerance on reduced costs at optimality termination.
const REDUCED_COST_TOL: f64 = 1e-9;

/// Optimal coupling, its cost, and the dual certificate.
#[derive(Debug, Clone)]
pub struct ExactSolution {
    pub plan: TransportPlan,
    pub cost: f64,
    /// Row potentials `u` with `u_i + v_j <= c_ij` (up to tolerance).
    pub row_duals: Array1<f64>,
    /// Column potentials `v`.
    pub col_duals: Array1<f64>,
    pub pivots: usize,
}

impl ExactSolution {
    /// Dual objective `<a, u> + <b, v>`; equals the primal cost at optimality.
    pub fn dual_objective(&self, a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
        let ua: f64 = a
            .iter()
            .zip(self.row_duals.iter())
            .map(|(x, y)| x * y)
            .sum();
        let vb: f64 = b
            .iter()
            .zip(self.col_duals.iter())
            .map(|(x, y)| x * y)
            .sum();
        ua + vb
    }
}

fn validate_marginal(name: &'static str, w: ArrayView1<f64>) -> Result<()> {
    let mut total = 0.0;
    for &x in w.iter() {
        if !x.is_finite() || x < 0.0 {
            return Err(Error::InvalidWeights(format!(
                "marginal {name} has negative or non-finite entry {x}"
            )));
        }
        total += x;
    }
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidWeights(format!(
            "marginal {name} sums to {total}, expected 1 within 1e-9"
        )));
    }
    Ok(())
}

fn validate_inputs(a: ArrayView1<f64>, b: ArrayView1<f64>, cost: &CostMatrix) -> Result<()> {
    if a.len() != cost.nrows() || b.len() != cost.ncols() {
        return Err(Error::ShapeMismatch {
            context: "marginals vs cost matrix",
            expected: format!("{}x{}", cost.nrows(), cost.ncols()),
            got: format!("{}x{}", a.len(), b.len()),
        });
    }
    validate_marginal("a", a)?;
    validate_marginal("b", b)
}

/// Spanning-tree basis of the transportation problem. Nodes `0..n1` are rows,
/// `n1..n1+n2` are columns; each non-root node stores the basic cell and the
/// flow on the arc to its parent.
struct Basis {
    n1: usize,
    parent: Vec<usize>,
    parent_cell: Vec<(usize, usize)>,
    flow_to_parent: Vec<f64>,
    children: Vec<Vec<usize>>,
    depth: Vec<usize>,
    row_pot: Vec<f64>,
    col_pot: Vec<f64>,
}

const NO_NODE: usize = usize::MAX;

impl Basis {
    fn node_count(&self) -> usize {
        self.parent.len()
    }

    /// Star-shaped initial basis for the big-M extended problem: the phantom
    /// column `Q` (index `n2 - 1` of the extended problem) absorbs every real
    /// row's supply and the phantom row `P` (index `n1 - 1`) feeds every real
    /// column, with the `(P, Q)` arc linking the two halves. All flows are
    /// nonnegative and the tree depth is constant.
    fn phantom_star(a: ArrayView1<f64>, b: ArrayView1<f64>, big_m: f64) -> Self {
        let n1 = a.len(); // includes the phantom row P at n1 - 1
        let n2 = b.len(); // includes the phantom col Q at n2 - 1
        let p = n1 - 1;
        let q = n2 - 1;
        let n = n1 + n2;
        let q_node = n1 + q;
        let mut parent = vec![NO_NODE; n];
        let mut parent_cell = vec![(0usize, 0usize); n];
        let mut flow_to_parent = vec![0.0; n];
        let mut children: Vec<Vec<usize>> = vec![Vec::new(); n];
        let mut depth = vec![0usize; n];
        let mut row_pot = vec![0.0; n1];
        let mut col_pot = vec![0.0; n2];

        // Root at real row 0; Q hangs below it, P below Q, everything else
        // below those two.
        parent[q_node] = 0;
        parent_cell[q_node] = (0, q);
        flow_to_parent[q_node] = a[0];
        children[0].push(q_node);
        depth[q_node] = 1;
        col_pot[q] = big_m; // u_0 = 0 and (0, q) is tight at cost M

        parent[p] = q_node;
        parent_cell[p] = (p, q);
        flow_to_parent[p] = 0.0; // P's supply goes to Q only after pivoting
        children[q_node].push(p);
        depth[p] = 2;
        row_pot[p] = -big_m; // (p, q) tight at cost 0

        for i in 1..p {
            parent[i] = q_node;
            parent_cell[i] = (i, q);
            flow_to_parent[i] = a[i];
            children[q_node].push(i);
            depth[i] = 2;
            row_pot[i] = 0.0; // (i, q) tight at cost M
        }
        for j in 0..q {
            let node = n1 + j;
            parent[node] = p;
            parent_cell[node] = (p, j);
            flow_to_parent[node] = b[j];
            children[p].push(node);
            depth[node] = 3;
            col_pot[j] = 2.0 * big_m; // (p, j) tight at cost M
        }

        Basis {
            n1,
            parent,
            parent_cell,
            flow_to_parent,
            children,
            depth,
            row_pot,
            col_pot,
        }
    }

    fn reduced_cost(&self, cost: ArrayView2<f64>, i: usize, j: usize) -> f64 {
        cost[(i, j)] - self.row_pot[i] - self.col_pot[j]
    }

    /// Collects the arcs (identified by child node) on the tree paths from
    /// both endpoints of the entering cell up to their common ancestor.
    fn cycle_paths(&self, row: usize, col: usize) -> (Vec<usize>, Vec<usize>) {
        let mut x = row;
        let mut y = self.n1 + col;
        let mut path_x = Vec::new();
        let mut path_y = Vec::new();
        while self.depth[x] > self.depth[y] {
            path_x.push(x);
            x = self.parent[x];
        }
        while self.depth[y] > self.depth[x] {
            path_y.push(y);
            y = self.parent[y];
        }
        while x != y {
            path_x.push(x);
            x = self.parent[x];
            path_y.push(y);
            y = self.parent[y];
        }
        (path_x, path_y)
    }

    /// Performs the pivot on entering cell `(row, col)` and returns whether
    /// the step moved a strictly positive amount of flow.
    fn pivot(&mut self, cost: ArrayView2<f64>, row: usize, col: usize) -> Result<bool> {
        let (path_row_side, path_col_side) = self.cycle_paths(row, col);

        // Signs alternate along each path starting with a decrease; ties on
        // the minimum flow break to the lexicographically smallest cell.
        let mut theta = f64::INFINITY;
        let mut leaving = NO_NODE;
        for (pos, &node) in path_col_side
            .iter()
            .enumerate()
            .chain(path_row_side.iter().enumerate())
        {
            if pos % 2 == 0 {
                let f = self.flow_to_parent[node];
                let cell = self.parent_cell[node];
                if f < theta
                    || (f == theta && (leaving == NO_NODE || cell < self.parent_cell[leaving]))
                {
                    theta = f;
                    leaving = node;
                }
            }
        }
        if leaving == NO_NODE {
            return Err(Error::Numerical {
                op: "solve_exact",
                detail: "pivot cycle has no decreasing arc".into(),
            });
        }

        // Apply flow changes around the cycle.
        for (pos, &node) in path_col_side.iter().enumerate() {
            if pos % 2 == 0 {
                self.flow_to_parent[node] -= theta;
            } else {
                self.flow_to_parent[node] += theta;
            }
        }
        for (pos, &node) in path_row_side.iter().enumerate() {
            if pos % 2 == 0 {
                self.flow_to_parent[node] -= theta;
            } else {
                self.flow_to_parent[node] += theta;
            }
        }
        // Guard against accumulated rounding pushing a basic flow negative.
        self.flow_to_parent[leaving] = 0.0;

        // The leaving arc separates one entering endpoint from the root.
        let enter_row_node = row;
        let enter_col_node = self.n1 + col;
        let cut_endpoint = if self.passes_through(enter_row_node, leaving) {
            enter_row_node
        } else {
            enter_col_node
        };
        let kept_endpoint = if cut_endpoint == enter_row_node {
            enter_col_node
        } else {
            enter_row_node
        };

        // Re-root the cut component at the entering endpoint.
        let red = self.reduced_cost(cost, row, col);
        let mut chain = Vec::new();
        let mut nd = cut_endpoint;
        loop {
            chain.push(nd);
            if nd == leaving {
                break;
            }
            nd = self.parent[nd];
        }
        // Detach the cut component.
        let old_parent_of_leaving = self.parent[leaving];
        remove_child(&mut self.children, old_parent_of_leaving, leaving);
        // Reverse parent pointers along cut_endpoint -> leaving.
        for w in (1..chain.len()).rev() {
            let child = chain[w - 1];
            let node = chain[w];
            remove_child(&mut self.children, node, child);
            self.parent[node] = child;
            self.parent_cell[node] = self.parent_cell[child];
            self.flow_to_parent[node] = self.flow_to_parent[child];
            self.children[child].push(node);
        }
        self.parent[cut_endpoint] = kept_endpoint;
        self.parent_cell[cut_endpoint] = (row, col);
        self.flow_to_parent[cut_endpoint] = theta;
        self.children[kept_endpoint].push(cut_endpoint);

        // Depths and potentials of the re-hung component: rows and columns
        // shift by opposite amounts so basic cells stay tight.
        let (row_shift, col_shift) = if cut_endpoint < self.n1 {
            (red, -red)
        } else {
            (-red, red)
        };
        let mut stack = vec![cut_endpoint];
        while let Some(node) = stack.pop() {
            self.depth[node] = self.depth[self.parent[node]] + 1;
            if node < self.n1 {
                self.row_pot[node] += row_shift;
            } else {
                self.col_pot[node - self.n1] += col_shift;
            }
            stack.extend_from_slice(&self.children[node]);
        }
        Ok(theta > 0.0)
    }

    /// Whether the path from `node` to the root passes through `via`.
    fn passes_through(&self, mut node: usize, via: usize) -> bool {
        loop {
            if node == via {
                return true;
            }
            if self.parent[node] == NO_NODE {
                return false;
            }
            node = self.parent[node];
        }
    }
}

fn remove_child(children: &mut [Vec<usize>], parent: usize, child: usize) {
    if let Some(pos) = children[parent].iter().position(|&c| c == child) {
        children[parent].swap_remove(pos);
    }
}

/// Solves `min <C, pi>` over couplings with marginals `a`, `b` by the
/// network simplex with candidate-list pivoting; degenerate stalls fall back
/// to Bland's rule.
///
/// Internally works on a big-M extension with one phantom row and column
/// whose star basis keeps the spanning tree shallow. `M = ||C||_inf + 1`
/// already prices every phantom arc out of the optimum: real mass parked on
/// a phantom pair can be rerouted directly for a `2M - ||C||_inf` saving.
pub fn solve_exact(
    a: ArrayView1<f64>,
    b: ArrayView1<f64>,
    cost: &CostMatrix,
) -> Result<ExactSolution> {
    validate_inputs(a, b, cost)?;

    let real_n1 = a.len();
    let real_n2 = b.len();
    let big_m = cost.max_entry() + 1.0;
    let n1 = real_n1 + 1;
    let n2 = real_n2 + 1;
    let mut ext_cost = Array2::from_elem((n1, n2), big_m);
    ext_cost
        .slice_mut(ndarray::s![..real_n1, ..real_n2])
        .assign(&cost.entries());
    ext_cost[(real_n1, real_n2)] = 0.0;
    let mut ext_a = Array1::ones(n1);
    ext_a.slice_mut(ndarray::s![..real_n1]).assign(&a);
    let mut ext_b = Array1::ones(n2);
    ext_b.slice_mut(ndarray::s![..real_n2]).assign(&b);

    let c = ext_cost.view();
    let mut basis = Basis::phantom_star(ext_a.view(), ext_b.view(), big_m);

    let cells = n1 * n2;
    let list_size = ((cells as f64).sqrt() as usize / 4).max(16).min(cells);
    let mut candidates: Vec<usize> = Vec::with_capacity(list_size);
    let mut cursor = 0usize;
    let mut pivots = 0usize;
    let mut degenerate_streak = 0usize;
    let bland_threshold = 8 * (n1 + n2);
    let max_pivots = 10_000 + 200 * (n1 + n2) * ((n1 + n2) as f64).sqrt() as usize;

    loop {
        if pivots > max_pivots {
            return Err(Error::Numerical {
                op: "solve_exact",
                detail: format!("pivot cap {max_pivots} exceeded"),
            });
        }
        let bland = degenerate_streak > bland_threshold;
        let mut entering: Option<(usize, usize)> = None;
        if bland {
            // Anti-cycling fallback: first eligible cell in index order.
            'outer: for i in 0..n1 {
                for j in 0..n2 {
                    if basis.reduced_cost(c, i, j) < -REDUCED_COST_TOL {
                        entering = Some((i, j));
                        break 'outer;
                    }
                }
            }
        } else {
            // Candidate-list pricing: serve near-Dantzig pivots from a short
            // list of the most negative cells, rescanning when it runs dry.
            let mut best = -REDUCED_COST_TOL;
            let mut best_idx = None;
            candidates.retain(|&idx| {
                let i = idx / n2;
                let j = idx % n2;
                let r = c[(i, j)] - basis.row_pot[i] - basis.col_pot[j];
                if r < best {
                    best = r;
                    best_idx = Some(idx);
                }
                r < -REDUCED_COST_TOL
            });
            if best_idx.is_none() {
                // Refill by partial pricing: scan from a rolling cursor until
                // enough eligible cells are gathered or the matrix wraps.
                candidates.clear();
                let mut gathered: Vec<(f64, usize)> = Vec::with_capacity(4 * list_size);
                let mut scanned = 0usize;
                while scanned < cells {
                    let idx = cursor;
                    cursor += 1;
                    if cursor == cells {
                        cursor = 0;
                    }
                    scanned += 1;
                    let i = idx / n2;
                    let j = idx % n2;
                    let r = c[(i, j)] - basis.row_pot[i] - basis.col_pot[j];
                    if r < -REDUCED_COST_TOL {
                        gathered.push((r, idx));
                        if gathered.len() == 8 * list_size {
                            break;
                        }
                    }
                }
                gathered.sort_unstable_by(|x, y| x.0.total_cmp(&y.0));
                gathered.truncate(list_size);
                if let Some(&(_, idx0)) = gathered.first() {
                    best_idx = Some(idx0);
                    candidates = gathered.into_iter().map(|(_, idx)| idx).collect();
                }
            }
            if let Some(idx) = best_idx {
                entering = Some((idx / n2, idx % n2));
                candidates.retain(|&c| c != idx);
            }
        }
        let Some((i, j)) = entering else {
            break; // optimal
        };
        let strict = basis.pivot(c, i, j)?;
        pivots += 1;
        if strict {
            degenerate_streak = 0;
        } else {
            degenerate_streak += 1;
        }
    }

    // Assemble the dense plan from the real basic flows; phantom arcs carry
    // only the phantom-to-phantom unit at optimality.
    let mut matrix = Array2::zeros((real_n1, real_n2));
    let mut value = 0.0;
    for node in 0..basis.node_count() {
        if basis.parent[node] == NO_NODE {
            continue;
        }
        let (ci, cj) = basis.parent_cell[node];
        let f = basis.flow_to_parent[node];
        if f < -1e-9 {
            return Err(Error::Numerical {
                op: "solve_exact",
                detail: format!("negative basic flow {f}"),
            });
        }
        let phantom = ci == real_n1 || cj == real_n2;
        if phantom {
            if ci != real_n1 || cj != real_n2 {
                // A mixed phantom-real arc must be empty at the optimum.
                if f > 1e-8 {
                    return Err(Error::Numerical {
                        op: "solve_exact",
                        detail: format!("phantom arc ({ci},{cj}) still carries flow {f}"),
                    });
                }
            }
            continue;
        }
        let f = f.max(0.0);
        matrix[(ci, cj)] += f;
        value += f * c[(ci, cj)];
    }
    let row_duals = Array1::from_iter(basis.row_pot[..real_n1].iter().cloned());
    let col_duals = Array1::from_iter(basis.col_pot[..real_n2].iter().cloned());
    let plan = TransportPlan::new(matrix, a.to_owned(), b.to_owned())?;
    Ok(ExactSolution {
        plan,
        cost: value,
        row_duals,
        col_duals,
        pivots,
    })
}

/// 2-Wasserstein distance between two discrete measures under squared
/// Euclidean ground cost.
pub fn w2_distance(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<f64> {
    let cost = squared_euclidean_cost(mu.support(), nu.support())?;
    let solution = solve_exact(mu.weights(), nu.weights(), &cost)?;
    Ok(solution.cost.max(0.0).sqrt())
}

/// Minimum over permutations of the mean squared matching cost between two
/// equal-size point clouds; the exact value of uniform-weight transport.
/// Capped at 8 points per side.
pub fn brute_force_assignment(x: ArrayView2<f64>, y: ArrayView2<f64>) -> Result<f64> {
    if x.nrows() != y.nrows() {
        return Err(Error::ShapeMismatch {
            context: "assignment clouds",
            expected: x.nrows().to_string(),
            got: y.nrows().to_string(),
        });
    }
    if x.ncols() != y.ncols() {
        return Err(Error::DimensionMismatch {
            left: x.ncols(),
            right: y.ncols(),
        });
    }
    let n = x.nrows();
    if n == 0 {
        return Err(Error::EmptyInput("assignment clouds"));
    }
    if n > 8 {
        return Err(Error::InstanceTooLarge {
            op: "brute_force_assignment",
            detail: format!("n = {n} > 8"),
        });
    }
    let mut cost = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            cost[i][j] = squared_distance(
                x.row(i).to_slice().expect("row-major support"),
                y.row(j).to_slice().expect("row-major support"),
            );
        }
    }
    let mut perm: Vec<usize> = (0..n).collect();
    let mut best = f64::INFINITY;
    permute(&mut perm, 0, &cost, &mut best);
    Ok(best / n as f64)
}

fn permute(perm: &mut Vec<usize>, at: usize, cost: &[Vec<f64>], best: &mut f64) {
    if at == perm.len() {
        let total: f64 = perm.iter().enumerate().map(|(i, &j)| cost[i][j]).sum();
        if total < *best {
            *best = total;
        }
        return;
    }
    for swap in at..perm.len() {
        perm.swap(at, swap);
        permute(perm, at + 1, cost, best);
        perm.swap(at, swap);
    }
}

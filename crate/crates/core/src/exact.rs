//! Exact discrete optimal transport.
//!
//! [`solve_exact`] runs a primal network simplex on the complete bipartite
//! transportation graph. [`solve_assignment`] is the Hungarian-algorithm fast
//! path for two uniform measures of equal size, where some permutation is
//! always optimal.

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::measures::{squared_cost_matrix, DiscreteMeasure, TransportPlan};

/// Largest cost matrix (in entries) the exact solvers accept by default.
pub const DEFAULT_EXACT_CAP: usize = 5_000_000;

#[derive(Debug, Clone)]
pub struct ExactSolution {
    pub plan: TransportPlan,
    /// Optimal value of `<C, plan>`: the squared 2-Wasserstein distance.
    pub cost: f64,
}

/// Squared-Euclidean exact OT with the default size cap.
pub fn solve_exact(a: &DiscreteMeasure, b: &DiscreteMeasure) -> Result<ExactSolution> {
    solve_exact_capped(a, b, DEFAULT_EXACT_CAP)
}

pub fn solve_exact_capped(
    a: &DiscreteMeasure,
    b: &DiscreteMeasure,
    cap: usize,
) -> Result<ExactSolution> {
    check_cap(a, b, cap)?;
    let cost = squared_cost_matrix(a, b)?;
    solve_exact_cost(&cost, a.weights().to_owned(), b.weights().to_owned())
}

/// Exact OT for an arbitrary nonnegative cost matrix and marginals that each
/// sum to one.
pub fn solve_exact_cost(
    cost: &Array2<f64>,
    supply: Array1<f64>,
    demand: Array1<f64>,
) -> Result<ExactSolution> {
    let (n0, n1) = cost.dim();
    if supply.len() != n0 || demand.len() != n1 {
        return Err(Error::InvalidArgument(
            "marginal lengths do not match the cost matrix".into(),
        ));
    }
    if cost.iter().any(|c| !c.is_finite() || *c < 0.0) {
        return Err(Error::InvalidArgument(
            "cost entries must be finite and nonnegative".into(),
        ));
    }
    // Solve on costs scaled into [0, 1], report in original units.
    let scale = cost.iter().cloned().fold(0.0, f64::max);
    let scaled: Vec<f64> = if scale > 0.0 {
        cost.iter().map(|c| c / scale).collect()
    } else {
        vec![0.0; n0 * n1]
    };
    let mut ns = NetworkSimplex::new(
        n0,
        n1,
        scaled,
        supply.as_slice().unwrap(),
        demand.as_slice().unwrap(),
    );
    ns.run()?;
    let matrix = Array2::from_shape_vec((n0, n1), ns.flow[..n0 * n1].to_vec())
        .expect("flow vector has n0*n1 entries");
    let plan = TransportPlan::new(matrix, supply, demand)?;
    let value = plan.cost(cost);
    Ok(ExactSolution { plan, cost: value })
}

/// Assignment fast path: both measures uniform with the same number of points.
/// The returned plan is a permutation matrix scaled by `1/n`.
pub fn solve_assignment(a: &DiscreteMeasure, b: &DiscreteMeasure) -> Result<ExactSolution> {
    if a.len() != b.len() {
        return Err(Error::InvalidArgument(format!(
            "assignment needs equal sizes, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    if !a.is_uniform() || !b.is_uniform() {
        return Err(Error::InvalidArgument(
            "assignment needs uniform weights".into(),
        ));
    }
    check_cap(a, b, DEFAULT_EXACT_CAP)?;
    let cost = squared_cost_matrix(a, b)?;
    let perm = hungarian(&cost);
    let n = a.len();
    let mut matrix = Array2::zeros((n, n));
    for (i, &j) in perm.iter().enumerate() {
        matrix[[i, j]] = 1.0 / n as f64;
    }
    let plan = TransportPlan::new(matrix, a.weights().to_owned(), b.weights().to_owned())?;
    let value = perm
        .iter()
        .enumerate()
        .map(|(i, &j)| cost[[i, j]])
        .sum::<f64>()
        / n as f64;
    Ok(ExactSolution { plan, cost: value })
}

/// Picks the assignment fast path when it applies, else the network simplex.
pub fn solve_plug_in(
    a: &DiscreteMeasure,
    b: &DiscreteMeasure,
    cap: usize,
) -> Result<ExactSolution> {
    check_cap(a, b, cap)?;
    if a.len() == b.len() && a.is_uniform() && b.is_uniform() {
        solve_assignment(a, b)
    } else {
        solve_exact_capped(a, b, cap)
    }
}

fn check_cap(a: &DiscreteMeasure, b: &DiscreteMeasure, cap: usize) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch(a.dim(), b.dim()));
    }
    let entries = a.len().saturating_mul(b.len());
    if entries > cap {
        return Err(Error::Capacity { entries, cap });
    }
    Ok(())
}

/// Minimum-cost perfect matching on a square cost matrix (row `i` is matched
/// to column `result[i]`). Shortest augmenting paths with potentials, O(n^3).
pub(crate) fn hungarian(cost: &Array2<f64>) -> Vec<usize> {
    let n = cost.nrows();
    debug_assert_eq!(n, cost.ncols());
    // 1-based arrays; index 0 is the virtual column.
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[[i0 - 1, j - 1]] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assign = vec![0usize; n];
    for j in 1..=n {
        assign[p[j] - 1] = j - 1;
    }
    assign
}

const STATE_TREE: i8 = 0;
const STATE_LOWER: i8 = 1;
const DIR_UP: i8 = 1;
const DIR_DOWN: i8 = -1;
const NONE: usize = usize::MAX;

/// Primal network simplex for the uncapacitated transportation problem.
///
/// Supply nodes are `0..n0`, demand nodes `n0..n0+n1`, plus an artificial
/// root. Arc `e < n0*n1` goes from supply `e / n1` to demand `e % n1`;
/// arc `n0*n1 + u` joins node `u` and the root. The spanning tree is stored
/// as parent pointers with depths and per-node incident tree arcs; after each
/// pivot only the subtree that changed parent is re-hung and re-priced.
struct NetworkSimplex {
    n0: usize,
    n1: usize,
    root: usize,
    cost: Vec<f64>,
    art_cost: f64,
    art_source: Vec<usize>,
    art_target: Vec<usize>,
    flow: Vec<f64>,
    state: Vec<i8>,
    parent: Vec<usize>,
    pred: Vec<usize>,
    dir: Vec<i8>,
    depth: Vec<usize>,
    pi: Vec<f64>,
    tree_adj: Vec<Vec<usize>>,
    block: usize,
    next_arc: usize,
    eps: f64,
}

impl NetworkSimplex {
    fn new(n0: usize, n1: usize, cost: Vec<f64>, supply: &[f64], demand: &[f64]) -> Self {
        let m = n0 * n1;
        let nodes = n0 + n1;
        let root = nodes;
        let max_cost = cost.iter().cloned().fold(0.0, f64::max);
        let art_cost = (max_cost + 1.0) * nodes as f64;

        let mut art_source = vec![0; nodes];
        let mut art_target = vec![0; nodes];
        let mut flow = vec![0.0; m + nodes];
        let mut state = vec![STATE_LOWER; m + nodes];
        let mut parent = vec![NONE; nodes + 1];
        let mut pred = vec![NONE; nodes + 1];
        let mut dir = vec![DIR_UP; nodes + 1];
        let mut depth = vec![0usize; nodes + 1];
        let mut pi = vec![0.0; nodes + 1];
        let mut tree_adj = vec![Vec::new(); nodes + 1];

        for u in 0..nodes {
            let e = m + u;
            let s = if u < n0 { supply[u] } else { -demand[u - n0] };
            parent[u] = root;
            pred[u] = e;
            depth[u] = 1;
            state[e] = STATE_TREE;
            tree_adj[u].push(e);
            tree_adj[root].push(e);
            if s >= 0.0 {
                art_source[u] = u;
                art_target[u] = root;
                dir[u] = DIR_UP;
                flow[e] = s;
                pi[u] = 0.0;
            } else {
                art_source[u] = root;
                art_target[u] = u;
                dir[u] = DIR_DOWN;
                flow[e] = -s;
                pi[u] = art_cost;
            }
        }
        let block = ((m as f64).sqrt().ceil() as usize).max(10).min(m.max(1));
        let eps = (64.0 * f64::EPSILON * art_cost).max(1e-13);
        Self {
            n0,
            n1,
            root,
            cost,
            art_cost,
            art_source,
            art_target,
            flow,
            state,
            parent,
            pred,
            dir,
            depth,
            pi,
            tree_adj,
            block,
            next_arc: 0,
            eps,
        }
    }

    fn real_arcs(&self) -> usize {
        self.n0 * self.n1
    }

    #[inline]
    fn source(&self, e: usize) -> usize {
        let m = self.real_arcs();
        if e < m {
            e / self.n1
        } else {
            self.art_source[e - m]
        }
    }

    #[inline]
    fn target(&self, e: usize) -> usize {
        let m = self.real_arcs();
        if e < m {
            self.n0 + e % self.n1
        } else {
            self.art_target[e - m]
        }
    }

    #[inline]
    fn arc_cost(&self, e: usize) -> f64 {
        let m = self.real_arcs();
        if e < m {
            self.cost[e]
        } else if self.art_source[e - m] == self.root {
            self.art_cost
        } else {
            0.0
        }
    }

    /// Block search pivot rule over the real arcs.
    fn find_entering_arc(&mut self) -> Option<usize> {
        let m = self.real_arcs();
        if m == 0 {
            return None;
        }
        let mut best = -self.eps;
        let mut best_arc = None;
        let mut cnt = self.block;
        let mut e = self.next_arc;
        for _ in 0..m {
            if self.state[e] == STATE_LOWER {
                let i = e / self.n1;
                let j = self.n0 + e % self.n1;
                let rc = self.cost[e] + self.pi[i] - self.pi[j];
                if rc < best {
                    best = rc;
                    best_arc = Some(e);
                }
            }
            e += 1;
            if e == m {
                e = 0;
            }
            cnt -= 1;
            if cnt == 0 {
                if best_arc.is_some() {
                    break;
                }
                cnt = self.block;
            }
        }
        self.next_arc = e;
        best_arc
    }

    fn join(&self, mut u: usize, mut v: usize) -> usize {
        while u != v {
            if self.depth[u] >= self.depth[v] {
                u = self.parent[u];
            } else {
                v = self.parent[v];
            }
        }
        u
    }

    fn run(&mut self) -> Result<()> {
        let nodes = self.n0 + self.n1;
        let max_pivots = 50 * (nodes + 10) * (nodes + 10);
        let mut pivots = 0usize;
        while let Some(e_in) = self.find_entering_arc() {
            pivots += 1;
            if pivots > max_pivots {
                return Err(Error::Numerical(format!(
                    "network simplex exceeded {max_pivots} pivots"
                )));
            }
            self.pivot(e_in)?;
        }
        let m = self.real_arcs();
        let residual: f64 = self.flow[m..].iter().sum();
        if residual > 1e-9 {
            return Err(Error::Numerical(format!(
                "transport problem infeasible (artificial flow {residual:.3e}); marginals must have equal mass"
            )));
        }
        Ok(())
    }

    fn pivot(&mut self, e_in: usize) -> Result<()> {
        // Entering arcs are always at their lower bound (no capacities).
        let first = self.source(e_in);
        let second = self.target(e_in);
        let join = self.join(first, second);

        let mut delta = f64::INFINITY;
        let mut u_out = NONE;
        let mut side = 0u8;
        let mut u = first;
        while u != join {
            if self.dir[u] == DIR_UP {
                let d = self.flow[self.pred[u]];
                if d < delta {
                    delta = d;
                    u_out = u;
                    side = 1;
                }
            }
            u = self.parent[u];
        }
        let mut u = second;
        while u != join {
            if self.dir[u] == DIR_DOWN {
                let d = self.flow[self.pred[u]];
                if d <= delta {
                    delta = d;
                    u_out = u;
                    side = 2;
                }
            }
            u = self.parent[u];
        }
        if side == 0 {
            return Err(Error::Numerical("unbounded transport problem".into()));
        }
        let (u_in, v_in) = if side == 1 {
            (first, second)
        } else {
            (second, first)
        };

        if delta > 0.0 {
            self.flow[e_in] += delta;
            let mut u = first;
            while u != join {
                let e = self.pred[u];
                self.flow[e] -= f64::from(self.dir[u]) * delta;
                u = self.parent[u];
            }
            let mut u = second;
            while u != join {
                let e = self.pred[u];
                self.flow[e] += f64::from(self.dir[u]) * delta;
                u = self.parent[u];
            }
        }
        let e_out = self.pred[u_out];
        self.flow[e_out] = 0.0;
        self.state[e_in] = STATE_TREE;
        self.state[e_out] = STATE_LOWER;

        let p_out = self.parent[u_out];
        remove_arc(&mut self.tree_adj[u_out], e_out);
        remove_arc(&mut self.tree_adj[p_out], e_out);
        self.tree_adj[u_in].push(e_in);
        self.tree_adj[v_in].push(e_in);
        self.rehang(u_in, v_in, e_in);
        Ok(())
    }

    /// Re-roots the subtree now hanging from `v_in` through `e_in` at `u_in`,
    /// recomputing parents, directions, depths and potentials below it.
    fn rehang(&mut self, u_in: usize, v_in: usize, e_in: usize) {
        let mut stack = vec![(u_in, v_in, e_in)];
        while let Some((u, p, e)) = stack.pop() {
            self.parent[u] = p;
            self.pred[u] = e;
            self.depth[u] = self.depth[p] + 1;
            let c = self.arc_cost(e);
            if self.source(e) == u {
                self.dir[u] = DIR_UP;
                self.pi[u] = self.pi[p] - c;
            } else {
                self.dir[u] = DIR_DOWN;
                self.pi[u] = self.pi[p] + c;
            }
            for k in 0..self.tree_adj[u].len() {
                let f = self.tree_adj[u][k];
                if f == e {
                    continue;
                }
                let s = self.source(f);
                let w = if s == u { self.target(f) } else { s };
                stack.push((w, u, f));
            }
        }
    }
}

fn remove_arc(list: &mut Vec<usize>, e: usize) {
    if let Some(pos) = list.iter().position(|&x| x == e) {
        list.swap_remove(pos);
    }
}

//! Entropically regularized optimal transport with log-domain stabilization.
//!
//! Plans are stored as `diag(u) K diag(v)` where the stabilized kernel
//! `K_ij = exp(alpha_i + beta_j - C_ij / eps)` already contains the absorbed
//! log-scalings `alpha`, `beta`. Whenever a scaling drifts beyond
//! `absorb_threshold` in log magnitude it is folded into `alpha`/`beta` and
//! the kernel is rebuilt, which keeps every stored number far from the
//! overflow range of `exp`.

use ndarray::{Array1, Array2, ArrayView1, Zip};

use crate::error::{Error, Result};
use crate::measures::{squared_cost_matrix, DiscreteMeasure, TransportPlan};

/// How the regularization strength evolves during a solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EpsilonSchedule {
    /// Solve directly at the target epsilon.
    Fixed,
    /// Start at `start` and multiply by `factor` each stage until the target
    /// is reached; each stage warm-starts from the previous potentials.
    Geometric { start: f64, factor: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SinkhornConfig {
    pub epsilon: f64,
    pub max_iter: usize,
    /// L1 marginal violation at which iteration stops.
    pub tol: f64,
    /// Absorb scalings into the kernel once `|log u|` or `|log v|` exceeds this.
    pub absorb_threshold: f64,
    pub schedule: EpsilonSchedule,
}

impl Default for SinkhornConfig {
    fn default() -> Self {
        Self {
            epsilon: 0.1,
            max_iter: 10_000,
            tol: 1e-6,
            absorb_threshold: 50.0,
            schedule: EpsilonSchedule::Fixed,
        }
    }
}

impl SinkhornConfig {
    pub fn with_epsilon(epsilon: f64) -> Self {
        Self {
            epsilon,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) || !self.epsilon.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "epsilon must be positive, got {}",
                self.epsilon
            )));
        }
        if !(self.tol > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "tol must be positive, got {}",
                self.tol
            )));
        }
        if !(self.absorb_threshold > 1.0) {
            return Err(Error::InvalidArgument(format!(
                "absorb_threshold must exceed 1, got {}",
                self.absorb_threshold
            )));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidArgument("max_iter must be positive".into()));
        }
        if let EpsilonSchedule::Geometric { start, factor } = self.schedule {
            if !(factor > 0.0 && factor < 1.0) || !(start > 0.0) {
                return Err(Error::InvalidArgument(
                    "geometric schedule needs start > 0 and 0 < factor < 1".into(),
                ));
            }
        }
        Ok(())
    }

    /// Sequence of epsilons to solve at, ending with the target.
    pub fn epsilon_stages(&self) -> Vec<f64> {
        match self.schedule {
            EpsilonSchedule::Fixed => vec![self.epsilon],
            EpsilonSchedule::Geometric { start, factor } => {
                let mut out = Vec::new();
                let mut e = start;
                while e > self.epsilon {
                    out.push(e);
                    e *= factor;
                }
                out.push(self.epsilon);
                out
            }
        }
    }
}

/// Scalings of a plan `exp(log_u_abs_i + log_v_abs_j - C_ij / eps) * u_i * v_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalingState {
    pub u: Array1<f64>,
    pub v: Array1<f64>,
    pub log_u_abs: Array1<f64>,
    pub log_v_abs: Array1<f64>,
}

impl ScalingState {
    pub fn ones(rows: usize, cols: usize) -> Self {
        Self {
            u: Array1::ones(rows),
            v: Array1::ones(cols),
            log_u_abs: Array1::zeros(rows),
            log_v_abs: Array1::zeros(cols),
        }
    }

    /// Starting state whose stabilized kernel has entries in `(0, 1]` with a
    /// 1 in every row and column, so the first matrix-vector products cannot
    /// underflow no matter how small `eps` is.
    pub fn c_transform_start(cost: &Array2<f64>, eps: f64) -> Self {
        let (r, c) = cost.dim();
        let log_u_abs: Array1<f64> = cost
            .rows()
            .into_iter()
            .map(|row| row.iter().cloned().fold(f64::INFINITY, f64::min) / eps)
            .collect();
        let mut log_v_abs = Array1::from_elem(c, f64::INFINITY);
        for (i, row) in cost.rows().into_iter().enumerate() {
            for (j, &cij) in row.iter().enumerate() {
                let t = cij / eps - log_u_abs[i];
                if t < log_v_abs[j] {
                    log_v_abs[j] = t;
                }
            }
        }
        Self {
            u: Array1::ones(r),
            v: Array1::ones(c),
            log_u_abs,
            log_v_abs,
        }
    }

    /// Dual potentials in cost units: `f = eps (log_u_abs + log u)`.
    pub fn potentials(&self, eps: f64) -> (Array1<f64>, Array1<f64>) {
        let f = Zip::from(&self.log_u_abs)
            .and(&self.u)
            .map_collect(|&a, &u| eps * (a + u.ln()));
        let g = Zip::from(&self.log_v_abs)
            .and(&self.v)
            .map_collect(|&b, &v| eps * (b + v.ln()));
        (f, g)
    }

    /// State with the given potentials at regularization `eps`.
    pub fn from_potentials(f: &Array1<f64>, g: &Array1<f64>, eps: f64) -> Self {
        Self {
            u: Array1::ones(f.len()),
            v: Array1::ones(g.len()),
            log_u_abs: f / eps,
            log_v_abs: g / eps,
        }
    }

    pub fn max_abs_log_scaling(&self) -> f64 {
        self.u
            .iter()
            .chain(self.v.iter())
            .map(|x| x.ln().abs())
            .fold(0.0, f64::max)
    }

    /// Full plan matrix for the given cost.
    pub fn reconstruct(&self, cost: &Array2<f64>, eps: f64) -> Array2<f64> {
        let mut k = stabilized_kernel(cost, &self.log_u_abs, &self.log_v_abs, eps);
        scale_kernel(&mut k, &self.u, &self.v);
        k
    }
}

/// Plain Gibbs kernel `exp(-C / eps)`.
pub fn gibbs_kernel(cost: &Array2<f64>, epsilon: f64) -> Array2<f64> {
    cost.mapv(|c| (-c / epsilon).exp())
}

/// `exp(alpha_i + beta_j - C_ij / eps)`; infinite-negative offsets yield 0.
pub fn stabilized_kernel(
    cost: &Array2<f64>,
    alpha: &Array1<f64>,
    beta: &Array1<f64>,
    eps: f64,
) -> Array2<f64> {
    let mut k = Array2::zeros(cost.dim());
    Zip::indexed(&mut k).and(cost).for_each(|(i, j), out, &c| {
        let e = alpha[i] + beta[j] - c / eps;
        *out = if e.is_nan() { 0.0 } else { e.exp() };
    });
    k
}

pub(crate) fn scale_kernel(k: &mut Array2<f64>, u: &Array1<f64>, v: &Array1<f64>) {
    Zip::indexed(k).for_each(|(i, j), x| *x *= u[i] * v[j]);
}

/// Folds the scalings into the log-domain offsets and resets them to 1.
/// The represented plan is unchanged up to rounding.
pub fn absorb(state: ScalingState) -> ScalingState {
    let ScalingState {
        u,
        v,
        log_u_abs,
        log_v_abs,
    } = state;
    let log_u_abs = Zip::from(&log_u_abs)
        .and(&u)
        .map_collect(|&a, &x| a + x.ln());
    let log_v_abs = Zip::from(&log_v_abs)
        .and(&v)
        .map_collect(|&b, &x| b + x.ln());
    ScalingState {
        u: Array1::ones(u.len()),
        v: Array1::ones(v.len()),
        log_u_abs,
        log_v_abs,
    }
}

/// Result of an entropic solve.
#[derive(Debug, Clone)]
pub struct SinkhornOutput {
    pub plan: TransportPlan,
    /// `<C, plan>`: the transport part of the objective.
    pub transport_cost: f64,
    /// `sum plan log plan`; the regularized objective adds `eps` times this.
    pub neg_entropy: f64,
    /// Dual objective after each row update (non-decreasing).
    pub dual_trace: Vec<f64>,
    pub iterations: usize,
    /// Final L1 column violation (rows are exact on return).
    pub violation: f64,
    pub state: ScalingState,
}

impl SinkhornOutput {
    pub fn regularized_objective(&self, epsilon: f64) -> f64 {
        self.transport_cost + epsilon * self.neg_entropy
    }
}

/// Entropic OT between two discrete measures with squared Euclidean cost.
pub fn sinkhorn_plan(
    a: &DiscreteMeasure,
    b: &DiscreteMeasure,
    cfg: &SinkhornConfig,
) -> Result<SinkhornOutput> {
    let cost = squared_cost_matrix(a, b)?;
    sinkhorn_with_cost(&cost, a.weights(), b.weights(), cfg)
}

/// Entropic OT for an explicit cost matrix and marginals.
pub fn sinkhorn_with_cost(
    cost: &Array2<f64>,
    a: ArrayView1<'_, f64>,
    b: ArrayView1<'_, f64>,
    cfg: &SinkhornConfig,
) -> Result<SinkhornOutput> {
    cfg.validate()?;
    if cost.nrows() != a.len() || cost.ncols() != b.len() {
        return Err(Error::InvalidArgument(
            "marginal lengths do not match the cost matrix".into(),
        ));
    }
    let stages = cfg.epsilon_stages();
    let mut state = ScalingState::c_transform_start(cost, stages[0]);
    let mut budget = cfg.max_iter;
    let mut dual_trace = Vec::new();
    let mut prev_eps = stages[0];
    let mut total_iters = 0;
    for (s, &eps) in stages.iter().enumerate() {
        if s > 0 {
            let (f, g) = state.potentials(prev_eps);
            state = ScalingState::from_potentials(&f, &g, eps);
        }
        let last = s + 1 == stages.len();
        let run = scale_until(
            cost,
            a,
            b,
            eps,
            cfg,
            state,
            budget,
            last.then_some(&mut dual_trace),
        );
        match run {
            Ok((st, iters, viol)) => {
                total_iters += iters;
                budget -= iters.min(budget);
                state = st;
                if last {
                    let matrix = state.reconstruct(cost, eps);
                    let plan = TransportPlan::new(matrix, a.to_owned(), b.to_owned())?;
                    let transport_cost = plan.cost(cost);
                    let neg_entropy = plan.neg_entropy();
                    return Ok(SinkhornOutput {
                        plan,
                        transport_cost,
                        neg_entropy,
                        dual_trace,
                        iterations: total_iters,
                        violation: viol,
                        state,
                    });
                }
            }
            Err((st, viol)) => {
                let matrix = st.reconstruct(cost, eps);
                let last_plan = TransportPlan::new(
                    matrix.mapv(|x| if x.is_finite() { x } else { 0.0 }),
                    a.to_owned(),
                    b.to_owned(),
                )?;
                return Err(Error::SinkhornNotConverged {
                    iterations: cfg.max_iter,
                    violation: viol,
                    last: Box::new(last_plan),
                });
            }
        }
        prev_eps = eps;
    }
    unreachable!("epsilon_stages is never empty")
}

/// Alternating row/column scaling at fixed `eps`. Returns the state with
/// exact row marginals and the column violation, or the last state and its
/// violation when the budget runs out.
#[allow(
    clippy::too_many_arguments,
    clippy::type_complexity,
    clippy::result_large_err
)]
fn scale_until(
    cost: &Array2<f64>,
    a: ArrayView1<'_, f64>,
    b: ArrayView1<'_, f64>,
    eps: f64,
    cfg: &SinkhornConfig,
    mut state: ScalingState,
    budget: usize,
    mut trace: Option<&mut Vec<f64>>,
) -> std::result::Result<(ScalingState, usize, f64), (ScalingState, f64)> {
    let mut kernel = stabilized_kernel(cost, &state.log_u_abs, &state.log_v_abs, eps);
    let mut viol = f64::INFINITY;
    for it in 1..=budget {
        let kv = kernel.dot(&state.v);
        if kv.iter().any(|&x| !(x > 0.0) || !x.is_finite()) {
            state = log_row_update(cost, a, eps, state);
            kernel = stabilized_kernel(cost, &state.log_u_abs, &state.log_v_abs, eps);
        } else {
            Zip::from(&mut state.u)
                .and(&a)
                .and(&kv)
                .for_each(|u, &ai, &k| *u = ai / k);
        }
        if let Some(t) = trace.as_deref_mut() {
            let (f, g) = state.potentials(eps);
            t.push(f.dot(&a) + g.dot(&b));
        }

        let ktu = kernel.t().dot(&state.u);
        viol = Zip::from(&state.v)
            .and(&ktu)
            .and(&b)
            .fold(0.0, |acc, &v, &k, &bj| acc + (v * k - bj).abs());
        if viol <= cfg.tol {
            return Ok((state, it, viol));
        }
        if ktu.iter().any(|&x| !(x > 0.0) || !x.is_finite()) {
            state = log_col_update(cost, b, eps, state);
            kernel = stabilized_kernel(cost, &state.log_u_abs, &state.log_v_abs, eps);
        } else {
            Zip::from(&mut state.v)
                .and(&b)
                .and(&ktu)
                .for_each(|v, &bj, &k| *v = bj / k);
        }
        if state.max_abs_log_scaling() > cfg.absorb_threshold {
            state = absorb(state);
            kernel = stabilized_kernel(cost, &state.log_u_abs, &state.log_v_abs, eps);
        }
    }
    Err((state, viol))
}

/// Exact row update computed with log-sum-exp; leaves `u = 1`.
fn log_row_update(
    cost: &Array2<f64>,
    a: ArrayView1<'_, f64>,
    eps: f64,
    state: ScalingState,
) -> ScalingState {
    let mut st = absorb(state);
    for (i, row) in cost.rows().into_iter().enumerate() {
        let lse = log_sum_exp(
            row.iter()
                .zip(st.log_v_abs.iter())
                .map(|(&c, &b)| b - c / eps),
        );
        st.log_u_abs[i] = a[i].ln() - lse;
    }
    st
}

/// Exact column update computed with log-sum-exp; leaves `v = 1`.
fn log_col_update(
    cost: &Array2<f64>,
    b: ArrayView1<'_, f64>,
    eps: f64,
    state: ScalingState,
) -> ScalingState {
    let mut st = absorb(state);
    for (j, col) in cost.columns().into_iter().enumerate() {
        let lse = log_sum_exp(
            col.iter()
                .zip(st.log_u_abs.iter())
                .map(|(&c, &a)| a - c / eps),
        );
        st.log_v_abs[j] = b[j].ln() - lse;
    }
    st
}

pub(crate) fn log_sum_exp(xs: impl Iterator<Item = f64> + Clone) -> f64 {
    let m = xs.clone().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + xs.map(|x| (x - m).exp()).sum::<f64>().ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::solve_exact;
    use crate::measures::validate_plan;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cloud(rng: &mut ChaCha8Rng, n: usize, d: usize) -> DiscreteMeasure {
        DiscreteMeasure::uniform(Array2::from_shape_fn((n, d), |_| {
            rng.random_range(-1.0..1.0)
        }))
        .unwrap()
    }

    fn annealed(epsilon: f64) -> SinkhornConfig {
        SinkhornConfig {
            epsilon,
            max_iter: 500_000,
            schedule: EpsilonSchedule::Geometric {
                start: 1.0,
                factor: 0.5,
            },
            ..Default::default()
        }
    }

    #[test]
    fn kernel_values() {
        let c = array![[0.0, 4.0], [1.0, 2.5]];
        let k = gibbs_kernel(&c, 1.0);
        assert_eq!(k[[0, 0]], 1.0);
        assert!((k[[0, 1]] - (-4.0f64).exp()).abs() < 1e-16);
        let k7 = gibbs_kernel(&c, 0.7);
        let rec = k7.mapv(|x| -0.7 * x.ln());
        for (x, y) in rec.iter().zip(c.iter()) {
            assert!((x - y).abs() < 1e-12);
        }
        assert!(k7.iter().all(|&x| x > 0.0 && x <= 1.0));
    }

    #[test]
    fn single_point() {
        let a = DiscreteMeasure::uniform(array![[0.3, -1.0]]).unwrap();
        let out = sinkhorn_plan(&a, &a, &SinkhornConfig::default()).unwrap();
        assert!((out.plan.matrix()[[0, 0]] - 1.0).abs() < 1e-15);
        assert_eq!(out.transport_cost, 0.0);
    }

    #[test]
    fn small_epsilon_close_to_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..5 {
            let a = cloud(&mut rng, 4, 3);
            let b = cloud(&mut rng, 4, 3);
            let exact = solve_exact(&a, &b).unwrap().cost;
            let out = sinkhorn_plan(&a, &b, &annealed(1e-3)).unwrap();
            assert!(
                (out.transport_cost - exact).abs() <= 0.01 * exact,
                "{} vs {}",
                out.transport_cost,
                exact
            );
            assert!(validate_plan(&out.plan, 1e-6).passed());
        }
    }

    #[test]
    fn symmetric_two_point_instance() {
        let a = DiscreteMeasure::uniform(array![[-1.0], [1.0]]).unwrap();
        let out = sinkhorn_plan(&a, &a, &SinkhornConfig::with_epsilon(0.5)).unwrap();
        let p = out.plan.matrix();
        assert!((p[[0, 0]] - p[[1, 1]]).abs() < 1e-9);
        assert!((p[[0, 1]] - p[[1, 0]]).abs() < 1e-9);
    }

    #[test]
    fn absorb_identity_is_noop() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let cost = Array2::from_shape_fn((3, 4), |_| rng.random_range(0.0..2.0));
        let st = ScalingState::ones(3, 4);
        let before = st.reconstruct(&cost, 0.3);
        let after = absorb(st.clone());
        assert_eq!(after, st);
        assert_eq!(after.reconstruct(&cost, 0.3), before);
    }

    #[test]
    fn absorb_huge_scaling_preserves_plan() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let cost = Array2::from_shape_fn((3, 4), |_| rng.random_range(0.0..2.0));
        let mut st = ScalingState::ones(3, 4);
        st.u[1] = 1e30;
        st.v[2] = 1e-20;
        let before = st.reconstruct(&cost, 0.3);
        let after = absorb(st);
        assert!(after.max_abs_log_scaling() <= 50.0);
        let plan = after.reconstruct(&cost, 0.3);
        for (x, y) in plan.iter().zip(before.iter()) {
            assert!((x - y).abs() <= 1e-12 * y.abs(), "{x} vs {y}");
        }
    }

    #[test]
    fn stress_small_epsilon_high_dimension() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = cloud(&mut rng, 50, 10);
        let b = cloud(&mut rng, 50, 10);
        let out = sinkhorn_plan(&a, &b, &annealed(1e-4)).unwrap();
        assert!(out.plan.matrix().iter().all(|x| x.is_finite() && *x >= 0.0));
        assert!(out.transport_cost.is_finite());
        assert!(validate_plan(&out.plan, 1e-6).passed());
        let exact = solve_exact(&a, &b).unwrap().cost;
        assert!(out.transport_cost >= exact - 1e-9);
    }

    #[test]
    fn monotone_in_epsilon_and_dual_ascent() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = cloud(&mut rng, 12, 2);
        let b = cloud(&mut rng, 12, 2);
        let exact = solve_exact(&a, &b).unwrap().cost;
        let hi = sinkhorn_plan(&a, &b, &SinkhornConfig::with_epsilon(1e-1)).unwrap();
        let lo = sinkhorn_plan(&a, &b, &annealed(1e-3)).unwrap();
        assert!(hi.transport_cost >= lo.transport_cost);
        assert!(lo.transport_cost >= exact - 1e-9);
        for w in hi.dual_trace.windows(2) {
            assert!(w[1] >= w[0] - 1e-12 * w[0].abs().max(1.0));
        }
    }

    #[test]
    fn plan_entries_strictly_positive() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let a = cloud(&mut rng, 6, 2);
        let b = cloud(&mut rng, 7, 2);
        let out = sinkhorn_plan(&a, &b, &SinkhornConfig::default()).unwrap();
        assert!(out.plan.matrix().iter().all(|&x| x > 0.0));
    }

    #[test]
    fn deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let a = cloud(&mut rng, 20, 3);
        let b = cloud(&mut rng, 15, 3);
        let cfg = annealed(0.01);
        let x = sinkhorn_plan(&a, &b, &cfg).unwrap();
        let y = sinkhorn_plan(&a, &b, &cfg).unwrap();
        assert_eq!(x.plan, y.plan);
    }

    #[test]
    fn geometric_schedule_reaches_same_solution() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let a = cloud(&mut rng, 10, 2);
        let b = cloud(&mut rng, 10, 2);
        let plain = SinkhornConfig {
            epsilon: 0.05,
            max_iter: 2_000_000,
            tol: 1e-9,
            ..Default::default()
        };
        let annealed = SinkhornConfig {
            schedule: EpsilonSchedule::Geometric {
                start: 1.0,
                factor: 0.5,
            },
            ..plain
        };
        assert_eq!(annealed.epsilon_stages().len(), 6);
        let x = sinkhorn_plan(&a, &b, &plain).unwrap();
        let y = sinkhorn_plan(&a, &b, &annealed).unwrap();
        assert!((x.transport_cost - y.transport_cost).abs() < 1e-6);
    }

    #[test]
    fn non_convergence_carries_last_iterate() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let a = cloud(&mut rng, 30, 2);
        let b = cloud(&mut rng, 30, 2);
        let cfg = SinkhornConfig {
            epsilon: 1e-3,
            max_iter: 3,
            ..Default::default()
        };
        match sinkhorn_plan(&a, &b, &cfg) {
            Err(Error::SinkhornNotConverged {
                iterations,
                violation,
                last,
            }) => {
                assert_eq!(iterations, 3);
                assert!(violation > cfg.tol);
                assert_eq!(last.shape(), (30, 30));
            }
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }

    #[test]
    fn config_validation() {
        assert!(SinkhornConfig::with_epsilon(0.0).validate().is_err());
        let bad = SinkhornConfig {
            absorb_threshold: 1.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }
}

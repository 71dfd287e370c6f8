//! Factored optimal transport through a k-point Wasserstein barycenter.
//!
//! The solver alternates between two exact partial minimizations of
//!
//! ```text
//! F(z, g0, g1) = <C0(z), g0> + <C1(z), g1> + eps * sum_l sum g_l log g_l
//! ```
//!
//! where `g0` couples the `k` hubs `z` with the source sample, `g1` couples
//! the hubs with the target sample, both share the same (free) hub marginal,
//! and `C_l(z)` holds squared distances from hubs to points:
//!
//! * [`update_plans`]: with hubs fixed, a KL projection onto plan pairs with
//!   a shared hub marginal, solved by Newton ascent on its dual (or, with
//!   [`PlanMethod::Scaling`], by Sinkhorn-type scaling in which the hub
//!   marginal is the geometric mean of the two legs' current row sums);
//! * [`update_hubs`]: with plans fixed, each hub moves to the plan-weighted
//!   average of the source and target points it carries.

use log::{debug, warn};
use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis, Zip};

use crate::error::{Error, Result};
use crate::kmeans::kmeans;
use crate::measures::{l1_dist, squared_distances, DiscreteMeasure, TransportPlan};
use crate::sinkhorn::{absorb, log_sum_exp, stabilized_kernel, ScalingState, SinkhornConfig};

/// Hubs with mass below this are considered empty and re-seeded.
pub const EMPTY_HUB_MASS: f64 = 1e-12;

/// How the initial hubs are chosen.
#[derive(Debug, Clone, PartialEq)]
pub enum InitPolicy {
    KMeansSource,
    KMeansTarget,
    KMeansPooled,
    Given(Array2<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FotConfig {
    /// Number of hubs (the transport-rank budget).
    pub k: usize,
    pub sinkhorn: SinkhornConfig,
    /// Relative change of the transport objective that stops the outer loop.
    pub outer_tol: f64,
    pub outer_max_iter: usize,
    pub init: InitPolicy,
    pub seed: u64,
    pub plan_method: PlanMethod,
}

/// Algorithm used for the plan update. Both reach the same fixed point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PlanMethod {
    /// Damped Newton ascent on the dual as a function of the hub potentials
    /// alone; converges quadratically and works entirely in the log domain.
    #[default]
    Newton,
    /// Alternating scaling updates (point side, geometric-mean hub marginal,
    /// hub side). Can need very many iterations when `eps` is small relative
    /// to the cost spread.
    Scaling,
}

impl Default for FotConfig {
    fn default() -> Self {
        Self {
            k: 4,
            sinkhorn: Self::default_inner(0.1),
            outer_tol: 1e-6,
            outer_max_iter: 200,
            init: InitPolicy::KMeansSource,
            seed: 0,
            plan_method: PlanMethod::Newton,
        }
    }
}

impl FotConfig {
    pub fn new(k: usize, epsilon: f64, seed: u64) -> Self {
        Self {
            k,
            sinkhorn: Self::default_inner(epsilon),
            seed,
            ..Self::default()
        }
    }

    /// Inner solver settings used by [`FotConfig::new`]. The plan update is
    /// driven much tighter than a standalone Sinkhorn solve so that the outer
    /// objective trace is monotone to near machine precision.
    pub fn default_inner(epsilon: f64) -> SinkhornConfig {
        SinkhornConfig {
            epsilon,
            max_iter: 100_000,
            tol: 1e-11,
            ..SinkhornConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::InvalidArgument("k must be at least 1".into()));
        }
        if !(self.outer_tol > 0.0) {
            return Err(Error::InvalidArgument("outer_tol must be positive".into()));
        }
        if self.outer_max_iter == 0 {
            return Err(Error::InvalidArgument(
                "outer_max_iter must be positive".into(),
            ));
        }
        self.sinkhorn.validate()
    }
}

/// Barycenter support points and their masses.
#[derive(Debug, Clone, PartialEq)]
pub struct HubSet {
    pub hubs: Array2<f64>,
    pub masses: Array1<f64>,
}

impl HubSet {
    pub fn new(hubs: Array2<f64>, masses: Array1<f64>) -> Result<Self> {
        if hubs.nrows() == 0 {
            return Err(Error::InvalidArgument("need at least one hub".into()));
        }
        if masses.len() != hubs.nrows() {
            return Err(Error::InvalidArgument("one mass per hub required".into()));
        }
        if (masses.sum() - 1.0).abs() > 1e-9 || masses.iter().any(|&m| m < 0.0) {
            return Err(Error::InvalidArgument(
                "hub masses must be nonnegative and sum to 1".into(),
            ));
        }
        Ok(Self { hubs, masses })
    }

    /// Hubs with uniform masses.
    pub fn uniform(hubs: Array2<f64>) -> Result<Self> {
        let k = hubs.nrows();
        Self::new(hubs, Array1::from_elem(k.max(1), 1.0 / k.max(1) as f64))
    }

    pub fn k(&self) -> usize {
        self.hubs.nrows()
    }
}

#[derive(Debug, Clone)]
pub struct BarycenterSolution {
    pub hub_set: HubSet,
    /// Hubs x source points.
    pub plan0: TransportPlan,
    /// Hubs x target points.
    pub plan1: TransportPlan,
    /// Regularized objective after each plan update.
    pub objective_trace: Vec<f64>,
    /// Transport part `<C0, g0> + <C1, g1>` after each plan update.
    pub transport_trace: Vec<f64>,
    /// Outer iterations whose hub update re-seeded an empty hub; the
    /// objective may increase right after these.
    pub reseeded_at: Vec<usize>,
    pub converged: bool,
    pub epsilon: f64,
}

impl BarycenterSolution {
    pub fn outer_iterations(&self) -> usize {
        self.objective_trace.len()
    }

    /// Transport part of the final iterate.
    pub fn transport_objective(&self) -> f64 {
        *self.transport_trace.last().unwrap_or(&f64::NAN)
    }
}

/// Output of a plan update, with both legs and their objective pieces.
#[derive(Debug, Clone)]
pub struct PlanPair {
    pub plan0: TransportPlan,
    pub plan1: TransportPlan,
    pub transport: f64,
    pub regularized: f64,
    pub iterations: usize,
}

/// Solves the entropic k-barycenter problem between `source` and `target`.
pub fn factored_ot(
    source: &DiscreteMeasure,
    target: &DiscreteMeasure,
    cfg: &FotConfig,
) -> Result<BarycenterSolution> {
    cfg.validate()?;
    if source.dim() != target.dim() {
        return Err(Error::DimensionMismatch(source.dim(), target.dim()));
    }
    if cfg.k > source.len().min(target.len()) {
        warn!(
            "k = {} exceeds min(n0, n1) = {}",
            cfg.k,
            source.len().min(target.len())
        );
    }
    let eps = cfg.sinkhorn.epsilon;
    let mut hubs = initial_hubs(source, target, cfg)?;
    let mut solver = PlanSolver::new(source, target, cfg.sinkhorn, cfg.plan_method);

    let mut objective_trace = Vec::new();
    let mut transport_trace = Vec::new();
    let mut reseeded_at = Vec::new();
    let mut converged = false;
    let mut last: Option<PlanPair> = None;

    for it in 0..cfg.outer_max_iter {
        let pair = solver
            .solve(hubs.view())
            .map_err(|e| Error::OuterIteration {
                iteration: it,
                source: Box::new(e),
            })?;
        if !pair.regularized.is_finite() || !pair.transport.is_finite() {
            return Err(Error::Numerical(format!(
                "objective is not finite at outer iteration {it}"
            )));
        }
        let stop = transport_trace
            .last()
            .is_some_and(|&p: &f64| (pair.transport - p).abs() <= cfg.outer_tol * p.abs());
        objective_trace.push(pair.regularized);
        transport_trace.push(pair.transport);

        let update = hub_update(source, target, &pair.plan0, &pair.plan1)?;
        if !update.reseeded.is_empty() {
            debug!("outer iteration {it}: re-seeded hubs {:?}", update.reseeded);
            reseeded_at.push(it);
            solver.reset_hubs(&update.reseeded);
        }
        hubs = update.hub_set.hubs;
        last = Some(pair);
        if stop {
            converged = true;
            break;
        }
    }

    let pair = last.expect("outer_max_iter >= 1");
    let masses = pair.plan0.row_marginal().to_owned();
    Ok(BarycenterSolution {
        hub_set: HubSet { hubs, masses },
        plan0: pair.plan0,
        plan1: pair.plan1,
        objective_trace,
        transport_trace,
        reseeded_at,
        converged,
        epsilon: eps,
    })
}

fn initial_hubs(
    source: &DiscreteMeasure,
    target: &DiscreteMeasure,
    cfg: &FotConfig,
) -> Result<Array2<f64>> {
    let hubs = match &cfg.init {
        InitPolicy::KMeansSource => {
            kmeans(source.points(), source.weights(), cfg.k, cfg.seed)?.centers
        }
        InitPolicy::KMeansTarget => {
            kmeans(target.points(), target.weights(), cfg.k, cfg.seed)?.centers
        }
        InitPolicy::KMeansPooled => {
            let pts = ndarray::concatenate(Axis(0), &[source.points(), target.points()])
                .expect("dimensions checked");
            let w = ndarray::concatenate(Axis(0), &[source.weights(), target.weights()])
                .expect("1-d concat")
                / 2.0;
            kmeans(pts.view(), w.view(), cfg.k, cfg.seed)?.centers
        }
        InitPolicy::Given(h) => {
            if h.nrows() != cfg.k || h.ncols() != source.dim() {
                return Err(Error::InvalidArgument(format!(
                    "given hubs have shape {:?}, expected ({}, {})",
                    h.dim(),
                    cfg.k,
                    source.dim()
                )));
            }
            h.clone()
        }
    };
    Ok(hubs)
}

/// Closed-form hub update: hub `j` moves to
/// `(sum_i g0[j,i] x_i + sum_i g1[j,i] y_i) / (sum_i g0[j,i] + sum_i g1[j,i])`.
///
/// Hubs with incident mass below [`EMPTY_HUB_MASS`] are re-seeded at the data
/// point whose expected squared distance to the updated hubs is largest.
pub fn update_hubs(
    source: &DiscreteMeasure,
    target: &DiscreteMeasure,
    plan0: &TransportPlan,
    plan1: &TransportPlan,
) -> Result<HubSet> {
    Ok(hub_update(source, target, plan0, plan1)?.hub_set)
}

struct HubUpdate {
    hub_set: HubSet,
    reseeded: Vec<usize>,
}

fn hub_update(
    source: &DiscreteMeasure,
    target: &DiscreteMeasure,
    plan0: &TransportPlan,
    plan1: &TransportPlan,
) -> Result<HubUpdate> {
    let (k, n0) = plan0.shape();
    let (k1, n1) = plan1.shape();
    if k != k1 || n0 != source.len() || n1 != target.len() {
        return Err(Error::InvalidArgument(
            "plan shapes do not match hubs and samples".into(),
        ));
    }
    if source.dim() != target.dim() {
        return Err(Error::DimensionMismatch(source.dim(), target.dim()));
    }
    let g0 = plan0.matrix();
    let g1 = plan1.matrix();
    let numer = g0.dot(&source.points()) + g1.dot(&target.points());
    let rows0 = plan0.row_sums();
    let rows1 = plan1.row_sums();
    let denom = &rows0 + &rows1;

    let mut hubs = numer;
    let mut empty = Vec::new();
    for j in 0..k {
        if denom[j] < EMPTY_HUB_MASS {
            empty.push(j);
        } else {
            hubs.row_mut(j).mapv_inplace(|x| x / denom[j]);
        }
    }
    if !empty.is_empty() {
        reseed(&mut hubs, &empty, source, target, g0, g1);
    }
    let masses = shared_masses(rows0.view(), rows1.view());
    Ok(HubUpdate {
        hub_set: HubSet { hubs, masses },
        reseeded: empty,
    })
}

/// Hub marginal read off two plans: the average of their row sums,
/// renormalized to total mass one.
pub fn shared_masses(rows0: ArrayView1<'_, f64>, rows1: ArrayView1<'_, f64>) -> Array1<f64> {
    let avg = (&rows0 + &rows1) / 2.0;
    let total = avg.sum();
    if total > 0.0 {
        avg / total
    } else {
        avg
    }
}

fn reseed(
    hubs: &mut Array2<f64>,
    empty: &[usize],
    source: &DiscreteMeasure,
    target: &DiscreteMeasure,
    g0: ArrayView2<'_, f64>,
    g1: ArrayView2<'_, f64>,
) {
    let live: Vec<usize> = (0..hubs.nrows()).filter(|j| !empty.contains(j)).collect();
    // Expected squared distance of each point to the live hubs under its
    // conditional plan; points without live mass get their nearest live hub.
    let error = |pts: ArrayView2<'_, f64>, g: ArrayView2<'_, f64>| -> Vec<f64> {
        (0..pts.nrows())
            .map(|i| {
                let x = pts.row(i);
                let mut mass = 0.0;
                let mut acc = 0.0;
                let mut nearest = f64::INFINITY;
                for &j in &live {
                    let d = crate::measures::sq_dist(x, hubs.row(j));
                    mass += g[[j, i]];
                    acc += g[[j, i]] * d;
                    nearest = nearest.min(d);
                }
                if mass > 0.0 {
                    acc / mass
                } else if nearest.is_finite() {
                    nearest
                } else {
                    0.0
                }
            })
            .collect()
    };
    let mut candidates: Vec<(f64, usize, bool)> = error(source.points(), g0)
        .into_iter()
        .enumerate()
        .map(|(i, e)| (e, i, false))
        .chain(
            error(target.points(), g1)
                .into_iter()
                .enumerate()
                .map(|(i, e)| (e, i, true)),
        )
        .collect();
    // Largest error first; ties go to the lowest index, source before target.
    candidates.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.2.cmp(&b.2)).then(a.1.cmp(&b.1)));
    for (&j, &(_, i, is_target)) in empty.iter().zip(candidates.iter()) {
        let p = if is_target {
            target.point(i)
        } else {
            source.point(i)
        };
        hubs.row_mut(j).assign(&p);
    }
}

/// Cold-start plan update for fixed hubs.
pub fn update_plans(
    source: &DiscreteMeasure,
    target: &DiscreteMeasure,
    hub_set: &HubSet,
    cfg: &SinkhornConfig,
) -> Result<(TransportPlan, TransportPlan)> {
    update_plans_with(source, target, hub_set, cfg, PlanMethod::default())
}

pub fn update_plans_with(
    source: &DiscreteMeasure,
    target: &DiscreteMeasure,
    hub_set: &HubSet,
    cfg: &SinkhornConfig,
    method: PlanMethod,
) -> Result<(TransportPlan, TransportPlan)> {
    cfg.validate()?;
    if hub_set.hubs.ncols() != source.dim() {
        return Err(Error::DimensionMismatch(hub_set.hubs.ncols(), source.dim()));
    }
    if source.dim() != target.dim() {
        return Err(Error::DimensionMismatch(source.dim(), target.dim()));
    }
    let pair = PlanSolver::new(source, target, *cfg, method).solve(hub_set.hubs.view())?;
    Ok((pair.plan0, pair.plan1))
}

/// One leg of the plan update: hubs x points.
struct Leg<'a> {
    points: ArrayView2<'a, f64>,
    weights: ArrayView1<'a, f64>,
    cost: Array2<f64>,
    kernel: Array2<f64>,
    state: ScalingState,
}

impl Leg<'_> {
    fn rebuild_kernel(&mut self, eps: f64) {
        self.kernel = stabilized_kernel(
            &self.cost,
            &self.state.log_u_abs,
            &self.state.log_v_abs,
            eps,
        );
    }

    /// Exact point-side update in the log domain (leaves `v = 1`).
    fn log_point_update(&mut self, eps: f64) {
        let st = absorb(std::mem::replace(&mut self.state, ScalingState::ones(0, 0)));
        let mut st = st;
        for (i, col) in self.cost.columns().into_iter().enumerate() {
            let lse = log_sum_exp(
                col.iter()
                    .zip(st.log_u_abs.iter())
                    .map(|(&c, &a)| a - c / eps),
            );
            st.log_v_abs[i] = self.weights[i].ln() - lse;
        }
        self.state = st;
        self.rebuild_kernel(eps);
    }

    /// `log sum_i K[j,i] v_i`, robust to underflow.
    fn log_row_sums(&self, eps: f64) -> Array1<f64> {
        self.cost
            .rows()
            .into_iter()
            .map(|row| {
                log_sum_exp(
                    row.iter()
                        .zip(self.state.log_v_abs.iter().zip(self.state.v.iter()))
                        .map(|(&c, (&b, &v))| b + v.ln() - c / eps),
                )
            })
            .collect()
    }
}

/// Warm-startable plan update; keeps its dual state between outer iterations.
#[allow(clippy::large_enum_variant)]
enum PlanSolver<'a> {
    Newton(NewtonSolver<'a>),
    Scaling(ScalingSolver<'a>),
}

impl<'a> PlanSolver<'a> {
    fn new(
        source: &'a DiscreteMeasure,
        target: &'a DiscreteMeasure,
        cfg: SinkhornConfig,
        method: PlanMethod,
    ) -> Self {
        match method {
            PlanMethod::Newton => Self::Newton(NewtonSolver::new(source, target, cfg)),
            PlanMethod::Scaling => Self::Scaling(ScalingSolver::new(source, target, cfg)),
        }
    }

    fn solve(&mut self, hubs: ArrayView2<'_, f64>) -> Result<PlanPair> {
        match self {
            Self::Newton(s) => s.solve(hubs),
            Self::Scaling(s) => s.solve(hubs),
        }
    }

    fn reset_hubs(&mut self, hubs: &[usize]) {
        match self {
            Self::Newton(s) => s.reset_hubs(hubs),
            Self::Scaling(s) => s.reset_hubs(hubs),
        }
    }
}

/// Packs two converged plans with their objective values.
fn plan_pair(
    mats: [Array2<f64>; 2],
    costs: [&Array2<f64>; 2],
    weights: [ArrayView1<'_, f64>; 2],
    eps: f64,
    iterations: usize,
) -> Result<PlanPair> {
    let masses = shared_masses(
        mats[0].sum_axis(Axis(1)).view(),
        mats[1].sum_axis(Axis(1)).view(),
    );
    let mut transport = 0.0;
    let mut neg_entropy = 0.0;
    let mut plans = Vec::with_capacity(2);
    for ((m, c), w) in mats.into_iter().zip(costs).zip(weights) {
        let plan = TransportPlan::new(m, masses.clone(), w.to_owned())?;
        transport += plan.cost(c);
        neg_entropy += plan.neg_entropy();
        plans.push(plan);
    }
    let plan1 = plans.pop().expect("two legs");
    let plan0 = plans.pop().expect("two legs");
    Ok(PlanPair {
        plan0,
        plan1,
        transport,
        regularized: transport + eps * neg_entropy,
        iterations,
    })
}

/// Newton ascent on the dual of the plan update.
///
/// With hub potentials `h` fixed, the point-side potentials have closed
/// forms and each point's mass splits across hubs by a softmax:
/// `pi0_i = softmax((h - C0[:, i]) / eps)` on the source leg and
/// `pi1_i = softmax((-h - C1[:, i]) / eps)` on the target leg. The remaining
/// dual
///
/// ```text
/// phi(h) = -eps sum_i a_i lse((h - C0[:, i]) / eps) - eps sum_i b_i lse((-h - C1[:, i]) / eps)
/// ```
///
/// is concave with gradient `r1 - r0` (the difference of the hub row sums),
/// so its maximizer is exactly the shared-marginal plan pair.
struct NewtonSolver<'a> {
    weights: [ArrayView1<'a, f64>; 2],
    points: [ArrayView2<'a, f64>; 2],
    costs: [Array2<f64>; 2],
    h: Array1<f64>,
    cfg: SinkhornConfig,
}

/// Per-leg softmax split of every point across the hubs.
struct LegEval {
    /// Hubs x points; each column sums to one.
    pi: Array2<f64>,
    /// Hub row sums `sum_i a_i pi[:, i]`.
    rows: Array1<f64>,
    /// `-eps sum_i a_i lse_i`.
    phi: f64,
}

fn eval_leg(
    cost: &Array2<f64>,
    weights: ArrayView1<'_, f64>,
    h: &Array1<f64>,
    sign: f64,
    eps: f64,
) -> LegEval {
    let (k, n) = cost.dim();
    let mut pi = Array2::zeros((k, n));
    let mut rows = Array1::zeros(k);
    let mut phi = 0.0;
    let mut z = vec![0.0; k];
    for i in 0..n {
        let mut m = f64::NEG_INFINITY;
        for j in 0..k {
            z[j] = (sign * h[j] - cost[[j, i]]) / eps;
            m = m.max(z[j]);
        }
        let mut s = 0.0;
        for zj in z.iter_mut() {
            *zj = (*zj - m).exp();
            s += *zj;
        }
        let a = weights[i];
        for j in 0..k {
            let p = z[j] / s;
            pi[[j, i]] = p;
            rows[j] += a * p;
        }
        phi -= eps * a * (m + s.ln());
    }
    LegEval { pi, rows, phi }
}

impl<'a> NewtonSolver<'a> {
    fn new(source: &'a DiscreteMeasure, target: &'a DiscreteMeasure, cfg: SinkhornConfig) -> Self {
        Self {
            weights: [source.weights(), target.weights()],
            points: [source.points(), target.points()],
            costs: [Array2::zeros((0, 0)), Array2::zeros((0, 0))],
            h: Array1::zeros(0),
            cfg,
        }
    }

    fn reset_hubs(&mut self, hubs: &[usize]) {
        for &j in hubs {
            if j < self.h.len() {
                self.h[j] = 0.0;
            }
        }
    }

    fn eval(&self, h: &Array1<f64>) -> [LegEval; 2] {
        let eps = self.cfg.epsilon;
        [
            eval_leg(&self.costs[0], self.weights[0], h, 1.0, eps),
            eval_leg(&self.costs[1], self.weights[1], h, -1.0, eps),
        ]
    }

    /// Negative Hessian of `phi`: `sum_l sum_i a_i (diag(pi_i) - pi_i pi_i^T) / eps`.
    fn curvature(&self, legs: &[LegEval; 2]) -> Array2<f64> {
        let k = self.h.len();
        let mut m = Array2::from_diag(&(&legs[0].rows + &legs[1].rows));
        for (leg, w) in legs.iter().zip(&self.weights) {
            let mut scaled = leg.pi.clone();
            for (mut col, &a) in scaled.columns_mut().into_iter().zip(w.iter()) {
                col.mapv_inplace(|x| x * a);
            }
            m -= &scaled.dot(&leg.pi.t());
        }
        debug_assert_eq!(m.dim(), (k, k));
        m / self.cfg.epsilon
    }

    fn solve(&mut self, hubs: ArrayView2<'_, f64>) -> Result<PlanPair> {
        let eps = self.cfg.epsilon;
        let k = hubs.nrows();
        for l in 0..2 {
            self.costs[l] = squared_distances(hubs, self.points[l])?;
        }
        if self.h.len() != k {
            self.h = Array1::zeros(k);
        }
        let spread = self
            .costs
            .iter()
            .flat_map(|c| c.iter())
            .fold(0.0f64, |m, &c| m.max(c))
            + eps;
        let mut legs = self.eval(&self.h);
        let mut mismatch = l1_dist(legs[0].rows.view(), legs[1].rows.view());
        let mut iterations = 0;
        while mismatch > self.cfg.tol {
            if iterations == self.cfg.max_iter {
                return Err(Error::PlansNotConverged {
                    iterations,
                    violation: mismatch,
                });
            }
            iterations += 1;
            let grad = &legs[1].rows - &legs[0].rows;
            let mut dir = newton_direction(self.curvature(&legs), &grad, eps);
            // Near-hard assignments flatten the curvature; never move the
            // potentials by more than the cost spread in one step.
            let longest = dir.iter().fold(0.0f64, |m, d| m.max(d.abs()));
            if longest > spread {
                dir *= spread / longest;
            }
            let slope = grad.dot(&dir);
            let phi = legs[0].phi + legs[1].phi;
            // Changes of phi below this are roundoff.
            let noise = 1e-12 * (phi.abs() + spread);
            let mut t = 1.0;
            let mut accepted = None;
            for _ in 0..60 {
                let trial = &self.h + &(&dir * t);
                let trial_legs = self.eval(&trial);
                let trial_phi = trial_legs[0].phi + trial_legs[1].phi;
                let trial_mismatch = l1_dist(trial_legs[0].rows.view(), trial_legs[1].rows.view());
                // Sufficient ascent, or (once roundoff hides the ascent) a
                // smaller gradient at no visible loss.
                let ascent = trial_phi >= phi + 1e-4 * t * slope;
                let flat = trial_phi >= phi - noise && trial_mismatch < (1.0 - 1e-4 * t) * mismatch;
                if ascent || flat {
                    accepted = Some((trial, trial_legs, trial_mismatch, trial_phi));
                    break;
                }
                t *= 0.5;
            }
            // A full step that succeeded may be far too short on flat
            // stretches of the dual; keep doubling while the ascent holds.
            if t == 1.0 {
                let longest = dir.iter().fold(0.0f64, |m, d| m.max(d.abs()));
                while let Some((_, _, best_mismatch, best_phi)) = &accepted {
                    let (best_mismatch, best_phi) = (*best_mismatch, *best_phi);
                    t *= 2.0;
                    if t * longest > spread {
                        break;
                    }
                    let trial = &self.h + &(&dir * t);
                    let trial_legs = self.eval(&trial);
                    let trial_phi = trial_legs[0].phi + trial_legs[1].phi;
                    let m = l1_dist(trial_legs[0].rows.view(), trial_legs[1].rows.view());
                    // Both tests, so roundoff in phi cannot drive an overshoot.
                    if trial_phi < best_phi + 1e-4 * (t / 2.0) * slope || m >= 0.5 * best_mismatch {
                        break;
                    }
                    accepted = Some((trial, trial_legs, m, trial_phi));
                }
            }
            match accepted {
                Some((h, l, m, _)) => {
                    self.h = h;
                    legs = l;
                    mismatch = m;
                }
                None => {
                    return Err(Error::PlansNotConverged {
                        iterations,
                        violation: mismatch,
                    })
                }
            }
        }
        let mats = [0, 1].map(|l| {
            let mut g = legs[l].pi.clone();
            for (mut col, &a) in g.columns_mut().into_iter().zip(self.weights[l].iter()) {
                col.mapv_inplace(|x| x * a);
            }
            g
        });
        plan_pair(
            mats,
            [&self.costs[0], &self.costs[1]],
            self.weights,
            eps,
            iterations,
        )
    }
}

/// Solves `M d = g` for the Newton step. `M` is positive semidefinite with the
/// constant vector in its kernel and `g` sums to zero, so the rank-one term
/// fixes the gauge without changing the solution; the ridge keeps hubs with
/// vanishing mass from producing unbounded steps.
fn newton_direction(mut m: Array2<f64>, g: &Array1<f64>, eps: f64) -> Array1<f64> {
    let k = g.len();
    // Total curvature is at most 2 / eps; with hard assignments it vanishes
    // and the step degrades to a gradient step of length ~ k * eps * |g|.
    let scale = m.diag().sum().max(1.0 / eps);
    let tau = scale / k as f64;
    m.mapv_inplace(|x| x + tau);
    let mut ridge = 1e-14 * scale;
    loop {
        let mut a = m.clone();
        for j in 0..k {
            a[[j, j]] += ridge;
        }
        if let Some(d) = cholesky_solve(a, g) {
            return d;
        }
        ridge *= 100.0;
    }
}

/// Cholesky solve for a small dense system; `None` if not positive definite.
fn cholesky_solve(mut a: Array2<f64>, b: &Array1<f64>) -> Option<Array1<f64>> {
    let k = b.len();
    for j in 0..k {
        let mut d = a[[j, j]];
        for p in 0..j {
            d -= a[[j, p]] * a[[j, p]];
        }
        if !(d > 0.0) {
            return None;
        }
        let d = d.sqrt();
        a[[j, j]] = d;
        for i in j + 1..k {
            let mut s = a[[i, j]];
            for p in 0..j {
                s -= a[[i, p]] * a[[j, p]];
            }
            a[[i, j]] = s / d;
        }
    }
    let mut y = b.clone();
    for i in 0..k {
        for p in 0..i {
            y[i] -= a[[i, p]] * y[p];
        }
        y[i] /= a[[i, i]];
    }
    for i in (0..k).rev() {
        for p in i + 1..k {
            y[i] -= a[[p, i]] * y[p];
        }
        y[i] /= a[[i, i]];
    }
    Some(y)
}

/// Alternating scaling iterations for the two-leg plan update.
struct ScalingSolver<'a> {
    legs: [Leg<'a>; 2],
    cfg: SinkhornConfig,
}

impl<'a> ScalingSolver<'a> {
    fn new(source: &'a DiscreteMeasure, target: &'a DiscreteMeasure, cfg: SinkhornConfig) -> Self {
        let leg = |m: &'a DiscreteMeasure| Leg {
            points: m.points(),
            weights: m.weights(),
            cost: Array2::zeros((0, 0)),
            kernel: Array2::zeros((0, 0)),
            state: ScalingState::ones(0, m.len()),
        };
        Self {
            legs: [leg(source), leg(target)],
            cfg,
        }
    }

    /// Resets the hub scalings of re-seeded hubs.
    fn reset_hubs(&mut self, hubs: &[usize]) {
        for leg in &mut self.legs {
            for &j in hubs {
                if j < leg.state.u.len() {
                    leg.state.u[j] = 1.0;
                    leg.state.log_u_abs[j] = 0.0;
                }
            }
        }
    }

    fn solve(&mut self, hubs: ArrayView2<'_, f64>) -> Result<PlanPair> {
        let eps = self.cfg.epsilon;
        let k = hubs.nrows();
        for leg in &mut self.legs {
            leg.cost = squared_distances(hubs, leg.points)?;
            if leg.state.u.len() != k {
                leg.state = ScalingState {
                    u: Array1::ones(k),
                    v: Array1::ones(leg.points.nrows()),
                    log_u_abs: Array1::zeros(k),
                    log_v_abs: Array1::zeros(leg.points.nrows()),
                };
            }
            // Warm start: keep the potentials, re-fit the point side exactly.
            leg.log_point_update(eps);
        }

        let mut converged = false;
        let mut iterations = 0;
        let mut violation = f64::INFINITY;
        for it in 1..=self.cfg.max_iter {
            iterations = it;
            // Point-side scaling for both legs.
            let mut col_viol = 0.0;
            for leg in &mut self.legs {
                let s = leg.kernel.t().dot(&leg.state.u);
                if s.iter().any(|&x| !(x > 0.0) || !x.is_finite()) {
                    col_viol = f64::INFINITY;
                    leg.log_point_update(eps);
                } else {
                    col_viol += Zip::from(&leg.state.v)
                        .and(&s)
                        .and(&leg.weights)
                        .fold(0.0, |acc, &v, &si, &w| acc + (v * si - w).abs());
                    Zip::from(&mut leg.state.v)
                        .and(&leg.weights)
                        .and(&s)
                        .for_each(|v, &w, &si| *v = w / si);
                }
            }

            // Hub-side quantities.
            let t: Vec<Array1<f64>> = self
                .legs
                .iter()
                .map(|leg| leg.kernel.dot(&leg.state.v))
                .collect();
            let degenerate = t
                .iter()
                .any(|ti| ti.iter().any(|&x| !(x > 0.0) || !x.is_finite()));
            let rows: Vec<Array1<f64>> = self
                .legs
                .iter()
                .zip(&t)
                .map(|(leg, ti)| &leg.state.u * ti)
                .collect();
            let mismatch = l1_dist(rows[0].view(), rows[1].view());
            violation = col_viol.max(mismatch);
            if !degenerate && col_viol <= self.cfg.tol && mismatch <= self.cfg.tol {
                converged = true;
                break;
            }

            if degenerate {
                self.log_hub_update(eps);
            } else {
                let w = Zip::from(&rows[0])
                    .and(&rows[1])
                    .map_collect(|&a, &b| (a * b).sqrt());
                for (leg, ti) in self.legs.iter_mut().zip(&t) {
                    Zip::from(&mut leg.state.u)
                        .and(&w)
                        .and(ti)
                        .for_each(|u, &wj, &tj| *u = wj / tj);
                }
            }
            for leg in &mut self.legs {
                if leg.state.max_abs_log_scaling() > self.cfg.absorb_threshold
                    || leg.state.u.iter().any(|&u| !(u > 0.0) || !u.is_finite())
                {
                    leg.state = absorb(std::mem::replace(&mut leg.state, ScalingState::ones(0, 0)));
                    leg.rebuild_kernel(eps);
                }
            }
        }
        if !converged {
            return Err(Error::PlansNotConverged {
                iterations,
                violation,
            });
        }
        self.assemble(eps, iterations)
    }

    /// Hub-side update computed entirely with log-sum-exp; used when some hub
    /// row of a scaled kernel underflows.
    fn log_hub_update(&mut self, eps: f64) {
        let log_t: Vec<Array1<f64>> = self.legs.iter().map(|l| l.log_row_sums(eps)).collect();
        let log_a: Vec<Array1<f64>> = self
            .legs
            .iter()
            .map(|l| {
                Zip::from(&l.state.log_u_abs)
                    .and(&l.state.u)
                    .map_collect(|&a, &u| a + u.ln())
            })
            .collect();
        let log_w = Zip::from(&log_a[0])
            .and(&log_a[1])
            .and(&log_t[0])
            .and(&log_t[1])
            .map_collect(|&a0, &a1, &t0, &t1| 0.5 * (a0 + t0 + a1 + t1));
        for (leg, lt) in self.legs.iter_mut().zip(&log_t) {
            leg.state = absorb(std::mem::replace(&mut leg.state, ScalingState::ones(0, 0)));
            leg.state.log_u_abs = Zip::from(&log_w).and(lt).map_collect(|&w, &t| {
                let x = w - t;
                if x.is_nan() {
                    f64::NEG_INFINITY
                } else {
                    x
                }
            });
            leg.rebuild_kernel(eps);
        }
    }

    fn assemble(&self, eps: f64, iterations: usize) -> Result<PlanPair> {
        let mats = [0, 1].map(|l| {
            let leg = &self.legs[l];
            let mut k = leg.kernel.clone();
            crate::sinkhorn::scale_kernel(&mut k, &leg.state.u, &leg.state.v);
            k
        });
        plan_pair(
            mats,
            [&self.legs[0].cost, &self.legs[1].cost],
            [self.legs[0].weights, self.legs[1].weights],
            eps,
            iterations,
        )
    }
}

/// `<C0(z), g0> + <C1(z), g1> + eps * (sum g0 log g0 + sum g1 log g1)` for
/// arbitrary hubs and plans.
pub fn regularized_objective(
    source: &DiscreteMeasure,
    target: &DiscreteMeasure,
    hubs: ArrayView2<'_, f64>,
    plan0: &TransportPlan,
    plan1: &TransportPlan,
    eps: f64,
) -> Result<f64> {
    let c0 = squared_distances(hubs, source.points())?;
    let c1 = squared_distances(hubs, target.points())?;
    Ok(plan0.cost(&c0) + plan1.cost(&c1) + eps * (plan0.neg_entropy() + plan1.neg_entropy()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::solve_exact_cost;
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

    fn random_plan(rng: &mut ChaCha8Rng, k: usize, m: &DiscreteMeasure) -> TransportPlan {
        let mut g = Array2::from_shape_fn((k, m.len()), |_| rng.random_range(0.0..1.0));
        for (i, mut col) in g.columns_mut().into_iter().enumerate() {
            let s = col.sum();
            col.mapv_inplace(|x| x / s * m.weights()[i]);
        }
        let rows = g.sum_axis(Axis(1));
        TransportPlan::new(g, rows, m.weights().to_owned()).unwrap()
    }

    #[test]
    fn single_point_single_hub() {
        let a = DiscreteMeasure::uniform(array![[1.0, -2.0]]).unwrap();
        let cfg = FotConfig::new(1, 0.1, 0);
        let sol = factored_ot(&a, &a, &cfg).unwrap();
        assert_eq!(sol.hub_set.hubs, array![[1.0, -2.0]]);
        assert_eq!(sol.transport_objective(), 0.0);
        assert!(sol.converged);
    }

    #[test]
    fn update_hubs_matches_closed_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = cloud(&mut rng, 5, 3);
        let y = cloud(&mut rng, 5, 3);
        let g0 = random_plan(&mut rng, 3, &x);
        let g1 = random_plan(&mut rng, 3, &y);
        let hs = update_hubs(&x, &y, &g0, &g1).unwrap();
        for j in 0..3 {
            for c in 0..3 {
                let mut num = 0.0;
                let mut den = 0.0;
                for i in 0..5 {
                    num += g0.matrix()[[j, i]] * x.points()[[i, c]]
                        + g1.matrix()[[j, i]] * y.points()[[i, c]];
                    den += g0.matrix()[[j, i]] + g1.matrix()[[j, i]];
                }
                assert!((hs.hubs[[j, c]] - num / den).abs() <= 1e-12);
            }
        }
        assert!((hs.masses.sum() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn update_hubs_identical_plans_give_centroids() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = cloud(&mut rng, 6, 2);
        let g = random_plan(&mut rng, 2, &x);
        let hs = update_hubs(&x, &x, &g, &g).unwrap();
        for j in 0..2 {
            let row = g.matrix().row(j).to_owned();
            let centroid = x.points().t().dot(&row) / row.sum();
            for (a, b) in hs.hubs.row(j).iter().zip(centroid.iter()) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn update_hubs_single_hub_is_pooled_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = cloud(&mut rng, 4, 2);
        let y = cloud(&mut rng, 4, 2);
        let g0 = random_plan(&mut rng, 1, &x);
        let g1 = random_plan(&mut rng, 1, &y);
        let hs = update_hubs(&x, &y, &g0, &g1).unwrap();
        let pooled = (x.mean() + y.mean()) / 2.0;
        for (a, b) in hs.hubs.row(0).iter().zip(pooled.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn empty_hub_is_reseeded_at_worst_point() {
        let x = DiscreteMeasure::uniform(array![[0.0], [1.0], [10.0]]).unwrap();
        let w = x.weights().to_owned();
        // Hub 1 carries nothing; hub 0 carries everything.
        let g = array![[1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0], [0.0, 0.0, 0.0]];
        let p = TransportPlan::new(g, array![1.0, 0.0], w).unwrap();
        let hs = update_hubs(&x, &x, &p, &p).unwrap();
        // Hub 0 sits at 11/3; the point at 10 is farthest from it.
        assert!((hs.hubs[[0, 0]] - 11.0 / 3.0).abs() < 1e-12);
        assert_eq!(hs.hubs[[1, 0]], 10.0);
    }

    #[test]
    fn single_hub_plans_are_forced() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let x = cloud(&mut rng, 5, 2);
        let y = cloud(&mut rng, 7, 2);
        let hs = HubSet::uniform(array![[0.1, 0.2]]).unwrap();
        let (p0, p1) = update_plans(&x, &y, &hs, &FotConfig::default_inner(0.1)).unwrap();
        for (a, b) in p0.matrix().row(0).iter().zip(x.weights().iter()) {
            assert!((a - b).abs() < 1e-12);
        }
        for (a, b) in p1.matrix().row(0).iter().zip(y.weights().iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn hubs_on_points_small_epsilon_gives_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let x = cloud(&mut rng, 4, 2);
        let hs = HubSet::uniform(x.points().to_owned()).unwrap();
        let cfg = SinkhornConfig {
            epsilon: 1e-3,
            max_iter: 200_000,
            tol: 1e-10,
            ..Default::default()
        };
        let (p0, p1) = update_plans(&x, &x, &hs, &cfg).unwrap();
        // Oracle: exact OT between the hub measure and the points.
        let c = squared_distances(hs.hubs.view(), x.points()).unwrap();
        let exact =
            solve_exact_cost(&c, Array1::from_elem(4, 0.25), x.weights().to_owned()).unwrap();
        for (a, b) in p0.matrix().iter().zip(exact.plan.matrix().iter()) {
            assert!((a - b).abs() < 1e-6, "{a} vs {b}");
        }
        for i in 0..4 {
            assert!((p0.matrix()[[i, i]] - 0.25).abs() < 1e-6);
            assert!((p1.matrix()[[i, i]] - 0.25).abs() < 1e-6);
        }
    }

    #[test]
    fn plan_rows_agree_and_columns_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let x = cloud(&mut rng, 20, 3);
        let y = cloud(&mut rng, 15, 3);
        let hs = HubSet::uniform(Array2::from_shape_fn((3, 3), |_| {
            rng.random_range(-1.0..1.0)
        }))
        .unwrap();
        let cfg = SinkhornConfig {
            tol: 1e-8,
            max_iter: 100_000,
            ..Default::default()
        };
        let (p0, p1) = update_plans(&x, &y, &hs, &cfg).unwrap();
        assert!(l1_dist(p0.row_sums().view(), p1.row_sums().view()) <= cfg.tol);
        assert!(validate_plan(&p0, cfg.tol).passed());
        assert!(validate_plan(&p1, cfg.tol).passed());
    }

    #[test]
    fn outer_objective_is_monotone() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = cloud(&mut rng, 40, 3);
        let y = x.translated(array![1.5, 0.0, -0.5].view()).unwrap();
        let sol = factored_ot(&x, &y, &FotConfig::new(3, 0.1, 1)).unwrap();
        assert!(sol.objective_trace.len() >= 2);
        for w in sol.objective_trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-9 * w[0].abs().max(1.0), "{w:?}");
        }
        assert!(sol.converged);
    }

    #[test]
    fn reported_objective_matches_recomputation() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let x = cloud(&mut rng, 12, 2);
        let y = cloud(&mut rng, 9, 2);
        let hs = HubSet::uniform(array![[0.5, 0.5], [-0.5, -0.5]]).unwrap();
        let mut solver = PlanSolver::new(&x, &y, FotConfig::default_inner(0.2), PlanMethod::Newton);
        let pair = solver.solve(hs.hubs.view()).unwrap();
        let f =
            regularized_objective(&x, &y, hs.hubs.view(), &pair.plan0, &pair.plan1, 0.2).unwrap();
        assert!((f - pair.regularized).abs() < 1e-12);
    }

    #[test]
    fn seeded_runs_are_identical() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x = cloud(&mut rng, 30, 4);
        let y = cloud(&mut rng, 25, 4);
        let cfg = FotConfig::new(3, 0.1, 5);
        let a = factored_ot(&x, &y, &cfg).unwrap();
        let b = factored_ot(&x, &y, &cfg).unwrap();
        assert_eq!(a.hub_set, b.hub_set);
        assert_eq!(a.objective_trace, b.objective_trace);
    }

    #[test]
    fn newton_and_scaling_reach_the_same_plans() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let x = cloud(&mut rng, 15, 2);
        let y = cloud(&mut rng, 12, 2);
        let hs = HubSet::uniform(Array2::from_shape_fn((3, 2), |_| {
            rng.random_range(-1.0..1.0)
        }))
        .unwrap();
        let cfg = SinkhornConfig {
            epsilon: 0.5,
            tol: 1e-12,
            max_iter: 1_000_000,
            ..Default::default()
        };
        let (a0, a1) = update_plans_with(&x, &y, &hs, &cfg, PlanMethod::Newton).unwrap();
        let (b0, b1) = update_plans_with(&x, &y, &hs, &cfg, PlanMethod::Scaling).unwrap();
        for (p, q) in a0
            .matrix()
            .iter()
            .chain(a1.matrix())
            .zip(b0.matrix().iter().chain(b1.matrix()))
        {
            assert!((p - q).abs() < 1e-10, "{p} vs {q}");
        }
    }

    #[test]
    fn newton_does_not_cycle_on_skewed_weights() {
        // Used to alternate between two iterates forever.
        let a = DiscreteMeasure::new(
            array![[0.0, 0.0], [-1.4367840378856185, 0.0]],
            array![0.41141073229863545, 0.5885892677013645],
        )
        .unwrap();
        let b = DiscreteMeasure::new(
            array![
                [-2.501089119320425, 0.0],
                [1.7408868583717647, -1.9717841766033297]
            ],
            array![0.12875378550950747, 0.8712462144904924],
        )
        .unwrap();
        let sol = factored_ot(&a, &b, &FotConfig::new(2, 0.3, 36)).unwrap();
        assert!(sol.converged);
    }

    #[test]
    fn newton_handles_hard_assignments() {
        // Costs ~100 at eps = 0.1: scaling iterations mix extremely slowly here.
        let x = DiscreteMeasure::uniform(array![[-5.0, 0.0], [-5.1, 0.1], [5.0, 0.0], [5.1, -0.1]])
            .unwrap();
        let y = x.translated(array![10.0, 0.0].view()).unwrap();
        let hs = HubSet::uniform(array![[-5.0, 0.0], [5.0, 0.0]]).unwrap();
        let cfg = FotConfig::default_inner(0.1);
        let (p0, p1) = update_plans(&x, &y, &hs, &cfg).unwrap();
        assert!(l1_dist(p0.row_sums().view(), p1.row_sums().view()) <= cfg.tol);
    }

    #[test]
    fn permuting_points_permutes_plans() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let x = cloud(&mut rng, 12, 2);
        let y = cloud(&mut rng, 10, 2);
        let perm: Vec<usize> = (0..12).rev().collect();
        let xp = x.permuted(&perm);
        let cfg = FotConfig {
            init: InitPolicy::Given(array![[0.5, 0.5], [-0.5, 0.0], [0.0, -0.5]]),
            ..FotConfig::new(3, 0.1, 0)
        };
        let a = factored_ot(&x, &y, &cfg).unwrap();
        let b = factored_ot(&xp, &y, &cfg).unwrap();
        let fa = *a.objective_trace.last().unwrap();
        let fb = *b.objective_trace.last().unwrap();
        assert!((fa - fb).abs() <= 1e-9 * fa.abs());
        for (p, q) in a.hub_set.hubs.iter().zip(b.hub_set.hubs.iter()) {
            assert!((p - q).abs() < 1e-9);
        }
        for (new, &old) in perm.iter().enumerate() {
            for j in 0..3 {
                assert!((b.plan0.matrix()[[j, new]] - a.plan0.matrix()[[j, old]]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn isolated_pairs_meet_at_midpoints() {
        let x = DiscreteMeasure::uniform(array![[0.0, 0.0], [100.0, 0.0]]).unwrap();
        let y = DiscreteMeasure::uniform(array![[0.0, 10.0], [100.0, 10.0]]).unwrap();
        let sol = factored_ot(&x, &y, &FotConfig::new(2, 1e-4, 0)).unwrap();
        let mut hubs: Vec<(f64, f64)> = sol
            .hub_set
            .hubs
            .rows()
            .into_iter()
            .map(|r| (r[0], r[1]))
            .collect();
        hubs.sort_by(|a, b| a.0.total_cmp(&b.0));
        for (h, mid) in hubs.iter().zip([(0.0, 5.0), (100.0, 5.0)]) {
            let dist = ((h.0 - mid.0).powi(2) + (h.1 - mid.1).powi(2)).sqrt();
            assert!(
                dist <= 0.01 * (mid.0 * mid.0 + mid.1 * mid.1).sqrt().max(5.0),
                "{h:?}"
            );
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let a = DiscreteMeasure::uniform(array![[0.0, 0.0]]).unwrap();
        let b = DiscreteMeasure::uniform(array![[0.0, 0.0, 1.0]]).unwrap();
        assert!(factored_ot(&a, &b, &FotConfig::new(1, 0.1, 0)).is_err());
        assert!(factored_ot(&a, &a, &FotConfig::new(0, 0.1, 0)).is_err());
        let given = FotConfig {
            init: InitPolicy::Given(array![[0.0]]),
            ..FotConfig::new(1, 0.1, 0)
        };
        assert!(factored_ot(&a, &a, &given).is_err());
    }
}

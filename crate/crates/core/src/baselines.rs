//! Comparison estimators: the plug-in distance between the samples and
//! transport between k-means quantizations of them.

use ndarray::{Array1, Array2, ArrayView2};

use crate::error::{Error, Result};
use crate::exact::{solve_exact_cost, solve_plug_in};
use crate::kmeans::kmeans;
use crate::measures::{squared_cost_matrix, squared_distances, DiscreteMeasure, TransportPlan};
use crate::sinkhorn::{sinkhorn_plan, EpsilonSchedule, SinkhornConfig};

/// Regularization of the entropic stand-in for plug-in OT above the exact cap.
pub const APPROX_PLUG_IN_EPSILON: f64 = 1e-3;

#[derive(Debug, Clone)]
pub struct PlugIn {
    pub plan: TransportPlan,
    pub cost: f64,
    /// True when the instance exceeded the exact cap and an entropic plan at
    /// [`APPROX_PLUG_IN_EPSILON`] was used instead.
    pub approx: bool,
}

/// `W_2^2` between the empirical measures: exact up to `cap` cost entries,
/// then entropic.
pub fn plug_in(a: &DiscreteMeasure, b: &DiscreteMeasure, cap: usize) -> Result<PlugIn> {
    match solve_plug_in(a, b, cap) {
        Ok(sol) => Ok(PlugIn {
            plan: sol.plan,
            cost: sol.cost,
            approx: false,
        }),
        Err(Error::Capacity { .. }) => {
            let cfg = SinkhornConfig {
                epsilon: APPROX_PLUG_IN_EPSILON,
                max_iter: 200_000,
                schedule: EpsilonSchedule::Geometric {
                    start: 1.0,
                    factor: 0.5,
                },
                ..SinkhornConfig::default()
            };
            let out = sinkhorn_plan(a, b, &cfg)?;
            Ok(PlugIn {
                cost: out.transport_cost,
                plan: out.plan,
                approx: true,
            })
        }
        Err(e) => Err(e),
    }
}

/// Exact transport between the k-means quantizations of both samples.
#[derive(Debug, Clone)]
pub struct KotSolution {
    pub source_centers: Array2<f64>,
    pub target_centers: Array2<f64>,
    pub source_assignment: Vec<usize>,
    /// Plan between source centers (rows) and target centers (columns).
    pub plan: TransportPlan,
    pub cost: f64,
}

impl KotSolution {
    /// Displacement of each source center: the barycentric image of its row
    /// minus the center itself.
    pub fn center_displacements(&self) -> Array2<f64> {
        barycentric_projection(self.plan.matrix(), self.target_centers.view())
            - &self.source_centers
    }
}

pub fn kot(a: &DiscreteMeasure, b: &DiscreteMeasure, k: usize, seed: u64) -> Result<KotSolution> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch(a.dim(), b.dim()));
    }
    let ka = kmeans(a.points(), a.weights(), k, seed)?;
    let kb = kmeans(b.points(), b.weights(), k, seed)?;
    let wa = ka.cluster_weights(a.weights());
    let wb = kb.cluster_weights(b.weights());
    let cost = squared_distances(ka.centers.view(), kb.centers.view())?;
    let sol = solve_exact_cost(&cost, wa, wb)?;
    Ok(KotSolution {
        source_centers: ka.centers,
        target_centers: kb.centers,
        source_assignment: ka.assignment,
        plan: sol.plan,
        cost: sol.cost,
    })
}

/// Maps row `i` of a plan to `sum_j plan[i, j] y_j / sum_j plan[i, j]`.
/// Rows without mass map to the origin.
pub fn barycentric_projection(
    plan: ArrayView2<'_, f64>,
    targets: ArrayView2<'_, f64>,
) -> Array2<f64> {
    let mut out = plan.dot(&targets);
    let mass: Array1<f64> = plan.sum_axis(ndarray::Axis(1));
    for (mut row, &m) in out.rows_mut().into_iter().zip(mass.iter()) {
        if m > 0.0 {
            row.mapv_inplace(|x| x / m);
        }
    }
    out
}

/// Plug-in cost without building a plan report; convenience for sweeps.
pub fn plug_in_cost(a: &DiscreteMeasure, b: &DiscreteMeasure, cap: usize) -> Result<(f64, bool)> {
    let p = plug_in(a, b, cap)?;
    Ok((p.cost, p.approx))
}

/// `<C, plan>` with squared Euclidean cost between the two samples.
pub fn plan_cost(a: &DiscreteMeasure, b: &DiscreteMeasure, plan: &TransportPlan) -> Result<f64> {
    Ok(plan.cost(&squared_cost_matrix(a, b)?))
}

//! Soft partitions, factored couplings and the barycenter-based estimator of
//! the squared 2-Wasserstein distance.

use log::warn;
use ndarray::{Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::factored::{factored_ot, shared_masses, BarycenterSolution, FotConfig};
use crate::measures::{sq_dist, squared_cost_matrix, DiscreteMeasure};

/// Clusters whose mass falls below this are dropped.
pub const MIN_CLUSTER_MASS: f64 = 1e-12;

/// Relative tolerance of the built-in check in [`total_transport_integral`].
pub const DECOMPOSITION_TOL: f64 = 1e-9;

/// Soft clusters `C_1 + ... + C_k = P` of a discrete measure.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftPartition {
    /// `clusters[[j, i]]` is the mass cluster `j` puts on point `i`.
    pub clusters: Array2<f64>,
    /// Total mass of each cluster.
    pub masses: Array1<f64>,
    /// Centroid `mu(C_j)` of each cluster, one per row.
    pub centroids: Array2<f64>,
}

impl SoftPartition {
    /// Builds the partition from per-point cluster masses.
    pub fn new(clusters: Array2<f64>, points: ArrayView2<'_, f64>) -> Result<Self> {
        if clusters.ncols() != points.nrows() {
            return Err(Error::DimensionMismatch(clusters.ncols(), points.nrows()));
        }
        if clusters.iter().any(|&c| !(c >= 0.0) || !c.is_finite()) {
            return Err(Error::InvalidMeasure(
                "cluster masses must be finite and nonnegative".into(),
            ));
        }
        let masses = clusters.sum_axis(Axis(1));
        if let Some(j) = masses.iter().position(|&m| m <= 0.0) {
            return Err(Error::InvalidMeasure(format!("cluster {j} is empty")));
        }
        let mut centroids = clusters.dot(&points);
        for (mut row, &m) in centroids.rows_mut().into_iter().zip(masses.iter()) {
            row.mapv_inplace(|x| x / m);
        }
        Ok(Self {
            clusters,
            masses,
            centroids,
        })
    }

    pub fn k(&self) -> usize {
        self.clusters.nrows()
    }

    /// Sum of the clusters, which recovers the parent weights.
    pub fn total(&self) -> Array1<f64> {
        self.clusters.sum_axis(Axis(0))
    }

    /// `sum_i C_j(i) ||x_i - mu_j||^2 / lambda_j` for every cluster.
    pub fn variances(&self, points: ArrayView2<'_, f64>) -> Array1<f64> {
        (0..self.k())
            .map(|j| {
                let mu = self.centroids.row(j);
                let acc: f64 = points
                    .rows()
                    .into_iter()
                    .zip(self.clusters.row(j).iter())
                    .map(|(x, &c)| c * sq_dist(x, mu))
                    .sum();
                acc / self.masses[j]
            })
            .collect()
    }
}

/// Coupled partitions of the source and target with shared masses.
#[derive(Debug, Clone, PartialEq)]
pub struct FactoredCoupling {
    pub source_partition: SoftPartition,
    pub target_partition: SoftPartition,
    pub masses: Array1<f64>,
}

impl FactoredCoupling {
    pub fn new(
        source_partition: SoftPartition,
        target_partition: SoftPartition,
        masses: Array1<f64>,
    ) -> Result<Self> {
        let k = masses.len();
        if source_partition.k() != k || target_partition.k() != k {
            return Err(Error::InvalidArgument(
                "partitions and masses disagree on k".into(),
            ));
        }
        Ok(Self {
            source_partition,
            target_partition,
            masses,
        })
    }

    /// Number of clusters (the transport rank).
    pub fn k(&self) -> usize {
        self.masses.len()
    }

    /// The full `n0 x n1` coupling `sum_j lambda_j Q0_j (x) Q1_j`, where
    /// `Q_j` is cluster `j` normalized to a probability.
    pub fn induced_coupling(&self) -> Array2<f64> {
        let q0 = normalized_rows(&self.source_partition);
        let q1 = normalized_rows(&self.target_partition);
        let mut scaled = q0.t().to_owned();
        for (mut col, &l) in scaled.columns_mut().into_iter().zip(self.masses.iter()) {
            col.mapv_inplace(|x| x * l);
        }
        scaled.dot(&q1)
    }
}

fn normalized_rows(p: &SoftPartition) -> Array2<f64> {
    let mut q = p.clusters.clone();
    for (mut row, &m) in q.rows_mut().into_iter().zip(p.masses.iter()) {
        row.mapv_inplace(|x| x / m);
    }
    q
}

/// Reads the coupled soft partitions off a barycenter solution: cluster `j`
/// of the source is row `j` of `plan0`, likewise for the target.
pub fn induce_factored_coupling(
    sol: &BarycenterSolution,
    source: &DiscreteMeasure,
    target: &DiscreteMeasure,
) -> Result<FactoredCoupling> {
    let g0 = sol.plan0.matrix();
    let g1 = sol.plan1.matrix();
    if g0.ncols() != source.len() || g1.ncols() != target.len() || g0.nrows() != g1.nrows() {
        return Err(Error::InvalidArgument(
            "solution does not match the given samples".into(),
        ));
    }
    let rows0 = g0.sum_axis(Axis(1));
    let rows1 = g1.sum_axis(Axis(1));
    let lambda = shared_masses(rows0.view(), rows1.view());
    let keep: Vec<usize> = (0..lambda.len())
        .filter(|&j| {
            lambda[j] >= MIN_CLUSTER_MASS
                && rows0[j] >= MIN_CLUSTER_MASS
                && rows1[j] >= MIN_CLUSTER_MASS
        })
        .collect();
    if keep.len() < lambda.len() {
        warn!(
            "dropping {} empty cluster(s); effective k = {}",
            lambda.len() - keep.len(),
            keep.len()
        );
    }
    if keep.is_empty() {
        return Err(Error::Numerical("every cluster is empty".into()));
    }
    let c0 = g0.select(Axis(0), &keep);
    let c1 = g1.select(Axis(0), &keep);
    let masses = lambda.select(Axis(0), &keep);
    let masses = &masses / masses.sum();
    FactoredCoupling::new(
        SoftPartition::new(c0, source.points())?,
        SoftPartition::new(c1, target.points())?,
        masses,
    )
}

/// `sum_j lambda_j ||mu(C0_j) - mu(C1_j)||^2`.
pub fn cost(fc: &FactoredCoupling) -> f64 {
    fc.masses
        .iter()
        .enumerate()
        .map(|(j, &l)| {
            l * sq_dist(
                fc.source_partition.centroids.row(j),
                fc.target_partition.centroids.row(j),
            )
        })
        .sum()
}

/// Solver output together with the coupling it induces and its cost.
#[derive(Debug, Clone)]
pub struct FotEstimate {
    pub solution: BarycenterSolution,
    pub coupling: FactoredCoupling,
    pub w_hat: f64,
}

/// Runs the barycenter solver and reads off the estimate.
pub fn estimate(
    source: &DiscreteMeasure,
    target: &DiscreteMeasure,
    cfg: &FotConfig,
) -> Result<FotEstimate> {
    let solution = factored_ot(source, target, cfg)?;
    let coupling = induce_factored_coupling(&solution, source, target)?;
    let w_hat = cost(&coupling);
    Ok(FotEstimate {
        solution,
        coupling,
        w_hat,
    })
}

/// The estimate of `W_2^2(source, target)`: the cost of the factored
/// coupling induced by the k-barycenter.
pub fn w_hat(source: &DiscreteMeasure, target: &DiscreteMeasure, cfg: &FotConfig) -> Result<f64> {
    Ok(estimate(source, target, cfg)?.w_hat)
}

/// `int ||x - y||^2 d gamma` for the induced coupling, computed directly and
/// as `cost + sum_j lambda_j (Var0_j + Var1_j)`. Fails if the two disagree.
pub fn total_transport_integral(
    fc: &FactoredCoupling,
    source: &DiscreteMeasure,
    target: &DiscreteMeasure,
) -> Result<f64> {
    let (direct, decomposed) = transport_integral_parts(fc, source, target)?;
    let scale = direct.abs().max(decomposed.abs());
    if (direct - decomposed).abs() > DECOMPOSITION_TOL * scale {
        return Err(Error::Consistency(format!(
            "direct integral {direct} differs from decomposition {decomposed}"
        )));
    }
    Ok(direct)
}

/// Both sides of the decomposition, `(direct, cost + variances)`.
pub fn transport_integral_parts(
    fc: &FactoredCoupling,
    source: &DiscreteMeasure,
    target: &DiscreteMeasure,
) -> Result<(f64, f64)> {
    let c = squared_cost_matrix(source, target)?;
    let gamma = fc.induced_coupling();
    if gamma.dim() != c.dim() {
        return Err(Error::InvalidArgument(
            "coupling does not match the given samples".into(),
        ));
    }
    let direct = (&gamma * &c).sum();
    let v0 = fc.source_partition.variances(source.points());
    let v1 = fc.target_partition.variances(target.points());
    let variance: f64 = fc
        .masses
        .iter()
        .zip(v0.iter().zip(v1.iter()))
        .map(|(&l, (&a, &b))| l * (a + b))
        .sum();
    Ok((direct, cost(fc) + variance))
}

/// `T(x_i) = x_i + sum_j C0_j(i) (mu1_j - mu0_j) / sum_j C0_j(i)`.
pub fn transport_map(fc: &FactoredCoupling, source: &DiscreteMeasure) -> Result<Array2<f64>> {
    let clusters = &fc.source_partition.clusters;
    if clusters.ncols() != source.len() {
        return Err(Error::DimensionMismatch(clusters.ncols(), source.len()));
    }
    let totals = clusters.sum_axis(Axis(0));
    if let Some(i) = totals.iter().position(|&t| !(t > 0.0)) {
        return Err(Error::Numerical(format!(
            "source point {i} carries no cluster mass"
        )));
    }
    let shift = &fc.target_partition.centroids - &fc.source_partition.centroids;
    let mut moved = clusters.t().dot(&shift);
    for (mut row, &t) in moved.rows_mut().into_iter().zip(totals.iter()) {
        row.mapv_inplace(|x| x / t);
    }
    Ok(moved + source.points())
}

/// The mapped source sample, carrying the source weights.
pub fn pushforward(fc: &FactoredCoupling, source: &DiscreteMeasure) -> Result<DiscreteMeasure> {
    DiscreteMeasure::new(transport_map(fc, source)?, source.weights().to_owned())
}

/// One estimation result in the CLI's JSON schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub method: String,
    pub k: Option<usize>,
    pub epsilon: Option<f64>,
    pub seed: Option<u64>,
    pub w_hat: f64,
    pub plug_in_cost: Option<f64>,
    pub runtime_ms: f64,
    pub n0: usize,
    pub n1: usize,
    pub d: usize,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::TransportPlan;
    use crate::HubSet;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cloud(rng: &mut ChaCha8Rng, n: usize, d: usize) -> DiscreteMeasure {
        DiscreteMeasure::uniform(Array2::from_shape_fn((n, d), |_| {
            rng.random_range(-1.0..1.0)
        }))
        .unwrap()
    }

    fn single_cluster(x: &DiscreteMeasure, y: &DiscreteMeasure) -> FactoredCoupling {
        FactoredCoupling::new(
            SoftPartition::new(x.weights().to_owned().insert_axis(Axis(0)), x.points()).unwrap(),
            SoftPartition::new(y.weights().to_owned().insert_axis(Axis(0)), y.points()).unwrap(),
            array![1.0],
        )
        .unwrap()
    }

    #[test]
    fn one_cluster_cost_is_mean_gap() {
        let x = DiscreteMeasure::uniform(array![[0.0, 0.0, 0.0]]).unwrap();
        let y = DiscreteMeasure::uniform(array![[2.0, 0.0, 0.0]]).unwrap();
        assert_eq!(cost(&single_cluster(&x, &y)), 4.0);
    }

    #[test]
    fn identical_partitions_cost_nothing() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = cloud(&mut rng, 6, 2);
        let c = array![
            [0.1, 0.0, 0.1, 1.0 / 6.0, 0.0, 0.05],
            [
                1.0 / 6.0 - 0.1,
                1.0 / 6.0,
                1.0 / 6.0 - 0.1,
                0.0,
                1.0 / 6.0,
                1.0 / 6.0 - 0.05
            ]
        ];
        let p = SoftPartition::new(c, x.points()).unwrap();
        let fc = FactoredCoupling::new(p.clone(), p.clone(), p.masses.clone()).unwrap();
        assert_eq!(cost(&fc), 0.0);
    }

    #[test]
    fn bias_variance_identity_single_cluster() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = cloud(&mut rng, 7, 3);
        let y = cloud(&mut rng, 5, 3);
        let fc = single_cluster(&x, &y);
        let total = total_transport_integral(&fc, &x, &y).unwrap();
        // Independent coupling: average of all pairwise squared distances.
        let mut brute = 0.0;
        for a in x.points().rows() {
            for b in y.points().rows() {
                brute += sq_dist(a, b) / 35.0;
            }
        }
        assert!((total - brute).abs() < 1e-12);
        let var = |m: &DiscreteMeasure| {
            let mu = m.mean();
            m.points()
                .rows()
                .into_iter()
                .map(|r| sq_dist(r, mu.view()))
                .sum::<f64>()
                / m.len() as f64
        };
        let expected = sq_dist(x.mean().view(), y.mean().view()) + var(&x) + var(&y);
        assert!((total - expected).abs() < 1e-12);
    }

    #[test]
    fn point_masses_give_squared_distance() {
        let x = DiscreteMeasure::uniform(array![[1.0, 2.0]]).unwrap();
        let y = DiscreteMeasure::uniform(array![[4.0, -2.0]]).unwrap();
        let fc = single_cluster(&x, &y);
        assert_eq!(total_transport_integral(&fc, &x, &y).unwrap(), 25.0);
        assert_eq!(cost(&fc), 25.0);
    }

    #[test]
    fn single_cluster_map_is_mean_shift() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = cloud(&mut rng, 8, 2);
        let y = cloud(&mut rng, 4, 2);
        let fc = single_cluster(&x, &y);
        let t = transport_map(&fc, &x).unwrap();
        let shift = y.mean() - x.mean();
        for (i, row) in t.rows().into_iter().enumerate() {
            for c in 0..2 {
                assert!((row[c] - x.points()[[i, c]] - shift[c]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn hard_clusters_move_by_own_displacement() {
        let x = DiscreteMeasure::uniform(array![[0.0], [1.0], [10.0], [11.0]]).unwrap();
        let y = DiscreteMeasure::uniform(array![[5.0], [6.0], [-5.0], [-4.0]]).unwrap();
        let c0 = array![[0.25, 0.25, 0.0, 0.0], [0.0, 0.0, 0.25, 0.25]];
        let c1 = array![[0.25, 0.25, 0.0, 0.0], [0.0, 0.0, 0.25, 0.25]];
        let fc = FactoredCoupling::new(
            SoftPartition::new(c0, x.points()).unwrap(),
            SoftPartition::new(c1, y.points()).unwrap(),
            array![0.5, 0.5],
        )
        .unwrap();
        let t = transport_map(&fc, &x).unwrap();
        assert_eq!(t.column(0).to_vec(), vec![5.0, 6.0, -5.0, -4.0]);
        assert_eq!(cost(&fc), 0.5 * 25.0 + 0.5 * 225.0);
        let pf = pushforward(&fc, &x).unwrap();
        assert!((pf.weights().sum() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn induced_coupling_from_solver_is_consistent() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = cloud(&mut rng, 20, 3);
        let y = cloud(&mut rng, 20, 3);
        let est = estimate(&x, &y, &FotConfig::new(3, 0.1, 2)).unwrap();
        let fc = &est.coupling;
        for (a, b) in fc.source_partition.total().iter().zip(x.weights().iter()) {
            assert!((a - b).abs() < 1e-9);
        }
        for j in 0..fc.k() {
            let p = &fc.source_partition;
            let mu = p.clusters.row(j).dot(&x.points()) / p.masses[j];
            for (a, b) in mu.iter().zip(p.centroids.row(j).iter()) {
                assert!((a - b).abs() < 1e-9);
            }
            assert!((fc.source_partition.masses[j] - fc.target_partition.masses[j]).abs() < 1e-6);
        }
        let g = fc.induced_coupling();
        let rows = g.sum_axis(Axis(1));
        let cols = g.sum_axis(Axis(0));
        assert!(crate::measures::l1_dist(rows.view(), x.weights()) < 1e-6);
        assert!(crate::measures::l1_dist(cols.view(), y.weights()) < 1e-6);
        let total = total_transport_integral(fc, &x, &y).unwrap();
        assert!(est.w_hat <= total);
    }

    #[test]
    fn shift_with_one_hub_recovers_squared_shift() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = cloud(&mut rng, 15, 3);
        let v = array![1.0, -2.0, 0.5];
        let y = x.translated(v.view()).unwrap();
        let w = w_hat(&x, &y, &FotConfig::new(1, 0.1, 0)).unwrap();
        assert!((w - 5.25).abs() < 1e-6, "{w}");
    }

    #[test]
    fn identical_samples_estimate_near_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let x = cloud(&mut rng, 30, 2);
        let w = w_hat(&x, &x, &FotConfig::new(4, 0.1, 0)).unwrap();
        assert!((0.0..=1e-3).contains(&w), "{w}");
    }

    #[test]
    fn translating_target_shifts_target_centroids() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let x = cloud(&mut rng, 10, 2);
        let y = cloud(&mut rng, 10, 2);
        let v = array![3.0, -1.0];
        let ys = y.translated(v.view()).unwrap();
        let g0 = Array2::from_shape_fn((2, 10), |(j, i)| if (i + j) % 2 == 0 { 0.1 } else { 0.0 });
        let m = array![0.5, 0.5];
        let p0 = TransportPlan::new(g0.clone(), m.clone(), x.weights().to_owned()).unwrap();
        let p1 = TransportPlan::new(g0, m.clone(), y.weights().to_owned()).unwrap();
        let sol = BarycenterSolution {
            hub_set: HubSet::uniform(array![[0.0, 0.0], [1.0, 1.0]]).unwrap(),
            plan0: p0,
            plan1: p1,
            objective_trace: vec![],
            transport_trace: vec![],
            reseeded_at: vec![],
            converged: true,
            epsilon: 0.1,
        };
        let a = induce_factored_coupling(&sol, &x, &y).unwrap();
        let b = induce_factored_coupling(&sol, &x, &ys).unwrap();
        let diff = &b.target_partition.centroids - &a.target_partition.centroids;
        for row in diff.rows() {
            assert!((row[0] - 3.0).abs() < 1e-12 && (row[1] + 1.0).abs() < 1e-12);
        }
        let ta = transport_map(&a, &x).unwrap();
        let tb = transport_map(&b, &x).unwrap();
        for (p, q) in ta.rows().into_iter().zip(tb.rows()) {
            assert!((q[0] - p[0] - 3.0).abs() < 1e-12 && (q[1] - p[1] + 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn empty_clusters_are_dropped() {
        let x = DiscreteMeasure::uniform(array![[0.0], [1.0]]).unwrap();
        let g = array![[0.5, 0.5], [0.0, 0.0]];
        let m = array![1.0, 0.0];
        let p = TransportPlan::new(g, m, x.weights().to_owned()).unwrap();
        let sol = BarycenterSolution {
            hub_set: HubSet::new(array![[0.5], [9.0]], array![1.0, 0.0]).unwrap(),
            plan0: p.clone(),
            plan1: p,
            objective_trace: vec![],
            transport_trace: vec![],
            reseeded_at: vec![],
            converged: true,
            epsilon: 0.1,
        };
        let fc = induce_factored_coupling(&sol, &x, &x).unwrap();
        assert_eq!(fc.k(), 1);
    }

    #[test]
    fn record_round_trips_through_json() {
        let r = ResultRecord {
            method: "fot".into(),
            k: Some(4),
            epsilon: Some(0.1),
            seed: Some(3),
            w_hat: 7.9,
            plug_in_cost: None,
            runtime_ms: 12.5,
            n0: 300,
            n1: 300,
            d: 30,
        };
        let s = serde_json::to_string(&r).unwrap();
        assert!(s.contains("\"plug_in_cost\":null"));
        assert_eq!(serde_json::from_str::<ResultRecord>(&s).unwrap(), r);
    }
}

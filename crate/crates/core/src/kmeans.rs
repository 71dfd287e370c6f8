//! Weighted Lloyd k-means with k-means++ seeding.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rand::distr::{weighted::WeightedIndex, Distribution};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::measures::sq_dist;

pub const MAX_LLOYD_ITERS: usize = 100;

#[derive(Debug, Clone)]
pub struct KMeansResult {
    pub centers: Array2<f64>,
    pub assignment: Vec<usize>,
    /// Weighted sum of squared distances to the assigned centers.
    pub objective: f64,
    pub iterations: usize,
}

impl KMeansResult {
    /// Total weight assigned to each center.
    pub fn cluster_weights(&self, weights: ArrayView1<'_, f64>) -> Array1<f64> {
        let mut out = Array1::zeros(self.centers.nrows());
        for (i, &c) in self.assignment.iter().enumerate() {
            out[c] += weights[i];
        }
        out
    }
}

/// Number of distinct rows (bitwise comparison).
pub fn distinct_points(points: ArrayView2<'_, f64>) -> usize {
    let mut rows: Vec<Vec<u64>> = points
        .rows()
        .into_iter()
        .map(|r| r.iter().map(|x| x.to_bits()).collect())
        .collect();
    rows.sort_unstable();
    rows.dedup();
    rows.len()
}

pub fn kmeans(
    points: ArrayView2<'_, f64>,
    weights: ArrayView1<'_, f64>,
    k: usize,
    seed: u64,
) -> Result<KMeansResult> {
    let n = points.nrows();
    if k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    if weights.len() != n {
        return Err(Error::InvalidArgument(
            "one weight per point required".into(),
        ));
    }
    let distinct = distinct_points(points);
    if k > distinct {
        return Err(Error::TooFewPoints { k, distinct });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centers = seed_plus_plus(points, weights, k, &mut rng)?;
    let mut assignment = vec![usize::MAX; n];
    let mut iterations = 0;
    for it in 1..=MAX_LLOYD_ITERS {
        iterations = it;
        let changed = assign(points, centers.view(), &mut assignment);
        if !changed && it > 1 {
            break;
        }
        update_centers(points, weights, &assignment, &mut centers);
    }
    let objective = assignment
        .iter()
        .enumerate()
        .map(|(i, &c)| weights[i] * sq_dist(points.row(i), centers.row(c)))
        .sum();
    Ok(KMeansResult {
        centers,
        assignment,
        objective,
        iterations,
    })
}

fn seed_plus_plus(
    points: ArrayView2<'_, f64>,
    weights: ArrayView1<'_, f64>,
    k: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Array2<f64>> {
    let n = points.nrows();
    let mut centers = Array2::zeros((k, points.ncols()));
    // Zero-weight points can still be chosen if nothing else is available.
    let base: Vec<f64> = weights.iter().map(|&w| w.max(1e-300)).collect();
    let first = WeightedIndex::new(&base)
        .map_err(|e| Error::InvalidArgument(e.to_string()))?
        .sample(rng);
    centers.row_mut(0).assign(&points.row(first));
    let mut d2: Vec<f64> = (0..n)
        .map(|i| sq_dist(points.row(i), points.row(first)))
        .collect();
    for c in 1..k {
        let scores: Vec<f64> = d2.iter().zip(&base).map(|(d, w)| d * w).collect();
        let pick = match WeightedIndex::new(&scores) {
            Ok(dist) => dist.sample(rng),
            // Every positive-weight point already coincides with a center.
            Err(_) => (0..n)
                .find(|&i| d2[i] > 0.0)
                .ok_or_else(|| Error::Numerical("k-means++ ran out of distinct points".into()))?,
        };
        centers.row_mut(c).assign(&points.row(pick));
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(sq_dist(points.row(i), points.row(pick)));
        }
    }
    Ok(centers)
}

/// Nearest-center assignment (lowest index wins ties). Returns whether any
/// assignment changed.
fn assign(points: ArrayView2<'_, f64>, centers: ArrayView2<'_, f64>, out: &mut [usize]) -> bool {
    let mut changed = false;
    for (i, p) in points.rows().into_iter().enumerate() {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (c, z) in centers.rows().into_iter().enumerate() {
            let d = sq_dist(p, z);
            if d < best_d {
                best_d = d;
                best = c;
            }
        }
        if out[i] != best {
            out[i] = best;
            changed = true;
        }
    }
    changed
}

fn update_centers(
    points: ArrayView2<'_, f64>,
    weights: ArrayView1<'_, f64>,
    assignment: &[usize],
    centers: &mut Array2<f64>,
) {
    let k = centers.nrows();
    let mut sums = Array2::<f64>::zeros(centers.dim());
    let mut mass = vec![0.0; k];
    let mut count = vec![0usize; k];
    for (i, &c) in assignment.iter().enumerate() {
        sums.row_mut(c).scaled_add(weights[i], &points.row(i));
        mass[c] += weights[i];
        count[c] += 1;
    }
    for c in 0..k {
        if mass[c] > 0.0 {
            centers.row_mut(c).assign(&(&sums.row(c) / mass[c]));
        } else if count[c] == 0 {
            // Empty cluster: restart it at the point farthest from its center.
            let far = (0..points.nrows())
                .max_by(|&a, &b| {
                    let da = sq_dist(points.row(a), centers.row(assignment[a]));
                    let db = sq_dist(points.row(b), centers.row(assignment[b]));
                    da.total_cmp(&db)
                })
                .unwrap_or(0);
            centers.row_mut(c).assign(&points.row(far));
        }
    }
}

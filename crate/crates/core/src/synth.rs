//! Seeded synthetic sample pairs.
//!
//! Every generator draws the source and the target from two independent
//! ChaCha streams derived from one master seed, so the same seed always
//! reproduces the same data bit for bit.

use std::f64::consts::PI;

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measures::{DiscreteMeasure, LabeledDataset};

const SOURCE_STREAM: u64 = 0;
const TARGET_STREAM: u64 = 1;

/// Exact squared distance between the hypercube pair's populations.
pub const HYPERCUBE_W2_SQ: f64 = 8.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GenKind {
    Hypercube,
    DiskAnnulus,
    GaussianMixture,
}

impl std::str::FromStr for GenKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hypercube" => Ok(Self::Hypercube),
            "disk_annulus" | "disk-annulus" => Ok(Self::DiskAnnulus),
            "gaussian_mixture" | "gaussian-mixture" => Ok(Self::GaussianMixture),
            other => Err(Error::InvalidArgument(format!(
                "unknown generator '{other}'"
            ))),
        }
    }
}

impl std::fmt::Display for GenKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Hypercube => "hypercube",
            Self::DiskAnnulus => "disk_annulus",
            Self::GaussianMixture => "gaussian_mixture",
        })
    }
}

/// Shifted Gaussian mixture: component means sit on a regular polygon in
/// the first two coordinates with adjacent means `separation` apart, and the
/// target sample is displaced by `shift` along the first axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureParams {
    pub components: usize,
    pub sigma: f64,
    pub separation: f64,
    pub shift: f64,
}

impl Default for MixtureParams {
    fn default() -> Self {
        Self {
            components: 3,
            sigma: 1.0,
            separation: 5.0,
            shift: 10.0,
        }
    }
}

impl MixtureParams {
    /// Component means (one row each) in dimension `d`.
    pub fn means(&self, d: usize) -> Array2<f64> {
        let c = self.components;
        let radius = if c > 1 {
            self.separation / (2.0 * (PI / c as f64).sin())
        } else {
            0.0
        };
        let mut m = Array2::zeros((c, d));
        for j in 0..c {
            let a = 2.0 * PI * j as f64 / c as f64;
            m[[j, 0]] = radius * a.cos();
            if d > 1 {
                m[[j, 1]] = radius * a.sin();
            }
        }
        m
    }

    pub fn labels(&self) -> Vec<String> {
        (0..self.components).map(|j| format!("c{j}")).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenSpec {
    pub kind: GenKind,
    pub d: usize,
    pub n: usize,
    pub seed: u64,
    #[serde(default)]
    pub mixture: Option<MixtureParams>,
}

impl GenSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::InvalidArgument("n must be at least 1".into()));
        }
        let min_d = match self.kind {
            GenKind::GaussianMixture => 1,
            _ => 2,
        };
        if self.d < min_d {
            return Err(Error::InvalidArgument(format!(
                "{} needs d >= {min_d}",
                self.kind
            )));
        }
        Ok(())
    }

    /// Source and target samples; only the mixture carries labels.
    pub fn generate(&self) -> Result<(LabeledDataset, LabeledDataset)> {
        self.validate()?;
        match self.kind {
            GenKind::Hypercube => {
                let (a, b) = gen_hypercube_pair(self.d, self.n, self.seed)?;
                Ok((LabeledDataset::unlabeled(a), LabeledDataset::unlabeled(b)))
            }
            GenKind::DiskAnnulus => {
                let (a, b) = gen_disk_annulus_pair(self.d, self.n, self.seed)?;
                Ok((LabeledDataset::unlabeled(a), LabeledDataset::unlabeled(b)))
            }
            GenKind::GaussianMixture => {
                let p = self.mixture.clone().unwrap_or_default();
                gen_shifted_mixture_pair(&p, self.d, self.n, self.seed)
            }
        }
    }

    /// Population squared distance, when known in closed form.
    pub fn ground_truth(&self) -> Option<f64> {
        match self.kind {
            GenKind::Hypercube => Some(HYPERCUBE_W2_SQ),
            GenKind::DiskAnnulus => Some(disk_annulus_oracle()),
            GenKind::GaussianMixture => {
                let p = self.mixture.clone().unwrap_or_default();
                Some(p.shift * p.shift)
            }
        }
    }
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

fn sign(x: f64) -> f64 {
    if x < 0.0 {
        -1.0
    } else {
        1.0
    }
}

/// `T(x) = x + 2 sign(x) * (e1 + e2)` with `sign(0) = +1`.
pub fn hypercube_map(x: &mut [f64]) {
    for v in x.iter_mut().take(2) {
        *v += 2.0 * sign(*v);
    }
}

fn uniform_cube(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Array2<f64> {
    Array2::from_shape_simple_fn((n, d), || rng.random_range(-1.0..=1.0))
}

/// Uniform source on `[-1, 1]^d` and an independent sample pushed through
/// [`hypercube_map`].
pub fn gen_hypercube_pair(
    d: usize,
    n: usize,
    seed: u64,
) -> Result<(DiscreteMeasure, DiscreteMeasure)> {
    if d < 2 || n == 0 {
        return Err(Error::InvalidArgument(
            "hypercube needs d >= 2 and n >= 1".into(),
        ));
    }
    let source = uniform_cube(&mut stream(seed, SOURCE_STREAM), n, d);
    let mut target = uniform_cube(&mut stream(seed, TARGET_STREAM), n, d);
    for mut row in target.rows_mut() {
        hypercube_map(row.as_slice_mut().expect("standard layout"));
    }
    Ok((
        DiscreteMeasure::uniform(source)?,
        DiscreteMeasure::uniform(target)?,
    ))
}

fn planar_ring(rng: &mut ChaCha8Rng, n: usize, d: usize, r_in: f64, r_out: f64) -> Array2<f64> {
    let mut pts = Array2::zeros((n, d));
    for mut row in pts.rows_mut() {
        // Area-uniform radius on [r_in, r_out].
        let u: f64 = rng.random();
        let r = (r_in * r_in + u * (r_out * r_out - r_in * r_in)).sqrt();
        let theta = 2.0 * PI * rng.random::<f64>();
        row[0] = r * theta.cos();
        row[1] = r * theta.sin();
        for v in row.iter_mut().skip(2) {
            *v = rng.random();
        }
    }
    pts
}

/// Unit disk (source) and the annulus `2 <= r <= 3` (target) in the first
/// two coordinates, the remaining coordinates uniform on `[0, 1]`.
pub fn gen_disk_annulus_pair(
    d: usize,
    n: usize,
    seed: u64,
) -> Result<(DiscreteMeasure, DiscreteMeasure)> {
    if d < 2 || n == 0 {
        return Err(Error::InvalidArgument(
            "disk_annulus needs d >= 2 and n >= 1".into(),
        ));
    }
    let source = planar_ring(&mut stream(seed, SOURCE_STREAM), n, d, 0.0, 1.0);
    let target = planar_ring(&mut stream(seed, TARGET_STREAM), n, d, 2.0, 3.0);
    Ok((
        DiscreteMeasure::uniform(source)?,
        DiscreteMeasure::uniform(target)?,
    ))
}

/// Squared distance between the disk and annulus populations: the monotone
/// radial rearrangement `r -> sqrt(4 + 5 r^2)` integrated against the disk's
/// radial density `2r`. Trailing coordinates share a law and cost nothing.
pub fn disk_annulus_oracle() -> f64 {
    simpson(
        |r| (((4.0 + 5.0 * r * r).sqrt() - r).powi(2)) * 2.0 * r,
        0.0,
        1.0,
        4096,
    )
}

/// Composite Simpson rule with `intervals` (even) subintervals.
pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, intervals: usize) -> f64 {
    let m = intervals + intervals % 2;
    let h = (b - a) / m as f64;
    let inner: f64 = (1..m)
        .map(|i| {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            w * f(a + h * i as f64)
        })
        .sum();
    (f(a) + inner + f(b)) * h / 3.0
}

/// Isotropic mixture with equal component weights; the label of each point
/// is its component's name.
pub fn gen_gaussian_mixture(
    means: &Array2<f64>,
    sigma: f64,
    labels: &[String],
    n: usize,
    rng: &mut ChaCha8Rng,
) -> Result<LabeledDataset> {
    let c = means.nrows();
    if c == 0 || labels.len() != c {
        return Err(Error::InvalidArgument(
            "need at least one component and one label per component".into(),
        ));
    }
    if !(sigma >= 0.0) || n == 0 {
        return Err(Error::InvalidArgument("need sigma >= 0 and n >= 1".into()));
    }
    let d = means.ncols();
    let mut pts = Array2::zeros((n, d));
    let mut out_labels = Vec::with_capacity(n);
    for mut row in pts.rows_mut() {
        let j = rng.random_range(0..c);
        for (v, &m) in row.iter_mut().zip(means.row(j).iter()) {
            let z: f64 = StandardNormal.sample(rng);
            *v = m + sigma * z;
        }
        out_labels.push(labels[j].clone());
    }
    LabeledDataset::new(DiscreteMeasure::uniform(pts)?, Some(out_labels))
}

/// Labeled source mixture and an independent target mixture displaced by
/// `shift` along the first axis.
pub fn gen_shifted_mixture_pair(
    p: &MixtureParams,
    d: usize,
    n: usize,
    seed: u64,
) -> Result<(LabeledDataset, LabeledDataset)> {
    if p.components == 0 {
        return Err(Error::InvalidArgument("need at least one component".into()));
    }
    let means = p.means(d);
    let labels = p.labels();
    let source = gen_gaussian_mixture(
        &means,
        p.sigma,
        &labels,
        n,
        &mut stream(seed, SOURCE_STREAM),
    )?;
    let mut shifted = means;
    shifted.column_mut(0).mapv_inplace(|x| x + p.shift);
    let target = gen_gaussian_mixture(
        &shifted,
        p.sigma,
        &labels,
        n,
        &mut stream(seed, TARGET_STREAM),
    )?;
    Ok((source, target))
}

/// Radii `||(x1, x2)||` of every point.
pub fn planar_radii(m: &DiscreteMeasure) -> Array1<f64> {
    m.points()
        .rows()
        .into_iter()
        .map(|r| (r[0] * r[0] + r[1] * r[1]).sqrt())
        .collect()
}

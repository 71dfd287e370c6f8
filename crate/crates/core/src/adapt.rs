//! Label transfer: map the source sample into the target domain with a
//! transport method, then label each mapped point by a k-nearest-neighbor
//! vote among the labeled target points.

use std::collections::BTreeMap;

use ndarray::{Array2, ArrayView1, ArrayView2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{barycentric_projection, kot, plug_in};
use crate::error::{Error, Result};
use crate::estimator::{estimate, transport_map};
use crate::exact::DEFAULT_EXACT_CAP;
use crate::factored::FotConfig;
use crate::measures::{sq_dist, LabeledDataset};
use crate::sinkhorn::{sinkhorn_plan, SinkhornConfig};

pub const DEFAULT_KNN: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Fot,
    Ot,
    Sinkhorn,
    Kot,
    NnOnly,
}

impl Method {
    pub const ALL: [Method; 5] = [Self::Fot, Self::Ot, Self::Sinkhorn, Self::Kot, Self::NnOnly];

    pub fn name(self) -> &'static str {
        match self {
            Self::Fot => "fot",
            Self::Ot => "ot",
            Self::Sinkhorn => "sinkhorn",
            Self::Kot => "kot",
            Self::NnOnly => "nn_only",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.name() == s || m.name().replace('_', "-") == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown method '{s}'")))
    }
}

/// Settings shared by every method; each method reads what it needs.
#[derive(Debug, Clone, PartialEq)]
pub struct AdaptParams {
    pub fot: FotConfig,
    pub sinkhorn: SinkhornConfig,
    pub exact_cap: usize,
    pub knn_k: usize,
}

impl Default for AdaptParams {
    fn default() -> Self {
        Self {
            fot: FotConfig::default(),
            sinkhorn: SinkhornConfig::default(),
            exact_cap: DEFAULT_EXACT_CAP,
            knn_k: DEFAULT_KNN,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdaptResult {
    pub method: Method,
    pub predicted_labels: Vec<String>,
    /// Fraction of source points whose prediction differs from their label;
    /// `None` when the source is unlabeled.
    pub error_rate: Option<f64>,
}

/// Source points mapped into the target domain by `method`.
pub fn map_source(
    source: &LabeledDataset,
    target: &LabeledDataset,
    method: Method,
    params: &AdaptParams,
) -> Result<Array2<f64>> {
    let (x, y) = (&source.measure, &target.measure);
    if x.dim() != y.dim() {
        return Err(Error::DimensionMismatch(x.dim(), y.dim()));
    }
    match method {
        Method::NnOnly => Ok(x.points().to_owned()),
        Method::Fot => {
            let est = estimate(x, y, &params.fot)?;
            transport_map(&est.coupling, x)
        }
        Method::Ot => {
            let p = plug_in(x, y, params.exact_cap)?;
            Ok(barycentric_projection(p.plan.matrix(), y.points()))
        }
        Method::Sinkhorn => {
            let out = sinkhorn_plan(x, y, &params.sinkhorn)?;
            Ok(barycentric_projection(out.plan.matrix(), y.points()))
        }
        Method::Kot => {
            let s = kot(x, y, params.fot.k, params.fot.seed)?;
            let shift = s.center_displacements();
            let mut out = x.points().to_owned();
            for (mut row, &c) in out.rows_mut().into_iter().zip(&s.source_assignment) {
                row += &shift.row(c);
            }
            Ok(out)
        }
    }
}

pub fn adapt_labels(
    source: &LabeledDataset,
    target: &LabeledDataset,
    method: Method,
    params: &AdaptParams,
) -> Result<AdaptResult> {
    let target_labels = target
        .labels
        .as_deref()
        .ok_or_else(|| Error::MissingLabels("target dataset has no labels".into()))?;
    let n1 = target.measure.len();
    if params.knn_k == 0 || params.knn_k > n1 {
        return Err(Error::InvalidArgument(format!(
            "knn_k = {} must be in 1..={n1}",
            params.knn_k
        )));
    }
    let mapped = map_source(source, target, method, params)?;
    let predicted_labels = knn_vote(
        mapped.view(),
        target.measure.points(),
        target_labels,
        params.knn_k,
    );
    let error_rate = source
        .labels
        .as_deref()
        .map(|truth| error_rate(truth, &predicted_labels));
    Ok(AdaptResult {
        method,
        predicted_labels,
        error_rate,
    })
}

/// `mismatches / n`.
pub fn error_rate(truth: &[String], predicted: &[String]) -> f64 {
    let wrong = truth.iter().zip(predicted).filter(|(a, b)| a != b).count();
    wrong as f64 / truth.len().max(1) as f64
}

/// Majority label among the `k` nearest reference points of each query.
///
/// Equal distances are ordered by reference index. A tied vote goes to the
/// label with the smallest summed distance among its voters, then to the
/// lexicographically smallest label.
pub fn knn_vote(
    queries: ArrayView2<'_, f64>,
    reference: ArrayView2<'_, f64>,
    labels: &[String],
    k: usize,
) -> Vec<String> {
    let rows: Vec<ArrayView1<'_, f64>> = queries.rows().into_iter().collect();
    rows.par_iter()
        .map(|q| {
            let mut d: Vec<(f64, usize)> = reference
                .rows()
                .into_iter()
                .enumerate()
                .map(|(j, r)| (sq_dist(*q, r), j))
                .collect();
            let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
            if k < d.len() {
                d.select_nth_unstable_by(k - 1, cmp);
                d.truncate(k);
            }
            let mut tally: BTreeMap<&str, (usize, f64)> = BTreeMap::new();
            for &(dist, j) in &d {
                let e = tally.entry(labels[j].as_str()).or_insert((0, 0.0));
                e.0 += 1;
                e.1 += dist.sqrt();
            }
            // BTreeMap iterates labels in order, so the first best wins ties.
            let mut best: Option<(&str, usize, f64)> = None;
            for (&l, &(c, s)) in &tally {
                let better = match best {
                    None => true,
                    Some((_, bc, bs)) => c > bc || (c == bc && s < bs),
                };
                if better {
                    best = Some((l, c, s));
                }
            }
            best.map(|b| b.0.to_string()).unwrap_or_default()
        })
        .collect()
}

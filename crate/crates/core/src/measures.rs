//! Discrete measures, transport plans, and the CSV point-cloud format.
//!
//! A [`DiscreteMeasure`] is a weighted point cloud in R^d. Weights are
//! renormalized to sum to one at construction so that every downstream
//! marginal check compares against an exactly normalized vector.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis, Zip};
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Default feasibility tolerance for marginal checks (L1 norm).
pub const DEFAULT_MARGINAL_TOL: f64 = 1e-6;

/// Weighted point cloud in R^d.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteMeasure {
    points: Array2<f64>,
    weights: Array1<f64>,
}

impl DiscreteMeasure {
    /// Builds a measure from an `n x d` point matrix and `n` nonnegative weights.
    ///
    /// Weights are divided by their sum, so any positive total is accepted.
    pub fn new(points: Array2<f64>, weights: Array1<f64>) -> Result<Self> {
        let (n, d) = points.dim();
        if n == 0 {
            return Err(Error::EmptyInput("measure has no points".into()));
        }
        if d == 0 {
            return Err(Error::InvalidMeasure("points have dimension 0".into()));
        }
        if weights.len() != n {
            return Err(Error::InvalidMeasure(format!(
                "{} weights for {} points",
                weights.len(),
                n
            )));
        }
        if points.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidMeasure("non-finite coordinate".into()));
        }
        if weights.iter().any(|&w| !(w >= 0.0) || !w.is_finite()) {
            return Err(Error::InvalidMeasure(
                "weights must be finite and nonnegative".into(),
            ));
        }
        let total = weights.sum();
        if !(total > 0.0) {
            return Err(Error::InvalidMeasure("weights sum to zero".into()));
        }
        let weights = weights / total;
        Ok(Self { points, weights })
    }

    /// Empirical measure with weight `1/n` on every row of `points`.
    pub fn uniform(points: Array2<f64>) -> Result<Self> {
        let n = points.nrows();
        if n == 0 {
            return Err(Error::EmptyInput("measure has no points".into()));
        }
        Self::new(points, Array1::from_elem(n, 1.0 / n as f64))
    }

    pub fn points(&self) -> ArrayView2<'_, f64> {
        self.points.view()
    }

    pub fn weights(&self) -> ArrayView1<'_, f64> {
        self.weights.view()
    }

    pub fn point(&self, i: usize) -> ArrayView1<'_, f64> {
        self.points.row(i)
    }

    pub fn len(&self) -> usize {
        self.points.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.points.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.points.ncols()
    }

    /// True when every weight equals `1/n` to within `1e-12`.
    pub fn is_uniform(&self) -> bool {
        let target = 1.0 / self.len() as f64;
        self.weights.iter().all(|w| (w - target).abs() <= 1e-12)
    }

    /// Weighted mean of the support points.
    pub fn mean(&self) -> Array1<f64> {
        self.points.t().dot(&self.weights)
    }

    /// Same weights, every point shifted by `shift`.
    pub fn translated(&self, shift: ArrayView1<'_, f64>) -> Result<Self> {
        if shift.len() != self.dim() {
            return Err(Error::DimensionMismatch(self.dim(), shift.len()));
        }
        let points = &self.points + &shift.broadcast(self.points.dim()).unwrap();
        Ok(Self {
            points,
            weights: self.weights.clone(),
        })
    }

    /// Same weights, every coordinate multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            points: &self.points * factor,
            weights: self.weights.clone(),
        }
    }

    /// Reorders support points (and weights) so that new index `i` holds old
    /// index `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        Self {
            points: self.points.select(Axis(0), perm),
            weights: self.weights.select(Axis(0), perm),
        }
    }
}

/// A discrete measure with optional per-point categorical labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub measure: DiscreteMeasure,
    pub labels: Option<Vec<String>>,
}

impl LabeledDataset {
    pub fn new(measure: DiscreteMeasure, labels: Option<Vec<String>>) -> Result<Self> {
        if let Some(l) = &labels {
            if l.len() != measure.len() {
                return Err(Error::InvalidMeasure(format!(
                    "{} labels for {} points",
                    l.len(),
                    measure.len()
                )));
            }
        }
        Ok(Self { measure, labels })
    }

    pub fn unlabeled(measure: DiscreteMeasure) -> Self {
        Self {
            measure,
            labels: None,
        }
    }
}

/// Options for reading the CSV point-cloud format.
#[derive(Debug, Clone, Copy, Default)]
pub struct CsvOptions {
    /// The last field of each row is a label token.
    pub has_labels: bool,
    /// Skip the first line.
    pub header: bool,
}

/// Reads a point cloud: one point per line, comma-separated coordinates,
/// optionally followed by a label. Weights are uniform.
pub fn load_csv(path: impl AsRef<Path>, opts: CsvOptions) -> Result<LabeledDataset> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_csv(&text, opts)
}

/// Parses CSV text in the point-cloud format. Row numbers in errors are
/// 1-based line numbers.
pub fn parse_csv(text: &str, opts: CsvOptions) -> Result<LabeledDataset> {
    let mut coords: Vec<f64> = Vec::new();
    let mut labels: Vec<String> = Vec::new();
    let mut width: Option<usize> = None;
    let mut rows = 0usize;

    for (lineno, line) in text.lines().enumerate() {
        if opts.header && lineno == 0 {
            continue;
        }
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let row = lineno + 1;
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let expected = *width.get_or_insert(fields.len());
        if fields.len() != expected {
            return Err(Error::Format {
                row,
                expected,
                found: fields.len(),
            });
        }
        let numeric = if opts.has_labels {
            if fields.len() < 2 {
                return Err(Error::Format {
                    row,
                    expected: 2,
                    found: fields.len(),
                });
            }
            let label = fields[fields.len() - 1];
            if label.is_empty() {
                return Err(Error::Parse {
                    row,
                    column: fields.len(),
                    token: label.to_string(),
                });
            }
            labels.push(label.to_string());
            &fields[..fields.len() - 1]
        } else {
            &fields[..]
        };
        for (c, tok) in numeric.iter().enumerate() {
            let x: f64 = tok.parse().map_err(|_| Error::Parse {
                row,
                column: c + 1,
                token: tok.to_string(),
            })?;
            if !x.is_finite() {
                return Err(Error::Parse {
                    row,
                    column: c + 1,
                    token: tok.to_string(),
                });
            }
            coords.push(x);
        }
        rows += 1;
    }

    if rows == 0 {
        return Err(Error::EmptyInput("no data rows".into()));
    }
    let dim = coords.len() / rows;
    let points = Array2::from_shape_vec((rows, dim), coords)
        .map_err(|e| Error::InvalidMeasure(e.to_string()))?;
    let measure = DiscreteMeasure::uniform(points)?;
    LabeledDataset::new(measure, opts.has_labels.then_some(labels))
}

/// Formats a dataset in the point-cloud CSV format. Floats are written in
/// shortest round-trip form, so reading the file back is lossless.
pub fn to_csv_string(data: &LabeledDataset, extra: Option<&[String]>) -> String {
    let mut out = String::new();
    for (i, row) in data.measure.points().rows().into_iter().enumerate() {
        for (c, x) in row.iter().enumerate() {
            if c > 0 {
                out.push(',');
            }
            write!(out, "{x}").unwrap();
        }
        if let Some(labels) = &data.labels {
            write!(out, ",{}", labels[i]).unwrap();
        }
        if let Some(extra) = extra {
            write!(out, ",{}", extra[i]).unwrap();
        }
        out.push('\n');
    }
    out
}

/// Matrix of squared Euclidean distances `C[i, j] = |a_i - b_j|^2`.
///
/// Rows are computed independently (possibly in parallel); each entry is a
/// plain per-coordinate sum, so the result does not depend on thread count.
pub fn squared_cost_matrix(a: &DiscreteMeasure, b: &DiscreteMeasure) -> Result<Array2<f64>> {
    squared_distances(a.points(), b.points())
}

/// Squared Euclidean distances between the rows of two point matrices.
pub fn squared_distances(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    if a.ncols() != b.ncols() {
        return Err(Error::DimensionMismatch(a.ncols(), b.ncols()));
    }
    let mut cost = Array2::zeros((a.nrows(), b.nrows()));
    let fill = |(mut out, x): (ndarray::ArrayViewMut1<'_, f64>, ArrayView1<'_, f64>)| {
        for (c, y) in out.iter_mut().zip(b.rows()) {
            *c = sq_dist(x, y);
        }
    };
    if a.nrows() * b.nrows() >= 1 << 16 {
        cost.axis_iter_mut(Axis(0))
            .into_par_iter()
            .zip(a.axis_iter(Axis(0)).into_par_iter())
            .for_each(fill);
    } else {
        cost.axis_iter_mut(Axis(0)).zip(a.rows()).for_each(fill);
    }
    Ok(cost)
}

#[inline]
pub(crate) fn sq_dist(x: ArrayView1<'_, f64>, y: ArrayView1<'_, f64>) -> f64 {
    x.iter().zip(y.iter()).map(|(p, q)| (p - q) * (p - q)).sum()
}

/// A coupling matrix together with the marginals it is meant to satisfy.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportPlan {
    matrix: Array2<f64>,
    row_marginal: Array1<f64>,
    col_marginal: Array1<f64>,
}

impl TransportPlan {
    /// Checks shapes and nonnegativity. Marginal feasibility is a separate,
    /// tolerance-dependent question answered by [`validate_plan`].
    pub fn new(
        matrix: Array2<f64>,
        row_marginal: Array1<f64>,
        col_marginal: Array1<f64>,
    ) -> Result<Self> {
        let (r, c) = matrix.dim();
        if r != row_marginal.len() || c != col_marginal.len() {
            return Err(Error::InvalidArgument(format!(
                "plan of shape {r}x{c} with marginals of length {} and {}",
                row_marginal.len(),
                col_marginal.len()
            )));
        }
        if matrix.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
            return Err(Error::Numerical(
                "plan has negative or non-finite entries".into(),
            ));
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

    pub fn shape(&self) -> (usize, usize) {
        self.matrix.dim()
    }

    pub fn row_sums(&self) -> Array1<f64> {
        self.matrix.sum_axis(Axis(1))
    }

    pub fn col_sums(&self) -> Array1<f64> {
        self.matrix.sum_axis(Axis(0))
    }

    /// `<C, plan>`.
    pub fn cost(&self, cost: &Array2<f64>) -> f64 {
        Zip::from(&self.matrix)
            .and(cost)
            .fold(0.0, |acc, &p, &c| acc + p * c)
    }

    /// `sum p log p` with `0 log 0 = 0`.
    pub fn neg_entropy(&self) -> f64 {
        self.matrix
            .iter()
            .filter(|&&p| p > 0.0)
            .map(|&p| p * p.ln())
            .sum()
    }

    pub fn into_matrix(self) -> Array2<f64> {
        self.matrix
    }
}

/// L1 deviations of a plan's row and column sums from its declared marginals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeasibilityReport {
    pub row_violation: f64,
    pub col_violation: f64,
    pub tol: f64,
}

impl FeasibilityReport {
    pub fn passed(&self) -> bool {
        self.row_violation <= self.tol && self.col_violation <= self.tol
    }

    pub fn max_violation(&self) -> f64 {
        self.row_violation.max(self.col_violation)
    }
}

pub fn validate_plan(plan: &TransportPlan, tol: f64) -> FeasibilityReport {
    FeasibilityReport {
        row_violation: l1_dist(plan.row_sums().view(), plan.row_marginal()),
        col_violation: l1_dist(plan.col_sums().view(), plan.col_marginal()),
        tol,
    }
}

pub(crate) fn l1_dist(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()).sum()
}

//! Replicated estimation runs over a grid of sample sizes, dimensions or
//! ranks, written as CSV.

use std::fmt::Write as _;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adapt::Method;
use crate::baselines::{kot, plug_in};
use crate::error::{Error, Result};
use crate::estimator::{w_hat, ResultRecord};
use crate::exact::DEFAULT_EXACT_CAP;
use crate::factored::FotConfig;
use crate::measures::DiscreteMeasure;
use crate::sinkhorn::{sinkhorn_plan, SinkhornConfig};
use crate::synth::GenSpec;

pub const SCHEMA_VERSION: u32 = 1;

/// Sample-size grid used when a sweep over `n` gives no values.
pub const DEFAULT_N_GRID: [usize; 5] = [50, 100, 200, 400, 800];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepVar {
    N,
    D,
    K,
}

impl std::str::FromStr for SweepVar {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "n" => Ok(Self::N),
            "d" => Ok(Self::D),
            "k" => Ok(Self::K),
            other => Err(Error::InvalidArgument(format!(
                "unknown sweep variable '{other}' (expected n, d or k)"
            ))),
        }
    }
}

impl std::fmt::Display for SweepVar {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::N => "n",
            Self::D => "d",
            Self::K => "k",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    /// Base generator; the swept field is overridden per cell and the seed is
    /// the first replicate's seed.
    pub generator: GenSpec,
    pub sweep: SweepVar,
    pub values: Vec<usize>,
    pub methods: Vec<Method>,
    pub replicates: usize,
    pub base: FotConfig,
    /// Settings of the `sinkhorn` method.
    pub sinkhorn: SinkhornConfig,
    /// Ties the sample size to the dimension (`n = 10 d`) in `d` sweeps.
    pub n_per_dim: Option<usize>,
    pub exact_cap: usize,
    /// Runtimes vary between runs; turn this off for byte-identical output.
    pub record_runtime: bool,
}

impl ExperimentSpec {
    pub fn new(generator: GenSpec, sweep: SweepVar, values: Vec<usize>) -> Self {
        Self {
            generator,
            sweep,
            values,
            methods: vec![Method::Fot],
            replicates: 20,
            base: FotConfig::default(),
            sinkhorn: SinkhornConfig::default(),
            n_per_dim: None,
            exact_cap: DEFAULT_EXACT_CAP,
            record_runtime: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.replicates == 0 {
            return Err(Error::InvalidArgument(
                "replicates must be at least 1".into(),
            ));
        }
        if self.values.is_empty() {
            return Err(Error::InvalidArgument("sweep value list is empty".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::InvalidArgument("no methods selected".into()));
        }
        if let Some(m) = self.methods.iter().find(|m| **m == Method::NnOnly) {
            return Err(Error::InvalidArgument(format!(
                "{m} is not an estimator of the transport cost"
            )));
        }
        self.base.validate()
    }

    /// Generator and solver settings of one cell.
    pub fn cell(&self, value: usize, replicate: usize) -> (GenSpec, FotConfig) {
        let mut gen = self.generator.clone();
        let mut cfg = self.base.clone();
        let seed = self.generator.seed + replicate as u64;
        gen.seed = seed;
        cfg.seed = seed;
        match self.sweep {
            SweepVar::N => gen.n = value,
            SweepVar::D => {
                gen.d = value;
                if let Some(m) = self.n_per_dim {
                    gen.n = m * value;
                }
            }
            SweepVar::K => cfg.k = value,
        }
        (gen, cfg)
    }
}

/// One row of a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub value: usize,
    pub method: Method,
    pub replicate: usize,
    pub seed: u64,
    pub n: usize,
    pub d: usize,
    pub k: usize,
    pub epsilon: f64,
    pub estimate: Option<f64>,
    pub ground_truth: Option<f64>,
    /// Set when the plug-in baseline fell back to an entropic plan.
    pub approx: bool,
    /// `None` on success, otherwise the error message.
    pub error: Option<String>,
    pub runtime_ms: Option<f64>,
}

impl SweepRow {
    pub fn abs_error(&self) -> Option<f64> {
        Some((self.estimate? - self.ground_truth?).abs())
    }

    pub fn ok(&self) -> bool {
        self.error.is_none()
    }
}

/// Estimate of `W_2^2` by one method; the flag marks an approximate plug-in.
pub fn estimate_with(
    source: &DiscreteMeasure,
    target: &DiscreteMeasure,
    method: Method,
    cfg: &FotConfig,
    sinkhorn: &SinkhornConfig,
    exact_cap: usize,
) -> Result<(f64, bool)> {
    match method {
        Method::Fot => Ok((w_hat(source, target, cfg)?, false)),
        Method::Ot => {
            let p = plug_in(source, target, exact_cap)?;
            Ok((p.cost, p.approx))
        }
        Method::Sinkhorn => Ok((
            sinkhorn_plan(source, target, sinkhorn)?.transport_cost,
            false,
        )),
        Method::Kot => Ok((kot(source, target, cfg.k, cfg.seed)?.cost, false)),
        Method::NnOnly => Err(Error::InvalidArgument(
            "nn_only does not estimate a transport cost".into(),
        )),
    }
}

/// Single estimation run in the JSON record format. The plug-in cost is
/// included when the instance fits under the exact solver's cap.
pub fn estimate_record(
    source: &DiscreteMeasure,
    target: &DiscreteMeasure,
    method: Method,
    cfg: &FotConfig,
    sinkhorn: &SinkhornConfig,
    exact_cap: usize,
) -> Result<ResultRecord> {
    let start = Instant::now();
    let (estimate, _) = estimate_with(source, target, method, cfg, sinkhorn, exact_cap)?;
    let runtime_ms = start.elapsed().as_secs_f64() * 1e3;
    let plug_in_cost = if method == Method::Ot {
        Some(estimate)
    } else if source.len() * target.len() <= exact_cap {
        Some(plug_in(source, target, exact_cap)?.cost)
    } else {
        None
    };
    let (k, epsilon) = match method {
        Method::Fot => (Some(cfg.k), Some(cfg.sinkhorn.epsilon)),
        Method::Kot => (Some(cfg.k), None),
        Method::Sinkhorn => (None, Some(sinkhorn.epsilon)),
        _ => (None, None),
    };
    Ok(ResultRecord {
        method: method.to_string(),
        k,
        epsilon,
        seed: matches!(method, Method::Fot | Method::Kot).then_some(cfg.seed),
        w_hat: estimate,
        plug_in_cost,
        runtime_ms,
        n0: source.len(),
        n1: target.len(),
        d: source.dim(),
    })
}

/// Runs every (value, method, replicate) cell on the current rayon pool.
/// Failed cells become rows with an error message; rows come back sorted.
pub fn run_sweep(spec: &ExperimentSpec) -> Result<Vec<SweepRow>> {
    spec.validate()?;
    let mut cells = Vec::new();
    for &value in &spec.values {
        for rep in 0..spec.replicates {
            cells.push((value, rep));
        }
    }
    let mut rows: Vec<SweepRow> = cells
        .par_iter()
        .flat_map_iter(|&(value, rep)| run_cell(spec, value, rep))
        .collect();
    rows.sort_by_key(|r| (r.value, r.method, r.replicate));
    Ok(rows)
}

fn run_cell(spec: &ExperimentSpec, value: usize, rep: usize) -> Vec<SweepRow> {
    let (gen, cfg) = spec.cell(value, rep);
    let truth = gen.ground_truth();
    let data = gen.generate();
    spec.methods
        .iter()
        .map(|&method| {
            let start = Instant::now();
            let result = data.as_ref().map_err(|e| e.to_string()).and_then(|(a, b)| {
                estimate_with(
                    &a.measure,
                    &b.measure,
                    method,
                    &cfg,
                    &spec.sinkhorn,
                    spec.exact_cap,
                )
                .map_err(|e| e.to_string())
            });
            let runtime = start.elapsed().as_secs_f64() * 1e3;
            let (estimate, approx, error) = match result {
                Ok((e, a)) => (Some(e), a, None),
                Err(msg) => (None, false, Some(msg)),
            };
            SweepRow {
                value,
                method,
                replicate: rep,
                seed: gen.seed,
                n: gen.n,
                d: gen.d,
                k: cfg.k,
                epsilon: match method {
                    Method::Sinkhorn => spec.sinkhorn.epsilon,
                    _ => cfg.sinkhorn.epsilon,
                },
                estimate,
                ground_truth: truth,
                approx,
                error,
                runtime_ms: spec.record_runtime.then_some(runtime),
            }
        })
        .collect()
}

pub const CSV_HEADER: &str =
    "sweep,value,method,replicate,seed,n,d,k,epsilon,estimate,ground_truth,abs_error,approx,status,runtime_ms";

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

/// CSV with a leading `#` metadata line.
pub fn sweep_csv(spec: &ExperimentSpec, rows: &[SweepRow]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "# fot-sweep schema={SCHEMA_VERSION} generator={} sweep={} replicates={} base_seed={} base_n={} base_d={} base_k={} epsilon={} n_per_dim={} values={}",
        spec.generator.kind,
        spec.sweep,
        spec.replicates,
        spec.generator.seed,
        spec.generator.n,
        spec.generator.d,
        spec.base.k,
        spec.base.sinkhorn.epsilon,
        spec.n_per_dim.map(|m| m.to_string()).unwrap_or_else(|| "none".into()),
        spec.values.iter().map(usize::to_string).collect::<Vec<_>>().join(";"),
    );
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in rows {
        let status = match &r.error {
            None => "ok".to_string(),
            Some(msg) => format!("error: {}", msg.replace([',', '\n', '"'], " ")),
        };
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            spec.sweep,
            r.value,
            r.method,
            r.replicate,
            r.seed,
            r.n,
            r.d,
            r.k,
            r.epsilon,
            opt(r.estimate),
            opt(r.ground_truth),
            opt(r.abs_error()),
            r.approx,
            status,
            opt(r.runtime_ms),
        );
    }
    out
}

/// Per (value, method) averages over successful replicates.
#[derive(Debug, Clone, PartialEq)]
pub struct CellSummary {
    pub value: usize,
    pub method: Method,
    pub mean_estimate: f64,
    pub mean_abs_error: Option<f64>,
    pub succeeded: usize,
    pub failed: usize,
}

pub fn summarize(rows: &[SweepRow]) -> Vec<CellSummary> {
    let mut keys: Vec<(usize, Method)> = rows.iter().map(|r| (r.value, r.method)).collect();
    keys.sort();
    keys.dedup();
    keys.into_iter()
        .map(|(value, method)| {
            let group: Vec<&SweepRow> = rows
                .iter()
                .filter(|r| r.value == value && r.method == method)
                .collect();
            let ok: Vec<&&SweepRow> = group.iter().filter(|r| r.ok()).collect();
            let mean = |f: &dyn Fn(&SweepRow) -> Option<f64>| -> Option<f64> {
                let v: Vec<f64> = ok.iter().filter_map(|r| f(r)).collect();
                (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
            };
            CellSummary {
                value,
                method,
                mean_estimate: mean(&|r| r.estimate).unwrap_or(f64::NAN),
                mean_abs_error: mean(&|r| r.abs_error()),
                succeeded: ok.len(),
                failed: group.len() - ok.len(),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::GenKind;

    fn small_spec() -> ExperimentSpec {
        let gen = GenSpec {
            kind: GenKind::Hypercube,
            d: 3,
            n: 20,
            seed: 7,
            mixture: None,
        };
        let mut spec = ExperimentSpec::new(gen, SweepVar::N, vec![20, 40]);
        spec.methods = vec![Method::Fot, Method::Ot];
        spec.replicates = 2;
        spec.base = FotConfig::new(2, 0.1, 0);
        spec.record_runtime = false;
        spec
    }

    #[test]
    fn factorial_row_count_and_order() {
        let spec = small_spec();
        let rows = run_sweep(&spec).unwrap();
        assert_eq!(rows.len(), 2 * 2 * 2);
        let keys: Vec<(usize, Method, usize)> = rows
            .iter()
            .map(|r| (r.value, r.method, r.replicate))
            .collect();
        let mut sorted = keys.clone();
        sorted.sort();
        assert_eq!(keys, sorted);
        assert!(rows.iter().all(|r| r.ok() && r.ground_truth == Some(8.0)));
        assert_eq!(rows[0].seed, 7);
        assert_eq!(rows[1].seed, 8);
    }

    #[test]
    fn output_is_reproducible() {
        let spec = small_spec();
        let a = sweep_csv(&spec, &run_sweep(&spec).unwrap());
        let b = sweep_csv(&spec, &run_sweep(&spec).unwrap());
        assert_eq!(a, b);
        assert!(a.starts_with("# fot-sweep schema=1"));
        assert_eq!(a.lines().nth(1), Some(CSV_HEADER));
    }

    #[test]
    fn rows_match_single_estimates() {
        let spec = small_spec();
        let rows = run_sweep(&spec).unwrap();
        let r = &rows[3];
        let (gen, cfg) = spec.cell(r.value, r.replicate);
        let (a, b) = gen.generate().unwrap();
        let (e, _) = estimate_with(
            &a.measure,
            &b.measure,
            r.method,
            &cfg,
            &spec.sinkhorn,
            spec.exact_cap,
        )
        .unwrap();
        assert_eq!(Some(e), r.estimate);
    }

    #[test]
    fn failures_become_rows() {
        let mut spec = small_spec();
        spec.values = vec![1];
        spec.base = FotConfig::new(3, 0.1, 0);
        let rows = run_sweep(&spec).unwrap();
        let fot: Vec<&SweepRow> = rows.iter().filter(|r| r.method == Method::Fot).collect();
        assert!(fot.iter().all(|r| !r.ok()));
        assert!(rows
            .iter()
            .filter(|r| r.method == Method::Ot)
            .all(|r| r.ok()));
        let csv = sweep_csv(&spec, &rows);
        assert!(csv.contains(",error: "));
        assert_eq!(summarize(&rows).iter().map(|s| s.failed).sum::<usize>(), 2);
    }

    #[test]
    fn d_sweep_ties_sample_size() {
        let mut spec = small_spec();
        spec.sweep = SweepVar::D;
        spec.n_per_dim = Some(10);
        let (gen, _) = spec.cell(4, 0);
        assert_eq!((gen.d, gen.n), (4, 40));
        spec.sweep = SweepVar::K;
        let (_, cfg) = spec.cell(5, 1);
        assert_eq!((cfg.k, cfg.seed), (5, 8));
    }

    #[test]
    fn rejects_nn_only_and_empty_grids() {
        let mut spec = small_spec();
        spec.methods = vec![Method::NnOnly];
        assert!(run_sweep(&spec).is_err());
        let mut spec = small_spec();
        spec.values.clear();
        assert!(run_sweep(&spec).is_err());
    }

    #[test]
    fn record_has_plug_in_when_small() {
        let gen = GenSpec {
            kind: GenKind::Hypercube,
            d: 2,
            n: 10,
            seed: 1,
            mixture: None,
        };
        let (a, b) = gen.generate().unwrap();
        let r = estimate_record(
            &a.measure,
            &b.measure,
            Method::Fot,
            &FotConfig::new(2, 0.1, 1),
            &SinkhornConfig::default(),
            DEFAULT_EXACT_CAP,
        )
        .unwrap();
        assert!(r.plug_in_cost.is_some());
        assert_eq!((r.n0, r.n1, r.d, r.k), (10, 10, 2, Some(2)));
        let big = estimate_record(
            &a.measure,
            &b.measure,
            Method::Kot,
            &FotConfig::new(2, 0.1, 1),
            &SinkhornConfig::default(),
            10,
        )
        .unwrap();
        assert_eq!(big.plug_in_cost, None);
    }
}

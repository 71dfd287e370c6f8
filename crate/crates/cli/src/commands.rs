use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::Serialize;

use fot_core::adapt::{adapt_labels, AdaptParams, Method, DEFAULT_KNN};
use fot_core::exact::DEFAULT_EXACT_CAP;
use fot_core::experiment::{
    estimate_record, run_sweep, summarize, sweep_csv, ExperimentSpec, SweepVar, DEFAULT_N_GRID,
};
use fot_core::measures::{load_csv, to_csv_string, CsvOptions};
use fot_core::synth::{GenKind, GenSpec, MixtureParams};
use fot_core::{Error, FotConfig, LabeledDataset, SinkhornConfig};

use crate::config::FileConfig;
use crate::{AdaptArgs, EstimateArgs, GenArgs, GeneratorArgs, SolverArgs, SweepArgs};

const DEFAULT_EPSILON: f64 = 0.1;
const DEFAULT_D: usize = 30;
const DEFAULT_N: usize = 300;

fn fot_config(s: &SolverArgs, f: &FileConfig) -> FotConfig {
    let base = FotConfig::default();
    let mut cfg = FotConfig::new(
        s.k.or(f.k).unwrap_or(base.k),
        s.epsilon.or(f.epsilon).unwrap_or(DEFAULT_EPSILON),
        s.seed.or(f.seed).unwrap_or(0),
    );
    if let Some(t) = s.tol.or(f.tol) {
        cfg.sinkhorn.tol = t;
    }
    if let Some(m) = s.max_iter.or(f.max_iter) {
        cfg.sinkhorn.max_iter = m;
    }
    cfg.outer_tol = s.outer_tol.or(f.outer_tol).unwrap_or(base.outer_tol);
    cfg.outer_max_iter = s
        .outer_max_iter
        .or(f.outer_max_iter)
        .unwrap_or(base.outer_max_iter);
    cfg
}

/// Settings of the standalone `sinkhorn` method.
fn sinkhorn_config(s: &SolverArgs, f: &FileConfig) -> SinkhornConfig {
    let mut cfg = SinkhornConfig::with_epsilon(s.epsilon.or(f.epsilon).unwrap_or(DEFAULT_EPSILON));
    if let Some(t) = s.tol.or(f.tol) {
        cfg.tol = t;
    }
    if let Some(m) = s.max_iter.or(f.max_iter) {
        cfg.max_iter = m;
    }
    cfg
}

fn exact_cap(s: &SolverArgs, f: &FileConfig) -> usize {
    s.exact_cap.or(f.exact_cap).unwrap_or(DEFAULT_EXACT_CAP)
}

fn gen_spec(g: &GeneratorArgs, f: &FileConfig, seed: u64) -> Result<GenSpec> {
    let kind: GenKind = g
        .generator
        .as_deref()
        .or(f.generator.as_deref())
        .unwrap_or("hypercube")
        .parse()?;
    let mixture = (kind == GenKind::GaussianMixture).then(|| {
        let m = MixtureParams::default();
        MixtureParams {
            components: g.components.or(f.components).unwrap_or(m.components),
            sigma: g.sigma.or(f.sigma).unwrap_or(m.sigma),
            separation: g.separation.or(f.separation).unwrap_or(m.separation),
            shift: g.shift.or(f.shift).unwrap_or(m.shift),
        }
    });
    let spec = GenSpec {
        kind,
        d: g.d.or(f.d).unwrap_or(DEFAULT_D),
        n: g.n.or(f.n).unwrap_or(DEFAULT_N),
        seed,
        mixture,
    };
    spec.validate()?;
    Ok(spec)
}

fn method(arg: &Option<String>, f: &FileConfig, default: Method) -> Result<Method> {
    match arg.as_deref().or(f.method.as_deref()) {
        Some(s) => Ok(s.trim().parse()?),
        None => Ok(default),
    }
}

fn check_writable(path: &Path, force: bool) -> Result<()> {
    if path.exists() && !force {
        bail!(
            "{} already exists (use --force to overwrite)",
            path.display()
        );
    }
    Ok(())
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn load(path: &Path, opts: CsvOptions) -> Result<LabeledDataset> {
    load_csv(path, opts).with_context(|| format!("reading {}", path.display()))
}

pub fn gen(a: &GenArgs, f: &FileConfig) -> Result<()> {
    let spec = gen_spec(&a.gen, f, a.seed.or(f.seed).unwrap_or(0))?;
    let source = a.out.join("source.csv");
    let target = a.out.join("target.csv");
    check_writable(&source, a.force)?;
    check_writable(&target, a.force)?;
    let (x, y) = spec.generate()?;
    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    write_file(&source, &to_csv_string(&x, None))?;
    write_file(&target, &to_csv_string(&y, None))?;
    println!("{}\n{}", source.display(), target.display());
    Ok(())
}

pub fn estimate(a: &EstimateArgs, f: &FileConfig) -> Result<()> {
    let opts = CsvOptions {
        has_labels: a.input.labels || f.labels.unwrap_or(false),
        header: a.input.header || f.header.unwrap_or(false),
    };
    let x = load(&a.source, opts)?;
    let y = load(&a.target, opts)?;
    let m = method(&a.method, f, Method::Fot)?;
    let cap = exact_cap(&a.solver, f);
    let entries = x.measure.len().saturating_mul(y.measure.len());
    if m == Method::Ot && !a.allow_approx && entries > cap {
        return Err(Error::Capacity { entries, cap }.into());
    }
    let rec = estimate_record(
        &x.measure,
        &y.measure,
        m,
        &fot_config(&a.solver, f),
        &sinkhorn_config(&a.solver, f),
        cap,
    )?;
    println!("{}", serde_json::to_string_pretty(&rec)?);
    Ok(())
}

fn default_values(sweep: SweepVar) -> Vec<usize> {
    match sweep {
        SweepVar::N => DEFAULT_N_GRID.to_vec(),
        SweepVar::D => vec![10, 20, 30],
        SweepVar::K => (2..=8).collect(),
    }
}

pub fn sweep(a: &SweepArgs, f: &FileConfig) -> Result<()> {
    check_writable(&a.out, a.force)?;
    let base = fot_config(&a.solver, f);
    let generator = gen_spec(&a.gen, f, base.seed)?;
    let var: SweepVar = a
        .sweep
        .as_deref()
        .or(f.sweep.as_deref())
        .unwrap_or("n")
        .parse()?;
    let values = a
        .values
        .clone()
        .or_else(|| f.values.clone())
        .unwrap_or_else(|| default_values(var));
    let methods = a
        .method
        .as_deref()
        .or(f.method.as_deref())
        .unwrap_or("fot")
        .split(',')
        .map(|s| s.trim().parse::<Method>())
        .collect::<fot_core::Result<Vec<_>>>()?;

    let mut spec = ExperimentSpec::new(generator, var, values);
    spec.methods = methods;
    spec.replicates = a.replicates.or(f.replicates).unwrap_or(spec.replicates);
    spec.base = base;
    spec.sinkhorn = sinkhorn_config(&a.solver, f);
    spec.n_per_dim = a.n_per_dim.or(f.n_per_dim);
    spec.exact_cap = exact_cap(&a.solver, f);
    spec.record_runtime = !a.no_runtime;

    let rows = run_sweep(&spec)?;
    write_file(&a.out, &sweep_csv(&spec, &rows))?;
    for c in summarize(&rows) {
        let fmt = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.4}"));
        eprintln!(
            "{}={:<6} {:<9} mean {:>10}  mean |err| {:>10}  ok {}/{}",
            var,
            c.value,
            c.method,
            fmt(Some(c.mean_estimate).filter(|v| v.is_finite())),
            fmt(c.mean_abs_error),
            c.succeeded,
            c.succeeded + c.failed
        );
    }
    let failed = rows.iter().filter(|r| !r.ok()).count();
    if failed > 0 {
        bail!(
            "{failed} of {} sweep rows failed; see the status column of {}",
            rows.len(),
            a.out.display()
        );
    }
    Ok(())
}

#[derive(Serialize)]
struct AdaptReport {
    method: String,
    n0: usize,
    n1: usize,
    knn: usize,
    error_rate: Option<f64>,
}

pub fn adapt(a: &AdaptArgs, f: &FileConfig) -> Result<()> {
    check_writable(&a.out, a.force)?;
    let header = a.header || f.header.unwrap_or(false);
    let opts = CsvOptions {
        has_labels: true,
        header,
    };
    let x = load(&a.source, opts)?;
    let y = load(&a.target, opts)?;
    let m = method(&a.method, f, Method::Fot)?;
    let params = AdaptParams {
        fot: fot_config(&a.solver, f),
        sinkhorn: sinkhorn_config(&a.solver, f),
        exact_cap: exact_cap(&a.solver, f),
        knn_k: a.knn.or(f.knn).unwrap_or(DEFAULT_KNN),
    };
    let res = adapt_labels(&x, &y, m, &params)?;

    let mut out = String::new();
    if header {
        let text = fs::read_to_string(&a.source)?;
        out.push_str(text.lines().next().unwrap_or_default().trim_end());
        out.push_str(",predicted\n");
    }
    out.push_str(&to_csv_string(&x, Some(&res.predicted_labels)));
    write_file(&a.out, &out)?;

    let report = AdaptReport {
        method: m.to_string(),
        n0: x.measure.len(),
        n1: y.measure.len(),
        knn: params.knn_k,
        error_rate: res.error_rate,
    };
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

//! Optional JSON config file. Keys mirror the long flag names with
//! underscores; a flag given on the command line wins over the file.

use std::path::Path;

use anyhow::{Context, Result};
use serde::Deserialize;

#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub k: Option<usize>,
    pub epsilon: Option<f64>,
    pub tol: Option<f64>,
    pub max_iter: Option<usize>,
    pub outer_tol: Option<f64>,
    pub outer_max_iter: Option<usize>,
    pub seed: Option<u64>,
    /// One method, or a comma-separated list for sweeps.
    pub method: Option<String>,
    pub replicates: Option<usize>,
    pub sweep: Option<String>,
    pub values: Option<Vec<usize>>,
    pub generator: Option<String>,
    pub d: Option<usize>,
    pub n: Option<usize>,
    pub n_per_dim: Option<usize>,
    pub knn: Option<usize>,
    pub exact_cap: Option<usize>,
    pub header: Option<bool>,
    pub labels: Option<bool>,
    pub components: Option<usize>,
    pub sigma: Option<f64>,
    pub separation: Option<f64>,
    pub shift: Option<f64>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }
}

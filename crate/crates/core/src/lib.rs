// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod adapt;
pub mod baselines;
pub mod error;
pub mod estimator;
pub mod exact;
pub mod experiment;
pub mod factored;
pub mod kmeans;
pub mod measures;
pub mod sinkhorn;
pub mod synth;

pub use error::{Error, Result};
pub use estimator::{FactoredCoupling, ResultRecord, SoftPartition};
pub use factored::{BarycenterSolution, FotConfig, HubSet, InitPolicy};
pub use measures::{DiscreteMeasure, LabeledDataset, TransportPlan};
pub use sinkhorn::{EpsilonSchedule, SinkhornConfig};

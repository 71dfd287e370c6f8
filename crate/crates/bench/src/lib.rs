//! Fixtures shared by the solver benchmarks in `benches/`.

use fot_core::synth::{GenKind, GenSpec};
use fot_core::DiscreteMeasure;

/// Source and target samples of the fragmented hypercube instance.
pub fn hypercube(d: usize, n: usize, seed: u64) -> (DiscreteMeasure, DiscreteMeasure) {
    let spec = GenSpec {
        kind: GenKind::Hypercube,
        d,
        n,
        seed,
        mixture: None,
    };
    let (a, b) = spec.generate().expect("valid generator spec");
    (a.measure, b.measure)
}

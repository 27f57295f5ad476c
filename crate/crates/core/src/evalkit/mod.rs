//! Evaluation: multi-label AP, linear probing on frozen features, view
//! overlap statistics, hyperparameter sweeps and proposal throughput.

mod ap;
mod bench;
mod features;
mod overlap;
mod probe;
mod sweep;

pub use ap::{average_precision, mean_defined};
pub use bench::{bench_proposals, BenchReport};
pub use features::{center_view, extract_features, label_matrix};
pub use overlap::{covered_fraction, overlap_report, OverlapItem, OverlapReport};
pub use probe::{linear_probe, score_report, LinearProbe, ProbeConfig, ProbeReport};
pub use sweep::{sweep, SweepOutcome, SweepParam, SweepRow, SweepSpec, SWEEP_HEADER};

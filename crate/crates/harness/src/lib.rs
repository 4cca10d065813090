//! Instance generation, IDX ingestion and experiment sweeps on top of
//! `uot-core`, plus the `uot` command-line tool.

pub mod datasets;
pub mod error;
pub mod experiment;
pub mod plan;

pub use datasets::{gen_gaussian_pair, load_mnist_idx, pair_seed};
pub use error::{HarnessError, Result};
pub use experiment::{compare_projections, run_experiment, CellStatus, ProjectionStats, Summary, Table1Mark};
pub use plan::{Dataset, ExperimentPlan};

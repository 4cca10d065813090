//! Unbalanced optimal transport with ℓ2 or KL marginal penalties, solved by
//! first-order methods with dynamic safe screening.
//!
//! Entries of the transport plan that are provably zero at the optimum are
//! removed while the solver runs. Each removal is certified by a safe region
//! around the dual optimum built from the current duality gap.

pub mod error;
pub mod oracle;
pub mod penalties;
pub mod problem;
pub mod projection;
pub mod regions;
pub mod screening;
pub mod solvers;
pub mod trace;

pub use error::{Result, UotError};
pub use penalties::{dual_from_primal, PenaltyModel};
pub use problem::{
    apply_x, apply_xt, duality_gap, flat_index, pair_index, primal_objective, PenaltyKind, Problem,
    ScreeningState,
};
pub use projection::{residuals_rescale, shifting_projection, ProjectionKind};
pub use screening::ScreenMethod;
pub use solvers::{run_with_screening, RunResult, SolverConfig, SolverKind};
pub use trace::IterateTrace;

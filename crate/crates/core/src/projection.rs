//! Maps an arbitrary dual candidate into the feasible polytope
//! `{alpha_i + beta_j <= lambda c_ij}` restricted to the active entries.

use serde::{Deserialize, Serialize};

use crate::error::{Result, UotError};
use crate::problem::ScreeningState;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProjectionKind {
    /// Shift every row and column by half its worst slack, unconditionally.
    Shift,
    /// Shift only rows and columns with a violated constraint.
    ClampedShift,
    /// Scale the whole point by the worst constraint ratio.
    Rescale,
}

impl std::str::FromStr for ProjectionKind {
    type Err = UotError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "shift" => Ok(ProjectionKind::Shift),
            "clamped-shift" => Ok(ProjectionKind::ClampedShift),
            "rescale" => Ok(ProjectionKind::Rescale),
            other => Err(UotError::InvalidProblem(format!("unknown projection '{other}'"))),
        }
    }
}

pub fn project(
    kind: ProjectionKind,
    theta: &[f64],
    lambda: f64,
    state: &ScreeningState,
) -> Result<Vec<f64>> {
    match kind {
        ProjectionKind::Shift => shifting_projection(theta, lambda, state),
        ProjectionKind::ClampedShift => clamped_shifting_projection(theta, lambda, state),
        ProjectionKind::Rescale => residuals_rescale(theta, lambda, state),
    }
}

/// `theta / max(1, max_p (alpha_i + beta_j) / (lambda c_p))` over active `p`.
pub fn residuals_rescale(theta: &[f64], lambda: f64, state: &ScreeningState) -> Result<Vec<f64>> {
    state.check_dual_len(theta.len())?;
    check_finite(theta)?;
    let n = state.n();
    let mut scale = 1.0_f64;
    for k in 0..state.active_len() {
        let num = theta[state.rows()[k]] + theta[n + state.cols()[k]];
        if num <= 0.0 {
            continue;
        }
        let bound = lambda * state.cost()[k];
        if bound == 0.0 {
            return Err(UotError::DegenerateRescaling {
                index: state.active()[k],
            });
        }
        scale = scale.max(num / bound);
    }
    Ok(theta.iter().map(|v| v / scale).collect())
}

/// Subtracts from each row (column) coordinate half the largest slack
/// `alpha_u + beta_v - lambda c_uv` over the active entries of that row
/// (column). Rows or columns without active entries are left unchanged.
pub fn shifting_projection(theta: &[f64], lambda: f64, state: &ScreeningState) -> Result<Vec<f64>> {
    shift_impl(theta, lambda, state, f64::NEG_INFINITY)
}

/// Like [`shifting_projection`] but never moves a row or column whose
/// constraints already hold, so feasible points are fixed.
pub fn clamped_shifting_projection(
    theta: &[f64],
    lambda: f64,
    state: &ScreeningState,
) -> Result<Vec<f64>> {
    shift_impl(theta, lambda, state, 0.0)
}

fn shift_impl(theta: &[f64], lambda: f64, state: &ScreeningState, floor: f64) -> Result<Vec<f64>> {
    state.check_dual_len(theta.len())?;
    check_finite(theta)?;
    let n = state.n();
    let mut worst = vec![f64::NEG_INFINITY; theta.len()];
    for k in 0..state.active_len() {
        let (i, j) = (state.rows()[k], n + state.cols()[k]);
        let slack = theta[i] + theta[j] - lambda * state.cost()[k];
        worst[i] = worst[i].max(slack);
        worst[j] = worst[j].max(slack);
    }
    Ok(theta
        .iter()
        .zip(&worst)
        .map(|(&v, &w)| if w == f64::NEG_INFINITY { v } else { v - 0.5 * w.max(floor) })
        .collect())
}

fn check_finite(theta: &[f64]) -> Result<()> {
    if theta.iter().any(|v| !v.is_finite()) {
        return Err(UotError::NonFinite("dual point"));
    }
    Ok(())
}

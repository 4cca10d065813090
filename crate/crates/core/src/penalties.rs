//! Penalty-specific divergence, dual function and primal-dual link.
//!
//! Every quantity here lives in marginal space (length `n + m`). The dual of
//! the penalized problem is `D(theta) = -h*(-theta)` restricted to the
//! polytope `{alpha_i + beta_j <= lambda c_ij}`; only the smooth part is
//! computed in this module.

use crate::error::{Result, UotError};
use crate::problem::{apply_x, PenaltyKind, Problem, ScreeningState};

/// Exponent arguments are clamped to this magnitude before `exp`.
pub const EXP_CLAMP: f64 = 700.0;

#[derive(Debug, Clone, PartialEq)]
pub struct PenaltyModel {
    pub kind: PenaltyKind,
    pub y: Vec<f64>,
    pub epsilon: f64,
}

/// A value together with a flag raised when an exponent had to be clamped.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Flagged {
    pub value: f64,
    pub clamped: bool,
}

#[inline]
fn clamp_exp_arg(x: f64) -> (f64, bool) {
    if x > EXP_CLAMP {
        (EXP_CLAMP, true)
    } else if x < -EXP_CLAMP {
        (-EXP_CLAMP, true)
    } else {
        (x, false)
    }
}

/// `y * e^{-theta}` with the exponent clamped.
#[inline]
pub(crate) fn y_exp_neg(y: f64, theta: f64) -> f64 {
    y * (-clamp_exp_arg(theta).0).exp()
}

impl PenaltyModel {
    pub fn new(kind: PenaltyKind, y: Vec<f64>, epsilon: f64) -> Result<Self> {
        if y.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(UotError::Domain("marginals must be finite and nonnegative".into()));
        }
        if kind == PenaltyKind::Kl {
            let min_y = y.iter().cloned().fold(f64::INFINITY, f64::min);
            if !(epsilon >= 0.0 && epsilon < min_y) {
                return Err(UotError::Domain(format!(
                    "KL shift {epsilon} must lie in [0, min(y) = {min_y})"
                )));
            }
        }
        Ok(PenaltyModel { kind, y, epsilon })
    }

    /// Builds the model of a validated problem without re-checking it.
    pub fn from_problem(problem: &Problem) -> Self {
        PenaltyModel {
            kind: problem.penalty,
            y: problem.y(),
            epsilon: problem.epsilon,
        }
    }

    pub fn dim(&self) -> usize {
        self.y.len()
    }

    fn check_len(&self, what: &'static str, got: usize) -> Result<()> {
        if got != self.y.len() {
            return Err(UotError::Dimension {
                what,
                expected: self.y.len(),
                got,
            });
        }
        Ok(())
    }

    /// `D_phi(z, y)`. KL returns `+inf` when some `y_j = 0` receives mass.
    pub fn divergence(&self, z: &[f64]) -> Result<f64> {
        self.check_len("z", z.len())?;
        if let Some(v) = z.iter().find(|v| v.is_nan() || **v < 0.0) {
            return Err(UotError::Domain(format!("divergence argument must be >= 0, found {v}")));
        }
        let value = match self.kind {
            PenaltyKind::L2 => 0.5 * z.iter().zip(&self.y).map(|(z, y)| (z - y).powi(2)).sum::<f64>(),
            PenaltyKind::Tv => z.iter().zip(&self.y).map(|(z, y)| (z - y).abs()).sum(),
            PenaltyKind::Kl => z
                .iter()
                .zip(&self.y)
                .map(|(&z, &y)| kl_term(z + self.epsilon, y))
                .sum(),
        };
        Ok(value)
    }

    /// Gradient of `z -> D_phi(z, y)`; TV returns a subgradient.
    pub fn divergence_gradient(&self, z: &[f64]) -> Result<Vec<f64>> {
        self.check_len("z", z.len())?;
        Ok(match self.kind {
            PenaltyKind::L2 => z.iter().zip(&self.y).map(|(z, y)| z - y).collect(),
            PenaltyKind::Tv => z
                .iter()
                .zip(&self.y)
                .map(|(z, y)| if z > y { 1.0 } else if z < y { -1.0 } else { 0.0 })
                .collect(),
            PenaltyKind::Kl => z
                .iter()
                .zip(&self.y)
                .map(|(&z, &y)| ((z + self.epsilon) / y).ln())
                .collect(),
        })
    }

    pub fn dual_value(&self, theta: &[f64]) -> f64 {
        self.dual_value_flagged(theta).value
    }

    /// Dual objective; for TV the `-inf` sentinel marks points outside the
    /// open unit box.
    pub fn dual_value_flagged(&self, theta: &[f64]) -> Flagged {
        debug_assert_eq!(theta.len(), self.y.len());
        match self.kind {
            PenaltyKind::L2 => Flagged {
                value: theta
                    .iter()
                    .zip(&self.y)
                    .map(|(t, y)| y * t - 0.5 * t * t)
                    .sum(),
                clamped: false,
            },
            PenaltyKind::Tv => {
                let value = if theta.iter().all(|t| t.abs() < 1.0) {
                    theta.iter().zip(&self.y).map(|(t, y)| t * y).sum()
                } else {
                    f64::NEG_INFINITY
                };
                Flagged { value, clamped: false }
            }
            PenaltyKind::Kl => {
                let mut clamped = false;
                let mut value = 0.0;
                for (&t, &y) in theta.iter().zip(&self.y) {
                    let (arg, c) = clamp_exp_arg(-t);
                    clamped |= c;
                    value += y - y * arg.exp() - self.epsilon * t;
                }
                Flagged { value, clamped }
            }
        }
    }

    pub fn dual_gradient(&self, theta: &[f64]) -> Vec<f64> {
        match self.kind {
            PenaltyKind::L2 => self.y.iter().zip(theta).map(|(y, t)| y - t).collect(),
            PenaltyKind::Kl => self
                .y
                .iter()
                .zip(theta)
                .map(|(&y, &t)| y_exp_neg(y, t) - self.epsilon)
                .collect(),
            PenaltyKind::Tv => self.y.clone(),
        }
    }

    pub fn hessian_diag(&self, theta: &[f64]) -> Vec<f64> {
        match self.kind {
            PenaltyKind::L2 => vec![-1.0; theta.len()],
            PenaltyKind::Kl => self.y.iter().zip(theta).map(|(&y, &t)| -y_exp_neg(y, t)).collect(),
            PenaltyKind::Tv => vec![0.0; theta.len()],
        }
    }

    /// `theta = -grad h(z)` for marginal sums `z = X t`. The result is not
    /// feasible in general. KL with `y_j = 0` yields `-inf` at `j`.
    pub fn dual_from_marginals(&self, z: &[f64]) -> Result<Vec<f64>> {
        self.check_len("z", z.len())?;
        match self.kind {
            PenaltyKind::L2 => Ok(self.y.iter().zip(z).map(|(y, z)| y - z).collect()),
            PenaltyKind::Kl => Ok(self
                .y
                .iter()
                .zip(z)
                .map(|(&y, &z)| (y / (z + self.epsilon)).ln())
                .collect()),
            PenaltyKind::Tv => Err(UotError::Unsupported {
                what: "primal-dual link".into(),
                penalty: self.kind,
            }),
        }
    }
}

/// `w ln(w / y) - w + y` with the `0 ln 0 = 0` convention.
#[inline]
pub(crate) fn kl_term(w: f64, y: f64) -> f64 {
    if w == 0.0 {
        y
    } else if y == 0.0 {
        f64::INFINITY
    } else {
        w * (w / y).ln() - w + y
    }
}

/// `theta = -grad h(X t)` for the current active transport vector.
///
/// Under KL with `epsilon = 0`, an empty marginal would give `+inf`; it is
/// capped at [`EXP_CLAMP`], where the dual objective is already flat.
pub fn dual_from_primal(t: &[f64], problem: &Problem, state: &ScreeningState) -> Result<Vec<f64>> {
    let z = apply_x(t, state)?;
    let mut theta = PenaltyModel::from_problem(problem).dual_from_marginals(&z)?;
    if problem.penalty == PenaltyKind::Kl {
        theta.iter_mut().for_each(|v| *v = v.min(EXP_CLAMP));
    }
    Ok(theta)
}

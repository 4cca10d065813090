//! Safe regions: sets guaranteed to contain the dual optimum.
//!
//! All constructors take a feasible dual point `theta_tilde` and a gap value
//! the caller has already made safe against rounding. The KL box uses the
//! primal iterate as well: deleting one marginal coordinate and its incident
//! transport entries yields a restricted primal value that lower-bounds the
//! optimal dual coordinate.

use crate::error::{Result, UotError};
use crate::penalties::{kl_term, PenaltyModel};
use crate::problem::{apply_x, PenaltyKind, Problem, ScreeningState};

/// Relative allowance subtracted from the KL bound constant to absorb the
/// rounding of long sums.
const KL_ROUNDING: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct BallRegion {
    pub center: Vec<f64>,
    pub radius: f64,
}

impl BallRegion {
    /// `radius - ||theta - center||`; nonnegative inside.
    pub fn slack(&self, theta: &[f64]) -> f64 {
        let d2: f64 = theta.iter().zip(&self.center).map(|(a, b)| (a - b).powi(2)).sum();
        self.radius - d2.sqrt()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EllipseRegion {
    pub center: Vec<f64>,
    /// Diagonal of the metric. A zero entry leaves that coordinate unbounded.
    pub metric: Vec<f64>,
    pub radius_sq: f64,
}

impl EllipseRegion {
    /// `sqrt(radius_sq) - ||theta - center||_L`; nonnegative inside.
    pub fn slack(&self, theta: &[f64]) -> f64 {
        let d2: f64 = theta
            .iter()
            .zip(&self.center)
            .zip(&self.metric)
            .map(|((a, b), l)| l * (a - b).powi(2))
            .sum();
        self.radius_sq.sqrt() - d2.sqrt()
    }

    pub fn min_metric(&self) -> f64 {
        self.metric.iter().cloned().fold(f64::INFINITY, f64::min)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoxBounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// Coordinates whose lower bound came from a passed sign check.
    pub low_available: Vec<bool>,
}

impl BoxBounds {
    /// True when no coordinate received a lower bound.
    pub fn is_vacuous(&self) -> bool {
        !self.low_available.iter().any(|v| *v)
    }

    /// Smallest distance from `theta` to a face of the box; negative outside.
    pub fn slack(&self, theta: &[f64]) -> f64 {
        theta
            .iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(v, (lo, hi))| (v - lo).min(hi - v))
            .fold(f64::INFINITY, f64::min)
    }
}

/// Ball of radius `sqrt(2 gap / L)` around `theta_tilde`.
pub fn gap_ball(theta_tilde: &[f64], gap: f64, curvature: f64) -> Result<BallRegion> {
    if !(curvature > 0.0) {
        return Err(UotError::NoCurvature(curvature));
    }
    if gap.is_nan() || gap < 0.0 {
        return Err(UotError::Domain(format!("gap must be nonnegative, found {gap}")));
    }
    Ok(BallRegion {
        center: theta_tilde.to_vec(),
        radius: (2.0 * gap / curvature).sqrt(),
    })
}

/// The ball `{(theta - theta_tilde)^T (theta - y) <= 0}` for the ℓ2 penalty.
pub fn sasvi_ball(theta_tilde: &[f64], model: &PenaltyModel) -> Result<BallRegion> {
    if model.kind != PenaltyKind::L2 {
        return Err(UotError::Unsupported {
            what: "sasvi region".into(),
            penalty: model.kind,
        });
    }
    let center = theta_tilde.iter().zip(&model.y).map(|(a, y)| 0.5 * (a + y)).collect();
    let d2: f64 = theta_tilde.iter().zip(&model.y).map(|(a, y)| (y - a).powi(2)).sum();
    Ok(BallRegion {
        center,
        radius: 0.5 * d2.sqrt(),
    })
}

pub fn gap_ellipse(theta_tilde: &[f64], gap: f64, metric: &[f64]) -> Result<EllipseRegion> {
    if gap.is_nan() || gap < 0.0 {
        return Err(UotError::Domain(format!("gap must be nonnegative, found {gap}")));
    }
    if metric.len() != theta_tilde.len() {
        return Err(UotError::Dimension {
            what: "metric",
            expected: theta_tilde.len(),
            got: metric.len(),
        });
    }
    if metric.iter().any(|l| l.is_nan() || *l < 0.0) {
        return Err(UotError::Domain("metric entries must be nonnegative".into()));
    }
    Ok(EllipseRegion {
        center: theta_tilde.to_vec(),
        metric: metric.to_vec(),
        radius_sq: 2.0 * gap,
    })
}

/// `L_j = y_j e^{-upper_j}`. An infinite upper bound gives `0`, i.e. no
/// curvature information for that coordinate. The exponent is capped so the
/// result can only err towards smaller entries.
pub fn blockwise_metric(upper: &[f64], y: &[f64]) -> Vec<f64> {
    upper
        .iter()
        .zip(y)
        .map(|(&u, &y)| if u == f64::INFINITY { 0.0 } else { y * (-u).min(700.0).exp() })
        .collect()
}

/// `ln((eps - y) / (k - y + eps))`, or `None` when the sign check fails.
pub fn low_from_constant(k: f64, y: f64, epsilon: f64) -> Option<f64> {
    let num = y - epsilon;
    let den = y - epsilon - k;
    if !(num > 0.0 && den > 0.0 && k.is_finite()) {
        return None;
    }
    Some((num / den).ln())
}

/// Per-coordinate lower bounds on the KL dual optimum.
///
/// For coordinate `q`, `K_q = D(theta) - P^q(t)` where `P^q` is the primal
/// value of the instance with marginal `q` and its incident entries deleted,
/// evaluated at the restriction of `t`. Cost is linear in the active count.
pub fn kl_low_bounds(
    theta: &[f64],
    t: &[f64],
    problem: &Problem,
    state: &ScreeningState,
) -> Result<Vec<Option<f64>>> {
    if problem.penalty != PenaltyKind::Kl {
        return Err(UotError::Unsupported {
            what: "KL box bounds".into(),
            penalty: problem.penalty,
        });
    }
    state.check_dual_len(theta.len())?;
    let (n, eps, lambda) = (problem.n, problem.epsilon, problem.lambda);
    let y = problem.y();
    let z = apply_x(t, state)?;
    let h = |k: usize, v: f64| kl_term(v.max(0.0) + eps, y[k]);

    let dual = PenaltyModel::from_problem(problem).dual_value(theta);
    let h_all: Vec<f64> = (0..y.len()).map(|k| h(k, z[k])).collect();
    let h_rows: f64 = h_all[..n].iter().sum();
    let h_cols: f64 = h_all[n..].iter().sum();
    let h_abs: f64 = h_all.iter().map(|v| v.abs()).sum();

    // Per coordinate: cost of incident entries and the change of the
    // opposite block's divergence once those entries are removed.
    let mut incident_cost = vec![0.0; y.len()];
    let mut opposite_delta = vec![0.0; y.len()];
    let mut total_cost = 0.0;
    for k in 0..state.active_len() {
        let (i, j) = (state.rows()[k], n + state.cols()[k]);
        let ct = state.cost()[k] * t[k];
        total_cost += ct;
        incident_cost[i] += ct;
        incident_cost[j] += ct;
        opposite_delta[i] += h(j, z[j] - t[k]) - h_all[j];
        opposite_delta[j] += h(i, z[i] - t[k]) - h_all[i];
    }

    let mut out = Vec::with_capacity(y.len());
    for q in 0..y.len() {
        let (same_block, other_block) = if q < n { (h_rows, h_cols) } else { (h_cols, h_rows) };
        let restricted = lambda * (total_cost - incident_cost[q])
            + (same_block - h_all[q])
            + other_block
            + opposite_delta[q];
        let allowance = KL_ROUNDING * (1.0 + dual.abs() + lambda * total_cost + h_abs);
        let k = dual - restricted - allowance;
        out.push(low_from_constant(k, y[q], eps));
    }
    Ok(out)
}

/// Lower bound on coordinate `j` of the KL dual optimum, if the sign check
/// passes.
pub fn kl_low_bound(
    theta: &[f64],
    t: &[f64],
    j: usize,
    problem: &Problem,
    state: &ScreeningState,
) -> Result<Option<f64>> {
    if j >= problem.dim() {
        return Err(UotError::Dimension {
            what: "coordinate",
            expected: problem.dim(),
            got: j,
        });
    }
    Ok(kl_low_bounds(theta, t, problem, state)?[j])
}

/// Box around the KL dual optimum.
///
/// Upper bounds come from the active constraints paired with the opposite
/// block's lower bounds, and from `theta_hat_k <= ln(y_k / eps)`, which
/// holds because the optimal marginals are nonnegative. Both ends are then
/// enlarged to contain `theta`, so the segment from `theta` to the optimum
/// stays inside.
pub fn kl_box(theta: &[f64], t: &[f64], problem: &Problem, state: &ScreeningState) -> Result<BoxBounds> {
    let lows = kl_low_bounds(theta, t, problem, state)?;
    let (lambda, eps) = (problem.lambda, problem.epsilon);
    let y = problem.y();
    let lower: Vec<f64> = lows.iter().map(|l| l.unwrap_or(f64::NEG_INFINITY)).collect();

    let upper = box_upper(&lower, &y, eps, lambda, state);
    let upper = upper.iter().zip(theta).map(|(u, v)| u.max(*v)).collect();
    let lower = lower.iter().zip(theta).map(|(l, v)| l.min(*v)).collect();
    Ok(BoxBounds {
        lower,
        upper,
        low_available: lows.iter().map(Option::is_some).collect(),
    })
}

/// Upper bounds implied by the active constraints and the lower bounds of
/// the opposite block, capped by `ln(y / eps)`.
fn box_upper(lower: &[f64], y: &[f64], eps: f64, lambda: f64, state: &ScreeningState) -> Vec<f64> {
    let n = state.n();
    let mut upper: Vec<f64> = y
        .iter()
        .map(|&yk| if eps > 0.0 { (yk / eps).ln() } else { f64::INFINITY })
        .collect();
    for k in 0..state.active_len() {
        let (i, j) = (state.rows()[k], n + state.cols()[k]);
        let bound = lambda * state.cost()[k];
        upper[i] = upper[i].min(bound - lower[j]);
        upper[j] = upper[j].min(bound - lower[i]);
    }
    // Guard the subtraction against rounding.
    for u in upper.iter_mut() {
        if u.is_finite() {
            *u += 1e-12 * (1.0 + u.abs());
        }
    }
    upper
}

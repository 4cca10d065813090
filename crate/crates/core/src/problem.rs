//! Problem representation and the implicit index-matrix algebra.
//!
//! A transport plan `T` is `n x m` and is stored row-major as `t`, so entry
//! `(i, j)` lives at `p = i * m + j`. The index matrix `X` stacks the
//! row-sum operator (`n` rows) over the column-sum operator (`m` rows); it is
//! never materialized. Column `p` of `X` has exactly two ones, at `i` and
//! `n + j`, which is all the dual side ever needs.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Result, UotError};
use crate::penalties::PenaltyModel;

/// Largest constraint violation tolerated when a caller asserts feasibility.
pub const FEASIBILITY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PenaltyKind {
    L2,
    Kl,
    Tv,
}

impl fmt::Display for PenaltyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PenaltyKind::L2 => "l2",
            PenaltyKind::Kl => "kl",
            PenaltyKind::Tv => "tv",
        })
    }
}

impl std::str::FromStr for PenaltyKind {
    type Err = UotError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "l2" => Ok(PenaltyKind::L2),
            "kl" => Ok(PenaltyKind::Kl),
            "tv" => Ok(PenaltyKind::Tv),
            other => Err(UotError::InvalidProblem(format!("unknown penalty '{other}'"))),
        }
    }
}

/// A penalized UOT instance: `min_{t >= 0} lambda * c^T t + D(X t, y)`.
///
/// The JSON form is `{n, m, a, b, cost, lambda, penalty, epsilon}` with
/// `cost` row-major of length `n * m`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Problem {
    pub n: usize,
    pub m: usize,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub cost: Vec<f64>,
    pub lambda: f64,
    pub penalty: PenaltyKind,
    #[serde(default)]
    pub epsilon: f64,
}

impl Problem {
    pub fn new(
        a: Vec<f64>,
        b: Vec<f64>,
        cost: Vec<f64>,
        lambda: f64,
        penalty: PenaltyKind,
        epsilon: f64,
    ) -> Result<Self> {
        let problem = Problem {
            n: a.len(),
            m: b.len(),
            a,
            b,
            cost,
            lambda,
            penalty,
            epsilon,
        };
        problem.validate()?;
        Ok(problem)
    }

    pub fn validate(&self) -> Result<()> {
        let invalid = |msg: String| Err(UotError::InvalidProblem(msg));
        if self.n == 0 || self.m == 0 {
            return invalid(format!("empty dimensions {}x{}", self.n, self.m));
        }
        if self.a.len() != self.n {
            return Err(UotError::Dimension {
                what: "a",
                expected: self.n,
                got: self.a.len(),
            });
        }
        if self.b.len() != self.m {
            return Err(UotError::Dimension {
                what: "b",
                expected: self.m,
                got: self.b.len(),
            });
        }
        if self.cost.len() != self.n * self.m {
            return Err(UotError::Dimension {
                what: "cost",
                expected: self.n * self.m,
                got: self.cost.len(),
            });
        }
        for (name, v) in [("a", &self.a), ("b", &self.b), ("cost", &self.cost)] {
            if let Some(x) = v.iter().find(|x| !x.is_finite() || **x < 0.0) {
                return invalid(format!("{name} must be finite and nonnegative, found {x}"));
            }
        }
        if !(self.lambda.is_finite() && self.lambda > 0.0) {
            return invalid(format!("lambda must be positive, found {}", self.lambda));
        }
        if self.penalty == PenaltyKind::Kl {
            let min_y = self.a.iter().chain(&self.b).cloned().fold(f64::INFINITY, f64::min);
            if !(self.epsilon >= 0.0 && self.epsilon < min_y) {
                return invalid(format!(
                    "KL requires 0 <= epsilon < min(y) = {min_y}, found {}",
                    self.epsilon
                ));
            }
        }
        Ok(())
    }

    pub fn y(&self) -> Vec<f64> {
        self.a.iter().chain(&self.b).copied().collect()
    }

    pub fn dim(&self) -> usize {
        self.n + self.m
    }

    pub fn size(&self) -> usize {
        self.n * self.m
    }

    pub fn with_penalty(mut self, penalty: PenaltyKind, lambda: f64, epsilon: f64) -> Result<Self> {
        self.penalty = penalty;
        self.lambda = lambda;
        self.epsilon = epsilon;
        self.validate()?;
        Ok(self)
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let problem: Problem = serde_json::from_str(s)?;
        problem.validate()?;
        Ok(problem)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json_string()?)?;
        Ok(())
    }
}

/// Row and column of flat index `p` (row-major, `p = i * m + j`).
pub fn pair_index(p: usize, n: usize, m: usize) -> Result<(usize, usize)> {
    if p >= n * m {
        return Err(UotError::IndexOutOfRange { index: p, n, m });
    }
    Ok((p / m, p % m))
}

pub fn flat_index(i: usize, j: usize, n: usize, m: usize) -> Result<usize> {
    if i >= n || j >= m {
        return Err(UotError::IndexOutOfRange {
            index: i.saturating_mul(m).saturating_add(j),
            n,
            m,
        });
    }
    Ok(i * m + j)
}

/// Active set bookkeeping for dynamic screening.
///
/// `mask[p]` is true while entry `p` is still active; once cleared it stays
/// cleared. Active entries are kept in increasing flat-index order, with their
/// rows, columns and (unscaled) costs stored alongside so that hot loops never
/// divide.
#[derive(Debug, Clone)]
pub struct ScreeningState {
    n: usize,
    m: usize,
    mask: Vec<bool>,
    active: Vec<usize>,
    rows: Vec<usize>,
    cols: Vec<usize>,
    cost: Vec<f64>,
    screened_count: usize,
}

impl ScreeningState {
    pub fn new(problem: &Problem) -> Self {
        let (n, m) = (problem.n, problem.m);
        let nm = n * m;
        ScreeningState {
            n,
            m,
            mask: vec![true; nm],
            active: (0..nm).collect(),
            rows: (0..nm).map(|p| p / m).collect(),
            cols: (0..nm).map(|p| p % m).collect(),
            cost: problem.cost.clone(),
            screened_count: 0,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    /// Original flat index of every active entry.
    pub fn active(&self) -> &[usize] {
        &self.active
    }

    pub fn rows(&self) -> &[usize] {
        &self.rows
    }

    pub fn cols(&self) -> &[usize] {
        &self.cols
    }

    /// Unscaled costs of the active entries.
    pub fn cost(&self) -> &[f64] {
        &self.cost
    }

    pub fn active_len(&self) -> usize {
        self.active.len()
    }

    pub fn screened_count(&self) -> usize {
        self.screened_count
    }

    pub fn is_active(&self, p: usize) -> bool {
        self.mask.get(p).copied().unwrap_or(false)
    }

    /// Permanently removes `newly_screened` (original flat indices) from the
    /// active set, shrinking `t` in step. Either every index is removed or
    /// nothing changes.
    pub fn compact(&mut self, newly_screened: &[usize], t: &mut Vec<f64>) -> Result<()> {
        self.check_len("t", t.len())?;
        if newly_screened.is_empty() {
            return Ok(());
        }
        let nm = self.n * self.m;
        let mut seen = std::collections::HashSet::with_capacity(newly_screened.len());
        for &p in newly_screened {
            if p >= nm {
                return Err(UotError::IndexOutOfRange {
                    index: p,
                    n: self.n,
                    m: self.m,
                });
            }
            if !self.mask[p] || !seen.insert(p) {
                return Err(UotError::AlreadyScreened(p));
            }
        }
        for &p in newly_screened {
            self.mask[p] = false;
        }
        let mut keep = 0;
        for k in 0..self.active.len() {
            if self.mask[self.active[k]] {
                self.active[keep] = self.active[k];
                self.rows[keep] = self.rows[k];
                self.cols[keep] = self.cols[k];
                self.cost[keep] = self.cost[k];
                t[keep] = t[k];
                keep += 1;
            }
        }
        self.active.truncate(keep);
        self.rows.truncate(keep);
        self.cols.truncate(keep);
        self.cost.truncate(keep);
        t.truncate(keep);
        self.screened_count += newly_screened.len();
        Ok(())
    }

    /// Expands an active-length vector to length `n * m`, with zeros at
    /// screened positions.
    pub fn inflate(&self, t: &[f64]) -> Vec<f64> {
        let mut full = vec![0.0; self.n * self.m];
        for (&p, &v) in self.active.iter().zip(t) {
            full[p] = v;
        }
        full
    }

    /// Restricts a length-`n * m` vector to the active entries.
    pub fn gather(&self, full: &[f64]) -> Vec<f64> {
        self.active.iter().map(|&p| full[p]).collect()
    }

    pub(crate) fn check_len(&self, what: &'static str, got: usize) -> Result<()> {
        if got != self.active.len() {
            return Err(UotError::Dimension {
                what,
                expected: self.active.len(),
                got,
            });
        }
        Ok(())
    }

    pub(crate) fn check_dual_len(&self, got: usize) -> Result<()> {
        if got != self.n + self.m {
            return Err(UotError::Dimension {
                what: "theta",
                expected: self.n + self.m,
                got,
            });
        }
        Ok(())
    }
}

/// `X t`: row sums followed by column sums of the active transport entries.
pub fn apply_x(t: &[f64], state: &ScreeningState) -> Result<Vec<f64>> {
    state.check_len("t", t.len())?;
    let mut out = vec![0.0; state.n + state.m];
    apply_x_into(t, state, &mut out);
    Ok(out)
}

/// Unchecked variant of [`apply_x`] writing into a caller buffer of length `n + m`.
pub(crate) fn apply_x_into(t: &[f64], state: &ScreeningState, out: &mut [f64]) {
    out.iter_mut().for_each(|v| *v = 0.0);
    let n = state.n;
    for ((&i, &j), &v) in state.rows.iter().zip(&state.cols).zip(t) {
        out[i] += v;
        out[n + j] += v;
    }
}

/// `X^T theta` restricted to the active entries: `alpha_i + beta_j`.
pub fn apply_xt(theta: &[f64], state: &ScreeningState) -> Result<Vec<f64>> {
    state.check_dual_len(theta.len())?;
    let n = state.n;
    Ok(state
        .rows
        .iter()
        .zip(&state.cols)
        .map(|(&i, &j)| theta[i] + theta[n + j])
        .collect())
}

/// Largest value of `alpha_i + beta_j - lambda c_p` over the active entries,
/// together with the entry attaining it. `None` when nothing is active.
pub fn max_violation(theta: &[f64], lambda: f64, state: &ScreeningState) -> Option<(usize, f64)> {
    let n = state.n;
    let mut best: Option<(usize, f64)> = None;
    for k in 0..state.active.len() {
        let v = theta[state.rows[k]] + theta[n + state.cols[k]] - lambda * state.cost[k];
        if best.map_or(true, |(_, b)| v > b) {
            best = Some((state.active[k], v));
        }
    }
    best
}

/// `lambda c^T t + D(X t, y)` over the active entries.
pub fn primal_objective(t: &[f64], problem: &Problem, state: &ScreeningState) -> Result<f64> {
    state.check_len("t", t.len())?;
    if t.iter().any(|v| v.is_nan()) {
        return Err(UotError::NonFinite("transport vector"));
    }
    let linear: f64 = state.cost.iter().zip(t).map(|(c, v)| c * v).sum();
    let z = apply_x(t, state)?;
    let model = PenaltyModel::from_problem(problem);
    Ok(problem.lambda * linear + model.divergence(&z)?)
}

/// `P(t) - D(theta)` for a dual point the caller claims is feasible.
pub fn duality_gap(
    t: &[f64],
    theta: &[f64],
    problem: &Problem,
    state: &ScreeningState,
) -> Result<f64> {
    state.check_dual_len(theta.len())?;
    if let Some((index, violation)) = max_violation(theta, problem.lambda, state) {
        if violation > FEASIBILITY_TOL {
            return Err(UotError::InfeasibleDual { index, violation });
        }
    }
    let primal = primal_objective(t, problem, state)?;
    let dual = PenaltyModel::from_problem(problem).dual_value(theta);
    Ok(primal - dual)
}

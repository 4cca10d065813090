//! First-order solvers and the screening outer loop.
//!
//! Every `screen_period` iterations the loop maps the iterate to a dual
//! point, projects it onto the feasible polytope, records the duality gap,
//! stops if the gap is small enough, and otherwise screens and compacts the
//! active set before stepping again.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Result, UotError};
use crate::penalties::{dual_from_primal, PenaltyModel};
use crate::problem::{apply_x_into, PenaltyKind, Problem, ScreeningState};
use crate::projection::{project, ProjectionKind};
use crate::screening::{certified_entries, EventInput, GapInfo, ScreenMethod};
use crate::trace::IterateTrace;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolverKind {
    Fista,
    Mm,
    Cd,
}

impl SolverKind {
    pub const ALL: [SolverKind; 3] = [SolverKind::Fista, SolverKind::Mm, SolverKind::Cd];

    pub fn as_str(self) -> &'static str {
        match self {
            SolverKind::Fista => "fista",
            SolverKind::Mm => "mm",
            SolverKind::Cd => "cd",
        }
    }

    pub fn is_supported(self, penalty: PenaltyKind) -> bool {
        match (self, penalty) {
            (_, PenaltyKind::Tv) => false,
            (SolverKind::Mm, _) => true,
            (SolverKind::Fista | SolverKind::Cd, PenaltyKind::L2) => true,
            (SolverKind::Fista | SolverKind::Cd, PenaltyKind::Kl) => false,
        }
    }

    pub fn check_supported(self, penalty: PenaltyKind) -> Result<()> {
        if self.is_supported(penalty) {
            Ok(())
        } else {
            Err(UotError::Unsupported {
                what: format!("solver '{}'", self.as_str()),
                penalty,
            })
        }
    }

    /// Default stepsize: `1 / (n + m)` for FISTA, `1/2` for MM, unused by CD.
    pub fn default_stepsize(self, n: usize, m: usize) -> f64 {
        match self {
            SolverKind::Fista => 1.0 / (n + m) as f64,
            SolverKind::Mm => 0.5,
            SolverKind::Cd => 1.0,
        }
    }
}

impl std::str::FromStr for SolverKind {
    type Err = UotError;

    fn from_str(s: &str) -> Result<Self> {
        SolverKind::ALL
            .iter()
            .copied()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| UotError::InvalidProblem(format!("unknown solver '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub kind: SolverKind,
    pub max_iters: usize,
    pub gap_tol: f64,
    /// Iterations between two gap evaluations (and screening events).
    pub screen_period: usize,
    pub screen_method: ScreenMethod,
    pub stepsize: Option<f64>,
    pub projection: ProjectionKind,
    /// Seed of the random split used by `sa-ran`.
    pub seed: u64,
    /// Restart FISTA momentum whenever entries are removed. Off by default:
    /// removals happen at most every `screen_period` iterations, and
    /// restarting that often cancels the acceleration.
    #[serde(default)]
    pub restart_on_compaction: bool,
}

impl SolverConfig {
    pub fn new(kind: SolverKind, screen_method: ScreenMethod) -> Self {
        SolverConfig {
            kind,
            max_iters: 100_000,
            gap_tol: 1e-7,
            screen_period: 10,
            screen_method,
            stepsize: None,
            projection: ProjectionKind::ClampedShift,
            seed: 0,
            restart_on_compaction: false,
        }
    }

    pub fn validate(&self, problem: &Problem) -> Result<()> {
        if !(self.gap_tol > 0.0) {
            return Err(UotError::InvalidProblem(format!("gap_tol must be positive, found {}", self.gap_tol)));
        }
        if self.screen_period == 0 {
            return Err(UotError::InvalidProblem("screen period must be at least 1".into()));
        }
        if let Some(s) = self.stepsize {
            if !(s > 0.0 && s.is_finite()) {
                return Err(UotError::InvalidProblem(format!("stepsize must be positive, found {s}")));
            }
        }
        self.kind.check_supported(problem.penalty)?;
        self.screen_method.check_supported(problem.penalty)?;
        Ok(())
    }
}

/// Solver iterate over the active entries.
#[derive(Debug, Clone)]
pub struct Iterate {
    pub t: Vec<f64>,
    /// Extrapolated point (FISTA).
    y: Vec<f64>,
    momentum: f64,
    /// Marginal sums scratch buffer.
    z: Vec<f64>,
    restarts: usize,
}

impl Iterate {
    pub fn new(t: Vec<f64>, dim: usize) -> Self {
        Iterate {
            y: t.clone(),
            t,
            momentum: 1.0,
            z: vec![0.0; dim],
            restarts: 0,
        }
    }

    /// Uniform start with total mass equal to the mean of the two marginal masses.
    pub fn uniform(problem: &Problem) -> Self {
        let mass = 0.5 * (problem.a.iter().sum::<f64>() + problem.b.iter().sum::<f64>());
        let value = mass / problem.size() as f64;
        let value = if value > 0.0 { value } else { 1.0 / problem.size() as f64 };
        Iterate::new(vec![value; problem.size()], problem.dim())
    }

    pub fn reset_momentum(&mut self) {
        self.y.clone_from(&self.t);
        self.momentum = 1.0;
    }

    /// Removes `newly_screened` (original flat indices) from the iterate and
    /// from `state`, keeping the extrapolated point aligned with `t`.
    pub fn compact(&mut self, state: &mut ScreeningState, newly_screened: &[usize]) -> Result<()> {
        let full_y = state.inflate(&self.y);
        state.compact(newly_screened, &mut self.t)?;
        self.y = state.gather(&full_y);
        Ok(())
    }

    /// Number of adaptive FISTA restarts so far.
    pub fn restarts(&self) -> usize {
        self.restarts
    }
}

/// One accelerated proximal-gradient step on the ℓ2 objective, with
/// gradient-based adaptive restart of the momentum.
pub fn fista_step(it: &mut Iterate, problem: &Problem, state: &ScreeningState, stepsize: f64) -> Result<()> {
    if problem.penalty != PenaltyKind::L2 {
        return Err(UotError::Unsupported {
            what: "FISTA".into(),
            penalty: problem.penalty,
        });
    }
    state.check_len("t", it.t.len())?;
    let n = problem.n;
    apply_x_into(&it.y, state, &mut it.z);
    let (a, b) = (&problem.a, &problem.b);
    let mut t_new = Vec::with_capacity(it.t.len());
    for k in 0..it.t.len() {
        let (i, j) = (state.rows()[k], state.cols()[k]);
        let grad = problem.lambda * state.cost()[k] + it.z[i] - a[i] + it.z[n + j] - b[j];
        t_new.push((it.y[k] - stepsize * grad).max(0.0));
    }
    // Restart when the step points against the momentum direction.
    let against: f64 = it
        .y
        .iter()
        .zip(&t_new)
        .zip(&it.t)
        .map(|((y, tn), t)| (y - tn) * (tn - t))
        .sum();
    if against > 0.0 {
        it.momentum = 1.0;
        it.restarts += 1;
    }
    let next = 0.5 * (1.0 + (1.0 + 4.0 * it.momentum * it.momentum).sqrt());
    let beta = (it.momentum - 1.0) / next;
    for k in 0..t_new.len() {
        it.y[k] = t_new[k] + beta * (t_new[k] - it.t[k]);
    }
    it.t = t_new;
    it.momentum = next;
    Ok(())
}

/// One multiplicative majorization-minimization step.
///
/// ℓ2: `t <- t (a_i + b_j) / (R_i + C_j + lambda c)`.
/// KL: `t <- t [a_i b_j / ((R_i + eps)(C_j + eps))]^s e^{-s lambda c}`.
pub fn mm_step(it: &mut Iterate, problem: &Problem, state: &ScreeningState, stepsize: f64) -> Result<()> {
    state.check_len("t", it.t.len())?;
    let n = problem.n;
    apply_x_into(&it.t, state, &mut it.z);
    let (a, b, eps, lambda) = (&problem.a, &problem.b, problem.epsilon, problem.lambda);
    match problem.penalty {
        PenaltyKind::L2 => {
            for k in 0..it.t.len() {
                let (i, j) = (state.rows()[k], state.cols()[k]);
                let den = it.z[i] + it.z[n + j] + lambda * state.cost()[k];
                if den > 0.0 {
                    it.t[k] *= (a[i] + b[j]) / den;
                }
            }
        }
        PenaltyKind::Kl => {
            if a.iter().chain(b).any(|v| *v <= 0.0) {
                return Err(UotError::Degenerate("KL multiplicative update needs positive marginals".into()));
            }
            for k in 0..it.t.len() {
                if it.t[k] == 0.0 {
                    continue;
                }
                let (i, j) = (state.rows()[k], state.cols()[k]);
                let log_ratio = a[i].ln() - (it.z[i] + eps).ln() + b[j].ln() - (it.z[n + j] + eps).ln();
                it.t[k] *= (stepsize * (log_ratio - lambda * state.cost()[k])).exp();
            }
        }
        PenaltyKind::Tv => {
            return Err(UotError::Unsupported {
                what: "MM".into(),
                penalty: PenaltyKind::Tv,
            })
        }
    }
    Ok(())
}

/// One cyclic pass of exact coordinate minimization on the ℓ2 objective.
pub fn cd_step(it: &mut Iterate, problem: &Problem, state: &ScreeningState) -> Result<()> {
    if problem.penalty != PenaltyKind::L2 {
        return Err(UotError::Unsupported {
            what: "coordinate descent".into(),
            penalty: problem.penalty,
        });
    }
    state.check_len("t", it.t.len())?;
    let n = problem.n;
    apply_x_into(&it.t, state, &mut it.z);
    let (a, b) = (&problem.a, &problem.b);
    for k in 0..it.t.len() {
        let (i, j) = (state.rows()[k], state.cols()[k]);
        let grad = problem.lambda * state.cost()[k] + it.z[i] - a[i] + it.z[n + j] - b[j];
        let new = (it.t[k] - 0.5 * grad).max(0.0);
        let delta = new - it.t[k];
        if delta != 0.0 {
            it.t[k] = new;
            it.z[i] += delta;
            it.z[n + j] += delta;
        }
    }
    Ok(())
}

pub fn step(kind: SolverKind, it: &mut Iterate, problem: &Problem, state: &ScreeningState, stepsize: f64) -> Result<()> {
    match kind {
        SolverKind::Fista => fista_step(it, problem, state, stepsize),
        SolverKind::Mm => mm_step(it, problem, state, stepsize),
        SolverKind::Cd => cd_step(it, problem, state),
    }
}

/// What the loop saw at one gap evaluation, handed to observers before the
/// certified entries are removed.
#[derive(Debug, Clone, Copy)]
pub struct EventSnapshot<'a> {
    pub iter: usize,
    pub state: &'a ScreeningState,
    pub t: &'a [f64],
    /// Projected (feasible) dual point.
    pub theta: &'a [f64],
    pub gap: GapInfo,
    pub seed: u64,
    /// Original flat indices about to be screened.
    pub newly_screened: &'a [usize],
}

#[derive(Debug, Clone)]
pub struct RunResult {
    /// Final transport vector of length `n * m`, zero at screened entries.
    pub t: Vec<f64>,
    pub trace: Vec<IterateTrace>,
    pub converged: bool,
    pub iterations: usize,
    pub primal: f64,
    pub gap: f64,
    pub screened: usize,
    /// Final projected dual point.
    pub theta: Vec<f64>,
    pub mask: Vec<bool>,
}

pub fn run_with_screening(problem: &Problem, config: &SolverConfig) -> Result<RunResult> {
    run_observed(problem, config, |_| {})
}

fn event_seed(seed: u64, event: u64) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(event)
}

/// [`run_with_screening`] with a callback at every gap evaluation.
pub fn run_observed<F>(problem: &Problem, config: &SolverConfig, mut observer: F) -> Result<RunResult>
where
    F: FnMut(&EventSnapshot<'_>),
{
    problem.validate()?;
    config.validate(problem)?;
    let start = Instant::now();
    let stepsize = config
        .stepsize
        .unwrap_or_else(|| config.kind.default_stepsize(problem.n, problem.m));
    let model = PenaltyModel::from_problem(problem);
    let mut state = ScreeningState::new(problem);
    let mut it = Iterate::uniform(problem);
    let mut trace = Vec::new();
    let mut iter = 0usize;
    let mut event = 0u64;
    let mut newly = Vec::new();
    loop {
        let raw = dual_from_primal(&it.t, problem, &state)?;
        let theta = project(config.projection, &raw, problem.lambda, &state)?;
        let primal = crate::problem::primal_objective(&it.t, problem, &state)?;
        let dual = model.dual_value_flagged(&theta);
        let gap = GapInfo {
            primal,
            dual: dual.value,
            terms: state.active_len() + problem.dim(),
        };
        trace.push(IterateTrace {
            iter,
            primal,
            dual: dual.value,
            gap: gap.gap(),
            screened: state.screened_count(),
            elapsed_ns: start.elapsed().as_nanos() as u64,
        });
        let converged = gap.gap() <= config.gap_tol;
        let seed = event_seed(config.seed, event);
        event += 1;

        newly.clear();
        if !converged && !dual.clamped && config.screen_method != ScreenMethod::None && state.active_len() > 0 {
            let input = EventInput {
                problem,
                state: &state,
                t: &it.t,
                theta: &theta,
                gap,
                seed,
            };
            newly = certified_entries(config.screen_method, &input)?;
        }
        observer(&EventSnapshot {
            iter,
            state: &state,
            t: &it.t,
            theta: &theta,
            gap,
            seed,
            newly_screened: &newly,
        });

        if converged || iter >= config.max_iters || state.active_len() == 0 {
            return Ok(RunResult {
                t: state.inflate(&it.t),
                trace,
                converged,
                iterations: iter,
                primal,
                gap: gap.gap(),
                screened: state.screened_count(),
                theta,
                mask: state.mask().to_vec(),
            });
        }
        if !newly.is_empty() {
            it.compact(&mut state, &newly)?;
            if config.restart_on_compaction {
                it.reset_momentum();
            }
        }
        let steps = config.screen_period.min(config.max_iters - iter);
        for _ in 0..steps {
            step(config.kind, &mut it, problem, &state, stepsize)?;
        }
        iter += steps;
    }
}

//! Experiment plans, read from JSON.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use uot_core::{PenaltyKind, ProjectionKind, ScreenMethod, SolverKind};

use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dataset {
    Gaussian,
    Mnist,
    File,
}

/// IDX files to draw image pairs from. When `pairs` is empty the plan's
/// `pairs` count of index pairs is drawn from the plan seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MnistSource {
    pub images: PathBuf,
    pub labels: PathBuf,
    #[serde(default)]
    pub pairs: Vec<[usize; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentPlan {
    pub dataset: Dataset,
    #[serde(default = "default_pairs")]
    pub pairs: usize,
    /// Histogram size of generated Gaussian pairs.
    #[serde(default = "default_bins")]
    pub bins: usize,
    /// Problem JSON files, for `dataset = file`.
    #[serde(default)]
    pub files: Vec<PathBuf>,
    #[serde(default)]
    pub mnist: Option<MnistSource>,
    pub lambda_grid: Vec<f64>,
    #[serde(default = "default_penalty")]
    pub penalty: PenaltyKind,
    #[serde(default)]
    pub epsilon: f64,
    #[serde(default = "default_solvers")]
    pub solvers: Vec<SolverKind>,
    pub methods: Vec<ScreenMethod>,
    pub gap_tols: Vec<f64>,
    #[serde(default)]
    pub seed: u64,
    /// Timed runs per cell; the cell time is their median.
    #[serde(default = "default_repeats")]
    pub repeats: usize,
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    #[serde(default = "default_period")]
    pub screen_period: usize,
    #[serde(default = "default_projection")]
    pub projection: ProjectionKind,
    /// Also record shift-vs-rescale gaps along unscreened ℓ2 runs.
    #[serde(default)]
    pub compare_projections: bool,
}

fn default_pairs() -> usize {
    5
}
fn default_bins() -> usize {
    100
}
fn default_penalty() -> PenaltyKind {
    PenaltyKind::L2
}
fn default_solvers() -> Vec<SolverKind> {
    vec![SolverKind::Fista]
}
fn default_repeats() -> usize {
    5
}
fn default_max_iters() -> usize {
    100_000
}
fn default_period() -> usize {
    10
}
fn default_projection() -> ProjectionKind {
    ProjectionKind::ClampedShift
}

impl ExperimentPlan {
    /// A Gaussian plan with every optional field at its default.
    pub fn gaussian(lambda_grid: Vec<f64>, methods: Vec<ScreenMethod>, gap_tols: Vec<f64>) -> Self {
        ExperimentPlan {
            dataset: Dataset::Gaussian,
            pairs: default_pairs(),
            bins: default_bins(),
            files: Vec::new(),
            mnist: None,
            lambda_grid,
            penalty: default_penalty(),
            epsilon: 0.0,
            solvers: default_solvers(),
            methods,
            gap_tols,
            seed: 0,
            repeats: default_repeats(),
            max_iters: default_max_iters(),
            screen_period: default_period(),
            projection: default_projection(),
            compare_projections: false,
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        let plan: ExperimentPlan = serde_json::from_str(&text)?;
        plan.validate()?;
        Ok(plan)
    }

    pub fn validate(&self) -> Result<()> {
        let empty = |name: &str| Err(HarnessError::InvalidPlan(format!("{name} must not be empty")));
        if self.lambda_grid.is_empty() {
            return empty("lambda_grid");
        }
        if self.methods.is_empty() {
            return empty("methods");
        }
        if self.gap_tols.is_empty() {
            return empty("gap_tols");
        }
        if self.solvers.is_empty() {
            return empty("solvers");
        }
        if self.repeats == 0 {
            return Err(HarnessError::InvalidPlan("repeats must be at least 1".into()));
        }
        if self.screen_period == 0 {
            return Err(HarnessError::InvalidPlan("screen_period must be at least 1".into()));
        }
        if let Some(bad) = self.lambda_grid.iter().find(|l| !(**l > 0.0 && l.is_finite())) {
            return Err(HarnessError::InvalidPlan(format!("lambda {bad} is not positive")));
        }
        if let Some(bad) = self.gap_tols.iter().find(|t| !(**t > 0.0)) {
            return Err(HarnessError::InvalidPlan(format!("gap tolerance {bad} is not positive")));
        }
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return Err(HarnessError::InvalidPlan(format!("epsilon {} is invalid", self.epsilon)));
        }
        match self.dataset {
            Dataset::Gaussian if self.pairs == 0 => Err(HarnessError::InvalidPlan("pairs must be at least 1".into())),
            Dataset::File if self.files.is_empty() => empty("files"),
            Dataset::Mnist if self.mnist.is_none() => Err(HarnessError::InvalidPlan("mnist source missing".into())),
            Dataset::Mnist if self.pairs == 0 && self.mnist.as_ref().is_some_and(|s| s.pairs.is_empty()) => {
                Err(HarnessError::InvalidPlan("no MNIST pairs requested".into()))
            }
            _ => Ok(()),
        }
    }
}

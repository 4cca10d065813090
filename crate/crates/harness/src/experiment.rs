//! Sweeps over instances, penalties, solvers and screening methods.
//!
//! Output layout of [`run_experiment`]:
//! - `traces/<cell>.csv`: the solver trace of the first repeat of each cell,
//! - `speedup.csv`: the speed-up table,
//! - `summary.json`: everything, including screening-ratio curves.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use uot_core::penalties::dual_from_primal;
use uot_core::projection::residuals_rescale;
use uot_core::solvers::run_observed;
use uot_core::trace::write_trace_csv;
use uot_core::{
    duality_gap, shifting_projection, IterateTrace, PenaltyKind, Problem, ProjectionKind, RunResult,
    ScreenMethod, SolverConfig, SolverKind, UotError,
};

use crate::datasets::{gen_gaussian_pair, pair_seed, parse_idx_images, problem_from_images};
use crate::error::{HarnessError, Result};
use crate::plan::{Dataset, ExperimentPlan};

/// How the reference support table marks a (method, penalty, projection)
/// combination.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Table1Mark {
    Supported,
    /// Valid in principle, but rescaling fails when some `c_p = 0`.
    DegeneratePossible,
    Unsupported,
    NotListed,
}

pub fn table1_mark(method: ScreenMethod, penalty: PenaltyKind, projection: ProjectionKind) -> Table1Mark {
    use ScreenMethod::*;
    match (penalty, method) {
        (PenaltyKind::Tv, _) => Table1Mark::Unsupported,
        (_, None | Dome | SaRan) => Table1Mark::NotListed,
        (PenaltyKind::L2, Gap | Sa) if projection == ProjectionKind::Rescale => Table1Mark::DegeneratePossible,
        (PenaltyKind::L2, Gap | Sa | GapCtp | SaCtp) => Table1Mark::Supported,
        (PenaltyKind::L2, Ell | EllCtp) => Table1Mark::Unsupported,
        (PenaltyKind::Kl, Ell | GapCtp | EllCtp) => Table1Mark::Supported,
        (PenaltyKind::Kl, Gap | Sa | SaCtp) => Table1Mark::Unsupported,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CellStatus {
    Ok,
    Unsupported,
    Degenerate,
    NotConverged,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupportEntry {
    pub method: ScreenMethod,
    pub penalty: PenaltyKind,
    pub projection: ProjectionKind,
    pub table1: Table1Mark,
    /// Whether this library runs the combination.
    pub library: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub pair: usize,
    pub lambda: f64,
    pub gap_tol: f64,
    pub solver: SolverKind,
    pub method: ScreenMethod,
    pub status: CellStatus,
    pub table1: Table1Mark,
    pub size: usize,
    pub iterations: usize,
    pub primal: Option<f64>,
    pub gap: Option<f64>,
    pub screened: usize,
    /// Wall-clock seconds of every repeat.
    pub seconds: Vec<f64>,
    pub median_seconds: Option<f64>,
    /// Median time without screening over median time with this method.
    pub speedup: Option<f64>,
    pub trace_file: Option<String>,
    pub message: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeedupRow {
    pub lambda: f64,
    pub gap_tol: f64,
    pub solver: SolverKind,
    pub method: ScreenMethod,
    pub table1: Table1Mark,
    /// Pairs with a speed-up (both runs converged).
    pub pairs: usize,
    pub mean: Option<f64>,
    pub median: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatioPoint {
    pub iter: usize,
    pub gap: f64,
    pub ratio: f64,
}

/// Screened fraction against duality gap along one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioCurve {
    pub pair: usize,
    pub lambda: f64,
    pub solver: SolverKind,
    pub method: ScreenMethod,
    pub points: Vec<RatioPoint>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ProjectionStats {
    /// Gap evaluations seen.
    pub iterates: usize,
    /// Evaluations where residual rescaling was defined.
    pub defined: usize,
    /// Defined evaluations where the shifted point had the smaller gap.
    pub shift_wins: usize,
}

impl ProjectionStats {
    pub fn shift_win_fraction(&self) -> Option<f64> {
        (self.defined > 0).then(|| self.shift_wins as f64 / self.defined as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionRow {
    pub pair: usize,
    pub lambda: f64,
    pub stats: ProjectionStats,
    pub shift_win_fraction: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub plan: ExperimentPlan,
    pub support: Vec<SupportEntry>,
    pub cells: Vec<CellResult>,
    pub speedup_table: Vec<SpeedupRow>,
    /// Curves of the runs at the smallest gap tolerance; larger tolerances
    /// produce a prefix of the same run.
    pub ratio_curves: Vec<RatioCurve>,
    pub projection_comparison: Vec<ProjectionRow>,
}

/// Compares, at every gap evaluation of one run, the gaps obtained from the
/// shifting projection and from residual rescaling of the same raw dual
/// point. The run itself uses `config` unchanged.
pub fn compare_projections(problem: &Problem, config: &SolverConfig) -> Result<ProjectionStats> {
    let mut stats = ProjectionStats::default();
    let mut failure: Option<UotError> = None;
    let mut observe = |snap: &uot_core::solvers::EventSnapshot<'_>| -> std::result::Result<(), UotError> {
        let raw = dual_from_primal(snap.t, problem, snap.state)?;
        let shifted = shifting_projection(&raw, problem.lambda, snap.state)?;
        let shift_gap = duality_gap(snap.t, &shifted, problem, snap.state)?;
        stats.iterates += 1;
        match residuals_rescale(&raw, problem.lambda, snap.state) {
            Ok(scaled) => {
                let rescale_gap = duality_gap(snap.t, &scaled, problem, snap.state)?;
                stats.defined += 1;
                if shift_gap <= rescale_gap {
                    stats.shift_wins += 1;
                }
            }
            Err(UotError::DegenerateRescaling { .. }) => {}
            Err(e) => return Err(e),
        }
        Ok(())
    };
    run_observed(problem, config, |snap| {
        if failure.is_none() {
            if let Err(e) = observe(snap) {
                failure = Some(e);
            }
        }
    })?;
    match failure {
        Some(e) => Err(e.into()),
        None => Ok(stats),
    }
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mid = sorted.len() / 2;
    Some(if sorted.len() % 2 == 1 {
        sorted[mid]
    } else {
        0.5 * (sorted[mid - 1] + sorted[mid])
    })
}

fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

/// Base instances of the plan, before the penalty and `lambda` are set.
pub fn plan_instances(plan: &ExperimentPlan) -> Result<Vec<Problem>> {
    match plan.dataset {
        Dataset::Gaussian => (0..plan.pairs)
            .map(|k| gen_gaussian_pair(plan.bins, pair_seed(plan.seed, k)))
            .collect(),
        Dataset::File => plan
            .files
            .iter()
            .map(|f| Problem::load(f).map_err(HarnessError::from))
            .collect(),
        Dataset::Mnist => {
            let source = plan
                .mnist
                .as_ref()
                .ok_or_else(|| HarnessError::InvalidPlan("mnist source missing".into()))?;
            let bytes = std::fs::read(&source.images).map_err(|e| HarnessError::io(&source.images, e))?;
            let images = parse_idx_images(&bytes)?;
            let count = images.pixels.len();
            let pairs = if source.pairs.is_empty() {
                if count < 2 {
                    return Err(HarnessError::InvalidPlan("need at least two images".into()));
                }
                let mut rng = ChaCha8Rng::seed_from_u64(plan.seed);
                (0..plan.pairs)
                    .map(|_| {
                        let a = rng.gen_range(0..count);
                        let b = (a + rng.gen_range(1..count)) % count;
                        [a, b]
                    })
                    .collect()
            } else {
                source.pairs.clone()
            };
            pairs.iter().map(|[a, b]| problem_from_images(&images, *a, *b)).collect()
        }
    }
}

fn trace_name(pair: usize, lambda: f64, gap_tol: f64, solver: SolverKind, method: ScreenMethod) -> String {
    format!("pair{pair:03}_lam{lambda:e}_tol{gap_tol:e}_{}_{}.csv", solver.as_str(), method.as_str())
}

fn ratio_points(trace: &[IterateTrace], size: usize) -> Vec<RatioPoint> {
    trace
        .iter()
        .map(|r| RatioPoint {
            iter: r.iter,
            gap: r.gap,
            ratio: r.screened as f64 / size as f64,
        })
        .collect()
}

struct Timed {
    result: RunResult,
    seconds: f64,
}

fn timed_run(problem: &Problem, config: &SolverConfig) -> std::result::Result<Timed, UotError> {
    let start = Instant::now();
    let result = uot_core::run_with_screening(problem, config)?;
    Ok(Timed {
        result,
        seconds: start.elapsed().as_secs_f64(),
    })
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| HarnessError::io(path, e))
}

/// Runs every cell of `plan` and writes the results under `out_dir`.
///
/// Unsupported and degenerate cells are recorded with their status; only
/// unexpected solver errors abort the sweep. Timing uses the median of
/// `plan.repeats` runs, interleaving methods within each repeat.
pub fn run_experiment(plan: &ExperimentPlan, out_dir: &Path) -> Result<Summary> {
    plan.validate()?;
    let trace_dir: PathBuf = out_dir.join("traces");
    std::fs::create_dir_all(&trace_dir).map_err(|e| HarnessError::io(&trace_dir, e))?;
    let instances = plan_instances(plan)?;
    let penalty = plan.penalty;
    let mut methods = plan.methods.clone();
    if !methods.contains(&ScreenMethod::None) {
        // The baseline is always run so that every cell gets a speed-up.
        methods.insert(0, ScreenMethod::None);
    }
    let smallest_tol = plan.gap_tols.iter().cloned().fold(f64::INFINITY, f64::min);

    let mut cells = Vec::new();
    let mut ratio_curves = Vec::new();
    let mut projection_rows = Vec::new();
    for (pair, base) in instances.iter().enumerate() {
        for &lambda in &plan.lambda_grid {
            let problem = base.clone().with_penalty(penalty, lambda, plan.epsilon)?;
            if plan.compare_projections && penalty == PenaltyKind::L2 {
                let mut config = SolverConfig::new(SolverKind::Fista, ScreenMethod::None);
                config.gap_tol = smallest_tol;
                config.max_iters = plan.max_iters;
                config.screen_period = plan.screen_period;
                let stats = compare_projections(&problem, &config)?;
                projection_rows.push(ProjectionRow {
                    pair,
                    lambda,
                    stats,
                    shift_win_fraction: stats.shift_win_fraction(),
                });
            }
            for &solver in &plan.solvers {
                for &gap_tol in &plan.gap_tols {
                    let mut group: Vec<CellResult> = methods
                        .iter()
                        .map(|&method| CellResult {
                            pair,
                            lambda,
                            gap_tol,
                            solver,
                            method,
                            status: CellStatus::Ok,
                            table1: table1_mark(method, penalty, plan.projection),
                            size: problem.size(),
                            iterations: 0,
                            primal: None,
                            gap: None,
                            screened: 0,
                            seconds: Vec::new(),
                            median_seconds: None,
                            speedup: None,
                            trace_file: None,
                            message: None,
                        })
                        .collect();
                    for repeat in 0..plan.repeats {
                        for cell in group.iter_mut() {
                            if cell.status != CellStatus::Ok && cell.status != CellStatus::NotConverged {
                                continue;
                            }
                            let mut config = SolverConfig::new(solver, cell.method);
                            config.gap_tol = gap_tol;
                            config.max_iters = plan.max_iters;
                            config.screen_period = plan.screen_period;
                            config.projection = plan.projection;
                            config.seed = plan.seed.wrapping_add(repeat as u64);
                            let timed = match timed_run(&problem, &config) {
                                Ok(t) => t,
                                Err(e @ UotError::Unsupported { .. }) => {
                                    cell.status = CellStatus::Unsupported;
                                    cell.message = Some(e.to_string());
                                    continue;
                                }
                                Err(e @ UotError::DegenerateRescaling { .. }) => {
                                    cell.status = CellStatus::Degenerate;
                                    cell.message = Some(e.to_string());
                                    continue;
                                }
                                Err(e) => return Err(e.into()),
                            };
                            cell.seconds.push(timed.seconds);
                            if repeat == 0 {
                                let r = &timed.result;
                                cell.status = if r.converged { CellStatus::Ok } else { CellStatus::NotConverged };
                                cell.iterations = r.iterations;
                                cell.primal = Some(r.primal);
                                cell.gap = Some(r.gap);
                                cell.screened = r.screened;
                                let name = trace_name(pair, lambda, gap_tol, solver, cell.method);
                                let mut buf = Vec::new();
                                write_trace_csv(&r.trace, &mut buf)?;
                                write_file(&trace_dir.join(&name), &buf)?;
                                cell.trace_file = Some(format!("traces/{name}"));
                                if gap_tol == smallest_tol {
                                    ratio_curves.push(RatioCurve {
                                        pair,
                                        lambda,
                                        solver,
                                        method: cell.method,
                                        points: ratio_points(&r.trace, problem.size()),
                                    });
                                }
                            }
                        }
                    }
                    for cell in group.iter_mut() {
                        cell.median_seconds = median(&cell.seconds);
                    }
                    let baseline = group
                        .iter()
                        .find(|c| c.method == ScreenMethod::None && c.status == CellStatus::Ok)
                        .and_then(|c| c.median_seconds);
                    for cell in group.iter_mut() {
                        if cell.status == CellStatus::Ok {
                            cell.speedup = baseline.zip(cell.median_seconds).map(|(b, t)| b / t);
                        }
                    }
                    cells.extend(group);
                }
            }
        }
    }

    let support = support_entries(&methods, penalty, plan.projection);
    let speedup_table = speedup_rows(plan, &methods, &cells);
    write_speedup_csv(&out_dir.join("speedup.csv"), &speedup_table)?;
    let summary = Summary {
        plan: plan.clone(),
        support,
        cells,
        speedup_table,
        ratio_curves,
        projection_comparison: projection_rows,
    };
    let json = serde_json::to_vec_pretty(&summary)?;
    write_file(&out_dir.join("summary.json"), &json)?;
    Ok(summary)
}

fn support_entries(methods: &[ScreenMethod], penalty: PenaltyKind, projection: ProjectionKind) -> Vec<SupportEntry> {
    methods
        .iter()
        .map(|&method| SupportEntry {
            method,
            penalty,
            projection,
            table1: table1_mark(method, penalty, projection),
            library: method.is_supported(penalty),
        })
        .collect()
}

fn speedup_rows(plan: &ExperimentPlan, methods: &[ScreenMethod], cells: &[CellResult]) -> Vec<SpeedupRow> {
    let mut rows = Vec::new();
    for &lambda in &plan.lambda_grid {
        for &gap_tol in &plan.gap_tols {
            for &solver in &plan.solvers {
                for &method in methods {
                    let ratios: Vec<f64> = cells
                        .iter()
                        .filter(|c| c.lambda == lambda && c.gap_tol == gap_tol && c.solver == solver && c.method == method)
                        .filter_map(|c| c.speedup)
                        .collect();
                    rows.push(SpeedupRow {
                        lambda,
                        gap_tol,
                        solver,
                        method,
                        table1: table1_mark(method, plan.penalty, plan.projection),
                        pairs: ratios.len(),
                        mean: mean(&ratios),
                        median: median(&ratios),
                    });
                }
            }
        }
    }
    rows
}

fn write_speedup_csv(path: &Path, rows: &[SpeedupRow]) -> Result<()> {
    let fmt = |v: Option<f64>| v.map(|x| format!("{x:.4}")).unwrap_or_default();
    let mut text = String::from("lambda,gap_tol,solver,method,table1,pairs,mean,median\n");
    for r in rows {
        let mark = serde_json::to_value(r.table1)?;
        text.push_str(&format!(
            "{:e},{:e},{},{},{},{},{},{}\n",
            r.lambda,
            r.gap_tol,
            r.solver.as_str(),
            r.method.as_str(),
            mark.as_str().unwrap_or_default(),
            r.pairs,
            fmt(r.mean),
            fmt(r.median)
        ));
    }
    write_file(path, text.as_bytes())
}

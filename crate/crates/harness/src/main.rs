use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use uot_core::trace::write_trace_csv;
use uot_core::{run_with_screening, PenaltyKind, Problem, ProjectionKind, ScreenMethod, SolverConfig, SolverKind};
use uot_harness::error::{HarnessError, Result};
use uot_harness::{gen_gaussian_pair, load_mnist_idx, pair_seed, run_experiment, ExperimentPlan};

#[derive(Parser)]
#[command(name = "uot", about = "Unbalanced optimal transport with safe screening")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write Gaussian histogram pairs as problem JSON files.
    GenGauss {
        #[arg(long, default_value_t = 100)]
        bins: usize,
        #[arg(long, default_value_t = 1)]
        pairs: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Solve one problem file.
    Solve {
        #[arg(long)]
        problem: PathBuf,
        /// Overrides the penalty stored in the problem file.
        #[arg(long)]
        penalty: Option<PenaltyKind>,
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long)]
        epsilon: Option<f64>,
        #[arg(long, default_value = "fista")]
        solver: SolverKind,
        #[arg(long, default_value = "none")]
        screen: ScreenMethod,
        #[arg(long, default_value_t = 1e-7)]
        gap_tol: f64,
        #[arg(long, default_value_t = 10)]
        period: usize,
        #[arg(long, default_value_t = 100_000)]
        max_iters: usize,
        #[arg(long, default_value = "clamped-shift")]
        projection: ProjectionKind,
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Run an experiment plan.
    Bench {
        #[arg(long)]
        plan: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build a problem from two images of an IDX dataset.
    Mnist {
        #[arg(long)]
        images: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        #[arg(long)]
        a: usize,
        #[arg(long)]
        b: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| HarnessError::Io {
        path: dir.to_path_buf(),
        source: e,
    })
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::GenGauss { bins, pairs, seed, out } => {
            create_dir(&out)?;
            for k in 0..pairs {
                let path = out.join(format!("pair_{k:03}.json"));
                gen_gaussian_pair(bins, pair_seed(seed, k))?.save(&path)?;
                println!("{}", path.display());
            }
        }
        Command::Solve {
            problem,
            penalty,
            lambda,
            epsilon,
            solver,
            screen,
            gap_tol,
            period,
            max_iters,
            projection,
            trace,
        } => {
            let mut p = Problem::load(&problem)?;
            if penalty.is_some() || lambda.is_some() || epsilon.is_some() {
                let pen = penalty.unwrap_or(p.penalty);
                let lam = lambda.unwrap_or(p.lambda);
                let eps = epsilon.unwrap_or(if pen == PenaltyKind::Kl { p.epsilon } else { 0.0 });
                p = p.with_penalty(pen, lam, eps)?;
            }
            let mut config = SolverConfig::new(solver, screen);
            config.gap_tol = gap_tol;
            config.screen_period = period;
            config.max_iters = max_iters;
            config.projection = projection;
            let result = run_with_screening(&p, &config)?;
            if let Some(path) = trace {
                let file = std::fs::File::create(&path).map_err(|e| HarnessError::Io { path: path.clone(), source: e })?;
                write_trace_csv(&result.trace, file)?;
            }
            let report = serde_json::json!({
                "converged": result.converged,
                "iterations": result.iterations,
                "primal": result.primal,
                "gap": result.gap,
                "screened": result.screened,
                "size": p.size(),
            });
            println!("{report}");
            if !result.converged {
                return Err(HarnessError::NonConvergence(format!(
                    "gap {:e} after {} iterations",
                    result.gap, result.iterations
                )));
            }
        }
        Command::Bench { plan, out } => {
            let plan = ExperimentPlan::load(&plan)?;
            let summary = run_experiment(&plan, &out)?;
            for row in &summary.speedup_table {
                let show = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.2}"));
                println!(
                    "lambda={:e} tol={:e} {} {:<8} median={} mean={} pairs={}",
                    row.lambda,
                    row.gap_tol,
                    row.solver.as_str(),
                    row.method.as_str(),
                    show(row.median),
                    show(row.mean),
                    row.pairs
                );
            }
        }
        Command::Mnist { images, labels, a, b, out } => {
            load_mnist_idx(&images, &labels, a, b)?.save(&out)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

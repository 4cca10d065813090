mod common;

use common::*;
use uot_core::oracle::reference_solve;
use uot_core::solvers::{cd_step, mm_step, Iterate};
use uot_core::*;

fn solve(p: &Problem, kind: SolverKind, method: ScreenMethod, gap_tol: f64) -> RunResult {
    let mut c = SolverConfig::new(kind, method);
    c.gap_tol = gap_tol;
    c.max_iters = 400_000;
    run_with_screening(p, &c).unwrap()
}

#[test]
fn cd_and_fista_agree() {
    for seed in 0..10 {
        let p = random_sized(seed, 4, 15, [1.0, 0.1][seed as usize % 2], PenaltyKind::L2);
        let cd = solve(&p, SolverKind::Cd, ScreenMethod::None, 1e-10);
        let fista = solve(&p, SolverKind::Fista, ScreenMethod::None, 1e-10);
        assert!(cd.converged && fista.converged);
        assert!((cd.primal - fista.primal).abs() <= 1e-8, "{} vs {}", cd.primal, fista.primal);
    }
}

#[test]
fn multiplicative_and_coordinate_steps_never_increase_the_objective() {
    for seed in 0..20 {
        for pen in [PenaltyKind::L2, PenaltyKind::Kl] {
            let p = random_sized(seed, 3, 10, [1.0, 0.1, 0.01][seed as usize % 3], pen);
            let state = ScreeningState::new(&p);
            let mut kinds = vec![SolverKind::Mm];
            if pen == PenaltyKind::L2 {
                kinds.push(SolverKind::Cd);
            }
            for kind in kinds {
                let mut it = Iterate::uniform(&p);
                let mut last = primal_objective(&it.t, &p, &state).unwrap();
                for _ in 0..300 {
                    match kind {
                        SolverKind::Mm => mm_step(&mut it, &p, &state, 0.5).unwrap(),
                        _ => cd_step(&mut it, &p, &state).unwrap(),
                    }
                    let now = primal_objective(&it.t, &p, &state).unwrap();
                    assert!(now <= last + 1e-14 * (1.0 + last.abs()), "{kind:?} {pen}: {now} > {last}");
                    last = now;
                }
            }
        }
    }
}

#[test]
fn oracle_optimum_is_a_multiplicative_fixed_point() {
    for seed in 0..5 {
        for pen in [PenaltyKind::L2, PenaltyKind::Kl] {
            let p = random_sized(seed, 3, 8, 1.0, pen);
            let o = reference_solve(&p).unwrap();
            let state = ScreeningState::new(&p);
            let mut it = Iterate::new(o.t.clone(), p.dim());
            mm_step(&mut it, &p, &state, 0.5).unwrap();
            let moved = it.t.iter().zip(&o.t).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(moved < 1e-12, "{pen}: moved {moved}");
        }
    }
}

#[test]
fn kl_multiplicative_update_drives_expensive_mass_to_zero() {
    let p = Problem::new(vec![1.0], vec![1.0], vec![1.0], 1e4, PenaltyKind::Kl, 0.0).unwrap();
    let mut c = SolverConfig::new(SolverKind::Mm, ScreenMethod::None);
    c.max_iters = 100;
    let out = run_with_screening(&p, &c).unwrap();
    assert!(out.t[0] < 1e-100);
}

#[test]
fn screening_does_not_change_the_optimum() {
    for seed in 0..6 {
        let p = random_sized(seed, 4, 12, 0.1, PenaltyKind::L2);
        for kind in [SolverKind::Fista, SolverKind::Cd] {
            let plain = solve(&p, kind, ScreenMethod::None, 1e-9);
            for method in ScreenMethod::ALL.iter().filter(|m| m.is_supported(PenaltyKind::L2)) {
                let run = solve(&p, kind, *method, 1e-9);
                assert!(run.converged);
                assert!((run.primal - plain.primal).abs() <= 1e-8, "{kind:?} {method}");
                for (q, masked) in run.mask.iter().enumerate() {
                    if !masked {
                        assert_eq!(run.t[q], 0.0);
                    }
                }
            }
        }
    }
}

#[test]
fn no_screening_means_nothing_screened() {
    let p = random_sized(3, 4, 12, 0.1, PenaltyKind::L2);
    let run = solve(&p, SolverKind::Fista, ScreenMethod::None, 1e-8);
    assert!(run.trace.iter().all(|row| row.screened == 0));
    assert!(run.mask.iter().all(|m| *m));
}

#[test]
fn screened_count_approaches_the_oracle_zero_count() {
    for seed in 0..5 {
        let p = random_sized(seed, 5, 20, 0.1, PenaltyKind::L2);
        let o = reference_solve(&p).unwrap();
        let zeros = p.size() - o.support(1e-9).len();
        let run = solve(&p, SolverKind::Fista, ScreenMethod::SaCtp, 1e-10);
        assert!(run.converged);
        let diff = (run.screened as f64 - zeros as f64).abs() / p.size() as f64;
        assert!(diff <= 0.02, "screened {} of {}, oracle zeros {zeros}", run.screened, p.size());
        let counts: Vec<usize> = run.trace.iter().map(|r| r.screened).collect();
        assert!(counts.windows(2).all(|w| w[0] <= w[1]));
    }
}

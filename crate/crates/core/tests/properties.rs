mod common;

use common::dense_x;
use proptest::prelude::*;
use uot_core::projection::clamped_shifting_projection;
use uot_core::*;

fn sizes() -> impl Strategy<Value = (usize, usize)> {
    (1usize..7, 1usize..7)
}

fn problem_strategy(penalty: PenaltyKind) -> impl Strategy<Value = Problem> {
    sizes().prop_flat_map(move |(n, m)| {
        (
            prop::collection::vec(0.1f64..2.0, n),
            prop::collection::vec(0.1f64..2.0, m),
            prop::collection::vec(0.0f64..1.0, n * m),
            prop::sample::select(vec![1.0, 0.1, 0.01]),
        )
            .prop_map(move |(a, b, cost, lambda)| {
                let eps = if penalty == PenaltyKind::Kl { 1e-3 } else { 0.0 };
                Problem::new(a, b, cost, lambda, penalty, eps).unwrap()
            })
    })
}

fn with_plan(penalty: PenaltyKind) -> impl Strategy<Value = (Problem, Vec<f64>)> {
    problem_strategy(penalty).prop_flat_map(|p| {
        let size = p.size();
        (Just(p), prop::collection::vec(0.0f64..1.0, size))
    })
}

fn switch(p: Problem, pen: PenaltyKind) -> Problem {
    let lambda = p.lambda;
    p.with_penalty(pen, lambda, if pen == PenaltyKind::Kl { 1e-3 } else { 0.0 }).unwrap()
}

fn penalty() -> impl Strategy<Value = PenaltyKind> {
    prop::sample::select(vec![PenaltyKind::L2, PenaltyKind::Kl])
}

fn dense_apply(x: &[Vec<f64>], t: &[f64]) -> Vec<f64> {
    x.iter().map(|row| row.iter().zip(t).map(|(a, b)| a * b).sum()).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn apply_x_matches_dense_matrix((p, t) in with_plan(PenaltyKind::L2)) {
        let state = ScreeningState::new(&p);
        let x = dense_x(p.n, p.m);
        let fast = apply_x(&t, &state).unwrap();
        let slow = dense_apply(&x, &t);
        for (a, b) in fast.iter().zip(&slow) {
            prop_assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()));
        }
        let theta: Vec<f64> = (0..p.dim()).map(|k| (k as f64).sin()).collect();
        let fast = apply_xt(&theta, &state).unwrap();
        for (q, v) in fast.iter().enumerate() {
            let slow: f64 = (0..p.dim()).map(|r| x[r][q] * theta[r]).sum();
            prop_assert!((v - slow).abs() <= 1e-12);
        }
    }

    #[test]
    fn compaction_of_zero_entries_keeps_objective(
        (p, mut t) in with_plan(PenaltyKind::L2),
        pen in penalty(),
        stride in 2usize..5,
    ) {
        let p = switch(p, pen);
        let zeroed: Vec<usize> = (0..p.size()).step_by(stride).collect();
        for &q in &zeroed {
            t[q] = 0.0;
        }
        let mut state = ScreeningState::new(&p);
        let before = primal_objective(&t, &p, &state).unwrap();
        state.compact(&zeroed, &mut t).unwrap();
        let after = primal_objective(&t, &p, &state).unwrap();
        prop_assert!((before - after).abs() <= 1e-12 * (1.0 + before.abs()));
        prop_assert_eq!(state.active_len() + zeroed.len(), p.size());
    }

    #[test]
    fn duality_gap_is_nonnegative((p, t) in with_plan(PenaltyKind::L2), pen in penalty()) {
        let p = switch(p, pen);
        let state = ScreeningState::new(&p);
        let raw = dual_from_primal(&t, &p, &state).unwrap();
        let theta = clamped_shifting_projection(&raw, p.lambda, &state).unwrap();
        let gap = duality_gap(&t, &theta, &p, &state).unwrap();
        prop_assert!(gap >= -1e-10, "gap {}", gap);
    }

    #[test]
    fn shifting_projection_is_feasible((p, t) in with_plan(PenaltyKind::L2), spread in 0.1f64..10.0) {
        let state = ScreeningState::new(&p);
        let theta: Vec<f64> = (0..p.dim())
            .map(|k| spread * ((k as f64 + t.iter().sum::<f64>()) * 1.7).sin())
            .collect();
        for projected in [
            shifting_projection(&theta, p.lambda, &state).unwrap(),
            clamped_shifting_projection(&theta, p.lambda, &state).unwrap(),
        ] {
            let xt = apply_xt(&projected, &state).unwrap();
            for (v, c) in xt.iter().zip(&p.cost) {
                prop_assert!(v - p.lambda * c <= 1e-12);
            }
        }
    }

    #[test]
    fn primal_gradient_matches_finite_differences((p, t) in with_plan(PenaltyKind::L2), pen in penalty()) {
        let p = switch(p, pen);
        let state = ScreeningState::new(&p);
        let t: Vec<f64> = t.iter().map(|v| v + 0.05).collect();
        let model = PenaltyModel::from_problem(&p);
        let z = apply_x(&t, &state).unwrap();
        let dgrad = model.divergence_gradient(&z).unwrap();
        let grad = apply_xt(&dgrad, &state).unwrap();
        let h = 1e-6;
        for q in 0..p.size() {
            let analytic = p.lambda * p.cost[q] + grad[q];
            let mut up = t.clone();
            up[q] += h;
            let mut down = t.clone();
            down[q] -= h;
            let fd = (primal_objective(&up, &p, &state).unwrap() - primal_objective(&down, &p, &state).unwrap()) / (2.0 * h);
            prop_assert!((fd - analytic).abs() <= 1e-5 * (1.0 + analytic.abs()), "{} vs {}", fd, analytic);
        }
    }

    #[test]
    fn dual_derivatives_match_finite_differences(pen in penalty(), theta in prop::collection::vec(-2.0f64..2.0, 1..8)) {
        let y: Vec<f64> = (0..theta.len()).map(|k| 0.3 + 0.2 * k as f64).collect();
        let eps = if pen == PenaltyKind::Kl { 1e-3 } else { 0.0 };
        let model = PenaltyModel::new(pen, y, eps).unwrap();
        let grad = model.dual_gradient(&theta);
        let hess = model.hessian_diag(&theta);
        let h = 1e-5;
        for k in 0..theta.len() {
            let shifted = |d: f64| {
                let mut v = theta.clone();
                v[k] += d;
                v
            };
            let fd = (model.dual_value(&shifted(h)) - model.dual_value(&shifted(-h))) / (2.0 * h);
            prop_assert!((fd - grad[k]).abs() <= 1e-5 * (1.0 + grad[k].abs()));
            let fd2 = (model.dual_gradient(&shifted(h))[k] - model.dual_gradient(&shifted(-h))[k]) / (2.0 * h);
            prop_assert!((fd2 - hess[k]).abs() <= 1e-5 * (1.0 + hess[k].abs()));
        }
    }

    #[test]
    fn kl_dual_is_concave(
        u in prop::collection::vec(-3.0f64..3.0, 4),
        v in prop::collection::vec(-3.0f64..3.0, 4),
        s in 0.0f64..1.0,
    ) {
        let model = PenaltyModel::new(PenaltyKind::Kl, vec![0.5, 1.0, 0.2, 2.0], 1e-2).unwrap();
        let mid: Vec<f64> = u.iter().zip(&v).map(|(a, b)| s * a + (1.0 - s) * b).collect();
        let chord = s * model.dual_value(&u) + (1.0 - s) * model.dual_value(&v);
        prop_assert!(model.dual_value(&mid) >= chord - 1e-12 * (1.0 + chord.abs()));
    }

    #[test]
    fn l2_smoothness_constant((p, t) in with_plan(PenaltyKind::L2), d_seed in 0u64..1000) {
        let state = ScreeningState::new(&p);
        let y = p.y();
        let h = |t: &[f64]| -> f64 {
            let z = apply_x(t, &state).unwrap();
            0.5 * z.iter().zip(&y).map(|(a, b)| (a - b).powi(2)).sum::<f64>()
        };
        let d: Vec<f64> = (0..p.size()).map(|k| ((k as u64 * 7919 + d_seed) as f64).sin()).collect();
        let z = apply_x(&t, &state).unwrap();
        let resid: Vec<f64> = z.iter().zip(&y).map(|(a, b)| a - b).collect();
        let grad = apply_xt(&resid, &state).unwrap();
        let lin: f64 = grad.iter().zip(&d).map(|(g, v)| g * v).sum();
        let norm2: f64 = d.iter().map(|v| v * v).sum();
        let moved: Vec<f64> = t.iter().zip(&d).map(|(a, b)| a + b).collect();
        let rhs = h(&t) + lin + 0.5 * (p.n + p.m) as f64 * norm2;
        prop_assert!(h(&moved) <= rhs + 1e-12 * (1.0 + rhs.abs()));
    }

    #[test]
    fn problem_json_round_trip(p in problem_strategy(PenaltyKind::Kl)) {
        let back = Problem::from_json_str(&p.to_json_string().unwrap()).unwrap();
        prop_assert_eq!(back, p);
    }
}

//! Ground truth for small instances.
//!
//! The reference solver uses an active-set method for ℓ2 and exact
//! coordinate minimization otherwise (and as the ℓ2 fallback), without any
//! screening, until the gap is at rounding level. Its certificate is recomputed by dense code that shares nothing
//! with the library objectives. `brute_region_max` maximizes a pair sum over
//! an ellipsoid and half-spaces with a log-barrier interior-point method.

use std::time::Instant;

use crate::error::{Result, UotError};
use crate::penalties::dual_from_primal;
use crate::problem::{PenaltyKind, Problem, ScreeningState};
use crate::projection::clamped_shifting_projection;
use crate::screening::{Ellipsoid, Halfspace, InvMetric, Region};

/// Largest instance the reference solver accepts.
pub const MAX_ENTRIES: usize = 2000;
pub const TARGET_GAP: f64 = 1e-12;
const MAX_PASSES: usize = 1_000_000;

#[derive(Debug, Clone)]
pub struct OracleSolution {
    /// Optimal transport vector, length `n * m`.
    pub t: Vec<f64>,
    /// Feasible dual point built from `t`.
    pub theta: Vec<f64>,
    pub primal: f64,
    pub dual: f64,
    pub gap: f64,
    pub passes: usize,
}

impl OracleSolution {
    pub fn support(&self, tol: f64) -> Vec<usize> {
        true_support(&self.t, tol)
    }

    /// Fraction of entries that are zero at the optimum (at `tol`).
    pub fn zero_fraction(&self, tol: f64) -> f64 {
        1.0 - self.support(tol).len() as f64 / self.t.len() as f64
    }
}

/// `{p : t_p > tol}`.
pub fn true_support(t: &[f64], tol: f64) -> Vec<usize> {
    t.iter()
        .enumerate()
        .filter(|(_, v)| **v > tol)
        .map(|(p, _)| p)
        .collect()
}

/// One cyclic pass of exact coordinate minimization. Returns the largest
/// coordinate change.
fn coordinate_pass(problem: &Problem, t: &mut [f64], rows: &mut [f64], cols: &mut [f64], kl_k: &[f64]) -> f64 {
    let (n, m) = (problem.n, problem.m);
    let eps = problem.epsilon;
    let mut moved = 0.0_f64;
    for i in 0..n {
        for j in 0..m {
            let p = i * m + j;
            let old = t[p];
            let new = match problem.penalty {
                PenaltyKind::L2 => {
                    let grad = problem.lambda * problem.cost[p] + rows[i] - problem.a[i] + cols[j] - problem.b[j];
                    (old - 0.5 * grad).max(0.0)
                }
                _ => {
                    // (A + t)(B + t) = a_i b_j e^{-lambda c}, nonnegative root.
                    let ra = rows[i] - old + eps;
                    let rb = cols[j] - old + eps;
                    let k = kl_k[p];
                    let root = 2.0 * (k - ra * rb) / ((ra + rb) + ((ra - rb).powi(2) + 4.0 * k).sqrt());
                    root.max(0.0)
                }
            };
            if new != old {
                rows[i] += new - old;
                cols[j] += new - old;
                t[p] = new;
                moved = moved.max((new - old).abs());
            }
        }
    }
    moved
}

/// Exact ℓ2 optimum by a primal active-set method.
///
/// The passive set is kept a forest of the bipartite row/column graph, so
/// its normal equations are nonsingular. An entering entry that would close
/// a cycle first pushes mass around that cycle (which leaves `X t`
/// unchanged) until a cycle entry reaches zero and leaves.
fn l2_active_set(problem: &Problem) -> Option<Vec<f64>> {
    let (n, m) = (problem.n, problem.m);
    let size = n * m;
    let y: Vec<f64> = problem.a.iter().chain(&problem.b).copied().collect();
    let tol = 1e-14 * (1.0 + y.iter().cloned().fold(0.0, f64::max)) * (n + m) as f64;
    let mut t = vec![0.0; size];
    let mut passive: Vec<usize> = Vec::new();
    for _ in 0..20 * (size + n + m) {
        let mut resid = y.clone();
        for (p, v) in t.iter().enumerate() {
            resid[p / m] -= v;
            resid[n + p % m] -= v;
        }
        let mut best: Option<(usize, f64)> = None;
        for p in (0..size).filter(|p| !passive.contains(p)) {
            let w = resid[p / m] + resid[n + p % m] - problem.lambda * problem.cost[p];
            if w > tol && best.map_or(true, |(_, b)| w > b) {
                best = Some((p, w));
            }
        }
        let Some((entering, _)) = best else {
            return Some(t);
        };
        if let Some(path) = forest_path(&passive, m, entering / m, n + entering % m, n) {
            // Path edges alternate -1, +1, ..., -1 starting from the row node.
            let blocking = path.iter().step_by(2).copied().min_by(|x, y| t[*x].total_cmp(&t[*y]))?;
            let step = t[blocking];
            for (k, &p) in path.iter().enumerate() {
                t[p] += if k % 2 == 0 { -step } else { step };
            }
            t[entering] = step;
            t[blocking] = 0.0;
            passive.retain(|p| *p != blocking);
        }
        passive.push(entering);
        loop {
            let z = passive_solve(problem, &passive)?;
            if z.iter().all(|v| *v > 0.0) {
                for (&p, &v) in passive.iter().zip(&z) {
                    t[p] = v;
                }
                break;
            }
            let mut alpha = f64::INFINITY;
            for (&p, &v) in passive.iter().zip(&z) {
                if v <= 0.0 {
                    alpha = alpha.min(t[p] / (t[p] - v));
                }
            }
            for (&p, &v) in passive.iter().zip(&z) {
                t[p] += alpha * (v - t[p]);
            }
            let before = passive.len();
            let zero_at = |p: &usize, v: &f64| *v <= 0.0 && t[*p] <= tol;
            let leaving: Vec<usize> = passive.iter().zip(&z).filter(|(p, v)| zero_at(p, v)).map(|(p, _)| *p).collect();
            for p in &leaving {
                t[*p] = 0.0;
            }
            passive.retain(|p| !leaving.contains(p));
            if passive.len() == before {
                return None;
            }
        }
    }
    None
}

/// Edges of the forest path from node `from` to node `to` (rows are nodes
/// `0..n`, columns `n..n+m`), or `None` when they are not connected.
fn forest_path(edges: &[usize], m: usize, from: usize, to: usize, n: usize) -> Option<Vec<usize>> {
    let mut adjacent = vec![Vec::new(); n + m];
    for &p in edges {
        adjacent[p / m].push((n + p % m, p));
        adjacent[n + p % m].push((p / m, p));
    }
    let mut via: Vec<Option<(usize, usize)>> = vec![None; n + m];
    let mut seen = vec![false; n + m];
    let mut queue = std::collections::VecDeque::from([from]);
    seen[from] = true;
    while let Some(u) = queue.pop_front() {
        for &(v, p) in &adjacent[u] {
            if !seen[v] {
                seen[v] = true;
                via[v] = Some((u, p));
                queue.push_back(v);
            }
        }
    }
    if !seen[to] {
        return None;
    }
    let mut path = Vec::new();
    let mut node = to;
    while let Some((prev, p)) = via[node] {
        path.push(p);
        node = prev;
    }
    path.reverse();
    Some(path)
}

/// Unconstrained minimizer of the ℓ2 objective over the entries `passive`.
fn passive_solve(problem: &Problem, passive: &[usize]) -> Option<Vec<f64>> {
    let m = problem.m;
    let d = passive.len();
    let mut gram = vec![0.0; d * d];
    let mut rhs = vec![0.0; d];
    for (r, &p) in passive.iter().enumerate() {
        rhs[r] = problem.a[p / m] + problem.b[p % m] - problem.lambda * problem.cost[p];
        for (c, &q) in passive.iter().enumerate() {
            gram[r * d + c] = f64::from(p / m == q / m) + f64::from(p % m == q % m);
        }
    }
    let mut factor = gram.clone();
    let mut z = cholesky_solve(&mut factor, &rhs, d)?;
    // One step of iterative refinement.
    let resid: Vec<f64> = (0..d).map(|r| rhs[r] - dot(&gram[r * d..(r + 1) * d], &z)).collect();
    let mut factor = gram;
    let fix = cholesky_solve(&mut factor, &resid, d)?;
    z.iter_mut().zip(&fix).for_each(|(a, b)| *a += b);
    Some(z)
}

/// Dense primal objective, written independently of the library code.
pub fn naive_primal(problem: &Problem, t: &[f64]) -> f64 {
    let (n, m) = (problem.n, problem.m);
    let mut linear = 0.0;
    let mut rows = vec![0.0; n];
    let mut cols = vec![0.0; m];
    for i in 0..n {
        for j in 0..m {
            linear += problem.cost[i * m + j] * t[i * m + j];
            rows[i] += t[i * m + j];
            cols[j] += t[i * m + j];
        }
    }
    let mut div = 0.0;
    for (z, y) in rows.iter().zip(&problem.a).chain(cols.iter().zip(&problem.b)) {
        div += match problem.penalty {
            PenaltyKind::L2 => 0.5 * (z - y) * (z - y),
            PenaltyKind::Tv => (z - y).abs(),
            PenaltyKind::Kl => {
                let w = z + problem.epsilon;
                if w == 0.0 {
                    *y
                } else if *y == 0.0 {
                    f64::INFINITY
                } else {
                    w * w.ln() - w * y.ln() - w + y
                }
            }
        };
    }
    problem.lambda * linear + div
}

/// Dense dual objective, written independently of the library code.
pub fn naive_dual(problem: &Problem, theta: &[f64]) -> f64 {
    let y: Vec<f64> = problem.a.iter().chain(&problem.b).copied().collect();
    let mut value = 0.0;
    for (th, yk) in theta.iter().zip(&y) {
        value += match problem.penalty {
            PenaltyKind::L2 => yk * th - 0.5 * th * th,
            PenaltyKind::Kl => yk * (1.0 - (-th).exp()) - problem.epsilon * th,
            PenaltyKind::Tv => yk * th,
        };
    }
    value
}

/// High-precision optimum of a small instance by exact coordinate
/// minimization, with no screening involved.
pub fn reference_solve(problem: &Problem) -> Result<OracleSolution> {
    problem.validate()?;
    if problem.size() > MAX_ENTRIES {
        return Err(UotError::OracleUnavailable(format!(
            "{} entries exceed the oracle limit of {MAX_ENTRIES}",
            problem.size()
        )));
    }
    if problem.penalty == PenaltyKind::Tv {
        return Err(UotError::OracleUnavailable("TV has no smooth reference solver".into()));
    }
    if problem.penalty == PenaltyKind::Kl && problem.a.iter().chain(&problem.b).any(|v| *v <= 0.0) {
        return Err(UotError::OracleUnavailable("KL reference needs positive marginals".into()));
    }
    let (n, m) = (problem.n, problem.m);
    let kl_k: Vec<f64> = match problem.penalty {
        PenaltyKind::Kl => (0..n * m)
            .map(|p| problem.a[p / m] * problem.b[p % m] * (-problem.lambda * problem.cost[p]).exp())
            .collect(),
        _ => Vec::new(),
    };
    let state = ScreeningState::new(problem);
    if problem.penalty == PenaltyKind::L2 {
        if let Some(t) = l2_active_set(problem) {
            let (theta, primal, dual) = certificate(problem, &t, &state)?;
            if primal - dual <= TARGET_GAP * (1.0 + primal.abs()) {
                return Ok(OracleSolution {
                    t,
                    theta,
                    primal,
                    dual,
                    gap: primal - dual,
                    passes: 0,
                });
            }
        }
    }
    let mass = 0.5 * (problem.a.iter().sum::<f64>() + problem.b.iter().sum::<f64>());
    let mut t = vec![mass / (n * m) as f64; n * m];
    let mut rows = vec![0.0; n];
    let mut cols = vec![0.0; m];
    let started = Instant::now();

    let mut passes = 0;
    let mut best_gap = f64::INFINITY;
    let mut stalled = 0;
    loop {
        // Refresh the cached sums to stop drift.
        rows.iter_mut().for_each(|v| *v = 0.0);
        cols.iter_mut().for_each(|v| *v = 0.0);
        for p in 0..n * m {
            rows[p / m] += t[p];
            cols[p % m] += t[p];
        }
        let mut moved = 0.0_f64;
        for _ in 0..10 {
            moved = moved.max(coordinate_pass(problem, &mut t, &mut rows, &mut cols, &kl_k));
        }
        passes += 10;
        let (theta, primal, dual) = certificate(problem, &t, &state)?;
        let gap = primal - dual;
        if gap < best_gap * (1.0 - 1e-3) {
            best_gap = gap;
            stalled = 0;
        } else {
            stalled += 1;
        }
        let scale = 1.0 + primal.abs();
        let still = moved <= 1e-15 * (1.0 + mass);
        if gap <= TARGET_GAP * scale && (still || stalled >= 50) {
            return Ok(OracleSolution {
                t,
                theta,
                primal,
                dual,
                gap,
                passes,
            });
        }
        if passes >= MAX_PASSES || started.elapsed().as_secs() > 120 {
            return Err(UotError::OracleUnavailable(format!(
                "gap {gap:e} after {passes} passes"
            )));
        }
    }
}

/// Dual point, primal and dual values for `t`, cross-checked against the
/// dense recomputation.
fn certificate(problem: &Problem, t: &[f64], state: &ScreeningState) -> Result<(Vec<f64>, f64, f64)> {
    let raw = dual_from_primal(t, problem, state)?;
    let theta = clamped_shifting_projection(&raw, problem.lambda, state)?;
    let primal = crate::problem::primal_objective(t, problem, state)?;
    let dual = crate::penalties::PenaltyModel::from_problem(problem).dual_value(&theta);
    let (np, nd) = (naive_primal(problem, t), naive_dual(problem, &theta));
    let agree = |a: f64, b: f64| (a - b).abs() <= 1e-14 * (1.0 + a.abs().max(b.abs())) * (problem.size() as f64).sqrt();
    if !agree(primal, np) || !agree(dual, nd) {
        return Err(UotError::OracleUnavailable(format!(
            "certificate mismatch: primal {primal} vs {np}, dual {dual} vs {nd}"
        )));
    }
    Ok((theta, primal, dual))
}

/// Maximum of `theta_i + theta_{n+j}` over `region` intersected with the
/// given half-spaces, by a log-barrier interior-point method.
pub fn brute_region_max(p: usize, n: usize, m: usize, region: &Region, cuts: &[Halfspace]) -> Result<f64> {
    let (i, j) = crate::problem::pair_index(p, n, m)?;
    let e = Ellipsoid::from(region);
    let d = e.center.len();
    if d != n + m || d > 64 {
        return Err(UotError::OracleUnavailable(format!("region dimension {d} unsupported")));
    }
    let inv: Vec<f64> = (0..d)
        .map(|k| match &e.inv_metric {
            InvMetric::Uniform(l) => *l,
            InvMetric::Diag(v) => v[k],
        })
        .collect();
    if inv.iter().any(|l| !l.is_finite()) {
        return Err(UotError::OracleUnavailable("unbounded region".into()));
    }
    let center_sum = e.center[i] + e.center[n + j];
    // Whitened unit-ball coordinates: theta = o + r L^{-1/2} w, |w| <= 1.
    let r = e.r2.sqrt();
    let scale: Vec<f64> = inv.iter().map(|l| r * l.sqrt()).collect();
    let mut objective = vec![0.0; d];
    objective[i] += scale[i];
    objective[n + j] += scale[n + j];
    let lines: Vec<(Vec<f64>, f64)> = cuts
        .iter()
        .map(|h| {
            let a: Vec<f64> = h.normal.iter().zip(&scale).map(|(a, s)| a * s).collect();
            let b = h.offset - h.normal.iter().zip(&e.center).map(|(a, o)| a * o).sum::<f64>();
            (a, b)
        })
        .collect();
    if r == 0.0 {
        if lines.iter().any(|(_, b)| *b < 0.0) {
            return Err(UotError::Degenerate("empty region".into()));
        }
        return Ok(center_sum);
    }
    let start = phase_one(d, &lines)?;
    let w = barrier_maximize(&objective, &lines, start)?;
    Ok(center_sum + objective.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>())
}

/// Barrier terms of `|w|^2 <= 1` and `a^T w <= b`; returns `None` outside.
fn barrier_terms(w: &[f64], lines: &[(Vec<f64>, f64)], grad: &mut [f64], hess: &mut [f64]) -> Option<f64> {
    let d = w.len();
    let norm2: f64 = w.iter().map(|v| v * v).sum();
    let slack = 1.0 - norm2;
    if !(slack > 0.0) {
        return None;
    }
    let mut value = -slack.ln();
    for a in 0..d {
        grad[a] += 2.0 * w[a] / slack;
        hess[a * d + a] += 2.0 / slack;
        for b in 0..d {
            hess[a * d + b] += 4.0 * w[a] * w[b] / (slack * slack);
        }
    }
    for (normal, offset) in lines {
        let s = offset - normal.iter().zip(w).map(|(a, b)| a * b).sum::<f64>();
        if !(s > 0.0) {
            return None;
        }
        value -= s.ln();
        for a in 0..d {
            grad[a] += normal[a] / s;
            for b in 0..d {
                hess[a * d + b] += normal[a] * normal[b] / (s * s);
            }
        }
    }
    Some(value)
}

fn barrier_value(w: &[f64], lines: &[(Vec<f64>, f64)]) -> Option<f64> {
    let norm2: f64 = w.iter().map(|v| v * v).sum();
    if !(norm2 < 1.0) {
        return None;
    }
    let mut value = -(1.0 - norm2).ln();
    for (normal, offset) in lines {
        let s = offset - normal.iter().zip(w).map(|(a, b)| a * b).sum::<f64>();
        if !(s > 0.0) {
            return None;
        }
        value -= s.ln();
    }
    Some(value)
}

/// Minimizes `-s objective^T w + barrier(w)` for increasing `s`.
fn barrier_maximize(objective: &[f64], lines: &[(Vec<f64>, f64)], mut w: Vec<f64>) -> Result<Vec<f64>> {
    let d = w.len();
    let constraints = 1.0 + lines.len() as f64;
    let mut s = 1.0;
    while constraints / s > 1e-12 {
        for _ in 0..200 {
            let mut grad: Vec<f64> = objective.iter().map(|c| -s * c).collect();
            let mut hess = vec![0.0; d * d];
            let Some(_) = barrier_terms(&w, lines, &mut grad, &mut hess) else {
                return Err(UotError::Degenerate("barrier left the interior".into()));
            };
            // Near the optimum the Hessian becomes numerically singular; the
            // current interior point is then as accurate as it can get.
            let Some(dir) = cholesky_solve(&mut hess, &grad, d) else {
                return Ok(w);
            };
            let decrement: f64 = grad.iter().zip(&dir).map(|(g, x)| g * x).sum();
            if decrement < 1e-20 {
                break;
            }
            let f0 = -s * dot(objective, &w) + barrier_value(&w, lines).unwrap_or(f64::INFINITY);
            let mut step = 1.0;
            loop {
                let cand: Vec<f64> = w.iter().zip(&dir).map(|(a, b)| a - step * b).collect();
                if let Some(bv) = barrier_value(&cand, lines) {
                    if -s * dot(objective, &cand) + bv <= f0 - 0.25 * step * decrement {
                        w = cand;
                        break;
                    }
                }
                step *= 0.5;
                if step < 1e-20 {
                    break;
                }
            }
            if step < 1e-20 {
                break;
            }
        }
        s *= 8.0;
    }
    Ok(w)
}

/// A strictly feasible point of `{|w| < 1, a^T w < b}` found by minimizing
/// the largest constraint value with a barrier on an extra variable.
fn phase_one(d: usize, lines: &[(Vec<f64>, f64)]) -> Result<Vec<f64>> {
    let origin = vec![0.0; d];
    if barrier_value(&origin, lines).is_some() {
        return Ok(origin);
    }
    // Variables (w, u): minimize u subject to |w|^2 - 1 <= u and
    // a^T w - b <= u. Feasible start at w = 0 with a large u.
    let worst = lines.iter().map(|(_, b)| -b).fold(-1.0, f64::max);
    let mut x = vec![0.0; d + 1];
    x[d] = worst + 1.0;
    let eval = |x: &[f64], grad: Option<(&mut [f64], &mut [f64])>| -> Option<f64> {
        let (w, u) = (&x[..d], x[d]);
        let norm2: f64 = w.iter().map(|v| v * v).sum();
        let mut slacks = vec![(u - (norm2 - 1.0), None)];
        for (k, (_, b)) in lines.iter().enumerate() {
            slacks.push((u - (dot(&lines[k].0, w) - b), Some(k)));
        }
        if slacks.iter().any(|(s, _)| !(*s > 0.0)) {
            return None;
        }
        let value = -slacks.iter().map(|(s, _)| s.ln()).sum::<f64>();
        if let Some((g, h)) = grad {
            let dd = d + 1;
            for (s, which) in &slacks {
                // Gradient of the constraint function u - f(w).
                let mut cg = vec![0.0; dd];
                cg[d] = 1.0;
                match which {
                    None => {
                        for a in 0..d {
                            cg[a] = -2.0 * w[a];
                        }
                        for a in 0..d {
                            h[a * dd + a] += 2.0 / s;
                        }
                    }
                    Some(k) => {
                        for a in 0..d {
                            cg[a] = -lines[*k].0[a];
                        }
                    }
                }
                for a in 0..dd {
                    g[a] -= cg[a] / s;
                    for b in 0..dd {
                        h[a * dd + b] += cg[a] * cg[b] / (s * s);
                    }
                }
            }
        }
        Some(value)
    };
    let dd = d + 1;
    let mut s = 1.0;
    for _ in 0..60 {
        for _ in 0..100 {
            if x[d] < -1e-9 {
                let w = x[..d].to_vec();
                if barrier_value(&w, lines).is_some() {
                    return Ok(w);
                }
            }
            let mut grad = vec![0.0; dd];
            grad[d] = s;
            let mut hess = vec![0.0; dd * dd];
            eval(&x, Some((&mut grad, &mut hess))).ok_or_else(|| UotError::Degenerate("phase one left the interior".into()))?;
            let Some(dir) = cholesky_solve(&mut hess, &grad, dd) else {
                break;
            };
            let decrement: f64 = grad.iter().zip(&dir).map(|(g, v)| g * v).sum();
            if decrement < 1e-20 {
                break;
            }
            let f0 = s * x[d] + eval(&x, None).unwrap();
            let mut step = 1.0;
            while step > 1e-20 {
                let cand: Vec<f64> = x.iter().zip(&dir).map(|(a, b)| a - step * b).collect();
                if let Some(v) = eval(&cand, None) {
                    if s * cand[d] + v <= f0 - 0.25 * step * decrement {
                        x = cand;
                        break;
                    }
                }
                step *= 0.5;
            }
        }
        s *= 4.0;
    }
    Err(UotError::Degenerate("region has empty interior".into()))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Solves `H x = g` for symmetric positive definite `H` (row-major),
/// overwriting `H` with its Cholesky factor.
fn cholesky_solve(h: &mut [f64], g: &[f64], d: usize) -> Option<Vec<f64>> {
    for c in 0..d {
        let mut diag = h[c * d + c];
        for k in 0..c {
            diag -= h[c * d + k] * h[c * d + k];
        }
        if !(diag > 0.0) {
            return None;
        }
        let diag = diag.sqrt();
        h[c * d + c] = diag;
        for r in c + 1..d {
            let mut v = h[r * d + c];
            for k in 0..c {
                v -= h[r * d + k] * h[c * d + k];
            }
            h[r * d + c] = v / diag;
        }
    }
    let mut x = g.to_vec();
    for r in 0..d {
        for k in 0..r {
            x[r] -= h[r * d + k] * x[k];
        }
        x[r] /= h[r * d + r];
    }
    for r in (0..d).rev() {
        for k in r + 1..d {
            x[r] -= h[k * d + r] * x[k];
        }
        x[r] /= h[r * d + r];
    }
    Some(x)
}

/// Optimal plan of a tiny balanced OT problem by enumerating all basic
/// solutions of the transport polytope. Only for `n, m <= 4`.
pub fn lp_vertex_solve(a: &[f64], b: &[f64], cost: &[f64]) -> Result<Vec<f64>> {
    let (n, m) = (a.len(), b.len());
    if n > 4 || m > 4 || n == 0 || m == 0 {
        return Err(UotError::OracleUnavailable("vertex enumeration needs n, m <= 4".into()));
    }
    let nm = n * m;
    let basis = n + m - 1;
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut chosen = Vec::with_capacity(basis);
    enumerate_subsets(nm, basis, 0, &mut chosen, &mut |subset| {
        // Equations: row sums (all n) and column sums except the last.
        let mut mat = vec![0.0; basis * basis];
        let mut rhs = vec![0.0; basis];
        for (col, &p) in subset.iter().enumerate() {
            let (i, j) = (p / m, p % m);
            mat[i * basis + col] = 1.0;
            if j + 1 < m {
                mat[(n + j) * basis + col] = 1.0;
            }
        }
        rhs[..n].copy_from_slice(a);
        rhs[n..].copy_from_slice(&b[..m - 1]);
        if let Some(x) = gauss_solve(&mut mat, &mut rhs, basis) {
            if x.iter().all(|v| *v >= -1e-12) {
                let mut t = vec![0.0; nm];
                for (&p, v) in subset.iter().zip(&x) {
                    t[p] = v.max(0.0);
                }
                let value: f64 = t.iter().zip(cost).map(|(a, b)| a * b).sum();
                if best.as_ref().map_or(true, |(bv, _)| value < *bv) {
                    best = Some((value, t));
                }
            }
        }
    });
    best.map(|(_, t)| t)
        .ok_or_else(|| UotError::OracleUnavailable("no basic feasible solution".into()))
}

fn enumerate_subsets(total: usize, size: usize, from: usize, chosen: &mut Vec<usize>, f: &mut dyn FnMut(&[usize])) {
    if chosen.len() == size {
        f(chosen);
        return;
    }
    for p in from..total {
        if total - p < size - chosen.len() {
            break;
        }
        chosen.push(p);
        enumerate_subsets(total, size, p + 1, chosen, f);
        chosen.pop();
    }
}

fn gauss_solve(mat: &mut [f64], rhs: &mut [f64], d: usize) -> Option<Vec<f64>> {
    for c in 0..d {
        let pivot = (c..d).max_by(|&x, &y| mat[x * d + c].abs().total_cmp(&mat[y * d + c].abs()))?;
        if mat[pivot * d + c].abs() < 1e-12 {
            return None;
        }
        if pivot != c {
            for k in 0..d {
                mat.swap(pivot * d + k, c * d + k);
            }
            rhs.swap(pivot, c);
        }
        for r in 0..d {
            if r != c {
                let f = mat[r * d + c] / mat[c * d + c];
                if f != 0.0 {
                    for k in c..d {
                        mat[r * d + k] -= f * mat[c * d + k];
                    }
                    rhs[r] -= f * rhs[c];
                }
            }
        }
    }
    Some((0..d).map(|c| rhs[c] / mat[c * d + c]).collect())
}

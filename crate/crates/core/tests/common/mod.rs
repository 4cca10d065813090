#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use uot_core::{PenaltyKind, Problem};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random instance with marginals in `[0.2, 1.2)` and costs in `[0, 1)`.
pub fn random_problem(seed: u64, n: usize, m: usize, lambda: f64, penalty: PenaltyKind) -> Problem {
    let mut r = rng(seed);
    let a: Vec<f64> = (0..n).map(|_| r.gen_range(0.2..1.2)).collect();
    let b: Vec<f64> = (0..m).map(|_| r.gen_range(0.2..1.2)).collect();
    let cost: Vec<f64> = (0..n * m).map(|_| r.gen_range(0.0..1.0)).collect();
    let epsilon = if penalty == PenaltyKind::Kl { 1e-3 } else { 0.0 };
    Problem::new(a, b, cost, lambda, penalty, epsilon).unwrap()
}

/// Random instance with sizes drawn from `[lo, hi]`.
pub fn random_sized(seed: u64, lo: usize, hi: usize, lambda: f64, penalty: PenaltyKind) -> Problem {
    let mut r = rng(seed ^ 0xA5A5);
    let n = r.gen_range(lo..=hi);
    let m = r.gen_range(lo..=hi);
    random_problem(seed, n, m, lambda, penalty)
}

/// Dense 0/1 matrix of shape `(n + m) x (n * m)`, row-major.
pub fn dense_x(n: usize, m: usize) -> Vec<Vec<f64>> {
    let mut x = vec![vec![0.0; n * m]; n + m];
    for i in 0..n {
        for j in 0..m {
            x[i][i * m + j] = 1.0;
            x[n + j][i * m + j] = 1.0;
        }
    }
    x
}

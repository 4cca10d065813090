//! Closed-form upper bounds of `g^T theta` over an ellipsoid cut by up to two
//! half-spaces.
//!
//! The ellipsoid is `{(theta - o)^T L (theta - o) <= R2}` with diagonal `L`;
//! all inner products below use `L^{-1}`. For multipliers `mu, nu >= 0`,
//! weak duality gives
//!
//! ```text
//! phi(mu, nu) = g^T o + mu e_v' + nu e_w' + sqrt(R2) * sqrt(Q(mu, nu))
//! Q = gg - 2 mu gv - 2 nu gw + mu^2 vv + nu^2 ww + 2 mu nu vw
//! ```
//!
//! where `e_v' = e_v - v^T o` is the offset of `v^T theta <= e_v` measured
//! from the center. Every evaluation of `phi` is a valid bound, so the
//! result is the minimum over a set of candidate multipliers that contains
//! the exact minimizer. Rounding is absorbed by allowances that only make
//! the bound larger.

/// Relative rounding allowance for a sum of `terms` floating-point values.
pub(crate) fn rounding_for(terms: usize) -> f64 {
    2.0 * (terms as f64 + 4.0) * f64::EPSILON
}

/// Threshold below which the 2x2 Gram determinant is treated as singular.
const SINGULAR: f64 = 1e-12;

/// Gram data of one half-space `a^T theta <= e` against the objective `g`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineData {
    pub ga: f64,
    pub aa: f64,
    /// Offset measured from the center, `e - a^T o`.
    pub e: f64,
    /// Magnitude of the terms that produced `e`, for the rounding allowance.
    pub e_mag: f64,
    /// Magnitude of the terms that produced `aa`.
    pub aa_mag: f64,
}

/// Gram data of a pair of half-spaces.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairData {
    pub v: LineData,
    pub w: LineData,
    pub vw: f64,
    pub vw_mag: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Objective {
    /// `g^T o`.
    pub center: f64,
    /// `g^T L^{-1} g`.
    pub gg: f64,
    pub r2: f64,
    /// Relative error allowed for the aggregated Gram data.
    pub rounding: f64,
}

impl Objective {
    /// Bound over the ellipsoid alone.
    pub fn region_bound(&self) -> f64 {
        nan_to_inf(self.center + (self.r2 * self.gg).sqrt())
    }

    fn phi(&self, mu: f64, nu: f64, pair: &PairData) -> f64 {
        let (v, w) = (&pair.v, &pair.w);
        let q = self.gg - 2.0 * mu * v.ga - 2.0 * nu * w.ga
            + mu * mu * v.aa
            + nu * nu * w.aa
            + 2.0 * mu * nu * pair.vw;
        let q_allow = self.rounding
            * (self.gg
                + 2.0 * mu * v.ga.abs()
                + 2.0 * nu * w.ga.abs()
                + mu * mu * v.aa_mag
                + nu * nu * w.aa_mag
                + 2.0 * mu * nu * pair.vw_mag);
        let e_allow = self.rounding * (mu * v.e_mag + nu * w.e_mag);
        let value = self.center + mu * v.e + nu * w.e + (self.r2 * (q.max(0.0) + q_allow)).sqrt() + e_allow;
        nan_to_inf(value)
    }

    fn phi_line(&self, mu: f64, line: &LineData) -> f64 {
        self.phi(mu, 0.0, &PairData {
            v: *line,
            w: LineData::ZERO,
            vw: 0.0,
            vw_mag: 0.0,
        })
    }

    /// Bound over the ellipsoid cut by one half-space. Never exceeds
    /// [`Objective::region_bound`].
    pub fn line_bound(&self, line: &LineData) -> f64 {
        let base = self.region_bound();
        if self.r2 == 0.0 {
            return base;
        }
        match line_argmin(self.gg, line.ga, line.aa, line.e, self.r2.sqrt()) {
            Some(mu) if mu > 0.0 => base.min(self.phi_line(mu, line)),
            _ => base,
        }
    }

    /// Bound over the ellipsoid cut by both half-spaces of `pair`. `dome` is
    /// the line data of the summed half-space; the result never exceeds
    /// `self.line_bound(dome)`.
    pub fn pair_bound(&self, pair: &PairData, dome: &LineData) -> f64 {
        self.pair_bound_from(pair, self.line_bound(dome))
    }

    /// [`Objective::pair_bound`] given the already computed dome bound.
    pub fn pair_bound_from(&self, pair: &PairData, dome_bound: f64) -> f64 {
        let mut best = dome_bound;
        if self.r2 == 0.0 {
            return best;
        }
        let r = self.r2.sqrt();
        for (line, along_v) in [(&pair.v, true), (&pair.w, false)] {
            if let Some(mu) = line_argmin(self.gg, line.ga, line.aa, line.e, r) {
                let value = if along_v {
                    self.phi(mu, 0.0, pair)
                } else {
                    self.phi(0.0, mu, pair)
                };
                best = best.min(value);
            }
        }
        for (mu, nu) in interior_candidates(self, pair) {
            best = best.min(self.phi(mu, nu, pair));
        }
        best
    }
}

impl LineData {
    pub const ZERO: LineData = LineData {
        ga: 0.0,
        aa: 0.0,
        e: 0.0,
        e_mag: 0.0,
        aa_mag: 0.0,
    };
}

#[inline]
fn nan_to_inf(v: f64) -> f64 {
    if v.is_nan() {
        f64::INFINITY
    } else {
        v
    }
}

/// Minimizer over `mu >= 0` of `mu e + r sqrt(gg - 2 mu ga + mu^2 aa)`.
///
/// `None` when the function is unbounded below, which happens only if the
/// half-space misses the ellipsoid.
pub(crate) fn line_argmin(gg: f64, ga: f64, aa: f64, e: f64, r: f64) -> Option<f64> {
    if !(aa > 0.0) || !aa.is_finite() || !(r > 0.0) {
        return Some(0.0);
    }
    let sa = aa.sqrt();
    let k = -e / (r * sa);
    if !k.is_finite() {
        return Some(0.0);
    }
    if k <= -1.0 {
        return Some(0.0);
    }
    if k >= 1.0 {
        return None;
    }
    let mu0 = ga / aa;
    let d2 = (gg - ga * mu0).max(0.0);
    let mu = mu0 + k * d2.sqrt() / (sa * (1.0 - k * k).sqrt());
    if mu.is_finite() {
        Some(mu.max(0.0))
    } else {
        Some(0.0)
    }
}

/// Stationary points of `phi` with both multipliers positive.
///
/// Setting the gradient to zero and writing `tau = 2 eta = sqrt(Q) / r`
/// makes `(mu, nu)` affine in `eta`; substituting back into `Q = 4 eta^2 R2`
/// leaves a quadratic in `eta`.
fn interior_candidates(obj: &Objective, pair: &PairData) -> impl Iterator<Item = (f64, f64)> {
    let (v, w) = (&pair.v, &pair.w);
    let (vv, ww, vw) = (v.aa, w.aa, pair.vw);
    let (gv, gw, ev, ew) = (v.ga, w.ga, v.e, w.e);
    let det = vv * ww - vw * vw;
    // Up to two roots plus the kink; NaN marks an unused slot.
    let mut etas = [f64::NAN; 3];
    if !(det > SINGULAR * vv * ww) || !det.is_finite() {
        return candidates(etas, [0.0; 4]);
    }
    let s1 = 2.0 * (ew * vw - ev * ww) / det;
    let s2 = (gv * ww - gw * vw) / det;
    let u1 = 2.0 * (ev * vw - ew * vv) / det;
    let u2 = (gw * vv - gv * vw) / det;

    let a = 4.0 * obj.r2 - (s1 * s1 * vv + u1 * u1 * ww + 2.0 * s1 * u1 * vw);
    let b = 2.0 * (gv * s1 + gw * u1) - 2.0 * (s1 * s2 * vv + u1 * u2 * ww + (s1 * u2 + s2 * u1) * vw);
    let c = 2.0 * (gv * s2 + gw * u2) - (s2 * s2 * vv + u2 * u2 * ww + 2.0 * s2 * u2 * vw) - obj.gg;

    if a.abs() <= 1e-300 {
        if b != 0.0 {
            etas[0] = -c / b;
        }
    } else {
        let disc = b * b - 4.0 * a * c;
        if disc >= 0.0 {
            // Stable pairing of the two roots.
            let sq = disc.sqrt();
            let qv = -0.5 * (b + b.signum() * sq);
            if qv != 0.0 {
                etas[0] = qv / a;
                etas[1] = c / qv;
            }
        }
    }
    // eta = 0 is the kink where `g` lies in the span of the two normals and
    // the maximum sits on the intersection of the cuts.
    etas[2] = 0.0;
    candidates(etas, [s1, s2, u1, u2])
}

/// Multipliers `mu = s1 eta + s2`, `nu = u1 eta + u2` at the usable `etas`.
fn candidates(etas: [f64; 3], [s1, s2, u1, u2]: [f64; 4]) -> impl Iterator<Item = (f64, f64)> {
    etas.into_iter()
        .filter(|eta| eta.is_finite() && *eta >= 0.0)
        .filter_map(move |eta| {
            let mu = s1 * eta + s2;
            let nu = u1 * eta + u2;
            (mu >= -1e-12 && nu >= -1e-12 && mu.is_finite() && nu.is_finite())
                .then(|| (mu.max(0.0), nu.max(0.0)))
        })
}

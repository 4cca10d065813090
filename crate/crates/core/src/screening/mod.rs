//! Safe screening tests.
//!
//! For an active entry `p = (i, j)`, the optimal transport value is zero
//! whenever `alpha_i + beta_j < lambda c_p` holds for every dual point of a
//! region known to contain the dual optimum. Each method bounds
//! `max alpha_i + beta_j` over its region in closed form; bounds for all
//! active entries are computed from row and column aggregates in time
//! linear in the active count.

pub mod cap;

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, UotError};
use crate::penalties::PenaltyModel;
use crate::problem::{apply_x, pair_index, PenaltyKind, Problem, ScreeningState};
use crate::regions::{self, BallRegion, EllipseRegion};
use cap::{rounding_for, LineData, Objective, PairData};

/// Entries are screened only when their bound is below `lambda c_p` by more
/// than this margin.
pub const SCREEN_MARGIN: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ScreenMethod {
    #[serde(rename = "none")]
    None,
    #[serde(rename = "gap")]
    Gap,
    #[serde(rename = "sa")]
    Sa,
    #[serde(rename = "ell")]
    Ell,
    #[serde(rename = "dome")]
    Dome,
    #[serde(rename = "gap-ctp")]
    GapCtp,
    #[serde(rename = "sa-ctp")]
    SaCtp,
    #[serde(rename = "ell-ctp")]
    EllCtp,
    #[serde(rename = "sa-ran")]
    SaRan,
}

/// The ellipsoid a method starts from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaseRegion {
    GapBall,
    Sasvi,
    Ellipse,
}

/// The half-spaces a method intersects its base region with.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cut {
    None,
    Dome,
    Ctp,
    RandomSplit,
}

impl ScreenMethod {
    pub const ALL: [ScreenMethod; 9] = [
        ScreenMethod::None,
        ScreenMethod::Gap,
        ScreenMethod::Sa,
        ScreenMethod::Ell,
        ScreenMethod::Dome,
        ScreenMethod::GapCtp,
        ScreenMethod::SaCtp,
        ScreenMethod::EllCtp,
        ScreenMethod::SaRan,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ScreenMethod::None => "none",
            ScreenMethod::Gap => "gap",
            ScreenMethod::Sa => "sa",
            ScreenMethod::Ell => "ell",
            ScreenMethod::Dome => "dome",
            ScreenMethod::GapCtp => "gap-ctp",
            ScreenMethod::SaCtp => "sa-ctp",
            ScreenMethod::EllCtp => "ell-ctp",
            ScreenMethod::SaRan => "sa-ran",
        }
    }

    /// Base region and cut, or `None` for the unscreened baseline.
    pub fn parts(self) -> Option<(BaseRegion, Cut)> {
        use BaseRegion::*;
        Some(match self {
            ScreenMethod::None => return None,
            ScreenMethod::Gap => (GapBall, Cut::None),
            ScreenMethod::Sa => (Sasvi, Cut::Dome),
            ScreenMethod::Ell => (Ellipse, Cut::None),
            ScreenMethod::Dome => (GapBall, Cut::Dome),
            ScreenMethod::GapCtp => (GapBall, Cut::Ctp),
            ScreenMethod::SaCtp => (Sasvi, Cut::Ctp),
            ScreenMethod::EllCtp => (Ellipse, Cut::Ctp),
            ScreenMethod::SaRan => (Sasvi, Cut::RandomSplit),
        })
    }

    pub fn is_supported(self, penalty: PenaltyKind) -> bool {
        match penalty {
            PenaltyKind::Tv => false,
            PenaltyKind::L2 => !matches!(self, ScreenMethod::Ell | ScreenMethod::EllCtp),
            PenaltyKind::Kl => !matches!(self, ScreenMethod::Sa | ScreenMethod::SaCtp | ScreenMethod::SaRan),
        }
    }

    pub fn check_supported(self, penalty: PenaltyKind) -> Result<()> {
        if self.is_supported(penalty) {
            Ok(())
        } else {
            Err(UotError::Unsupported {
                what: format!("screening method '{self}'"),
                penalty,
            })
        }
    }
}

impl fmt::Display for ScreenMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ScreenMethod {
    type Err = UotError;

    fn from_str(s: &str) -> Result<Self> {
        ScreenMethod::ALL
            .iter()
            .copied()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| UotError::InvalidProblem(format!("unknown screening method '{s}'")))
    }
}

/// A single half-space `normal^T theta <= offset`.
#[derive(Debug, Clone, PartialEq)]
pub struct Halfspace {
    pub normal: Vec<f64>,
    pub offset: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HalfspacePair {
    pub primary_normal: Vec<f64>,
    pub primary_offset: f64,
    pub secondary_normal: Vec<f64>,
    pub secondary_offset: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScreenReport {
    pub tested: usize,
    pub screened: usize,
    /// Per tested entry, the upper bound on `alpha_i + beta_j` (original
    /// flat index, bound), when requested.
    pub per_method_max: Option<Vec<(usize, f64)>>,
    /// Set when the region could not be built and nothing was tested.
    pub skipped: bool,
}

/// Either region type accepted by the public closed forms.
#[derive(Debug, Clone, PartialEq)]
pub enum Region {
    Ball(BallRegion),
    Ellipse(EllipseRegion),
}

/// Ellipsoid in the form shared by every bound: center, inverse metric and
/// squared radius.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Ellipsoid {
    pub center: Vec<f64>,
    pub inv_metric: InvMetric,
    pub r2: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum InvMetric {
    Uniform(f64),
    Diag(Vec<f64>),
}

impl InvMetric {
    fn is_finite(&self) -> bool {
        match self {
            InvMetric::Uniform(l) => l.is_finite(),
            InvMetric::Diag(v) => v.iter().all(|l| l.is_finite()),
        }
    }

    #[inline]
    fn at(&self, k: usize) -> f64 {
        match self {
            InvMetric::Uniform(l) => *l,
            InvMetric::Diag(v) => v[k],
        }
    }
}

impl From<&Region> for Ellipsoid {
    fn from(region: &Region) -> Self {
        match region {
            Region::Ball(b) => Ellipsoid {
                center: b.center.clone(),
                inv_metric: InvMetric::Uniform(1.0),
                r2: b.radius * b.radius,
            },
            Region::Ellipse(e) => Ellipsoid {
                center: e.center.clone(),
                inv_metric: InvMetric::Diag(inv_metric(&e.metric)),
                r2: e.radius_sq,
            },
        }
    }
}

fn inv_metric(metric: &[f64]) -> Vec<f64> {
    metric.iter().map(|l| if *l > 0.0 { 1.0 / l } else { f64::INFINITY }).collect()
}

impl Ellipsoid {
    /// Objective `theta_i + theta_j`; `terms` is the length of the longest
    /// sum behind the half-space data.
    fn objective(&self, i: usize, j: usize, terms: usize) -> Objective {
        Objective {
            center: self.center[i] + self.center[j],
            gg: self.inv_metric.at(i) + self.inv_metric.at(j),
            r2: self.r2,
            rounding: rounding_for(terms),
        }
    }
}

/// `center_i + center_{n+j} + radius sqrt(2)`.
pub fn max_over_ball(p: usize, n: usize, m: usize, ball: &BallRegion) -> Result<f64> {
    let (i, j) = pair_index(p, n, m)?;
    Ok(ball.center[i] + ball.center[n + j] + ball.radius * 2f64.sqrt())
}

/// `center_i + center_{n+j} + sqrt(radius_sq (1/L_i + 1/L_{n+j}))`.
pub fn max_over_ellipse(p: usize, n: usize, m: usize, ellipse: &EllipseRegion) -> Result<f64> {
    let (i, j) = pair_index(p, n, m)?;
    let e = Ellipsoid::from(&Region::Ellipse(ellipse.clone()));
    Ok(e.objective(i, n + j, 0).region_bound())
}

/// `sum_p t_p (x_p^T theta - lambda c_p) <= 0`, valid for every feasible
/// dual point because `t >= 0`.
pub fn dome_halfspace(t: &[f64], problem: &Problem, state: &ScreeningState) -> Result<Halfspace> {
    let normal = apply_x(t, state)?;
    let offset = problem.lambda * state.cost().iter().zip(t).map(|(c, v)| c * v).sum::<f64>();
    Ok(Halfspace { normal, offset })
}

/// Splits the dome half-space by the constraints sharing a row or column
/// with `p` (primary) and the remaining ones (secondary).
pub fn ctp_halfspaces(
    p: usize,
    t: &[f64],
    problem: &Problem,
    state: &ScreeningState,
) -> Result<HalfspacePair> {
    state.check_len("t", t.len())?;
    let (i0, j0) = pair_index(p, problem.n, problem.m)?;
    let n = problem.n;
    let dim = problem.dim();
    let mut pair = HalfspacePair {
        primary_normal: vec![0.0; dim],
        primary_offset: 0.0,
        secondary_normal: vec![0.0; dim],
        secondary_offset: 0.0,
    };
    for k in 0..state.active_len() {
        let (i, j) = (state.rows()[k], state.cols()[k]);
        let ct = problem.lambda * state.cost()[k] * t[k];
        let (normal, offset) = if i == i0 || j == j0 {
            (&mut pair.primary_normal, &mut pair.primary_offset)
        } else {
            (&mut pair.secondary_normal, &mut pair.secondary_offset)
        };
        normal[i] += t[k];
        normal[n + j] += t[k];
        *offset += ct;
    }
    Ok(pair)
}

fn dense_line(obj_i: usize, obj_j: usize, e: &Ellipsoid, normal: &[f64], offset: f64) -> LineData {
    let mut aa = 0.0;
    let mut a_center = 0.0;
    let mut a_center_abs = 0.0;
    for (k, &a) in normal.iter().enumerate() {
        if a != 0.0 {
            aa += e.inv_metric.at(k) * a * a;
            a_center += a * e.center[k];
            a_center_abs += (a * e.center[k]).abs();
        }
    }
    LineData {
        ga: e.inv_metric.at(obj_i) * normal[obj_i] + e.inv_metric.at(obj_j) * normal[obj_j],
        aa,
        e: offset - a_center,
        e_mag: offset.abs() + a_center_abs,
        aa_mag: aa,
    }
}

fn dense_pair(i: usize, j: usize, e: &Ellipsoid, pair: &HalfspacePair) -> (PairData, LineData) {
    let v = dense_line(i, j, e, &pair.primary_normal, pair.primary_offset);
    let w = dense_line(i, j, e, &pair.secondary_normal, pair.secondary_offset);
    let vw: f64 = pair
        .primary_normal
        .iter()
        .zip(&pair.secondary_normal)
        .enumerate()
        .map(|(k, (a, b))| if *a != 0.0 && *b != 0.0 { e.inv_metric.at(k) * a * b } else { 0.0 })
        .sum();
    let dome_normal: Vec<f64> = pair
        .primary_normal
        .iter()
        .zip(&pair.secondary_normal)
        .map(|(a, b)| a + b)
        .collect();
    let dome = dense_line(i, j, e, &dome_normal, pair.primary_offset + pair.secondary_offset);
    (PairData { v, w, vw, vw_mag: vw.abs() }, dome)
}

/// Upper bound of `theta_i + theta_{n+j}` over `region` intersected with a
/// single half-space.
pub fn dome_max(p: usize, n: usize, m: usize, region: &Region, cut: &Halfspace) -> Result<f64> {
    let (i, j) = pair_index(p, n, m)?;
    let e = Ellipsoid::from(region);
    let line = dense_line(i, n + j, &e, &cut.normal, cut.offset);
    Ok(e.objective(i, n + j, n + m).line_bound(&line))
}

/// Upper bound of `theta_i + theta_{n+j}` over `region` intersected with
/// both half-spaces of `pair`. The pair need not come from
/// [`ctp_halfspaces`]; any two valid half-spaces work.
pub fn ctp_max(p: usize, n: usize, m: usize, region: &Region, pair: &HalfspacePair) -> Result<f64> {
    let (i, j) = pair_index(p, n, m)?;
    let e = Ellipsoid::from(region);
    let (data, dome) = dense_pair(i, n + j, &e, pair);
    Ok(e.objective(i, n + j, n + m).pair_bound(&data, &dome))
}

/// Primal and dual objective values behind a gap certificate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GapInfo {
    pub primal: f64,
    pub dual: f64,
    /// Number of summed terms, which scales the rounding allowance.
    pub terms: usize,
}

impl GapInfo {
    pub fn gap(&self) -> f64 {
        self.primal - self.dual
    }

    /// Gap inflated by a bound on the rounding error of both objectives.
    pub fn safe_gap(&self) -> f64 {
        let allowance = 2.0 * (self.terms as f64 + 8.0) * f64::EPSILON * (1.0 + self.primal.abs() + self.dual.abs());
        self.gap().max(0.0) + allowance
    }
}

/// Builds the base ellipsoid of `base`, or `None` when it has no finite
/// extent (KL box without curvature information).
pub(crate) fn build_ellipsoid(
    base: BaseRegion,
    theta: &[f64],
    t: &[f64],
    gap: &GapInfo,
    problem: &Problem,
    state: &ScreeningState,
) -> Result<Option<Ellipsoid>> {
    let safe_gap = gap.safe_gap();
    match (base, problem.penalty) {
        (_, PenaltyKind::Tv) => Err(UotError::Unsupported {
            what: "safe regions".into(),
            penalty: PenaltyKind::Tv,
        }),
        (BaseRegion::GapBall, PenaltyKind::L2) => Ok(Some(Ellipsoid {
            center: theta.to_vec(),
            inv_metric: InvMetric::Uniform(1.0),
            r2: 2.0 * safe_gap,
        })),
        (BaseRegion::Sasvi, PenaltyKind::L2) => {
            let ball = regions::sasvi_ball(theta, &PenaltyModel::from_problem(problem))?;
            let scale: f64 = theta.iter().chain(&ball.center).map(|v| v * v).sum();
            let r2 = ball.radius * ball.radius * (1.0 + rounding_for(theta.len())) + 8.0 * f64::EPSILON * scale;
            Ok(Some(Ellipsoid {
                center: ball.center,
                inv_metric: InvMetric::Uniform(1.0),
                r2,
            }))
        }
        (BaseRegion::Sasvi, PenaltyKind::Kl) => Err(UotError::Unsupported {
            what: "sasvi region".into(),
            penalty: PenaltyKind::Kl,
        }),
        (BaseRegion::Ellipse, PenaltyKind::L2) => Err(UotError::Unsupported {
            what: "gap ellipse".into(),
            penalty: PenaltyKind::L2,
        }),
        (BaseRegion::GapBall | BaseRegion::Ellipse, PenaltyKind::Kl) => {
            let bx = regions::kl_box(theta, t, problem, state)?;
            let metric = regions::blockwise_metric(&bx.upper, &problem.y());
            let inv = inv_metric(&metric);
            if base == BaseRegion::GapBall {
                let worst = inv.iter().cloned().fold(0.0, f64::max);
                if !worst.is_finite() {
                    return Ok(None);
                }
                Ok(Some(Ellipsoid {
                    center: theta.to_vec(),
                    inv_metric: InvMetric::Uniform(worst),
                    r2: 2.0 * safe_gap,
                }))
            } else {
                Ok(Some(Ellipsoid {
                    center: theta.to_vec(),
                    inv_metric: InvMetric::Diag(inv),
                    r2: 2.0 * safe_gap,
                }))
            }
        }
    }
}

/// Row/column aggregates shared by all per-entry bounds of one event.
struct Aggregates {
    z: Vec<f64>,
    rowcost: Vec<f64>,
    colcost: Vec<f64>,
    total_cost: f64,
    /// `sum_j t_ij o_{n+j}` per row and `sum_i t_ij o_i` per column, with
    /// absolute-value companions for the allowances.
    b_row: Vec<f64>,
    b_col: Vec<f64>,
    b_abs: f64,
    s_row: Vec<f64>,
    s_col: Vec<f64>,
    v_row: Vec<f64>,
    v_col: Vec<f64>,
    w_row: Vec<f64>,
    w_col: Vec<f64>,
    /// `sum_i l_i R_i^2` and `sum_j l_{n+j} C_j^2`.
    g_rows: f64,
    g_cols: f64,
    /// `(X t)^T o`.
    a_center: f64,
}

impl Aggregates {
    fn new(e: &Ellipsoid, t: &[f64], state: &ScreeningState) -> Self {
        let (n, m) = (state.n(), state.m());
        let mut z = vec![0.0; n + m];
        crate::problem::apply_x_into(t, state, &mut z);
        let o = &e.center;
        let l = &e.inv_metric;
        let mut agg = Aggregates {
            rowcost: vec![0.0; n],
            colcost: vec![0.0; m],
            total_cost: 0.0,
            b_row: vec![0.0; n],
            b_col: vec![0.0; m],
            b_abs: 0.0,
            s_row: vec![0.0; n],
            s_col: vec![0.0; m],
            v_row: vec![0.0; n],
            v_col: vec![0.0; m],
            w_row: vec![0.0; n],
            w_col: vec![0.0; m],
            g_rows: (0..n).map(|i| l.at(i) * z[i] * z[i]).filter(|v| !v.is_nan()).sum(),
            g_cols: (0..m).map(|j| l.at(n + j) * z[n + j] * z[n + j]).filter(|v| !v.is_nan()).sum(),
            a_center: z.iter().zip(o).map(|(a, b)| a * b).sum(),
            z,
        };
        for k in 0..state.active_len() {
            let tk = t[k];
            if tk == 0.0 {
                continue;
            }
            let (i, j) = (state.rows()[k], state.cols()[k]);
            let (li, lj) = (l.at(i), l.at(n + j));
            let (r, c) = (agg.z[i], agg.z[n + j]);
            let ct = state.cost()[k] * tk;
            agg.rowcost[i] += ct;
            agg.colcost[j] += ct;
            agg.total_cost += ct;
            agg.b_row[i] += tk * o[n + j];
            agg.b_col[j] += tk * o[i];
            agg.b_abs += tk * (o[n + j].abs() + o[i].abs());
            agg.s_row[i] += lj * tk * tk;
            agg.s_col[j] += li * tk * tk;
            agg.v_row[i] += lj * tk * (c - tk);
            agg.v_col[j] += li * tk * (r - tk);
            agg.w_row[i] += lj * tk * (2.0 * c - tk);
            agg.w_col[j] += li * tk * (2.0 * r - tk);
        }
        agg
    }

    /// Data of the summed (dome) half-space for objective `(i, n + j)`.
    fn dome_line(&self, e: &Ellipsoid, lambda: f64, n: usize, i: usize, j: usize) -> LineData {
        let aa = self.g_rows + self.g_cols;
        let offset = lambda * self.total_cost;
        LineData {
            ga: e.inv_metric.at(i) * self.z[i] + e.inv_metric.at(n + j) * self.z[n + j],
            aa,
            e: offset - self.a_center,
            e_mag: offset + self.b_abs,
            aa_mag: aa,
        }
    }

    /// Gram data of the cross / complement split for active entry `(i, j)`
    /// carrying transport `tp` and cost `cp`.
    fn ctp_pair(&self, e: &Ellipsoid, lambda: f64, n: usize, i: usize, j: usize, tp: f64, cp: f64) -> PairData {
        let (li, lj) = (e.inv_metric.at(i), e.inv_metric.at(n + j));
        let o = &e.center;
        let (r, c) = (self.z[i], self.z[n + j]);
        let gv = li * r + lj * c;
        let vv = li * r * r + (self.s_col[j] - li * tp * tp) + lj * c * c + (self.s_row[i] - lj * tp * tp);
        let vw = (self.v_col[j] - li * tp * (r - tp)) + (self.v_row[i] - lj * tp * (c - tp));
        let ww = (self.g_rows - self.w_col[j] - li * (r - tp) * (r - tp))
            + (self.g_cols - self.w_row[i] - lj * (c - tp) * (c - tp));
        let e_v = lambda * (self.rowcost[i] + self.colcost[j] - cp * tp);
        let e_all = lambda * self.total_cost;
        let v_center = r * o[i] + (self.b_col[j] - tp * o[i]) + c * o[n + j] + (self.b_row[i] - tp * o[n + j]);
        let w_center = self.a_center - v_center;
        let aa = self.g_rows + self.g_cols;
        let e_mag = e_all + self.b_abs + (r + c) * (o[i].abs() + o[n + j].abs());
        PairData {
            v: LineData {
                ga: gv,
                aa: vv.max(0.0),
                e: e_v - v_center,
                e_mag,
                aa_mag: 4.0 * aa,
            },
            w: LineData {
                ga: 0.0,
                aa: ww.max(0.0),
                e: (e_all - e_v) - w_center,
                e_mag,
                aa_mag: 4.0 * aa,
            },
            vw,
            vw_mag: 4.0 * aa,
        }
    }
}

/// Feasible points `theta + s (e_i + e_{n+j})` of the two-cut region, used
/// to skip entries whose maximum provably exceeds `lambda c_p`.
///
/// `theta` is dual feasible, so it satisfies both cuts; the secondary
/// normal vanishes at `i` and `n + j`, so only the ellipsoid and the
/// primary cut limit `s`.
struct FeasibleRay {
    /// `theta - center`.
    offset: Vec<f64>,
    /// `(theta - o)^T L (theta - o) - R2`, nonpositive when `theta` is inside.
    q0: f64,
    /// `sum_j t_ij (lambda c_ij - alpha_i - beta_j)` per row, and per column.
    row_slack: Vec<f64>,
    col_slack: Vec<f64>,
}

impl FeasibleRay {
    fn new(e: &Ellipsoid, theta: &[f64], t: &[f64], lambda: f64, state: &ScreeningState) -> Self {
        let n = state.n();
        let offset: Vec<f64> = theta.iter().zip(&e.center).map(|(a, b)| a - b).collect();
        let q0 = offset
            .iter()
            .enumerate()
            .map(|(k, d)| d * d / e.inv_metric.at(k))
            .sum::<f64>()
            - e.r2;
        let mut row_slack = vec![0.0; n];
        let mut col_slack = vec![0.0; state.m()];
        for k in 0..state.active_len() {
            let (i, j) = (state.rows()[k], state.cols()[k]);
            let slack = t[k] * (lambda * state.cost()[k] - theta[i] - theta[n + j]);
            row_slack[i] += slack;
            col_slack[j] += slack;
        }
        FeasibleRay {
            offset,
            q0,
            row_slack,
            col_slack,
        }
    }

    /// `theta_i + theta_{n+j} + 2 s` at the largest admissible `s`, or
    /// `-inf` when none is certain.
    fn lower_bound(&self, e: &Ellipsoid, input: &EventInput<'_>, agg: &Aggregates, k: usize) -> f64 {
        if !(self.q0 <= 0.0) {
            return f64::NEG_INFINITY;
        }
        let (state, theta) = (input.state, input.theta);
        let n = state.n();
        let (i, j) = (state.rows()[k], state.cols()[k]);
        let (li, lj) = (1.0 / e.inv_metric.at(i), 1.0 / e.inv_metric.at(n + j));
        let a = li + lj;
        let b = li * self.offset[i] + lj * self.offset[n + j];
        let mut s = (-b + (b * b - a * self.q0).sqrt()) / a;
        let across = agg.z[i] + agg.z[n + j];
        if across > 0.0 {
            let own = input.t[k] * (input.problem.lambda * state.cost()[k] - theta[i] - theta[n + j]);
            let room = self.row_slack[i] + self.col_slack[j] - own;
            s = s.min(room.max(0.0) / across);
        }
        if s.is_finite() && s > 0.0 {
            theta[i] + theta[n + j] + 2.0 * s
        } else {
            f64::NEG_INFINITY
        }
    }
}

/// Global random split of the active constraints into two groups.
struct RandomSplit {
    /// Normals of the two groups.
    v: Vec<f64>,
    w: Vec<f64>,
    e_v: f64,
    e_w: f64,
    vv: f64,
    ww: f64,
    vw: f64,
    v_center: f64,
    w_center: f64,
    e_mag: f64,
}

impl RandomSplit {
    fn new(e: &Ellipsoid, t: &[f64], lambda: f64, state: &ScreeningState, seed: u64) -> Self {
        let n = state.n();
        let dim = n + state.m();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut v = vec![0.0; dim];
        let mut w = vec![0.0; dim];
        let (mut e_v, mut e_w, mut e_mag) = (0.0, 0.0, 0.0);
        for k in 0..state.active_len() {
            let group_v = rng.gen::<bool>();
            let (i, j) = (state.rows()[k], n + state.cols()[k]);
            let (normal, offset) = if group_v { (&mut v, &mut e_v) } else { (&mut w, &mut e_w) };
            normal[i] += t[k];
            normal[j] += t[k];
            *offset += lambda * state.cost()[k] * t[k];
            e_mag += t[k] * (e.center[i].abs() + e.center[j].abs());
        }
        let l = &e.inv_metric;
        let dot = |a: &[f64], b: &[f64]| -> f64 {
            a.iter()
                .zip(b)
                .enumerate()
                .map(|(k, (x, y))| if *x != 0.0 && *y != 0.0 { l.at(k) * x * y } else { 0.0 })
                .sum()
        };
        let center_dot = |a: &[f64]| -> f64 { a.iter().zip(&e.center).map(|(x, o)| x * o).sum() };
        RandomSplit {
            vv: dot(&v, &v),
            ww: dot(&w, &w),
            vw: dot(&v, &w),
            v_center: center_dot(&v),
            w_center: center_dot(&w),
            e_mag: e_mag + e_v + e_w,
            v,
            w,
            e_v,
            e_w,
        }
    }

    fn pair(&self, e: &Ellipsoid, i: usize, j: usize) -> (PairData, LineData) {
        let l = &e.inv_metric;
        let ga_v = l.at(i) * self.v[i] + l.at(j) * self.v[j];
        let ga_w = l.at(i) * self.w[i] + l.at(j) * self.w[j];
        let mag = self.vv + self.ww + 2.0 * self.vw.abs();
        let line = |ga, aa, e_off: f64, center| LineData {
            ga,
            aa,
            e: e_off - center,
            e_mag: self.e_mag,
            aa_mag: mag,
        };
        let v = line(ga_v, self.vv, self.e_v, self.v_center);
        let w = line(ga_w, self.ww, self.e_w, self.w_center);
        let dome = line(
            ga_v + ga_w,
            self.vv + self.ww + 2.0 * self.vw,
            self.e_v + self.e_w,
            self.v_center + self.w_center,
        );
        (PairData { v, w, vw: self.vw, vw_mag: mag }, dome)
    }
}

/// Inputs of one screening event.
#[derive(Debug, Clone, Copy)]
pub struct EventInput<'a> {
    pub problem: &'a Problem,
    pub state: &'a ScreeningState,
    /// Active transport vector.
    pub t: &'a [f64],
    /// Feasible dual point.
    pub theta: &'a [f64],
    pub gap: GapInfo,
    /// Seed of the random split, used only by `sa-ran`.
    pub seed: u64,
}

/// Upper bound on `alpha_i + beta_j` over the method's region for every
/// active entry, in active order. `None` when the region could not be built.
pub fn element_bounds(method: ScreenMethod, input: &EventInput<'_>) -> Result<Option<Vec<f64>>> {
    bounds_impl(method, input, false)
}

/// Original flat indices of the active entries certified zero by `method`.
///
/// Same decisions as thresholding [`element_bounds`], but the second cut of
/// a pair is skipped for entries the summed cut already certifies.
pub fn certified_entries(method: ScreenMethod, input: &EventInput<'_>) -> Result<Vec<usize>> {
    let Some(bounds) = bounds_impl(method, input, true)? else {
        return Ok(Vec::new());
    };
    let state = input.state;
    Ok((0..state.active_len())
        .filter(|&k| certifies_zero(bounds[k], input.problem.lambda * state.cost()[k]))
        .map(|k| state.active()[k])
        .collect())
}

fn bounds_impl(method: ScreenMethod, input: &EventInput<'_>, shortcut: bool) -> Result<Option<Vec<f64>>> {
    let problem = input.problem;
    method.check_supported(problem.penalty)?;
    let state = input.state;
    state.check_len("t", input.t.len())?;
    state.check_dual_len(input.theta.len())?;
    let Some((base, cut)) = method.parts() else {
        return Ok(Some(vec![f64::INFINITY; state.active_len()]));
    };
    let Some(e) = build_ellipsoid(base, input.theta, input.t, &input.gap, problem, state)? else {
        return Ok(None);
    };
    let n = problem.n;
    let lambda = problem.lambda;
    // Half-space data would mix infinite and zero terms; the region bound
    // alone stays valid.
    let cut = if e.inv_metric.is_finite() { cut } else { Cut::None };
    let terms = state.active_len() + problem.dim();
    let mut out = Vec::with_capacity(state.active_len());
    match cut {
        Cut::None => {
            for k in 0..state.active_len() {
                let (i, j) = (state.rows()[k], n + state.cols()[k]);
                out.push(e.objective(i, j, 0).region_bound());
            }
        }
        Cut::Dome | Cut::Ctp => {
            let agg = Aggregates::new(&e, input.t, state);
            let ray = (shortcut && cut == Cut::Ctp).then(|| FeasibleRay::new(&e, input.theta, input.t, lambda, state));
            for k in 0..state.active_len() {
                let (i, j) = (state.rows()[k], state.cols()[k]);
                let lc = lambda * state.cost()[k];
                let obj = e.objective(i, n + j, terms);
                let dome = agg.dome_line(&e, lambda, n, i, j);
                let dome_bound = obj.line_bound(&dome);
                let hopeless = || ray.as_ref().is_some_and(|r| r.lower_bound(&e, input, &agg, k) > lc);
                let bound = if cut == Cut::Dome || shortcut && certifies_zero(dome_bound, lc) || hopeless() {
                    dome_bound
                } else {
                    let pair = agg.ctp_pair(&e, lambda, n, i, j, input.t[k], state.cost()[k]);
                    obj.pair_bound_from(&pair, dome_bound)
                };
                out.push(bound);
            }
        }
        Cut::RandomSplit => {
            let split = RandomSplit::new(&e, input.t, lambda, state, input.seed);
            for k in 0..state.active_len() {
                let (i, j) = (state.rows()[k], n + state.cols()[k]);
                let (pair, dome) = split.pair(&e, i, j);
                out.push(e.objective(i, j, terms).pair_bound(&pair, &dome));
            }
        }
    }
    Ok(Some(out))
}

/// Whether a bound certifies `t_p = 0` at the optimum.
#[inline]
pub fn certifies_zero(bound: f64, lambda_cost: f64) -> bool {
    bound < lambda_cost - SCREEN_MARGIN
}

/// Tests a single active entry (original flat index `p`).
pub fn screen_element(p: usize, method: ScreenMethod, input: &EventInput<'_>) -> Result<bool> {
    let k = input
        .state
        .active()
        .binary_search(&p)
        .map_err(|_| UotError::AlreadyScreened(p))?;
    let Some(bounds) = element_bounds(method, input)? else {
        return Ok(false);
    };
    Ok(certifies_zero(bounds[k], input.problem.lambda * input.state.cost()[k]))
}

/// Tests every active entry and permanently removes the certified ones from
/// `state` and `t`.
pub fn screen_all(
    method: ScreenMethod,
    problem: &Problem,
    state: &mut ScreeningState,
    t: &mut Vec<f64>,
    theta: &[f64],
    gap: GapInfo,
    seed: u64,
    keep_bounds: bool,
) -> Result<ScreenReport> {
    let input = EventInput {
        problem,
        state,
        t,
        theta,
        gap,
        seed,
    };
    let tested = state.active_len();
    let Some(bounds) = element_bounds(method, &input)? else {
        return Ok(ScreenReport {
            tested: 0,
            screened: 0,
            per_method_max: None,
            skipped: true,
        });
    };
    let newly: Vec<usize> = (0..tested)
        .filter(|&k| certifies_zero(bounds[k], problem.lambda * state.cost()[k]))
        .map(|k| state.active()[k])
        .collect();
    let per_method_max = keep_bounds.then(|| state.active().iter().copied().zip(bounds).collect());
    state.compact(&newly, t)?;
    Ok(ScreenReport {
        tested,
        screened: newly.len(),
        per_method_max,
        skipped: false,
    })
}

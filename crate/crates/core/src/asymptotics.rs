//! Large-group predictors: limits of the fastest and majority rules, the
//! half-binomial sums behind them, and monotonicity checks over `q`.

use serde::Serialize;

use crate::aggregate::tables::BinomialTable;
use crate::aggregate::{aggregate, AggregateOptions};
use crate::error::{Result, SdaError};
use crate::profile::{
    has_almost_sure_decisions, DecisionProfile, ExpectedTime, GroupSpec, Hypothesis, HypothesisProfile, FP_EPS,
};
use crate::special::{ln_pow, ln_prob, LnFactorials};

/// Gap to 1/2 below which a cumulative probability is treated as converging to 1/2.
pub const PLATEAU_TOL: f64 = 1e-6;

/// First time with a nonzero decision probability (`> FP_EPS`).
pub fn earliest_decision_time(h: &HypothesisProfile) -> Result<usize> {
    (1..=h.t_max())
        .find(|&t| h.p_at(Hypothesis::H0, t) > FP_EPS || h.p_at(Hypothesis::H1, t) > FP_EPS)
        .ok_or_else(|| SdaError::InvalidProfile("profile never decides".into()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FastestLimits {
    pub truth: Hypothesis,
    pub t_bar: usize,
    pub p_correct_at_t_bar: f64,
    pub p_wrong_at_t_bar: f64,
    /// Limit of the group wrong-decision probability: 0, 1/2 or 1.
    pub limit_pw: f64,
    pub limit_et: f64,
}

/// Limits of the fastest rule (`q = 1`) as `N → ∞`: whichever verdict is more
/// likely at `t̄` wins, and the group decides at `t̄`.
pub fn fastest_limits(profile: &DecisionProfile, truth: Hypothesis) -> Result<FastestLimits> {
    let h = profile.given(truth);
    let t_bar = earliest_decision_time(h)?;
    let pc = h.p_at(truth, t_bar);
    let pw = h.p_at(truth.other(), t_bar);
    let limit_pw = if (pc - pw).abs() <= FP_EPS {
        0.5
    } else if pc > pw {
        0.0
    } else {
        1.0
    };
    Ok(FastestLimits { truth, t_bar, p_correct_at_t_bar: pc, p_wrong_at_t_bar: pw, limit_pw, limit_et: t_bar as f64 })
}

/// Majority-rule wrong-decision probability for odd `N` and single-SDM
/// error `p`: `Σ_{j>N/2} C(N,j) p^j (1−p)^(N−j)`.
///
/// Terms are generated by ratio recurrences from the largest one, whose
/// value is formed directly when representable and in log space otherwise.
pub fn majority_pw(p: f64, n: usize) -> Result<f64> {
    check_odd(n)?;
    check_prob(p)?;
    if p == 0.5 {
        // the two halves of the symmetric expansion are equal
        return Ok(0.5);
    }
    if p == 0.0 || p == 1.0 {
        return Ok(p);
    }
    if p > 0.5 {
        // odd N: the halves are complementary, and the small side is summed accurately
        return Ok(1.0 - majority_pw(1.0 - p, n)?);
    }
    let first = n / 2 + 1;
    let mode = (((n + 1) as f64 * p).floor() as usize).min(n);
    let anchor = mode.max(first);
    let t_anchor = binomial_term(n, anchor, p);
    let ratio = p / (1.0 - p);
    let mut sum = t_anchor;
    let mut t = t_anchor;
    for j in anchor..n {
        t *= (n - j) as f64 / (j + 1) as f64 * ratio;
        if t == 0.0 {
            break;
        }
        sum += t;
    }
    t = t_anchor;
    for j in (first..anchor).rev() {
        // t_j from t_{j+1}
        t *= (j + 1) as f64 / (n - j) as f64 / ratio;
        sum += t;
    }
    Ok(sum.min(1.0))
}

/// `C(n,k) p^k (1−p)^(n−k)`.
fn binomial_term(n: usize, k: usize, p: f64) -> f64 {
    let ln = LnFactorials::new(n).ln_choose(n, k) + ln_pow(ln_prob(p), k) + ln_pow(ln_prob(1.0 - p), n - k);
    let (a, b) = (p.powi(k as i32), (1.0 - p).powi((n - k) as i32));
    match exact_choose(n, k) {
        Some(c) if a > 1e-300 && b > 1e-300 && ln > -700.0 => c * a * b,
        _ => ln.exp(),
    }
}

/// `C(n, k)` rounded once to `f64`, when the integer fits in `u128`.
fn exact_choose(n: usize, k: usize) -> Option<f64> {
    let k = k.min(n - k);
    let mut c: u128 = 1;
    for i in 0..k {
        c = c.checked_mul((n - i) as u128)? / (i + 1) as u128;
    }
    Some(c as f64)
}

/// Leading large-`N` behaviour of [`majority_pw`] for `p < 1/4`:
/// `(4p(1−p))^k / ((1−2p)·√(2π(N+1)))` with `k = ⌈N/2⌉`.
pub fn majority_pw_asymptote(p: f64, n: usize) -> Result<f64> {
    check_odd(n)?;
    if !(0.0..0.25).contains(&p) {
        return Err(SdaError::InvalidArgument(format!("asymptote needs 0 <= p < 1/4, got {p}")));
    }
    if p == 0.0 {
        return Ok(0.0);
    }
    let k = n.div_ceil(2) as f64;
    let ln = k * (4.0 * p * (1.0 - p)).ln()
        - (1.0 - 2.0 * p).ln()
        - 0.5 * (2.0 * std::f64::consts::PI * (n as f64 + 1.0)).ln();
    Ok(ln.exp())
}

/// Small-`p` leading term `C(N, ⌈N/2⌉) p^⌈N/2⌉` at fixed `N`.
pub fn majority_pw_small_p(p: f64, n: usize) -> Result<f64> {
    check_odd(n)?;
    check_prob(p)?;
    let k = n.div_ceil(2);
    let lnf = LnFactorials::new(n);
    Ok((lnf.ln_choose(n, k) + ln_pow(ln_prob(p), k)).exp())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Lower,
    Upper,
}

/// Half binomial expansions of `c^N = Σ_j C(N,j) x^j (c−x)^(N−j)` for odd `N`:
/// the lower side sums `j <= ⌊N/2⌋`, the upper side `j >= ⌈N/2⌉`.
///
/// Evaluated as `c^N · P[Bin(N, x/c) ∈ side]` with the pmf row built by
/// convex-combination recurrences.
pub fn half_binomial(n: usize, c: f64, x: f64, side: Side) -> Result<f64> {
    check_odd(n)?;
    if !(c > 0.0 && c <= 1.0) {
        return Err(SdaError::InvalidArgument(format!("c must lie in (0, 1], got {c}")));
    }
    if !(0.0..=c).contains(&x) {
        return Err(SdaError::InvalidArgument(format!("x must lie in [0, c], got {x}")));
    }
    let mut table = BinomialTable::default();
    table.rebuild(n, x / c);
    let row = table.row(n);
    let half = n / 2;
    let mass: f64 = match side {
        Side::Lower => row[..=half].iter().sum(),
        Side::Upper => row[half + 1..].iter().rev().sum(),
    };
    Ok(c.powi(n as i32) * mass)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum MajorityCase {
    A1,
    A2,
    A3,
    A4,
    Indeterminate,
}

/// Classification of the single SDM for the majority-rule time limit.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MajorityTimeCase {
    pub case: MajorityCase,
    pub truth: Hypothesis,
    /// Verdict whose cumulative probability crosses 1/2 (A1 only).
    pub favored: Option<Hypothesis>,
    pub t_lt_half: Option<usize>,
    pub t_gt_half: Option<usize>,
    /// First time the cumulative wrong-verdict probability reaches 1/2.
    pub t0: Option<usize>,
    /// First time the cumulative correct-verdict probability reaches 1/2.
    pub t1: Option<usize>,
    /// `None` when indeterminate; `null` in JSON for the infinite marker.
    pub limit_et: Option<ExpectedTime>,
    /// `t_gt_half = t_lt_half + 1`, so the limit is `t_gt_half`.
    pub adjacent_crossing: bool,
}

/// Limit of the majority-rule expected decision time as `N → ∞`.
///
/// Crossing times use strict inequalities, `t_lt_half = max{t: π < 1/2}` and
/// `t_gt_half = min{t: π > 1/2}`. A3/A4 are reported when a cumulative
/// probability stays below 1/2 but ends within [`PLATEAU_TOL`] of it.
pub fn majority_et_limit(profile: &DecisionProfile, truth: Hypothesis, tail_tol: f64) -> Result<MajorityTimeCase> {
    if !has_almost_sure_decisions(profile, tail_tol) {
        return Err(SdaError::InvalidProfile("majority time limit needs almost-sure decisions".into()));
    }
    let h = profile.given(truth);
    let (pi0, pi1) = h.cumulative();
    let (pi_c, pi_w) = match truth {
        Hypothesis::H0 => (pi0, pi1),
        Hypothesis::H1 => (pi1, pi0),
    };
    let p_c = *pi_c.last().unwrap_or(&0.0);
    let p_w = *pi_w.last().unwrap_or(&0.0);
    let mut out = MajorityTimeCase {
        case: MajorityCase::Indeterminate,
        truth,
        favored: None,
        t_lt_half: None,
        t_gt_half: None,
        t0: None,
        t1: None,
        limit_et: None,
        adjacent_crossing: false,
    };
    if (p_c - p_w).abs() >= PLATEAU_TOL {
        let (favored, pi) = if p_c > p_w { (truth, &pi_c) } else { (truth.other(), &pi_w) };
        let below = |v: f64| v < 0.5 - FP_EPS;
        let above = |v: f64| v > 0.5 + FP_EPS;
        // π(0) = 0, so t_lt_half exists
        let t_lt = (0..pi.len()).rev().find(|&t| below(pi[t])).unwrap_or(0);
        let t_gt = (0..pi.len()).find(|&t| above(pi[t]));
        let Some(t_gt) = t_gt else {
            return Ok(out);
        };
        if t_lt >= t_gt {
            // not monotone through 1/2; cannot happen for cumulative sums
            return Ok(out);
        }
        out.case = MajorityCase::A1;
        out.favored = Some(favored);
        out.t_lt_half = Some(t_lt);
        out.t_gt_half = Some(t_gt);
        out.adjacent_crossing = t_gt == t_lt + 1;
        out.limit_et = Some(ExpectedTime::Finite((t_lt + t_gt + 1) as f64 / 2.0));
        return Ok(out);
    }
    let reach = |pi: &[f64]| (1..pi.len()).find(|&t| (pi[t] - 0.5).abs() <= FP_EPS);
    let converges = |pi: &[f64]| 0.5 - pi[pi.len() - 1] < PLATEAU_TOL;
    out.t0 = reach(&pi_w);
    out.t1 = reach(&pi_c);
    out.case = match (out.t0, out.t1) {
        (Some(t0), Some(t1)) => {
            out.limit_et = Some(ExpectedTime::Finite((t0 + t1) as f64 / 2.0));
            MajorityCase::A2
        }
        (None, Some(_)) | (Some(_), None) => {
            let open = if out.t0.is_none() { &pi_w } else { &pi_c };
            if converges(open) {
                out.limit_et = Some(ExpectedTime::Infinite);
                MajorityCase::A3
            } else {
                MajorityCase::Indeterminate
            }
        }
        (None, None) => {
            if converges(&pi_c) && converges(&pi_w) {
                out.limit_et = Some(ExpectedTime::Infinite);
                MajorityCase::A4
            } else {
                MajorityCase::Indeterminate
            }
        }
    };
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ChainKind {
    Theorem,
    Conjecture,
}

/// One link of a monotonicity chain: `monotone_ok` compares with the previous `q`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonotonicityRecord {
    #[serde(rename = "N")]
    pub n: usize,
    pub q: usize,
    pub metric: &'static str,
    pub kind: ChainKind,
    pub value: f64,
    pub monotone_ok: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonotonicityReport {
    pub records: Vec<MonotonicityRecord>,
    pub theorem_violations: usize,
    pub conjecture_violations: usize,
}

/// Slack for monotonicity comparisons between recursions at neighbouring `q`.
pub const MONOTONE_TOL: f64 = 1e-10;

#[derive(Clone, Copy)]
enum Direction {
    Up,
    Down,
}

/// Checks, for each `N` in the grid and conditioned on `truth`:
/// `E[T]` nondecreasing over all `q`; `p_c`, `p_w` nonincreasing and `p_nd`
/// nondecreasing over the high band `q >= ⌊N/2⌋+1` (theorems); `p_c`
/// nondecreasing and `p_w` nonincreasing over `q <= ⌊N/2⌋+1` (conjecture).
pub fn monotonicity_suite(
    profile: &DecisionProfile,
    truth: Hypothesis,
    n_grid: &[usize],
    opts: &AggregateOptions,
) -> Result<MonotonicityReport> {
    let mut records = Vec::new();
    for &n in n_grid {
        let mut metrics = Vec::with_capacity(n);
        for q in 1..=n {
            metrics.push(aggregate(profile, GroupSpec::new(n, q)?, truth, opts)?.metrics());
        }
        let maj = n / 2 + 1;
        let all: Vec<usize> = (1..=n).collect();
        let high: Vec<usize> = (maj..=n).collect();
        let low: Vec<usize> = (1..=maj.min(n)).collect();
        let et = |q: usize| metrics[q - 1].e_t.value();
        let pc = |q: usize| metrics[q - 1].p_c;
        let pw = |q: usize| metrics[q - 1].p_w;
        let pnd = |q: usize| metrics[q - 1].p_nd;
        let mut chain = |metric: &'static str, kind, qs: &[usize], f: &dyn Fn(usize) -> f64, dir: Direction| {
            let mut prev: Option<f64> = None;
            for &q in qs {
                let v = f(q);
                let ok = match (prev, dir) {
                    (None, _) => true,
                    (Some(a), Direction::Up) => v >= a - MONOTONE_TOL || (a.is_infinite() && v.is_infinite()),
                    (Some(a), Direction::Down) => v <= a + MONOTONE_TOL,
                };
                records.push(MonotonicityRecord { n, q, metric, kind, value: v, monotone_ok: ok });
                prev = Some(v);
            }
        };
        chain("e_t", ChainKind::Theorem, &all, &et, Direction::Up);
        chain("p_c_high", ChainKind::Theorem, &high, &pc, Direction::Down);
        chain("p_w_high", ChainKind::Theorem, &high, &pw, Direction::Down);
        chain("p_nd_high", ChainKind::Theorem, &high, &pnd, Direction::Up);
        chain("p_c_low", ChainKind::Conjecture, &low, &pc, Direction::Up);
        chain("p_w_low", ChainKind::Conjecture, &low, &pw, Direction::Down);
    }
    let count = |k| records.iter().filter(|r| r.kind == k && !r.monotone_ok).count();
    let theorem_violations = count(ChainKind::Theorem);
    let conjecture_violations = count(ChainKind::Conjecture);
    Ok(MonotonicityReport { records, theorem_violations, conjecture_violations })
}

fn check_odd(n: usize) -> Result<()> {
    if n % 2 == 1 {
        Ok(())
    } else {
        Err(SdaError::InvalidArgument(format!("N must be odd, got {n}")))
    }
}

fn check_prob(p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(SdaError::InvalidArgument(format!("probability must lie in [0, 1], got {p}")))
    }
}

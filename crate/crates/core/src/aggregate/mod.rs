//! Exact group decision probabilities of the q-out-of-N fusion rule.

mod high;
mod low;
pub(crate) mod tables;
pub mod terms;

use serde::{Deserialize, Serialize};

pub use high::HighBandEngine;
pub use low::{AggregatorState, LowBandEngine};
pub use terms::{alpha, alpha_bar_step, beta, beta_bar, StepProbs};

use crate::error::{Result, SdaError};
use crate::profile::{DecisionProfile, ExpectedTime, GroupSpec, Hypothesis, HypothesisProfile, DEFAULT_TAIL_TOL};

/// Number of consecutive negligible steps before the recursion may stop early.
const QUIET_STEPS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AggregateOptions {
    /// Last time step to evaluate; defaults to the profile horizon.
    pub horizon: Option<usize>,
    pub tail_tol: f64,
    /// Stop once group mass has been below `tail_tol` for ten steps and the
    /// single-SDM profile has less than `tail_tol` decision mass left.
    pub early_stop: bool,
}

impl Default for AggregateOptions {
    fn default() -> Self {
        Self { horizon: None, tail_tol: DEFAULT_TAIL_TOL, early_stop: true }
    }
}

impl AggregateOptions {
    pub fn with_horizon(horizon: usize) -> Self {
        Self { horizon: Some(horizon), early_stop: false, ..Self::default() }
    }
}

/// Group decision probabilities over time, conditioned on one true hypothesis.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupOutcome {
    pub spec: GroupSpec,
    pub truth: Hypothesis,
    /// Group says `H0` / `H1` at `t = k + 1`.
    pub p_say0: Vec<f64>,
    pub p_say1: Vec<f64>,
    pub p_c: f64,
    pub p_w: f64,
    pub p_nd: f64,
    pub expected_time: ExpectedTime,
    pub conditional_expected_time: f64,
    /// Largest recursion state carried between steps.
    pub peak_state_cells: usize,
}

/// Scalar summary written next to the per-step table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupMetrics {
    pub p_c: f64,
    pub p_w: f64,
    pub p_nd: f64,
    pub e_t: ExpectedTime,
    pub e_t_conditional: f64,
    pub n: usize,
    pub q: usize,
}

impl GroupOutcome {
    pub fn horizon(&self) -> usize {
        self.p_say0.len()
    }

    pub fn p_at(&self, verdict: Hypothesis, t: usize) -> f64 {
        if t == 0 || t > self.horizon() {
            return 0.0;
        }
        match verdict {
            Hypothesis::H0 => self.p_say0[t - 1],
            Hypothesis::H1 => self.p_say1[t - 1],
        }
    }

    pub fn metrics(&self) -> GroupMetrics {
        GroupMetrics {
            p_c: self.p_c,
            p_w: self.p_w,
            p_nd: self.p_nd,
            e_t: self.expected_time,
            e_t_conditional: self.conditional_expected_time,
            n: self.spec.n,
            q: self.spec.q,
        }
    }

    pub(crate) fn from_series(
        spec: GroupSpec,
        truth: Hypothesis,
        p_say0: Vec<f64>,
        p_say1: Vec<f64>,
        tail_tol: f64,
        peak_state_cells: usize,
    ) -> Self {
        let m0: f64 = p_say0.iter().sum();
        let m1: f64 = p_say1.iter().sum();
        let (p_c, p_w) = match truth {
            Hypothesis::H0 => (m0, m1),
            Hypothesis::H1 => (m1, m0),
        };
        let p_nd = (1.0 - m0 - m1).max(0.0);
        let mut weighted = 0.0;
        for (k, (a, b)) in p_say0.iter().zip(&p_say1).enumerate() {
            weighted += (k + 1) as f64 * (a + b);
        }
        // truncation of each SDM's tail can leave up to N·tail_tol undecided
        let expected_time =
            if p_nd <= spec.n as f64 * tail_tol { ExpectedTime::Finite(weighted) } else { ExpectedTime::Infinite };
        let conditional = if m0 + m1 > 0.0 { weighted / (m0 + m1) } else { f64::NAN };
        Self {
            spec,
            truth,
            p_say0,
            p_say1,
            p_c,
            p_w,
            p_nd,
            expected_time,
            conditional_expected_time: conditional,
            peak_state_cells,
        }
    }
}

enum Engine {
    Low(LowBandEngine),
    High(HighBandEngine),
}

impl Engine {
    fn step(&mut self, p0: f64, p1: f64, u: f64) -> (f64, f64) {
        match self {
            Engine::Low(e) => e.step(p0, p1, u),
            Engine::High(e) => e.step(p0, p1, u),
        }
    }

    fn live_cells(&self) -> usize {
        match self {
            Engine::Low(e) => e.state().live_cells(),
            Engine::High(e) => e.live_cells(),
        }
    }
}

fn run(
    h: &HypothesisProfile,
    spec: GroupSpec,
    truth: Hypothesis,
    opts: &AggregateOptions,
    mut engine: Engine,
) -> Result<GroupOutcome> {
    h.check_structure()?;
    let t_max = h.t_max();
    let horizon = match opts.horizon {
        Some(0) => return Err(SdaError::InvalidArgument("horizon must be at least 1".into())),
        Some(hz) => hz.min(t_max),
        None => t_max,
    };
    let survival = h.survival();
    // decision mass remaining strictly after t
    let mut remaining = vec![0.0; t_max + 1];
    for k in (0..t_max).rev() {
        remaining[k] = remaining[k + 1] + h.p_say0()[k] + h.p_say1()[k];
    }
    let mut g0 = Vec::with_capacity(horizon);
    let mut g1 = Vec::with_capacity(horizon);
    let mut quiet = 0;
    let mut peak = engine.live_cells();
    for t in 1..=horizon {
        let (a, b) = engine.step(h.p_say0()[t - 1], h.p_say1()[t - 1], survival[t]);
        peak = peak.max(engine.live_cells());
        g0.push(a);
        g1.push(b);
        quiet = if a + b < opts.tail_tol { quiet + 1 } else { 0 };
        if opts.early_stop && quiet >= QUIET_STEPS && remaining[t] < opts.tail_tol {
            break;
        }
    }
    Ok(GroupOutcome::from_series(spec, truth, g0, g1, opts.tail_tol, peak))
}

/// Recursion for `1 <= q <= ⌊N/2⌋`.
pub fn aggregate_low_q(
    h: &HypothesisProfile,
    spec: GroupSpec,
    truth: Hypothesis,
    opts: &AggregateOptions,
) -> Result<GroupOutcome> {
    if !spec.is_low_band() {
        return Err(SdaError::OutOfBand { n: spec.n, q: spec.q, band: "1 <= q <= floor(N/2)" });
    }
    run(h, spec, truth, opts, Engine::Low(LowBandEngine::new(spec.n, spec.q)))
}

/// Closed form for `⌊N/2⌋ + 1 <= q <= N`.
pub fn aggregate_high_q(
    h: &HypothesisProfile,
    spec: GroupSpec,
    truth: Hypothesis,
    opts: &AggregateOptions,
) -> Result<GroupOutcome> {
    if spec.is_low_band() {
        return Err(SdaError::OutOfBand { n: spec.n, q: spec.q, band: "floor(N/2) + 1 <= q <= N" });
    }
    run(h, spec, truth, opts, Engine::High(HighBandEngine::new(spec.n, spec.q)))
}

/// Group outcome for the conditional profile `h` of true hypothesis `truth`.
///
/// A single SDM (`N = 1`) returns its own profile unchanged.
pub fn aggregate_hypothesis(
    h: &HypothesisProfile,
    spec: GroupSpec,
    truth: Hypothesis,
    opts: &AggregateOptions,
) -> Result<GroupOutcome> {
    let spec = GroupSpec::new(spec.n, spec.q)?;
    if spec.n == 1 {
        h.check_structure()?;
        let horizon = opts.horizon.unwrap_or(h.t_max()).min(h.t_max());
        if horizon == 0 {
            return Err(SdaError::InvalidArgument("horizon must be at least 1".into()));
        }
        return Ok(GroupOutcome::from_series(
            spec,
            truth,
            h.p_say0()[..horizon].to_vec(),
            h.p_say1()[..horizon].to_vec(),
            opts.tail_tol,
            2,
        ));
    }
    if spec.is_low_band() {
        aggregate_low_q(h, spec, truth, opts)
    } else {
        aggregate_high_q(h, spec, truth, opts)
    }
}

/// Group outcome under true hypothesis `truth`.
pub fn aggregate(
    profile: &DecisionProfile,
    spec: GroupSpec,
    truth: Hypothesis,
    opts: &AggregateOptions,
) -> Result<GroupOutcome> {
    profile.check_structure()?;
    aggregate_hypothesis(profile.given(truth), spec, truth, opts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::profile::DecisionProfile;

    fn sample_profile() -> HypothesisProfile {
        HypothesisProfile::new(vec![0.05, 0.1, 0.08, 0.02], vec![0.15, 0.3, 0.2, 0.05], 0.05)
    }

    #[test]
    fn single_sdm_identity_is_bitwise() {
        let h = sample_profile();
        let out = aggregate_hypothesis(&h, GroupSpec::new(1, 1).unwrap(), Hypothesis::H1, &AggregateOptions::default())
            .unwrap();
        assert_eq!(out.p_say0, h.p_say0());
        assert_eq!(out.p_say1, h.p_say1());
        // the general closed form agrees to rounding
        let gen =
            aggregate_high_q(&h, GroupSpec::new(1, 1).unwrap(), Hypothesis::H1, &AggregateOptions::default()).unwrap();
        for t in 0..4 {
            assert!((gen.p_say1[t] - h.p_say1()[t]).abs() <= 1e-15 * h.p_say1()[t]);
            assert!((gen.p_say0[t] - h.p_say0()[t]).abs() <= 1e-15 * h.p_say0()[t]);
        }
    }

    #[test]
    fn partition_holds() {
        let h = sample_profile();
        for n in 1..=9 {
            for q in 1..=n {
                let out = aggregate_hypothesis(
                    &h,
                    GroupSpec::new(n, q).unwrap(),
                    Hypothesis::H1,
                    &AggregateOptions::default(),
                )
                .unwrap();
                let total: f64 = out.p_say0.iter().chain(&out.p_say1).sum();
                assert!((total + out.p_nd - 1.0).abs() < 1e-12);
                assert!((out.p_c + out.p_w + out.p_nd - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn band_errors() {
        let h = sample_profile();
        let o = AggregateOptions::default();
        assert!(aggregate_low_q(&h, GroupSpec::new(5, 3).unwrap(), Hypothesis::H1, &o).is_err());
        assert!(aggregate_high_q(&h, GroupSpec::new(5, 2).unwrap(), Hypothesis::H1, &o).is_err());
        assert!(aggregate_low_q(&h, GroupSpec::new(1, 1).unwrap(), Hypothesis::H1, &o).is_err());
    }

    #[test]
    fn silent_profile_never_decides() {
        let h = HypothesisProfile::new(vec![0.0; 5], vec![0.0; 5], 1.0);
        for (n, q) in [(5, 1), (5, 3), (4, 2)] {
            let out =
                aggregate_hypothesis(&h, GroupSpec::new(n, q).unwrap(), Hypothesis::H1, &AggregateOptions::default())
                    .unwrap();
            assert!(out.p_say0.iter().chain(&out.p_say1).all(|&x| x == 0.0));
            assert_eq!(out.p_nd, 1.0);
            assert_eq!(out.expected_time, ExpectedTime::Infinite);
        }
    }

    #[test]
    fn three_sdms_first_step() {
        let h = HypothesisProfile::new(vec![0.4], vec![0.6], 0.0);
        let out = aggregate_hypothesis(&h, GroupSpec::new(3, 1).unwrap(), Hypothesis::H1, &AggregateOptions::default())
            .unwrap();
        assert!((out.p_say1[0] - 0.648).abs() < 1e-15);
        assert!((out.p_say0[0] - 0.352).abs() < 1e-15);
    }

    #[test]
    fn roles_swap_between_hypotheses() {
        let h = sample_profile();
        let p = DecisionProfile::new(h.swapped(), h.clone());
        for (n, q) in [(5, 1), (5, 2), (5, 4), (6, 3)] {
            let spec = GroupSpec::new(n, q).unwrap();
            let a = aggregate(&p, spec, Hypothesis::H1, &AggregateOptions::default()).unwrap();
            let b = aggregate(&p, spec, Hypothesis::H0, &AggregateOptions::default()).unwrap();
            assert!((a.p_c - b.p_c).abs() < 1e-15);
            for (x, y) in a.p_say1.iter().zip(&b.p_say0) {
                assert!((x - y).abs() < 1e-15);
            }
        }
    }
}

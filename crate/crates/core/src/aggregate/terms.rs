//! Building blocks of the low-threshold recursion, evaluated term by term in
//! log space.
//!
//! These are the reference definitions; the engine in `low` evaluates the same
//! quantities through binomial tables and is tested against them.

use crate::profile::Hypothesis;
use crate::special::{ln_pow, ln_prob, LnFactorials, LogSum};

/// Single-SDM probabilities at one time step, under a fixed true hypothesis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepProbs {
    /// Decision for `H0` / `H1` exactly at `t`.
    pub p0: f64,
    pub p1: f64,
    /// Cumulative decisions up to `t - 1`.
    pub pi0_prev: f64,
    pub pi1_prev: f64,
    /// Still undecided after `t`: `1 − π0(t) − π1(t)`.
    pub undecided: f64,
}

impl StepProbs {
    /// Builds the step from cumulative values, with `undecided` clamped at zero.
    pub fn new(p0: f64, p1: f64, pi0_prev: f64, pi1_prev: f64) -> Self {
        let undecided = (1.0 - pi0_prev - pi1_prev - p0 - p1).max(0.0);
        Self { p0, p1, pi0_prev, pi1_prev, undecided }
    }

    /// Roles arranged so that `p1`/`pi1_prev` refer to `favored`.
    pub fn favoring(&self, favored: Hypothesis) -> Self {
        match favored {
            Hypothesis::H1 => *self,
            Hypothesis::H0 => Self {
                p0: self.p1,
                p1: self.p0,
                pi0_prev: self.pi1_prev,
                pi1_prev: self.pi0_prev,
                undecided: self.undecided,
            },
        }
    }

    pub fn pi0(&self) -> f64 {
        self.pi0_prev + self.p0
    }

    pub fn pi1(&self) -> f64 {
        self.pi1_prev + self.p1
    }
}

/// `α = C(s0+s1, s0) π0^s0 π1^s1`: a given set of `s0 + s1` SDMs has split
/// `s0`/`s1` by the time the cumulative probabilities are `(π0, π1)`.
pub fn alpha(s0: usize, s1: usize, pi0: f64, pi1: f64) -> f64 {
    ln_alpha(&LnFactorials::new(s0 + s1), s0, s1, pi0, pi1).exp()
}

pub(crate) fn ln_alpha(lnf: &LnFactorials, s0: usize, s1: usize, pi0: f64, pi1: f64) -> f64 {
    lnf.ln_choose(s0 + s1, s0) + ln_pow(ln_prob(pi0), s0) + ln_pow(ln_prob(pi1), s1)
}

/// One step of the tie-table recursion: `ᾱ(t, s)` from `ᾱ(t−1, h)`, `h = q..=s`.
///
/// `prev[h - q]` holds `ᾱ(t−1, h)`; `step` carries `p(t)` and `π(t−1)`.
pub fn alpha_bar_step(s: usize, q: usize, prev: &[f64], step: &StepProbs) -> f64 {
    let lnf = LnFactorials::new(2 * s);
    let (lp0, lp1) = (ln_prob(step.p0), ln_prob(step.p1));
    let mut acc = LogSum::default();
    for s0 in 0..q {
        for s1 in 0..q {
            acc.add(
                lnf.ln_choose(2 * s, s0 + s1)
                    + lnf.ln_choose(2 * s - s0 - s1, s - s0)
                    + ln_alpha(&lnf, s0, s1, step.pi0_prev, step.pi1_prev)
                    + ln_pow(lp0, s - s0)
                    + ln_pow(lp1, s - s1),
            );
        }
    }
    for h in q..=s {
        acc.add(
            lnf.ln_choose(2 * s, 2 * h)
                + lnf.ln_choose(2 * s - 2 * h, s - h)
                + ln_prob(prev[h - q])
                + ln_pow(lp0, s - h)
                + ln_pow(lp1, s - h),
        );
    }
    acc.ln_value().exp()
}

/// `β`: starting from counters `(s0, s1)` below threshold, the remaining
/// `N − s0 − s1` fresh SDMs push the `favored` counter to at least `q` and
/// strictly ahead at time `t`.
pub fn beta(favored: Hypothesis, s0: usize, s1: usize, step: &StepProbs, n: usize, q: usize) -> f64 {
    let st = step.favoring(favored);
    let (s_fav, s_opp) = match favored {
        Hypothesis::H1 => (s1, s0),
        Hypothesis::H0 => (s0, s1),
    };
    let lnf = LnFactorials::new(n);
    let m_fresh = n - s0 - s1;
    double_sum(&lnf, &st, m_fresh, q.saturating_sub(s_fav), s_fav as i64 - s_opp as i64)
}

/// `β̄`: from a tie at `s ≥ q`, the `N − 2s` fresh SDMs break it in favor of `favored` at `t`.
pub fn beta_bar(favored: Hypothesis, s: usize, step: &StepProbs, n: usize) -> f64 {
    let st = step.favoring(favored);
    let lnf = LnFactorials::new(n);
    double_sum(&lnf, &st, n - 2 * s, 1, 0)
}

/// `Σ_{h1 ≥ h1_min} Σ_{h0 ≤ min(h1+lead−1, M−h1)} C(M,h1) p1^h1 C(M−h1,h0) p0^h0 u^(M−h0−h1)`.
fn double_sum(lnf: &LnFactorials, st: &StepProbs, m: usize, h1_min: usize, lead: i64) -> f64 {
    let (lp0, lp1, lu) = (ln_prob(st.p0), ln_prob(st.p1), ln_prob(st.undecided));
    let mut acc = LogSum::default();
    for h1 in h1_min..=m {
        let top = (h1 as i64 + lead - 1).min((m - h1) as i64);
        if top < 0 {
            continue;
        }
        let outer = lnf.ln_choose(m, h1) + ln_pow(lp1, h1);
        for h0 in 0..=top as usize {
            acc.add(outer + lnf.ln_choose(m - h1, h0) + ln_pow(lp0, h0) + ln_pow(lu, m - h1 - h0));
        }
    }
    acc.ln_value().exp()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn alpha_examples() {
        assert_eq!(alpha(0, 0, 0.2, 0.3), 1.0);
        assert!((alpha(1, 2, 0.2, 0.3) - 0.054).abs() < 1e-15);
        assert_eq!(alpha(2, 0, 0.0, 0.3), 0.0);
    }

    #[test]
    fn beta_three_sdms_one_step() {
        let st = StepProbs::new(0.4, 0.6, 0.0, 0.0);
        // outcomes with more H1 than H0 votes among three: 0.6^3 + 3·0.6²·0.4
        assert!((beta(Hypothesis::H1, 0, 0, &st, 3, 1) - 0.648).abs() < 1e-14);
        assert!((beta(Hypothesis::H0, 0, 0, &st, 3, 1) - 0.352).abs() < 1e-14);
    }

    #[test]
    fn beta_degenerate_cases() {
        let st = StepProbs::new(0.5, 0.0, 0.1, 0.2);
        assert_eq!(beta(Hypothesis::H1, 0, 0, &st, 5, 1), 0.0);
        let st = StepProbs::new(0.1, 0.3, 0.2, 0.1);
        // single SDM: β = p1(t)
        assert!((beta(Hypothesis::H1, 0, 0, &st, 1, 1) - 0.3).abs() < 1e-15);
        assert_eq!(beta_bar(Hypothesis::H1, 2, &st, 4), 0.0);
        assert_eq!(beta_bar(Hypothesis::H1, 1, &StepProbs::new(0.3, 0.0, 0.1, 0.1), 5), 0.0);
    }

    #[test]
    fn alpha_bar_without_new_decisions_carries_over() {
        let st = StepProbs::new(0.0, 0.0, 0.3, 0.4);
        let prev = [0.02, 0.005];
        assert!((alpha_bar_step(1, 1, &prev, &st) - 0.02).abs() < 1e-17);
        assert!((alpha_bar_step(2, 1, &prev, &st) - 0.005).abs() < 1e-17);
    }

    #[test]
    fn alpha_bar_first_step_from_empty_table() {
        // two SDMs both decide at t = 1, one each way: 2·p0·p1
        let st = StepProbs::new(0.3, 0.5, 0.0, 0.0);
        assert!((alpha_bar_step(1, 1, &[0.0], &st) - 0.3).abs() < 1e-15);
    }
}

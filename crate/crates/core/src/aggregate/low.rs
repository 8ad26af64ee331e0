//! Low-threshold band `1 <= q <= ⌊N/2⌋`, where both counters may reach `q`
//! together and cancel.
//!
//! Per step, the group probability of deciding for `H_v` is
//! `Σ_{s0,s1<q} C(N, s0+s1) α(t−1) β_v(t) + Σ_{s=q}^{⌊N/2⌋} C(N, 2s) ᾱ(t−1, s) β̄_v(t, s)`.
//! Both `β` and `β̄` factor as `w^M · P[tip]` with `w` the probability of being
//! undecided after `t−1`; the tipping probability is read off two binomial tables.

use super::tables::BinomialTable;
use super::terms::{ln_alpha, StepProbs};
use crate::profile::Hypothesis;
use crate::special::{ln_pow, ln_prob, LnFactorials, LogSum};

/// Recursion state: cumulative single-SDM probabilities and the tie table.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregatorState {
    pub t: usize,
    pub pi0: f64,
    pub pi1: f64,
    q: usize,
    /// `ln ᾱ(t, s)` for `s = q..=⌊N/2⌋`.
    ln_alpha_bar: Vec<f64>,
}

impl AggregatorState {
    pub fn new(n: usize, q: usize) -> Self {
        let len = if q <= n / 2 { n / 2 - q + 1 } else { 0 };
        Self { t: 0, pi0: 0.0, pi1: 0.0, q, ln_alpha_bar: vec![f64::NEG_INFINITY; len] }
    }

    /// Number of probabilities carried from one step to the next.
    pub fn live_cells(&self) -> usize {
        2 + self.ln_alpha_bar.len()
    }

    /// `ᾱ(t, s)`; zero outside the table.
    pub fn alpha_bar(&self, s: usize) -> f64 {
        if s < self.q {
            return 0.0;
        }
        self.ln_alpha_bar.get(s - self.q).map_or(0.0, |l| l.exp())
    }
}

/// Scratch tables for one verdict: `B` has ratio `p_v / w`, `F` is the lower
/// CDF with ratio `p_opp / (p_opp + u)`.
#[derive(Debug, Default)]
struct VerdictTables {
    b: BinomialTable,
    f: BinomialTable,
}

impl VerdictTables {
    fn rebuild(&mut self, n: usize, st: &StepProbs, w: f64) {
        self.b.rebuild(n, st.p1 / w);
        let rest = st.p0 + st.undecided;
        self.f.rebuild(n, if rest > 0.0 { st.p0 / rest } else { 0.0 });
        self.f.accumulate_lower();
    }

    /// `Σ_{h1 ≥ h1_min} B_M(h1) · F_{M−h1}(min(h1 + lead − 1, M − h1))`.
    fn tipping(&self, m: usize, h1_min: usize, lead: i64) -> f64 {
        let brow = self.b.row(m);
        let mut acc = 0.0;
        for (h1, &b) in brow.iter().enumerate().skip(h1_min) {
            let top = h1 as i64 + lead - 1;
            if top < 0 {
                continue;
            }
            let r = m - h1;
            acc += b * self.f.row(r)[(top as usize).min(r)];
        }
        acc
    }
}

#[derive(Debug)]
pub struct LowBandEngine {
    n: usize,
    q: usize,
    lnf: LnFactorials,
    state: AggregatorState,
    tables: VerdictTables,
}

impl LowBandEngine {
    pub fn new(n: usize, q: usize) -> Self {
        debug_assert!(q >= 1 && q <= n / 2);
        Self { n, q, lnf: LnFactorials::new(n), state: AggregatorState::new(n, q), tables: VerdictTables::default() }
    }

    pub fn state(&self) -> &AggregatorState {
        &self.state
    }

    /// Advances one step given `p0(t)`, `p1(t)` and the mass undecided after `t`;
    /// returns the group probabilities `(say H0, say H1)` at `t`.
    pub fn step(&mut self, p0: f64, p1: f64, undecided: f64) -> (f64, f64) {
        let st = StepProbs { p0, p1, pi0_prev: self.state.pi0, pi1_prev: self.state.pi1, undecided };
        let w = p0 + p1 + undecided;
        let say1 = self.verdict_mass(&st, Hypothesis::H1, w);
        let say0 = self.verdict_mass(&st, Hypothesis::H0, w);
        self.update_alpha_bar(&st);
        self.state.pi0 += p0;
        self.state.pi1 += p1;
        self.state.t += 1;
        (say0, say1)
    }

    fn verdict_mass(&mut self, st: &StepProbs, favored: Hypothesis, w: f64) -> f64 {
        let sv = st.favoring(favored);
        if sv.p1 <= 0.0 || w <= 0.0 {
            return 0.0;
        }
        let (n, q) = (self.n, self.q);
        self.tables.rebuild(n, &sv, w);
        let ln_w = w.ln();
        let mut total = 0.0;
        // counters below threshold at t-1
        for s0 in 0..q {
            for s1 in 0..q {
                let (s_fav, s_opp) = match favored {
                    Hypothesis::H1 => (s1, s0),
                    Hypothesis::H0 => (s0, s1),
                };
                let m = n - s0 - s1;
                let ln_coef = self.lnf.ln_choose(n, s0 + s1)
                    + ln_alpha(&self.lnf, s0, s1, st.pi0_prev, st.pi1_prev)
                    + ln_pow(ln_w, m);
                if ln_coef == f64::NEG_INFINITY {
                    continue;
                }
                total += ln_coef.exp() * self.tables.tipping(m, q - s_fav, s_fav as i64 - s_opp as i64);
            }
        }
        // canceling ties at s >= q
        for (k, &lab) in self.state.ln_alpha_bar.iter().enumerate() {
            if lab == f64::NEG_INFINITY {
                continue;
            }
            let s = q + k;
            let m = n - 2 * s;
            let ln_coef = self.lnf.ln_choose(n, 2 * s) + lab + ln_pow(ln_w, m);
            total += ln_coef.exp() * self.tables.tipping(m, 1, 0);
        }
        total
    }

    fn update_alpha_bar(&mut self, st: &StepProbs) {
        if self.state.ln_alpha_bar.is_empty() {
            return;
        }
        let q = self.q;
        let lnf = &self.lnf;
        let (lp0, lp1) = (ln_prob(st.p0), ln_prob(st.p1));
        let (lpi0, lpi1) = (ln_prob(st.pi0_prev), ln_prob(st.pi1_prev));
        let ln_both = lp0 + lp1;
        let table = &mut self.state.ln_alpha_bar;
        // descending s keeps ᾱ(t−1, h ≤ s) available while writing ᾱ(t, s)
        for k in (0..table.len()).rev() {
            let s = q + k;
            let mut acc = LogSum::default();
            if lp0 > f64::NEG_INFINITY && lp1 > f64::NEG_INFINITY {
                // Σ_{s0,s1<q} multinomial = C(2s, s) · A0(s) · A1(s)
                let mut a0 = LogSum::default();
                let mut a1 = LogSum::default();
                for j in 0..q {
                    a0.add(lnf.ln_choose(s, j) + ln_pow(lpi0, j) + ln_pow(lp0, s - j));
                    a1.add(lnf.ln_choose(s, j) + ln_pow(lpi1, j) + ln_pow(lp1, s - j));
                }
                acc.add(lnf.ln_choose(2 * s, s) + a0.ln_value() + a1.ln_value());
                for h in q..s {
                    let lab = table[h - q];
                    if lab == f64::NEG_INFINITY {
                        continue;
                    }
                    let two_s = 2 * s;
                    acc.add(
                        lnf.ln_factorial(two_s) - lnf.ln_factorial(2 * h) - 2.0 * lnf.ln_factorial(s - h)
                            + lab
                            + ln_pow(ln_both, s - h),
                    );
                }
            }
            acc.add(table[k]);
            table[k] = acc.ln_value();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::super::terms::{alpha_bar_step, beta, beta_bar};
    use super::*;

    #[test]
    fn state_dimension() {
        for (n, q) in [(11usize, 1usize), (11, 5), (101, 1), (1001, 1), (9, 3)] {
            let e = LowBandEngine::new(n, q);
            assert_eq!(e.state().live_cells(), n / 2 - q + 3);
        }
    }

    #[test]
    fn engine_matches_reference_terms() {
        // fixed single-SDM path; compare one step of the engine with the log-space terms
        let steps = [(0.1, 0.25), (0.05, 0.2), (0.12, 0.18), (0.02, 0.03)];
        for (n, q) in [(7usize, 1usize), (7, 2), (8, 3), (9, 2)] {
            let mut eng = LowBandEngine::new(n, q);
            let mut prev_ab: Vec<f64> = vec![0.0; n / 2 - q + 1];
            let (mut pi0, mut pi1) = (0.0, 0.0);
            for &(p0, p1) in &steps {
                let st = StepProbs::new(p0, p1, pi0, pi1);
                let lnf = LnFactorials::new(n);
                let mut expect = [0.0; 2];
                for v in [Hypothesis::H0, Hypothesis::H1] {
                    let mut tot = 0.0;
                    for s0 in 0..q {
                        for s1 in 0..q {
                            let c = (lnf.ln_choose(n, s0 + s1) + ln_alpha(&lnf, s0, s1, pi0, pi1)).exp();
                            tot += c * beta(v, s0, s1, &st, n, q);
                        }
                    }
                    for s in q..=n / 2 {
                        tot += lnf.ln_choose(n, 2 * s).exp() * prev_ab[s - q] * beta_bar(v, s, &st, n);
                    }
                    expect[v.index()] = tot;
                }
                let (g0, g1) = eng.step(p0, p1, st.undecided);
                assert!((g0 - expect[0]).abs() < 1e-14, "n={n} q={q}: {g0} vs {}", expect[0]);
                assert!((g1 - expect[1]).abs() < 1e-14, "n={n} q={q}: {g1} vs {}", expect[1]);
                let next: Vec<f64> = (q..=n / 2).map(|s| alpha_bar_step(s, q, &prev_ab, &st)).collect();
                for s in q..=n / 2 {
                    let got = eng.state().alpha_bar(s);
                    assert!((got - next[s - q]).abs() <= 1e-13 * next[s - q] + 1e-300);
                }
                prev_ab = next;
                pi0 += p0;
                pi1 += p1;
            }
        }
    }
}

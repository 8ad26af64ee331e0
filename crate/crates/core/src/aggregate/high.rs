//! High-threshold band `⌊N/2⌋ < q <= N`: a verdict needs `q` votes, so the two
//! counters never compete and the state is the pair `(π0, π1)`.
//!
//! `p_v(t) = Σ_{k<q} C(N,k) π_v(t−1)^k Σ_{h ≥ q−k} C(N−k,h) p_v(t)^h (1−π_v(t))^(N−h−k)`,
//! evaluated as `Σ_k Bin(N, π_v(t−1))(k) · P[Bin(N−k, p_v(t)/(1−π_v(t−1))) >= q−k]`.

use super::tables::BinomialTable;
use crate::special::{ln_pow, ln_prob, LnFactorials};

#[derive(Debug)]
pub struct HighBandEngine {
    n: usize,
    q: usize,
    lnf: LnFactorials,
    pi0: f64,
    pi1: f64,
    table: BinomialTable,
}

impl HighBandEngine {
    pub fn new(n: usize, q: usize) -> Self {
        debug_assert!(q > n / 2 && q <= n);
        Self { n, q, lnf: LnFactorials::new(n), pi0: 0.0, pi1: 0.0, table: BinomialTable::default() }
    }

    pub fn live_cells(&self) -> usize {
        2
    }

    pub fn step(&mut self, p0: f64, p1: f64, undecided: f64) -> (f64, f64) {
        // 1 − π_v(t−1) as a sum of nonnegative parts
        let not0 = self.pi1 + p0 + p1 + undecided;
        let not1 = self.pi0 + p0 + p1 + undecided;
        let say0 = self.verdict_mass(p0, self.pi0, not0);
        let say1 = self.verdict_mass(p1, self.pi1, not1);
        self.pi0 += p0;
        self.pi1 += p1;
        (say0, say1)
    }

    fn verdict_mass(&mut self, p: f64, pi_prev: f64, not_prev: f64) -> f64 {
        if p <= 0.0 || not_prev <= 0.0 {
            return 0.0;
        }
        let (n, q) = (self.n, self.q);
        self.table.rebuild(n, p / not_prev);
        let (lpi, lnot) = (ln_prob(pi_prev), not_prev.ln());
        let mut total = 0.0;
        for k in 0..q {
            let ln_w = self.lnf.ln_choose(n, k) + ln_pow(lpi, k) + ln_pow(lnot, n - k);
            if ln_w == f64::NEG_INFINITY {
                continue;
            }
            total += ln_w.exp() * self.table.upper_tail(n - k, q - k);
        }
        total
    }
}

//! Log-space combinatorics and a few special functions shared by the
//! aggregation, asymptotic and SPRT modules.

use libm::erfc;

/// Table of `ln k!` for `k = 0..=n`.
///
/// Built by compensated summation of `ln i`, which keeps the absolute error of
/// `ln C(n, k)` near one ulp of `ln n!` even for `n` in the thousands.
#[derive(Debug, Clone)]
pub struct LnFactorials {
    table: Vec<f64>,
}

impl LnFactorials {
    pub fn new(n: usize) -> Self {
        let mut table = Vec::with_capacity(n + 1);
        table.push(0.0);
        let (mut sum, mut comp) = (0.0f64, 0.0f64);
        for i in 1..=n {
            // Kahan summation
            let y = (i as f64).ln() - comp;
            let t = sum + y;
            comp = (t - sum) - y;
            sum = t;
            table.push(sum);
        }
        Self { table }
    }

    pub fn max_n(&self) -> usize {
        self.table.len() - 1
    }

    #[inline]
    pub fn ln_factorial(&self, k: usize) -> f64 {
        self.table[k]
    }

    /// `ln C(n, k)`; `-inf` when `k > n`.
    #[inline]
    pub fn ln_choose(&self, n: usize, k: usize) -> f64 {
        if k > n {
            return f64::NEG_INFINITY;
        }
        self.table[n] - self.table[k] - self.table[n - k]
    }
}

/// `k * ln(x)` with the convention `0^0 = 1`.
#[inline]
pub fn ln_pow(ln_x: f64, k: usize) -> f64 {
    if k == 0 {
        0.0
    } else {
        k as f64 * ln_x
    }
}

/// Natural log that maps `0` to `-inf` and clamps tiny negative round-off to zero.
#[inline]
pub fn ln_prob(x: f64) -> f64 {
    if x <= 0.0 {
        f64::NEG_INFINITY
    } else {
        x.ln()
    }
}

/// Streaming log-sum-exp accumulator.
#[derive(Debug, Clone, Copy)]
pub struct LogSum {
    max: f64,
    scaled: f64,
}

impl Default for LogSum {
    fn default() -> Self {
        Self { max: f64::NEG_INFINITY, scaled: 0.0 }
    }
}

impl LogSum {
    #[inline]
    pub fn add(&mut self, ln_term: f64) {
        if ln_term == f64::NEG_INFINITY {
            return;
        }
        if ln_term <= self.max {
            self.scaled += (ln_term - self.max).exp();
        } else {
            self.scaled = self.scaled * (self.max - ln_term).exp() + 1.0;
            self.max = ln_term;
        }
    }

    #[inline]
    pub fn ln_value(&self) -> f64 {
        if self.max == f64::NEG_INFINITY {
            f64::NEG_INFINITY
        } else {
            self.max + self.scaled.ln()
        }
    }
}

/// Standard normal CDF through the complementary error function, accurate in both tails.
#[inline]
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

/// Standard normal survival function `1 - Φ(z)`.
#[inline]
pub fn normal_sf(z: f64) -> f64 {
    0.5 * erfc(z / std::f64::consts::SQRT_2)
}

/// `P[Bin(n, p) >= k]` summed term by term in log space.
pub fn binomial_upper_tail(lnf: &LnFactorials, n: usize, p: f64, k: usize) -> f64 {
    if k == 0 {
        return 1.0;
    }
    if k > n {
        return 0.0;
    }
    let (lp, lq) = (ln_prob(p), ln_prob(1.0 - p));
    (k..=n).map(|j| (lnf.ln_choose(n, j) + ln_pow(lp, j) + ln_pow(lq, n - j)).exp()).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ln_choose_small_values() {
        let f = LnFactorials::new(70);
        assert_eq!(f.ln_choose(5, 0), 0.0);
        assert!((f.ln_choose(5, 2).exp() - 10.0).abs() < 1e-12);
        assert!((f.ln_choose(61, 30).exp() / 232714176627630544.0 - 1.0).abs() < 1e-13);
        assert_eq!(f.ln_choose(3, 4), f64::NEG_INFINITY);
    }

    #[test]
    fn log_sum_matches_direct_sum() {
        let xs = [0.1, 0.25, 1e-30, 0.0, 0.3];
        let mut acc = LogSum::default();
        for &x in &xs {
            acc.add(ln_prob(x));
        }
        let direct: f64 = xs.iter().sum();
        assert!((acc.ln_value().exp() - direct).abs() < 1e-15);
        assert_eq!(LogSum::default().ln_value(), f64::NEG_INFINITY);
    }

    #[test]
    fn normal_cdf_reference_points() {
        assert!((normal_cdf(0.0) - 0.5).abs() < 1e-16);
        let d = normal_cdf(1.959963984540054) - 0.975;
        assert!(d.abs() < 1e-15, "{d:e}");
        assert!((normal_sf(10.0) - 7.619853024160527e-24).abs() < 1e-36);
    }

    #[test]
    fn zero_power_convention() {
        assert_eq!(ln_pow(f64::NEG_INFINITY, 0), 0.0);
        assert_eq!(ln_pow(f64::NEG_INFINITY, 3), f64::NEG_INFINITY);
    }

    #[test]
    fn binomial_tail_small_case() {
        let f = LnFactorials::new(10);
        // P[Bin(3, 0.1) >= 2] = 3 * 0.01 * 0.9 + 0.001
        assert!((binomial_upper_tail(&f, 3, 0.1, 2) - 0.028).abs() < 1e-15);
    }
}

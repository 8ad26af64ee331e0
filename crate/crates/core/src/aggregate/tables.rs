//! Triangular tables of binomial probabilities `P[Bin(R, r) = k]` for
//! `R = 0..=n_max`, built row by row with `f_{R+1}(k) = (1−r) f_R(k) + r f_R(k−1)`.
//!
//! Every update is a convex combination, so rows stay accurate without
//! logarithms and tiny tails underflow gracefully to zero.

#[derive(Debug, Clone, Default)]
pub(crate) struct BinomialTable {
    n_max: usize,
    data: Vec<f64>,
}

#[inline]
fn offset(r: usize) -> usize {
    r * (r + 1) / 2
}

impl BinomialTable {
    pub fn rebuild(&mut self, n_max: usize, ratio: f64) {
        let ratio = ratio.clamp(0.0, 1.0);
        let comp = 1.0 - ratio;
        self.n_max = n_max;
        self.data.clear();
        self.data.resize(offset(n_max + 1), 0.0);
        self.data[0] = 1.0;
        for r in 0..n_max {
            let (src, dst) = (offset(r), offset(r + 1));
            let (head, tail) = self.data.split_at_mut(dst);
            let prev = &head[src..src + r + 1];
            let next = &mut tail[..r + 2];
            next[0] = comp * prev[0];
            for k in 1..=r {
                next[k] = comp * prev[k] + ratio * prev[k - 1];
            }
            next[r + 1] = ratio * prev[r];
        }
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        debug_assert!(r <= self.n_max);
        &self.data[offset(r)..offset(r) + r + 1]
    }

    /// Turns each row into its lower cumulative sums `P[Bin(R, r) <= k]`.
    pub fn accumulate_lower(&mut self) {
        for r in 0..=self.n_max {
            let row = &mut self.data[offset(r)..offset(r) + r + 1];
            for k in 1..row.len() {
                row[k] += row[k - 1];
            }
        }
    }

    /// `P[Bin(R, r) >= k]`, summed from the top of the row.
    pub fn upper_tail(&self, r: usize, k: usize) -> f64 {
        if k > r {
            return 0.0;
        }
        self.row(r)[k..].iter().rev().sum()
    }
}

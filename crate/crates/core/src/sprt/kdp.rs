//! Exact lattice recursion for SPRTs with integer-valued observations of
//! exponential-family form (binomial here).
//!
//! The state is the distribution of the running sum `X(t) = Σ x(i)` over the
//! integers still inside the continuation band. The band test is applied to the
//! log-likelihood `B·X(t) − t·A` directly, which also covers `B < 0`.

use log::warn;

use super::{equalize_horizons, llr_spec, LlrSpec, ObservationModel, ProfileOptions, SprtModel};
use crate::error::{Result, SdaError};
use crate::profile::{DecisionProfile, Hypothesis, HypothesisProfile};
use crate::special::{ln_pow, ln_prob, LnFactorials};

/// Continuing mass over a contiguous block of lattice points starting at `lo`.
#[derive(Debug, Clone, PartialEq)]
pub struct LatticeState {
    pub t: usize,
    pub lo: i64,
    pub mass: Vec<f64>,
}

impl LatticeState {
    pub fn initial() -> Self {
        Self { t: 0, lo: 0, mass: vec![1.0] }
    }

    pub fn continuing_mass(&self) -> f64 {
        self.mass.iter().sum()
    }

    /// Advances one observation; returns the exit masses `(say H0, say H1)` at `t + 1`.
    pub fn step(&mut self, pmf: &[f64], b_diff: f64, a_diff: f64, eta0: f64, eta1: f64) -> (f64, f64) {
        let t_next = (self.t + 1) as f64;
        let width = self.mass.len() + pmf.len() - 1;
        let mut next = vec![0.0; width];
        for (j, &m) in self.mass.iter().enumerate() {
            if m == 0.0 {
                continue;
            }
            for (x, &f) in pmf.iter().enumerate() {
                next[j + x] += m * f;
            }
        }
        let (mut say0, mut say1) = (0.0, 0.0);
        let mut first = None;
        let mut last = 0;
        for (k, &m) in next.iter().enumerate() {
            let ell = self.lo + k as i64;
            let llr = b_diff * ell as f64 - t_next * a_diff;
            if llr <= eta0 {
                say0 += m;
            } else if llr >= eta1 {
                say1 += m;
            } else {
                first.get_or_insert(k);
                last = k;
            }
        }
        match first {
            Some(f) => {
                self.lo += f as i64;
                self.mass = next[f..=last].to_vec();
            }
            None => self.mass.clear(),
        }
        self.t += 1;
        (say0, say1)
    }
}

fn binomial_pmf(n: u32, theta: f64) -> Vec<f64> {
    let lnf = LnFactorials::new(n as usize);
    let (lp, lq) = (ln_prob(theta), ln_prob(1.0 - theta));
    let n = n as usize;
    (0..=n).map(|x| (lnf.ln_choose(n, x) + ln_pow(lp, x) + ln_pow(lq, n - x)).exp()).collect()
}

fn kdp_hypothesis(model: &SprtModel, truth: Hypothesis, opts: &ProfileOptions) -> Result<HypothesisProfile> {
    let (n, b_diff, a_diff) = match (model.dist, llr_spec(model)) {
        (ObservationModel::Binomial { n }, LlrSpec::Binomial { b_diff, a_diff, .. }) => (n, b_diff, a_diff),
        _ => return Err(SdaError::InvalidModel("lattice recursion needs an integer-valued (binomial) model".into())),
    };
    if b_diff == 0.0 {
        return Err(SdaError::InvalidModel("B(theta1) - B(theta0) vanishes".into()));
    }
    let pmf = binomial_pmf(n, model.theta(truth));
    let limit = opts.horizon.unwrap_or(opts.horizon_cap);
    let mut state = LatticeState::initial();
    let (mut p0, mut p1) = (Vec::new(), Vec::new());
    while state.t < limit {
        let (a, b) = state.step(&pmf, b_diff, a_diff, model.eta0, model.eta1);
        p0.push(a);
        p1.push(b);
        if opts.horizon.is_none() && state.continuing_mass() < opts.tail_tol {
            break;
        }
    }
    let rest = state.continuing_mass();
    if opts.horizon.is_none() && rest >= opts.tail_tol {
        warn!("horizon cap {} reached with undecided mass {rest:e}", opts.horizon_cap);
    }
    let mut h = HypothesisProfile::new(p0, p1, rest);
    h.set_tail_mass(rest);
    Ok(h)
}

/// Exact decision profile of a binomial SPRT.
pub fn kdp_profile(model: &SprtModel, opts: &ProfileOptions) -> Result<DecisionProfile> {
    model.validate()?;
    if opts.horizon == Some(0) {
        return Err(SdaError::InvalidArgument("horizon must be at least 1".into()));
    }
    let h0 = kdp_hypothesis(model, Hypothesis::H0, opts)?;
    let h1 = kdp_hypothesis(model, Hypothesis::H1, opts)?;
    Ok(equalize_horizons(h0, h1))
}

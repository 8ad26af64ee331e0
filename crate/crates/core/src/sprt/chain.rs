//! Absorbing Markov chain approximation of a Gaussian SPRT.
//!
//! The log-likelihood increment is rounded to the grid `iδ` and the running sum
//! lives on `s_k = η̄0 + kδ`, `k = 0..n-1`, with both end states absorbing.

use log::warn;
use nalgebra::DMatrix;
use serde::Serialize;

use super::{llr_spec, LlrSpec, ObservationModel, ProfileOptions, SprtModel};
use crate::error::{Result, SdaError};
use crate::profile::{Hypothesis, HypothesisProfile};
use crate::special::{normal_cdf, normal_sf};

#[derive(Debug, Clone, PartialEq)]
pub struct AbsorbingChain {
    pub delta: f64,
    pub n_states: usize,
    pub state_values: Vec<f64>,
    /// Row-stochastic `n × n` matrix; rows `0` and `n-1` absorbing.
    pub transition: DMatrix<f64>,
    /// Index of the zero-valued starting state.
    pub start: usize,
    /// `P[λ̄ = iδ]` for `i = -(n-2)..=(n-2)`, stored at `i + n - 2`.
    pub increment_pmf: Vec<f64>,
}

impl AbsorbingChain {
    /// Assembles the chain for a given increment pmf on `i = -(n-2)..=(n-2)`.
    pub fn from_increment_pmf(delta: f64, eta_bar0: f64, n_states: usize, start: usize, pmf: Vec<f64>) -> Result<Self> {
        let n = n_states;
        if n < 5 {
            return Err(SdaError::InvalidArgument(format!("chain needs at least 5 states, got {n}")));
        }
        if pmf.len() != 2 * n - 3 {
            return Err(SdaError::InvalidArgument(format!(
                "increment pmf needs {} entries, got {}",
                2 * n - 3,
                pmf.len()
            )));
        }
        if start == 0 || start >= n - 1 {
            return Err(SdaError::InvalidArgument("start state must be transient".into()));
        }
        let off = n - 2;
        // lower[k] = Σ pmf[..=k], upper[k] = Σ pmf[k..], each summed from its own end
        let mut lower = vec![0.0; pmf.len()];
        let mut acc = 0.0;
        for (k, &p) in pmf.iter().enumerate() {
            acc += p;
            lower[k] = acc;
        }
        let mut upper = vec![0.0; pmf.len()];
        acc = 0.0;
        for (k, &p) in pmf.iter().enumerate().rev() {
            acc += p;
            upper[k] = acc;
        }
        let mut a = DMatrix::<f64>::zeros(n, n);
        a[(0, 0)] = 1.0;
        a[(n - 1, n - 1)] = 1.0;
        for i in 1..n - 1 {
            // landing index i + s <= 0 absorbs low, i + s >= n - 1 absorbs high
            a[(i, 0)] = lower[off - i];
            a[(i, n - 1)] = upper[off + n - 1 - i];
            for j in 1..n - 1 {
                a[(i, j)] = pmf[off + j - i];
            }
        }
        let state_values = (0..n).map(|k| eta_bar0 + k as f64 * delta).collect();
        Ok(Self { delta, n_states: n, state_values, transition: a, start, increment_pmf: pmf })
    }

    fn transient_len(&self) -> usize {
        self.n_states - 2
    }
}

fn interval_prob(lo: f64, hi: f64, mean: f64, sd: f64) -> f64 {
    let (zl, zh) = ((lo - mean) / sd, (hi - mean) / sd);
    if zl >= 0.0 {
        normal_sf(zl) - normal_sf(zh)
    } else if zh <= 0.0 {
        normal_cdf(zh) - normal_cdf(zl)
    } else {
        1.0 - normal_cdf(zl) - normal_sf(zh)
    }
}

/// Builds the chain of a Gaussian SPRT under hypothesis `truth`.
pub fn discretize(model: &SprtModel, delta: f64, truth: Hypothesis) -> Result<AbsorbingChain> {
    model.validate()?;
    let ObservationModel::Gaussian { sigma } = model.dist else {
        return Err(SdaError::InvalidModel("chain discretization needs a gaussian model".into()));
    };
    let LlrSpec::Gaussian { slope, intercept } = llr_spec(model) else { unreachable!() };
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(SdaError::InvalidArgument(format!("delta must be positive, got {delta}")));
    }
    let lo_steps = (model.eta0 / delta).floor();
    let hi_steps = (model.eta1 / delta).ceil();
    if !(lo_steps < 0.0 && hi_steps > 0.0) {
        return Err(SdaError::InvalidModel("thresholds must bracket zero for the chain start".into()));
    }
    let n_f = hi_steps - lo_steps + 1.0;
    if n_f < 5.0 {
        return Err(SdaError::InvalidArgument(format!("delta {delta} leaves only {n_f} states (need 5)")));
    }
    if n_f > 1e5 {
        return Err(SdaError::InvalidArgument(format!("delta {delta} gives {n_f} states, too many")));
    }
    let n = n_f as usize;
    // state values η̄0 + kδ; zero sits at k = -⌊η0/δ⌋
    let start = (-lo_steps) as usize;
    let mean = slope * model.theta(truth) + intercept;
    let sd = slope.abs() * sigma;
    let m = (n - 2) as i64;
    let pmf = (-m..=m)
        .map(|i| {
            let c = i as f64 * delta;
            if i == -m {
                interval_prob(f64::NEG_INFINITY, c + delta / 2.0, mean, sd)
            } else if i == m {
                interval_prob(c - delta / 2.0, f64::INFINITY, mean, sd)
            } else {
                interval_prob(c - delta / 2.0, c + delta / 2.0, mean, sd)
            }
        })
        .collect();
    AbsorbingChain::from_increment_pmf(delta, lo_steps * delta, n, start, pmf)
}

/// Per-step absorption probabilities by iterating the transient distribution.
pub fn chain_profile(chain: &AbsorbingChain, opts: &ProfileOptions) -> Result<HypothesisProfile> {
    if opts.horizon == Some(0) {
        return Err(SdaError::InvalidArgument("horizon must be at least 1".into()));
    }
    let m = chain.transient_len();
    let a = &chain.transition;
    // transient index k corresponds to chain state k + 1
    let mut v = vec![0.0; m];
    v[chain.start - 1] = 1.0;
    let mut next = vec![0.0; m];
    let limit = opts.horizon.unwrap_or(opts.horizon_cap);
    let (mut p0, mut p1) = (Vec::new(), Vec::new());
    let mut rest = 1.0;
    for _ in 0..limit {
        next.iter_mut().for_each(|x| *x = 0.0);
        let (mut say0, mut say1) = (0.0, 0.0);
        for (k, &vk) in v.iter().enumerate() {
            if vk == 0.0 {
                continue;
            }
            let i = k + 1;
            say0 += vk * a[(i, 0)];
            say1 += vk * a[(i, m + 1)];
            let pmf_row = &chain.increment_pmf[m - i + 1..];
            for (j, nx) in next.iter_mut().enumerate() {
                *nx += vk * pmf_row[j];
            }
        }
        std::mem::swap(&mut v, &mut next);
        p0.push(say0);
        p1.push(say1);
        rest = v.iter().sum();
        if opts.horizon.is_none() && rest < opts.tail_tol {
            break;
        }
    }
    if opts.horizon.is_none() && rest >= opts.tail_tol {
        warn!("horizon cap {} reached with undecided mass {rest:e}", opts.horizon_cap);
    }
    let mut h = HypothesisProfile::new(p0, p1, rest);
    h.set_tail_mass(rest);
    Ok(h)
}

/// Absorption probabilities and mean absorption time from the fundamental matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClosedForm {
    pub p_say0: f64,
    pub p_say1: f64,
    pub expected_time: f64,
}

pub fn chain_closed_form(chain: &AbsorbingChain) -> Result<ClosedForm> {
    let m = chain.transient_len();
    let a = &chain.transition;
    let i_minus_q = DMatrix::from_fn(m, m, |r, c| f64::from(u8::from(r == c)) - a[(r + 1, c + 1)]);
    let mut rhs = DMatrix::<f64>::zeros(m, 3);
    for r in 0..m {
        rhs[(r, 0)] = a[(r + 1, 0)];
        rhs[(r, 1)] = a[(r + 1, m + 1)];
        rhs[(r, 2)] = 1.0;
    }
    let lu = i_minus_q.lu();
    let pivot_floor = lu.u().diagonal().iter().fold(f64::INFINITY, |acc, d| acc.min(d.abs()));
    if !lu.is_invertible() || pivot_floor < 1e-14 {
        return Err(SdaError::Singular(format!("I - Q is singular (smallest pivot {pivot_floor:e})")));
    }
    let sol = lu.solve(&rhs).ok_or_else(|| SdaError::Singular("I - Q solve failed".into()))?;
    let r = chain.start - 1;
    Ok(ClosedForm { p_say0: sol[(r, 0)], p_say1: sol[(r, 1)], expected_time: sol[(r, 2)] })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sprt::wald_thresholds;

    fn legacy() -> SprtModel {
        SprtModel::gaussian_wald(0.0, 1.0, 1.0, 0.1, 0.1).unwrap()
    }

    #[test]
    fn state_count_and_start() {
        let c = discretize(&legacy(), 0.1, Hypothesis::H1).unwrap();
        assert_eq!(c.n_states, 45);
        assert!(c.state_values[c.start].abs() < 1e-12);
        assert!((c.state_values[0] + 2.2).abs() < 1e-12);
    }

    #[test]
    fn rows_are_stochastic() {
        let c = discretize(&legacy(), 0.1, Hypothesis::H0).unwrap();
        for i in 0..c.n_states {
            let s: f64 = c.transition.row(i).iter().sum();
            assert!((s - 1.0).abs() < 1e-12, "row {i}: {s}");
        }
        assert_eq!(c.transition[(0, 0)], 1.0);
        assert_eq!(c.transition[(44, 44)], 1.0);
        assert_eq!(c.transition.row(0).iter().sum::<f64>(), 1.0);
        assert!((c.increment_pmf.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn increment_mean_under_h1() {
        let delta = 0.01;
        let c = discretize(&legacy(), delta, Hypothesis::H1).unwrap();
        let off = (c.n_states - 2) as f64;
        let mean: f64 = c.increment_pmf.iter().enumerate().map(|(k, p)| (k as f64 - off) * delta * p).sum();
        // the upper tail beyond the last grid point is lumped onto it
        assert!((mean - 0.5).abs() < 2e-5);
    }

    #[test]
    fn coarse_delta_rejected() {
        assert_eq!(discretize(&legacy(), 1.5, Hypothesis::H1).unwrap().n_states, 5);
        assert!(discretize(&legacy(), 2.5, Hypothesis::H1).is_err());
        assert!(discretize(&legacy(), 0.0, Hypothesis::H1).is_err());
    }

    #[test]
    fn profile_converges_to_closed_form() {
        for truth in [Hypothesis::H0, Hypothesis::H1] {
            let c = discretize(&legacy(), 0.02, truth).unwrap();
            let h = chain_profile(&c, &ProfileOptions::default()).unwrap();
            let cf = chain_closed_form(&c).unwrap();
            assert!((h.mass_for(Hypothesis::H0) - cf.p_say0).abs() < 1e-9);
            assert!((h.mass_for(Hypothesis::H1) - cf.p_say1).abs() < 1e-9);
            assert!((cf.p_say0 + cf.p_say1 - 1.0).abs() < 1e-10);
            assert!(cf.expected_time >= 1.0);
            let mean: f64 = (1..=h.t_max()).map(|t| t as f64 * (h.p_say0()[t - 1] + h.p_say1()[t - 1])).sum();
            assert!((mean - cf.expected_time).abs() < 1e-6);
        }
    }

    #[test]
    fn absorbing_mass_nondecreasing() {
        let c = discretize(&legacy(), 0.05, Hypothesis::H1).unwrap();
        let h = chain_profile(&c, &ProfileOptions { horizon: Some(50), ..Default::default() }).unwrap();
        assert!(h.p_say0().iter().chain(h.p_say1()).all(|&p| p >= 0.0));
    }

    #[test]
    fn symmetric_model_mirrors() {
        let (e0, e1) = wald_thresholds(0.1, 0.1).unwrap();
        let m = SprtModel::new(ObservationModel::Gaussian { sigma: 1.0 }, -0.5, 0.5, e0, e1).unwrap();
        let opts = ProfileOptions { horizon: Some(60), ..Default::default() };
        let h0 = chain_profile(&discretize(&m, 0.02, Hypothesis::H0).unwrap(), &opts).unwrap();
        let h1 = chain_profile(&discretize(&m, 0.02, Hypothesis::H1).unwrap(), &opts).unwrap();
        for t in 0..60 {
            assert!((h0.p_say0()[t] - h1.p_say1()[t]).abs() < 1e-12);
            assert!((h0.p_say1()[t] - h1.p_say0()[t]).abs() < 1e-12);
        }
    }

    #[test]
    fn refinement_changes_little() {
        let coarse = chain_closed_form(&discretize(&legacy(), 0.02, Hypothesis::H1).unwrap()).unwrap();
        let fine = chain_closed_form(&discretize(&legacy(), 0.01, Hypothesis::H1).unwrap()).unwrap();
        assert!((coarse.p_say0 - fine.p_say0).abs() < 2e-3);
        assert!((coarse.expected_time - fine.expected_time).abs() < 2e-2);
    }

    #[test]
    fn stuck_chain_is_singular() {
        let n = 7;
        let mut pmf = vec![0.0; 2 * n - 3];
        pmf[n - 2] = 1.0;
        let c = AbsorbingChain::from_increment_pmf(0.1, -0.3, n, 3, pmf).unwrap();
        assert!(matches!(chain_closed_form(&c), Err(SdaError::Singular(_))));
    }
}

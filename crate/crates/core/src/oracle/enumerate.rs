//! Brute-force group probabilities over every joint outcome of `N` SDMs.

use crate::aggregate::GroupOutcome;
use crate::error::{Result, SdaError};
use crate::profile::{GroupSpec, Hypothesis, HypothesisProfile, DEFAULT_TAIL_TOL};

use super::fuse;

/// Largest number of joint atoms `(2H+1)^N` enumerated.
pub const DEFAULT_ENUMERATION_CAP: u128 = 10_000_000;

/// Exact group outcome by summing all `(2H+1)^N` joint atoms: each SDM decides
/// `H0` or `H1` at some `t <= H`, or is still undecided at `H`.
pub fn enumerate_exact(
    h: &HypothesisProfile,
    spec: GroupSpec,
    truth: Hypothesis,
    horizon: usize,
    cap: u128,
) -> Result<GroupOutcome> {
    let spec = GroupSpec::new(spec.n, spec.q)?;
    let horizon = horizon.min(h.t_max());
    if horizon == 0 {
        return Err(SdaError::InvalidArgument("horizon must be at least 1".into()));
    }
    let k = 2 * horizon + 1;
    let atoms = (k as u128).checked_pow(spec.n as u32).unwrap_or(u128::MAX);
    if atoms > cap {
        return Err(SdaError::EnumerationCap { atoms, cap });
    }
    // atom a < H: H0 at a+1; H <= a < 2H: H1 at a-H+1; a = 2H: undecided
    let mut probs = Vec::with_capacity(k);
    probs.extend_from_slice(&h.p_say0()[..horizon]);
    probs.extend_from_slice(&h.p_say1()[..horizon]);
    probs.push(h.survival()[horizon]);
    let decode = |a: usize| -> (usize, Hypothesis) {
        if a < horizon {
            (a + 1, Hypothesis::H0)
        } else if a < 2 * horizon {
            (a - horizon + 1, Hypothesis::H1)
        } else {
            (horizon + 1, Hypothesis::H0)
        }
    };
    let n = spec.n;
    let mut g0 = vec![0.0; horizon];
    let mut g1 = vec![0.0; horizon];
    let mut idx = vec![0usize; n];
    let mut buf = Vec::with_capacity(n);
    loop {
        let p: f64 = idx.iter().map(|&a| probs[a]).product();
        if p > 0.0 {
            buf.clear();
            buf.extend(idx.iter().filter(|&&a| a < 2 * horizon).map(|&a| decode(a)));
            match fuse(&mut buf, spec.q) {
                Some((t, Hypothesis::H0)) => g0[t - 1] += p,
                Some((t, Hypothesis::H1)) => g1[t - 1] += p,
                None => {}
            }
        }
        // odometer
        let mut pos = 0;
        loop {
            if pos == n {
                return Ok(GroupOutcome::from_series(spec, truth, g0, g1, DEFAULT_TAIL_TOL, 0));
            }
            idx[pos] += 1;
            if idx[pos] < k {
                break;
            }
            idx[pos] = 0;
            pos += 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_sdm_identity() {
        let h = HypothesisProfile::new(vec![0.1, 0.2], vec![0.3, 0.25], 0.15);
        let out =
            enumerate_exact(&h, GroupSpec::new(1, 1).unwrap(), Hypothesis::H1, 2, DEFAULT_ENUMERATION_CAP).unwrap();
        assert_eq!(out.p_say0, vec![0.1, 0.2]);
        assert_eq!(out.p_say1, vec![0.3, 0.25]);
    }

    #[test]
    fn two_of_three_first_step() {
        let h = HypothesisProfile::new(vec![0.0], vec![0.2], 0.8);
        let out =
            enumerate_exact(&h, GroupSpec::new(3, 2).unwrap(), Hypothesis::H1, 1, DEFAULT_ENUMERATION_CAP).unwrap();
        assert!((out.p_say1[0] - 0.104).abs() < 1e-15);
    }

    #[test]
    fn total_mass_is_one() {
        let h = HypothesisProfile::new(vec![0.3, 0.2], vec![0.3, 0.2], 0.0);
        let out =
            enumerate_exact(&h, GroupSpec::new(3, 1).unwrap(), Hypothesis::H1, 2, DEFAULT_ENUMERATION_CAP).unwrap();
        let total: f64 = out.p_say0.iter().chain(&out.p_say1).sum::<f64>() + out.p_nd;
        assert!((total - 1.0).abs() < 1e-15);
    }

    #[test]
    fn cap_is_enforced() {
        let h = HypothesisProfile::new(vec![0.1; 10], vec![0.1; 10], 0.0);
        let err = enumerate_exact(&h, GroupSpec::new(9, 5).unwrap(), Hypothesis::H1, 10, DEFAULT_ENUMERATION_CAP);
        assert!(matches!(err, Err(SdaError::EnumerationCap { .. })));
    }
}

//! Decision-probability model of a single sequential decision maker (SDM).
//!
//! A [`HypothesisProfile`] holds, for one true hypothesis, the probability of
//! deciding `H0` or `H1` at each time `t = 1..=T_max` plus the mass of never
//! deciding. Storage is 0-based: index `k` holds time `t = k + 1`.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SdaError};

/// Default tolerance on missing probability mass (truncated tails).
pub const DEFAULT_TAIL_TOL: f64 = 1e-9;
/// Floating-point slack used for exact identities.
pub const FP_EPS: f64 = 1e-12;

/// One of the two hypotheses under test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Hypothesis {
    H0,
    H1,
}

impl Hypothesis {
    pub fn index(self) -> usize {
        match self {
            Hypothesis::H0 => 0,
            Hypothesis::H1 => 1,
        }
    }

    pub fn from_index(i: usize) -> Result<Self> {
        match i {
            0 => Ok(Hypothesis::H0),
            1 => Ok(Hypothesis::H1),
            _ => Err(SdaError::InvalidArgument(format!("hypothesis index must be 0 or 1, got {i}"))),
        }
    }

    pub fn other(self) -> Self {
        match self {
            Hypothesis::H0 => Hypothesis::H1,
            Hypothesis::H1 => Hypothesis::H0,
        }
    }
}

/// Mean decision time, or the infinite marker used when decisions are not almost sure.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ExpectedTime {
    Finite(f64),
    Infinite,
}

impl ExpectedTime {
    pub fn value(self) -> f64 {
        match self {
            ExpectedTime::Finite(v) => v,
            ExpectedTime::Infinite => f64::INFINITY,
        }
    }

    pub fn is_finite(self) -> bool {
        matches!(self, ExpectedTime::Finite(_))
    }
}

// Serialized as a number, or `null` for the infinite marker.
impl Serialize for ExpectedTime {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            ExpectedTime::Finite(v) => s.serialize_some(v),
            ExpectedTime::Infinite => s.serialize_none(),
        }
    }
}

impl<'de> Deserialize<'de> for ExpectedTime {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let v: Option<f64> = Option::deserialize(d)?;
        Ok(v.map_or(ExpectedTime::Infinite, ExpectedTime::Finite))
    }
}

/// Decision probabilities of one SDM conditioned on one true hypothesis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisProfile {
    p_say0: Vec<f64>,
    p_say1: Vec<f64>,
    p_nd: f64,
    tail_mass: f64,
}

impl HypothesisProfile {
    /// Stores the arrays as given; use [`validate_profile`] to check them.
    pub fn new(p_say0: Vec<f64>, p_say1: Vec<f64>, p_nd: f64) -> Self {
        Self { p_say0, p_say1, p_nd, tail_mass: 0.0 }
    }

    /// Builds a truncated profile whose missing mass `1 - Σ(p0 + p1)` is
    /// folded into `p_nd` and recorded as `tail_mass`.
    pub fn with_folded_tail(p_say0: Vec<f64>, p_say1: Vec<f64>) -> Self {
        let decided: f64 = p_say0.iter().chain(p_say1.iter()).sum();
        let tail = (1.0 - decided).max(0.0);
        Self { p_say0, p_say1, p_nd: tail, tail_mass: tail }
    }

    pub(crate) fn set_tail_mass(&mut self, tail: f64) {
        self.tail_mass = tail;
    }

    /// Extends the horizon with zero-probability steps.
    pub(crate) fn pad_to(&mut self, t_max: usize) {
        if t_max > self.t_max() {
            self.p_say0.resize(t_max, 0.0);
            self.p_say1.resize(t_max, 0.0);
        }
    }

    pub fn t_max(&self) -> usize {
        self.p_say0.len()
    }

    pub fn p_say0(&self) -> &[f64] {
        &self.p_say0
    }

    pub fn p_say1(&self) -> &[f64] {
        &self.p_say1
    }

    /// Decision probability for `verdict` at time `t` (1-based); zero outside `1..=T_max`.
    pub fn p_at(&self, verdict: Hypothesis, t: usize) -> f64 {
        if t == 0 || t > self.t_max() {
            return 0.0;
        }
        match verdict {
            Hypothesis::H0 => self.p_say0[t - 1],
            Hypothesis::H1 => self.p_say1[t - 1],
        }
    }

    pub fn p_nd(&self) -> f64 {
        self.p_nd
    }

    /// Residual mass beyond `T_max` that was folded into `p_nd`.
    pub fn tail_mass(&self) -> f64 {
        self.tail_mass
    }

    pub fn decided_mass(&self) -> f64 {
        self.p_say0.iter().chain(self.p_say1.iter()).sum()
    }

    pub fn mass_for(&self, verdict: Hypothesis) -> f64 {
        match verdict {
            Hypothesis::H0 => self.p_say0.iter().sum(),
            Hypothesis::H1 => self.p_say1.iter().sum(),
        }
    }

    /// `1 - Σ(p0 + p1) - p_nd`.
    pub fn residual(&self) -> f64 {
        1.0 - self.decided_mass() - self.p_nd
    }

    /// Cumulative decision probabilities `(π0(t), π1(t))` for `t = 0..=T_max`.
    pub fn cumulative(&self) -> (Vec<f64>, Vec<f64>) {
        let mut pi0 = Vec::with_capacity(self.t_max() + 1);
        let mut pi1 = Vec::with_capacity(self.t_max() + 1);
        let (mut a, mut b) = (0.0, 0.0);
        pi0.push(0.0);
        pi1.push(0.0);
        for (x, y) in self.p_say0.iter().zip(&self.p_say1) {
            a += x;
            b += y;
            pi0.push(a);
            pi1.push(b);
        }
        (pi0, pi1)
    }

    /// Probability of still being undecided after time `t`, for `t = 0..=T_max`.
    ///
    /// Summed from the far end so that values near zero keep their relative accuracy.
    pub fn survival(&self) -> Vec<f64> {
        let t_max = self.t_max();
        let mut out = vec![0.0; t_max + 1];
        let mut acc = self.p_nd.max(0.0);
        out[t_max] = acc;
        for k in (0..t_max).rev() {
            acc += self.p_say0[k] + self.p_say1[k];
            out[k] = acc;
        }
        out
    }

    /// Swaps the roles of the two verdicts.
    pub fn swapped(&self) -> Self {
        Self { p_say0: self.p_say1.clone(), p_say1: self.p_say0.clone(), p_nd: self.p_nd, tail_mass: self.tail_mass }
    }

    pub(crate) fn check_structure(&self) -> Result<()> {
        if self.p_say0.len() != self.p_say1.len() {
            return Err(SdaError::InvalidProfile(format!(
                "p_say0 has {} entries but p_say1 has {}",
                self.p_say0.len(),
                self.p_say1.len()
            )));
        }
        if self.p_say0.is_empty() {
            return Err(SdaError::InvalidProfile("T_max must be at least 1".into()));
        }
        let bad = |x: f64| !(0.0..=1.0).contains(&x) || x.is_nan();
        if let Some((k, x)) = self.p_say0.iter().chain(&self.p_say1).enumerate().find(|(_, &x)| bad(x)) {
            return Err(SdaError::InvalidProfile(format!("entry {k} = {x} is not a probability")));
        }
        if bad(self.p_nd) {
            return Err(SdaError::InvalidProfile(format!("p_nd = {} is not a probability", self.p_nd)));
        }
        Ok(())
    }
}

/// Decision probabilities of one SDM under both hypotheses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionProfile {
    pub under_h0: HypothesisProfile,
    pub under_h1: HypothesisProfile,
}

impl DecisionProfile {
    pub fn new(under_h0: HypothesisProfile, under_h1: HypothesisProfile) -> Self {
        Self { under_h0, under_h1 }
    }

    /// Same decision probabilities under both hypotheses.
    pub fn symmetric(h: HypothesisProfile) -> Self {
        Self { under_h0: h.clone(), under_h1: h }
    }

    pub fn given(&self, truth: Hypothesis) -> &HypothesisProfile {
        match truth {
            Hypothesis::H0 => &self.under_h0,
            Hypothesis::H1 => &self.under_h1,
        }
    }

    pub fn t_max(&self) -> usize {
        self.under_h0.t_max()
    }

    pub(crate) fn check_structure(&self) -> Result<()> {
        self.under_h0.check_structure()?;
        self.under_h1.check_structure()?;
        if self.under_h0.t_max() != self.under_h1.t_max() {
            return Err(SdaError::InvalidProfile(format!(
                "T_max differs between hypotheses ({} vs {})",
                self.under_h0.t_max(),
                self.under_h1.t_max()
            )));
        }
        Ok(())
    }
}

/// Group size and vote threshold of a q-out-of-N rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GroupSpec {
    pub n: usize,
    pub q: usize,
}

impl GroupSpec {
    pub fn new(n: usize, q: usize) -> Result<Self> {
        if n == 0 {
            return Err(SdaError::InvalidGroup("N must be at least 1".into()));
        }
        if q == 0 || q > n {
            return Err(SdaError::InvalidGroup(format!("need 1 <= q <= N, got q = {q}, N = {n}")));
        }
        Ok(Self { n, q })
    }

    /// `q = 1`.
    pub fn fastest(n: usize) -> Result<Self> {
        Self::new(n, 1)
    }

    /// `q = ⌊N/2⌋ + 1`.
    pub fn majority(n: usize) -> Result<Self> {
        Self::new(n, n / 2 + 1)
    }

    /// `1 <= q <= ⌊N/2⌋`, where counters can tie above threshold.
    pub fn is_low_band(&self) -> bool {
        self.q <= self.n / 2
    }
}

/// Normalization check of one conditional profile.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HypothesisCheck {
    pub decided_mass: f64,
    pub p_nd: f64,
    pub residual: f64,
    pub tail_mass: f64,
    pub normalized: bool,
}

/// Outcome of [`validate_profile`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub under_h0: HypothesisCheck,
    pub under_h1: HypothesisCheck,
    pub same_horizon: bool,
    pub passed: bool,
}

fn check_hypothesis(h: &HypothesisProfile, tail_tol: f64) -> HypothesisCheck {
    let decided = h.decided_mass();
    let total = decided + h.p_nd;
    HypothesisCheck {
        decided_mass: decided,
        p_nd: h.p_nd,
        residual: 1.0 - total,
        tail_mass: h.tail_mass,
        normalized: total >= 1.0 - tail_tol && total <= 1.0 + FP_EPS,
    }
}

/// Checks range, shape and normalization of a profile.
///
/// Structural defects (entries outside `[0, 1]`, mismatched lengths, empty
/// horizon) are errors; normalization is reported per hypothesis.
pub fn validate_profile(profile: &DecisionProfile, tail_tol: f64) -> Result<ValidationReport> {
    profile.check_structure()?;
    let under_h0 = check_hypothesis(&profile.under_h0, tail_tol);
    let under_h1 = check_hypothesis(&profile.under_h1, tail_tol);
    let passed = under_h0.normalized && under_h1.normalized;
    Ok(ValidationReport { under_h0, under_h1, same_horizon: true, passed })
}

/// True when each conditional profile decides with probability at least `1 - tail_tol`.
pub fn has_almost_sure_decisions(profile: &DecisionProfile, tail_tol: f64) -> bool {
    [&profile.under_h0, &profile.under_h1].iter().all(|h| h.decided_mass() >= 1.0 - tail_tol)
}

/// Finite expected decision time: almost-sure decisions and a tail that ends or
/// decays geometrically at the truncation horizon.
pub fn has_finite_expected_time(profile: &DecisionProfile, tail_tol: f64) -> bool {
    has_almost_sure_decisions(profile, tail_tol)
        && [&profile.under_h0, &profile.under_h1].iter().all(|h| tail_decays(h))
}

fn tail_decays(h: &HypothesisProfile) -> bool {
    let mass: Vec<f64> = h.p_say0.iter().zip(&h.p_say1).map(|(a, b)| a + b).collect();
    let t_max = mass.len();
    let Some(last) = mass.iter().rposition(|&m| m > 0.0) else {
        return false;
    };
    if last + 1 < t_max {
        // support ends inside the horizon
        return true;
    }
    let window = (t_max / 4).max(4);
    if window >= t_max {
        return true;
    }
    let pts: Vec<(f64, f64)> =
        (t_max - window..t_max).filter(|&k| mass[k] > 0.0).map(|k| (k as f64, mass[k].ln())).collect();
    if pts.len() < 3 {
        return true;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx < 0.0
}

/// Mean decision time of one conditional profile.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DecisionTime {
    /// `Σ t (p0 + p1)` when `p_nd <= tail_tol`, the infinite marker otherwise.
    pub expected: ExpectedTime,
    /// Mean given that a decision is made; `NaN` without decision mass.
    pub conditional: f64,
}

pub fn expected_decision_time(h: &HypothesisProfile, tail_tol: f64) -> DecisionTime {
    let mut weighted = 0.0;
    let mut mass = 0.0;
    for (k, (a, b)) in h.p_say0.iter().zip(&h.p_say1).enumerate() {
        let m = a + b;
        weighted += (k + 1) as f64 * m;
        mass += m;
    }
    let expected = if h.p_nd <= tail_tol { ExpectedTime::Finite(weighted) } else { ExpectedTime::Infinite };
    let conditional = if mass > 0.0 { weighted / mass } else { f64::NAN };
    DecisionTime { expected, conditional }
}

/// Sufficient condition for the group to decide almost surely:
/// almost-sure SDM, odd `N`, and `q <= ⌈N/2⌉`.
pub fn group_almost_sure(spec: GroupSpec, profile: &DecisionProfile, tail_tol: f64) -> bool {
    has_almost_sure_decisions(profile, tail_tol) && odd_with_low_threshold(spec)
}

/// Same structure as [`group_almost_sure`] with the finite-expected-time SDM test.
pub fn group_finite_expected_time(spec: GroupSpec, profile: &DecisionProfile, tail_tol: f64) -> bool {
    has_finite_expected_time(profile, tail_tol) && odd_with_low_threshold(spec)
}

fn odd_with_low_threshold(spec: GroupSpec) -> bool {
    spec.n % 2 == 1 && spec.q >= 1 && spec.q <= spec.n.div_ceil(2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn one_step(p0: f64, p1: f64, nd: f64) -> DecisionProfile {
        DecisionProfile::symmetric(HypothesisProfile::new(vec![p0], vec![p1], nd))
    }

    #[test]
    fn validation_examples() {
        let r = validate_profile(&one_step(0.0, 1.0, 0.0), DEFAULT_TAIL_TOL).unwrap();
        assert!(r.passed);
        assert_eq!(r.under_h1.residual, 0.0);

        let r = validate_profile(&one_step(0.3, 0.6, 0.1), DEFAULT_TAIL_TOL).unwrap();
        assert!(r.passed);

        let r = validate_profile(&one_step(0.6, 0.6, 0.0), DEFAULT_TAIL_TOL).unwrap();
        assert!(!r.passed);
        assert!((r.under_h0.residual + 0.2).abs() < 1e-15);
    }

    #[test]
    fn validation_rejects_structure() {
        assert!(validate_profile(&one_step(-0.1, 1.0, 0.0), 1e-9).is_err());
        assert!(validate_profile(&one_step(0.0, 1.5, 0.0), 1e-9).is_err());
        let bad = DecisionProfile::symmetric(HypothesisProfile::new(vec![0.5, 0.0], vec![0.5], 0.0));
        assert!(validate_profile(&bad, 1e-9).is_err());
        let mismatched = DecisionProfile::new(
            HypothesisProfile::new(vec![0.5], vec![0.5], 0.0),
            HypothesisProfile::new(vec![0.5, 0.0], vec![0.5, 0.0], 0.0),
        );
        assert!(validate_profile(&mismatched, 1e-9).is_err());
    }

    #[test]
    fn almost_sure_examples() {
        assert!(has_almost_sure_decisions(&one_step(0.4, 0.6, 0.0), 1e-9));
        let p = DecisionProfile::new(
            HypothesisProfile::new(vec![0.55], vec![0.4], 0.05),
            HypothesisProfile::new(vec![0.4], vec![0.6], 0.0),
        );
        assert!(!has_almost_sure_decisions(&p, 1e-9));
    }

    #[test]
    fn expected_time_examples() {
        let h = HypothesisProfile::new(vec![0.0, 0.3], vec![0.0, 0.7], 0.0);
        assert_eq!(expected_decision_time(&h, 1e-9).expected, ExpectedTime::Finite(2.0));

        let h = HypothesisProfile::new(vec![0.2, 0.1], vec![0.3, 0.4], 0.0);
        assert_eq!(expected_decision_time(&h, 1e-9).expected, ExpectedTime::Finite(1.5));

        let h = HypothesisProfile::new(vec![0.2, 0.1], vec![0.3, 0.2], 0.2);
        let d = expected_decision_time(&h, 1e-9);
        assert_eq!(d.expected, ExpectedTime::Infinite);
        assert!((d.conditional - (0.5 + 2.0 * 0.3) / 0.8).abs() < 1e-15);
    }

    #[test]
    fn group_predicates() {
        let p = one_step(0.4, 0.6, 0.0);
        assert!(group_almost_sure(GroupSpec::new(5, 3).unwrap(), &p, 1e-9));
        assert!(!group_almost_sure(GroupSpec::new(4, 2).unwrap(), &p, 1e-9));
        assert!(!group_almost_sure(GroupSpec::new(5, 4).unwrap(), &p, 1e-9));

        assert!(group_finite_expected_time(GroupSpec::new(3, 2).unwrap(), &p, 1e-9));
        assert!(!group_finite_expected_time(GroupSpec::new(3, 3).unwrap(), &p, 1e-9));
        assert!(!group_finite_expected_time(GroupSpec::new(2, 1).unwrap(), &p, 1e-9));
    }

    #[test]
    fn heavy_tail_is_not_finite_time() {
        // mass growing towards the horizon: no evidence of a summable tail
        let t_max = 40;
        let raw: Vec<f64> = (1..=t_max).map(|t| t as f64).collect();
        let total: f64 = raw.iter().sum();
        let p1: Vec<f64> = raw.iter().map(|x| x / total).collect();
        let h = HypothesisProfile::new(vec![0.0; t_max], p1, 0.0);
        assert!(!has_finite_expected_time(&DecisionProfile::symmetric(h), 1e-9));
    }

    #[test]
    fn group_spec_bounds() {
        assert!(GroupSpec::new(3, 0).is_err());
        assert!(GroupSpec::new(3, 4).is_err());
        assert!(GroupSpec::new(0, 1).is_err());
        assert_eq!(GroupSpec::majority(9).unwrap().q, 5);
        assert!(GroupSpec::new(9, 4).unwrap().is_low_band());
        assert!(!GroupSpec::new(9, 5).unwrap().is_low_band());
    }

    #[test]
    fn survival_and_cumulative_agree() {
        let h = HypothesisProfile::new(vec![0.1, 0.2, 0.05], vec![0.3, 0.1, 0.15], 0.1);
        let (pi0, pi1) = h.cumulative();
        let s = h.survival();
        for t in 0..=3 {
            assert!((1.0 - pi0[t] - pi1[t] - s[t]).abs() < 1e-15);
        }
    }

    fn arb_profile() -> impl Strategy<Value = HypothesisProfile> {
        (1usize..12).prop_flat_map(|t| {
            (prop::collection::vec(0.0f64..1.0, 2 * t + 1)).prop_map(move |w| {
                let total: f64 = w.iter().sum::<f64>() + 1e-9;
                let p0 = w[..t].iter().map(|x| x / total).collect();
                let p1 = w[t..2 * t].iter().map(|x| x / total).collect();
                HypothesisProfile::new(p0, p1, w[2 * t] / total)
            })
        })
    }

    proptest! {
        #[test]
        fn residual_is_near_zero_for_normalized(h in arb_profile()) {
            prop_assert!(h.residual().abs() < 1e-8);
            prop_assert!(h.p_nd() >= 0.0);
        }

        #[test]
        fn shifting_mass_right_increases_mean(h in arb_profile(), k in 0usize..11, frac in 0.01f64..1.0) {
            prop_assume!(h.t_max() >= 2);
            let k = k % (h.t_max() - 1);
            let before = expected_decision_time(&h, 1.0).expected.value();
            let mut p1 = h.p_say1().to_vec();
            let moved = p1[k] * frac;
            prop_assume!(moved > 1e-12);
            p1[k] -= moved;
            p1[k + 1] += moved;
            let shifted = HypothesisProfile::new(h.p_say0().to_vec(), p1, h.p_nd());
            let after = expected_decision_time(&shifted, 1.0).expected.value();
            prop_assert!(after > before);
        }

        #[test]
        fn almost_sure_ignores_q_within_range(n in 1usize..40, qa in 1usize..40, qb in 1usize..40) {
            let half = n.div_ceil(2);
            let p = one_step(0.4, 0.6, 0.0);
            let a = GroupSpec::new(n, 1 + qa % half).unwrap();
            let b = GroupSpec::new(n, 1 + qb % half).unwrap();
            prop_assert_eq!(group_almost_sure(a, &p, 1e-9), group_almost_sure(b, &p, 1e-9));
        }
    }
}

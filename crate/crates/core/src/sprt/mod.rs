//! Sequential probability ratio test models and profile generators.
//!
//! Binomial observations use the exact lattice recursion in [`kdp`]; Gaussian
//! observations use the absorbing-chain discretization in [`chain`].

pub mod chain;
pub mod kdp;

use log::warn;
use rand::Rng;
use rand_distr::{Binomial, Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SdaError};
use crate::profile::{DecisionProfile, Hypothesis, DEFAULT_TAIL_TOL};

pub use chain::{chain_closed_form, chain_profile, discretize, AbsorbingChain, ClosedForm};
pub use kdp::kdp_profile;

/// Hard cap on automatically grown horizons.
pub const DEFAULT_HORIZON_CAP: usize = 100_000;

/// Observation family of a single SDM.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum ObservationModel {
    /// `x ~ Binomial(n, θ)`.
    Binomial { n: u32 },
    /// `x ~ Normal(θ, σ²)`.
    Gaussian { sigma: f64 },
}

/// Hypothesis pair, observation family and SPRT thresholds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SprtModel {
    pub dist: ObservationModel,
    pub theta0: f64,
    pub theta1: f64,
    pub eta0: f64,
    pub eta1: f64,
}

impl SprtModel {
    pub fn new(dist: ObservationModel, theta0: f64, theta1: f64, eta0: f64, eta1: f64) -> Result<Self> {
        let m = Self { dist, theta0, theta1, eta0, eta1 };
        m.validate()?;
        Ok(m)
    }

    /// Gaussian model with Wald thresholds for the given error design.
    pub fn gaussian_wald(theta0: f64, theta1: f64, sigma: f64, p_md: f64, p_fa: f64) -> Result<Self> {
        let (eta0, eta1) = wald_thresholds(p_md, p_fa)?;
        Self::new(ObservationModel::Gaussian { sigma }, theta0, theta1, eta0, eta1)
    }

    /// Binomial model with Wald thresholds for the given error design.
    pub fn binomial_wald(n: u32, theta0: f64, theta1: f64, p_md: f64, p_fa: f64) -> Result<Self> {
        let (eta0, eta1) = wald_thresholds(p_md, p_fa)?;
        Self::new(ObservationModel::Binomial { n }, theta0, theta1, eta0, eta1)
    }

    /// Same model with symmetric thresholds `(-eta, eta)`.
    pub fn with_symmetric_threshold(&self, eta: f64) -> Result<Self> {
        Self::new(self.dist, self.theta0, self.theta1, -eta, eta)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.theta0, self.theta1, self.eta0, self.eta1].iter().all(|x| x.is_finite());
        if !finite {
            return Err(SdaError::InvalidModel("parameters must be finite".into()));
        }
        if self.theta0 == self.theta1 {
            return Err(SdaError::InvalidModel("theta0 and theta1 must differ".into()));
        }
        if self.eta0 >= self.eta1 {
            return Err(SdaError::InvalidModel(format!("need eta0 < eta1, got ({}, {})", self.eta0, self.eta1)));
        }
        if !(self.eta0 < 0.0 && 0.0 < self.eta1) {
            warn!("thresholds ({}, {}) do not bracket zero", self.eta0, self.eta1);
        }
        match self.dist {
            ObservationModel::Binomial { n } => {
                if n == 0 {
                    return Err(SdaError::InvalidModel("binomial n must be at least 1".into()));
                }
                for th in [self.theta0, self.theta1] {
                    if !(th > 0.0 && th < 1.0) {
                        return Err(SdaError::InvalidModel(format!("binomial theta {th} outside (0, 1)")));
                    }
                }
            }
            ObservationModel::Gaussian { sigma } => {
                if !(sigma > 0.0 && sigma.is_finite()) {
                    return Err(SdaError::InvalidModel(format!("sigma must be positive, got {sigma}")));
                }
            }
        }
        Ok(())
    }

    pub fn theta(&self, truth: Hypothesis) -> f64 {
        match truth {
            Hypothesis::H0 => self.theta0,
            Hypothesis::H1 => self.theta1,
        }
    }

    /// Runs one SPRT trajectory; returns `(decision time, verdict)` or `None`
    /// when no threshold is crossed within `cap` observations.
    pub fn sample_decision<R: Rng + ?Sized>(
        &self,
        truth: Hypothesis,
        cap: usize,
        rng: &mut R,
    ) -> Option<(usize, Hypothesis)> {
        let llr = llr_spec(self);
        let theta = self.theta(truth);
        let mut lambda = 0.0;
        match self.dist {
            ObservationModel::Gaussian { sigma } => {
                let normal = Normal::new(theta, sigma).expect("validated sigma");
                for t in 1..=cap {
                    lambda += llr.llr(normal.sample(rng));
                    if let Some(v) = self.verdict(lambda) {
                        return Some((t, v));
                    }
                }
            }
            ObservationModel::Binomial { n } => {
                let binom = Binomial::new(u64::from(n), theta).expect("validated theta");
                for t in 1..=cap {
                    lambda += llr.llr(binom.sample(rng) as f64);
                    if let Some(v) = self.verdict(lambda) {
                        return Some((t, v));
                    }
                }
            }
        }
        None
    }

    fn verdict(&self, lambda: f64) -> Option<Hypothesis> {
        if lambda <= self.eta0 {
            Some(Hypothesis::H0)
        } else if lambda >= self.eta1 {
            Some(Hypothesis::H1)
        } else {
            None
        }
    }
}

/// Wald's thresholds `(ln(p_md/(1-p_fa)), ln((1-p_md)/p_fa))`.
pub fn wald_thresholds(p_md: f64, p_fa: f64) -> Result<(f64, f64)> {
    for (name, p) in [("p_md", p_md), ("p_fa", p_fa)] {
        if !(p > 0.0 && p < 1.0) {
            return Err(SdaError::InvalidArgument(format!("{name} must lie in (0, 1), got {p}")));
        }
    }
    if p_md + p_fa >= 1.0 {
        return Err(SdaError::InvalidArgument(format!("p_md + p_fa must be below 1, got {}", p_md + p_fa)));
    }
    let eta0 = (p_md / (1.0 - p_fa)).ln();
    let eta1 = ((1.0 - p_md) / p_fa).ln();
    if eta1 - eta0 < 1e-3 {
        warn!("near-degenerate thresholds ({eta0}, {eta1})");
    }
    Ok((eta0, eta1))
}

/// Affine form of the per-observation log-likelihood ratio `λ(x)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum LlrSpec {
    /// `λ(x) = slope·x + intercept`.
    Gaussian { slope: f64, intercept: f64 },
    /// `λ(x) = b_diff·x − a_diff`, with `B(θ) = ln(θ/(1−θ))` and `A(θ) = −n ln(1−θ)`.
    Binomial { b_diff: f64, a_diff: f64, n: u32 },
}

impl LlrSpec {
    pub fn llr(&self, x: f64) -> f64 {
        match *self {
            LlrSpec::Gaussian { slope, intercept } => slope * x + intercept,
            LlrSpec::Binomial { b_diff, a_diff, .. } => b_diff * x - a_diff,
        }
    }
}

pub fn llr_spec(model: &SprtModel) -> LlrSpec {
    let (t0, t1) = (model.theta0, model.theta1);
    match model.dist {
        ObservationModel::Gaussian { sigma } => {
            let s2 = sigma * sigma;
            LlrSpec::Gaussian { slope: (t1 - t0) / s2, intercept: -(t1 * t1 - t0 * t0) / (2.0 * s2) }
        }
        ObservationModel::Binomial { n } => {
            let b = |th: f64| (th / (1.0 - th)).ln();
            let a = |th: f64| -f64::from(n) * (1.0 - th).ln();
            LlrSpec::Binomial { b_diff: b(t1) - b(t0), a_diff: a(t1) - a(t0), n }
        }
    }
}

/// Default discretization step: `0.01·(η1−η0)/(2 ln 9)`.
pub fn default_delta(eta0: f64, eta1: f64) -> f64 {
    0.01 * (eta1 - eta0) / (2.0 * 9f64.ln())
}

/// Horizon and accuracy settings for profile generation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProfileOptions {
    /// Fixed horizon; `None` grows the horizon until the undecided mass drops below `tail_tol`.
    pub horizon: Option<usize>,
    pub tail_tol: f64,
    pub horizon_cap: usize,
    /// Chain step for Gaussian models; `None` uses [`default_delta`].
    pub delta: Option<f64>,
}

impl Default for ProfileOptions {
    fn default() -> Self {
        Self { horizon: None, tail_tol: DEFAULT_TAIL_TOL, horizon_cap: DEFAULT_HORIZON_CAP, delta: None }
    }
}

/// Decision profile of an SPRT model under both hypotheses.
pub fn sprt_profile(model: &SprtModel, opts: &ProfileOptions) -> Result<DecisionProfile> {
    model.validate()?;
    match model.dist {
        ObservationModel::Binomial { .. } => kdp_profile(model, opts),
        ObservationModel::Gaussian { .. } => {
            let delta = opts.delta.unwrap_or_else(|| default_delta(model.eta0, model.eta1));
            let h0 = chain_profile(&discretize(model, delta, Hypothesis::H0)?, opts)?;
            let h1 = chain_profile(&discretize(model, delta, Hypothesis::H1)?, opts)?;
            Ok(equalize_horizons(h0, h1))
        }
    }
}

/// Profile conditioned on one hypothesis only; the chain engine skips the other branch.
pub fn sprt_hypothesis_profile(
    model: &SprtModel,
    truth: Hypothesis,
    opts: &ProfileOptions,
) -> Result<crate::profile::HypothesisProfile> {
    model.validate()?;
    match model.dist {
        ObservationModel::Binomial { .. } => Ok(kdp_profile(model, opts)?.given(truth).clone()),
        ObservationModel::Gaussian { .. } => {
            let delta = opts.delta.unwrap_or_else(|| default_delta(model.eta0, model.eta1));
            chain_profile(&discretize(model, delta, truth)?, opts)
        }
    }
}

/// Pads the shorter branch with zeros so both share one `T_max`.
pub(crate) fn equalize_horizons(
    mut h0: crate::profile::HypothesisProfile,
    mut h1: crate::profile::HypothesisProfile,
) -> DecisionProfile {
    let t_max = h0.t_max().max(h1.t_max());
    h0.pad_to(t_max);
    h1.pad_to(t_max);
    DecisionProfile::new(h0, h1)
}

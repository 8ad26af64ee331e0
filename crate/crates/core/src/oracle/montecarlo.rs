//! Seeded Monte Carlo simulation of the full fusion protocol.
//!
//! Each replicate owns a ChaCha8 substream selected by its index, so results
//! do not depend on how replicates are scheduled across threads. All tallies
//! are integers and the parallel reduction is exact.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SdaError};
use crate::profile::{validate_profile, DecisionProfile, GroupSpec, Hypothesis, DEFAULT_TAIL_TOL};
use crate::sprt::{SprtModel, DEFAULT_HORIZON_CAP};

use super::fuse;

/// Where individual decisions come from.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SdmSource {
    /// Raw observations fed through an SPRT.
    Model(SprtModel),
    /// Decision time and verdict drawn from a profile, including the never-decide atom.
    Profile(DecisionProfile),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimConfig {
    pub spec: GroupSpec,
    pub source: SdmSource,
    pub replicates: u64,
    pub seed: u64,
    /// Largest simulated time; SPRT runs still open at the cap never decide.
    pub cap: usize,
}

impl SimConfig {
    pub fn new(spec: GroupSpec, source: SdmSource, replicates: u64, seed: u64) -> Self {
        let cap = match &source {
            SdmSource::Model(_) => DEFAULT_HORIZON_CAP,
            SdmSource::Profile(p) => p.t_max(),
        };
        Self { spec, source, replicates, seed, cap }
    }

    fn validate(&self) -> Result<()> {
        GroupSpec::new(self.spec.n, self.spec.q)?;
        if self.replicates == 0 {
            return Err(SdaError::InvalidArgument("replicates must be at least 1".into()));
        }
        if self.cap == 0 {
            return Err(SdaError::InvalidArgument("cap must be at least 1".into()));
        }
        match &self.source {
            SdmSource::Model(m) => m.validate(),
            SdmSource::Profile(p) => validate_profile(p, DEFAULT_TAIL_TOL).map(|_| ()),
        }
    }
}

/// Tallies of simulated group decisions. Index `k` of the count vectors is time `k + 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalOutcome {
    pub spec: GroupSpec,
    pub truth: Hypothesis,
    pub replicates: u64,
    pub seed: u64,
    pub count_say0: Vec<u64>,
    pub count_say1: Vec<u64>,
    pub count_none: u64,
    sum_time: u128,
    sum_time_sq: u128,
}

impl EmpiricalOutcome {
    pub fn horizon(&self) -> usize {
        self.count_say0.len()
    }

    fn count(&self, verdict: Hypothesis, t: usize) -> u64 {
        let v = match verdict {
            Hypothesis::H0 => &self.count_say0,
            Hypothesis::H1 => &self.count_say1,
        };
        if t == 0 || t > v.len() {
            0
        } else {
            v[t - 1]
        }
    }

    pub fn freq(&self, verdict: Hypothesis, t: usize) -> f64 {
        self.count(verdict, t) as f64 / self.replicates as f64
    }

    /// Binomial standard error of `freq`.
    pub fn se(&self, verdict: Hypothesis, t: usize) -> f64 {
        binomial_se(self.freq(verdict, t), self.replicates)
    }

    pub fn freq_none(&self) -> f64 {
        self.count_none as f64 / self.replicates as f64
    }

    pub fn se_none(&self) -> f64 {
        binomial_se(self.freq_none(), self.replicates)
    }

    pub fn freq_total(&self, verdict: Hypothesis) -> f64 {
        let v = match verdict {
            Hypothesis::H0 => &self.count_say0,
            Hypothesis::H1 => &self.count_say1,
        };
        v.iter().sum::<u64>() as f64 / self.replicates as f64
    }

    pub fn se_total(&self, verdict: Hypothesis) -> f64 {
        binomial_se(self.freq_total(verdict), self.replicates)
    }

    pub fn decided(&self) -> u64 {
        self.replicates - self.count_none
    }

    /// Mean decision time over replicates that decided, with its standard error.
    pub fn mean_time(&self) -> Option<(f64, f64)> {
        let n = self.decided();
        if n == 0 {
            return None;
        }
        let nf = n as f64;
        let mean = self.sum_time as f64 / nf;
        if n == 1 {
            return Some((mean, f64::NAN));
        }
        // exact integer centring: n·Σt² − (Σt)²
        let n128 = u128::from(n);
        let centred = n128 * self.sum_time_sq - self.sum_time * self.sum_time;
        let var = centred as f64 / (nf * (nf - 1.0));
        Some((mean, (var / nf).sqrt()))
    }
}

fn binomial_se(p: f64, n: u64) -> f64 {
    (p * (1.0 - p) / n as f64).sqrt()
}

/// Categorical sampler over `(t, verdict)` atoms plus a trailing never-decide atom.
struct ProfileSampler {
    cdf: Vec<f64>,
    t_max: usize,
}

impl ProfileSampler {
    fn new(profile: &DecisionProfile, truth: Hypothesis) -> Self {
        let h = profile.given(truth);
        let mut cdf = Vec::with_capacity(2 * h.t_max());
        let mut acc = 0.0;
        for t in 1..=h.t_max() {
            acc += h.p_at(Hypothesis::H0, t);
            cdf.push(acc);
            acc += h.p_at(Hypothesis::H1, t);
            cdf.push(acc);
        }
        Self { cdf, t_max: h.t_max() }
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Option<(usize, Hypothesis)> {
        let u: f64 = rng.random();
        let k = self.cdf.partition_point(|&c| c <= u);
        if k >= 2 * self.t_max {
            return None;
        }
        let v = if k % 2 == 0 { Hypothesis::H0 } else { Hypothesis::H1 };
        Some((k / 2 + 1, v))
    }
}

#[derive(Clone)]
struct Tally {
    say0: Vec<u64>,
    say1: Vec<u64>,
    none: u64,
    sum_time: u128,
    sum_time_sq: u128,
}

impl Tally {
    fn new(cap: usize) -> Self {
        Self { say0: vec![0; cap], say1: vec![0; cap], none: 0, sum_time: 0, sum_time_sq: 0 }
    }

    fn record(&mut self, outcome: Option<(usize, Hypothesis)>) {
        match outcome {
            None => self.none += 1,
            Some((t, v)) => {
                match v {
                    Hypothesis::H0 => self.say0[t - 1] += 1,
                    Hypothesis::H1 => self.say1[t - 1] += 1,
                }
                let t = t as u128;
                self.sum_time += t;
                self.sum_time_sq += t * t;
            }
        }
    }

    fn merge(mut self, other: Self) -> Self {
        for (a, b) in self.say0.iter_mut().zip(&other.say0) {
            *a += b;
        }
        for (a, b) in self.say1.iter_mut().zip(&other.say1) {
            *a += b;
        }
        self.none += other.none;
        self.sum_time += other.sum_time;
        self.sum_time_sq += other.sum_time_sq;
        self
    }
}

/// Simulates `cfg.replicates` independent group runs under `truth`.
pub fn simulate_group(cfg: &SimConfig, truth: Hypothesis) -> Result<EmpiricalOutcome> {
    cfg.validate()?;
    let (n, q, cap) = (cfg.spec.n, cfg.spec.q, cfg.cap);
    let sampler = match &cfg.source {
        SdmSource::Profile(p) => Some(ProfileSampler::new(p, truth)),
        SdmSource::Model(_) => None,
    };
    let never = cap + 1;
    let run = |replicate: u64| -> Option<(usize, Hypothesis)> {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(replicate);
        let mut decisions = Vec::with_capacity(n);
        for _ in 0..n {
            let d = match (&cfg.source, &sampler) {
                (SdmSource::Model(m), _) => m.sample_decision(truth, cap, &mut rng),
                (_, Some(s)) => s.sample(&mut rng).filter(|d| d.0 <= cap),
                _ => unreachable!(),
            };
            decisions.push(d.unwrap_or((never, Hypothesis::H0)));
        }
        fuse(&mut decisions, q).filter(|d| d.0 <= cap)
    };
    let tally = (0..cfg.replicates)
        .into_par_iter()
        .fold(
            || Tally::new(cap),
            |mut acc, r| {
                acc.record(run(r));
                acc
            },
        )
        .reduce(|| Tally::new(cap), Tally::merge);
    // trim trailing empty times
    let used = tally.say0.iter().zip(&tally.say1).rposition(|(a, b)| a + b > 0).map_or(0, |k| k + 1);
    let mut say0 = tally.say0;
    let mut say1 = tally.say1;
    say0.truncate(used);
    say1.truncate(used);
    Ok(EmpiricalOutcome {
        spec: cfg.spec,
        truth,
        replicates: cfg.replicates,
        seed: cfg.seed,
        count_say0: say0,
        count_say1: say1,
        count_none: tally.none,
        sum_time: tally.sum_time,
        sum_time_sq: tally.sum_time_sq,
    })
}

#![allow(dead_code)]

use rand::Rng;
use sda_core::{DecisionProfile, HypothesisProfile, SprtModel};

/// Random conditional profile over `t_max` steps: nonnegative weights for
/// every `(t, verdict)` cell plus a never-decide cell, normalized to one.
pub fn random_hypothesis<R: Rng>(rng: &mut R, t_max: usize) -> HypothesisProfile {
    let mut w: Vec<f64> = (0..2 * t_max + 1)
        .map(|_| {
            // sparse cells exercise zero-probability steps
            if rng.random::<f64>() < 0.15 {
                0.0
            } else {
                rng.random::<f64>()
            }
        })
        .collect();
    if w.iter().all(|&x| x == 0.0) {
        w[0] = 1.0;
    }
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= total);
    let p0 = w[..t_max].to_vec();
    let p1 = w[t_max..2 * t_max].to_vec();
    HypothesisProfile::new(p0, p1, w[2 * t_max])
}

pub fn random_profile<R: Rng>(rng: &mut R, t_max: usize) -> DecisionProfile {
    DecisionProfile::new(random_hypothesis(rng, t_max), random_hypothesis(rng, t_max))
}

/// Gaussian `θ0 = 0`, `θ1 = 1` SPRT with Wald thresholds for error 0.1.
pub fn gaussian_wald(sigma: f64) -> SprtModel {
    SprtModel::gaussian_wald(0.0, 1.0, sigma, 0.1, 0.1).unwrap()
}

pub fn odd_range(lo: usize, hi: usize) -> Vec<usize> {
    (lo..=hi).filter(|n| n % 2 == 1).collect()
}

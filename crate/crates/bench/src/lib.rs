//! Fixtures shared by the criterion benchmarks under `benches/`.

use sda_core::{sprt_profile, DecisionProfile, ProfileOptions, SprtModel};

/// Gaussian `θ0 = 0`, `θ1 = 1` SPRT with Wald thresholds for error 0.1.
pub fn gaussian_model(sigma: f64) -> SprtModel {
    SprtModel::gaussian_wald(0.0, 1.0, sigma, 0.1, 0.1).expect("valid model")
}

pub fn gaussian_profile(sigma: f64) -> DecisionProfile {
    sprt_profile(&gaussian_model(sigma), &ProfileOptions::default()).expect("profile builds")
}

/// Binomial model with `n = 5`, `θ = 0.5 ± 0.05`.
pub fn binomial_model() -> SprtModel {
    SprtModel::binomial_wald(5, 0.45, 0.55, 0.1, 0.1).expect("valid model")
}

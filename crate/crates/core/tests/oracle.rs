mod common;

use common::{gaussian_wald, random_profile};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sda_core::aggregate::AggregateOptions;
use sda_core::oracle::{enumerate_exact, simulate_group, SdmSource, SimConfig, DEFAULT_ENUMERATION_CAP};
use sda_core::{aggregate, sprt_profile, GroupSpec, Hypothesis, ProfileOptions};

#[test]
fn simulation_agrees_with_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut within, mut total) = (0, 0);
    for (n, q) in [(3, 1), (3, 2), (5, 3), (5, 5)] {
        let profile = random_profile(&mut rng, 3);
        let spec = GroupSpec::new(n, q).unwrap();
        for truth in [Hypothesis::H0, Hypothesis::H1] {
            let exact = enumerate_exact(profile.given(truth), spec, truth, 3, DEFAULT_ENUMERATION_CAP).unwrap();
            let cfg = SimConfig::new(spec, SdmSource::Profile(profile.clone()), 200_000, 11);
            let mc = simulate_group(&cfg, truth).unwrap();
            for t in 1..=3 {
                for v in [Hypothesis::H0, Hypothesis::H1] {
                    let p = exact.p_at(v, t);
                    let se = (p * (1.0 - p) / 200_000.0).sqrt();
                    total += 1;
                    if (mc.freq(v, t) - p).abs() <= 3.0 * se.max(1e-12) {
                        within += 1;
                    }
                }
            }
        }
    }
    assert!(within as f64 >= 0.95 * total as f64, "{within}/{total}");
}

#[test]
fn simulated_sprt_groups_match_aggregation() {
    let model = gaussian_wald(1.0);
    let profile = sprt_profile(&model, &ProfileOptions::default()).unwrap();
    let spec = GroupSpec::majority(5).unwrap();
    let exact = aggregate(&profile, spec, Hypothesis::H1, &AggregateOptions::default()).unwrap();
    let mc = simulate_group(&SimConfig::new(spec, SdmSource::Model(model), 200_000, 5), Hypothesis::H1).unwrap();
    let z = (mc.freq_total(Hypothesis::H0) - exact.p_w) / mc.se_total(Hypothesis::H0);
    assert!(z.abs() < 4.0, "p_w z = {z}");
    let (mean, se) = mc.mean_time().unwrap();
    let z_t = (mean - exact.expected_time.value()) / se;
    assert!(z_t.abs() < 4.0, "E[T] z = {z_t}");
}

#[test]
fn identical_seeds_give_identical_outcomes() {
    let profile = random_profile(&mut ChaCha8Rng::seed_from_u64(9), 4);
    let cfg = SimConfig::new(GroupSpec::new(5, 2).unwrap(), SdmSource::Profile(profile), 20_000, 77);
    let a = simulate_group(&cfg, Hypothesis::H1).unwrap();
    let b = simulate_group(&cfg, Hypothesis::H1).unwrap();
    assert_eq!(a, b);
    let c = simulate_group(&SimConfig { seed: 78, ..cfg }, Hypothesis::H1).unwrap();
    assert_ne!(a, c);
}

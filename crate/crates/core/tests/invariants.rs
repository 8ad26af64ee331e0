mod common;

use common::{random_hypothesis, random_profile};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sda_core::aggregate::{aggregate_hypothesis, AggregateOptions};
use sda_core::asymptotics::{half_binomial, majority_pw, Side};
use sda_core::oracle::{enumerate_exact, DEFAULT_ENUMERATION_CAP};
use sda_core::profile::{expected_decision_time, group_almost_sure};
use sda_core::{aggregate, GroupSpec, Hypothesis, HypothesisProfile};

fn truth_strategy() -> impl Strategy<Value = Hypothesis> {
    prop_oneof![Just(Hypothesis::H0), Just(Hypothesis::H1)]
}

/// Small instance: N in {1, 3, 5}, any q, horizon up to 4.
fn small_instance() -> impl Strategy<Value = (u64, usize, usize, usize)> {
    (any::<u64>(), prop_oneof![Just(1usize), Just(3), Just(5)], 1usize..=4)
        .prop_flat_map(|(seed, n, t)| (Just(seed), Just(n), 1..=n, Just(t)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn recursion_matches_enumeration((seed, n, q, t_max) in small_instance(), truth in truth_strategy()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = random_hypothesis(&mut rng, t_max);
        let spec = GroupSpec::new(n, q).unwrap();
        let exact = enumerate_exact(&h, spec, truth, t_max, DEFAULT_ENUMERATION_CAP).unwrap();
        let rec = aggregate_hypothesis(&h, spec, truth, &AggregateOptions::with_horizon(t_max)).unwrap();
        for t in 1..=t_max {
            for v in [Hypothesis::H0, Hypothesis::H1] {
                prop_assert!((exact.p_at(v, t) - rec.p_at(v, t)).abs() <= 1e-10);
            }
        }
    }

    #[test]
    fn group_mass_partitions((seed, n, q, t_max) in small_instance(), truth in truth_strategy()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let profile = random_profile(&mut rng, t_max);
        let out = aggregate(&profile, GroupSpec::new(n, q).unwrap(), truth, &AggregateOptions::with_horizon(t_max)).unwrap();
        let decided: f64 = out.p_say0.iter().chain(&out.p_say1).sum();
        prop_assert!((decided + out.p_nd - 1.0).abs() <= 1e-12);
        prop_assert!(out.p_say0.iter().chain(&out.p_say1).all(|&p| p >= 0.0));
    }

    #[test]
    fn cumulative_group_mass_is_nondecreasing(seed in any::<u64>(), n in 1usize..=41, t_max in 1usize..=12) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = random_hypothesis(&mut rng, t_max);
        for q in [1, n.div_ceil(2), n] {
            let out = aggregate_hypothesis(&h, GroupSpec::new(n, q).unwrap(), Hypothesis::H1, &AggregateOptions::with_horizon(t_max)).unwrap();
            let mut prev = 0.0;
            for t in 1..=t_max {
                let cum = prev + out.p_at(Hypothesis::H0, t) + out.p_at(Hypothesis::H1, t);
                prop_assert!(cum >= prev);
                prop_assert!(cum <= 1.0 + 1e-12);
                prev = cum;
            }
        }
    }

    #[test]
    fn swapping_verdicts_swaps_group_outputs(seed in any::<u64>(), n in 1usize..=21, t_max in 1usize..=8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = random_hypothesis(&mut rng, t_max);
        let opts = AggregateOptions::with_horizon(t_max);
        for q in 1..=n {
            let spec = GroupSpec::new(n, q).unwrap();
            let a = aggregate_hypothesis(&h, spec, Hypothesis::H1, &opts).unwrap();
            let b = aggregate_hypothesis(&h.swapped(), spec, Hypothesis::H1, &opts).unwrap();
            for t in 1..=t_max {
                prop_assert!((a.p_at(Hypothesis::H0, t) - b.p_at(Hypothesis::H1, t)).abs() <= 1e-13);
                prop_assert!((a.p_at(Hypothesis::H1, t) - b.p_at(Hypothesis::H0, t)).abs() <= 1e-13);
            }
        }
    }

    #[test]
    fn low_q_almost_sure_predicate_ignores_q(seed in any::<u64>(), half in 0usize..=10, t_max in 1usize..=6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let profile = random_profile(&mut rng, t_max);
        let n = 2 * half + 1;
        let first = group_almost_sure(GroupSpec::new(n, 1).unwrap(), &profile, 1e-9);
        for q in 1..=n.div_ceil(2) {
            prop_assert_eq!(group_almost_sure(GroupSpec::new(n, q).unwrap(), &profile, 1e-9), first);
        }
    }

    #[test]
    fn rightward_shift_increases_expected_time(seed in any::<u64>(), t_max in 2usize..=10, pick in any::<prop::sample::Index>(), frac in 0.01f64..1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = random_hypothesis(&mut rng, t_max);
        let mut p0 = h.p_say0().to_vec();
        let t = pick.index(t_max - 1);
        prop_assume!(p0[t] > 1e-6);
        let moved = p0[t] * frac;
        p0[t] -= moved;
        p0[t + 1] += moved;
        let shifted = HypothesisProfile::new(p0, h.p_say1().to_vec(), h.p_nd());
        let before = expected_decision_time(&h, 1e-9).conditional;
        let after = expected_decision_time(&shifted, 1e-9).conditional;
        prop_assert!(after > before);
    }
}

#[test]
fn majority_accuracy_moves_with_group_size() {
    let grid: Vec<usize> = (1..=101).step_by(2).collect();
    for k in 1..=9 {
        let p = 0.05 * k as f64;
        for w in grid.windows(2) {
            let (small, large) = (w[0], w[1]);
            assert!(majority_pw(p, large).unwrap() < majority_pw(p, small).unwrap(), "p={p} N={large}");
            // near one the increase drops below an ulp, so strictness is only checked while resolvable
            let flipped = 1.0 - p;
            let (lo, hi) = (majority_pw(flipped, small).unwrap(), majority_pw(flipped, large).unwrap());
            assert!(hi >= lo, "p={flipped} N={large}");
            if 1.0 - lo > 1e-13 {
                assert!(hi > lo, "p={flipped} N={large}");
            }
        }
    }
}

#[test]
fn majority_accuracy_matches_half_binomial() {
    for k in 1..=9 {
        let p = 0.05 * k as f64;
        for n in (1..=101).step_by(2) {
            let a = majority_pw(p, n).unwrap();
            let b = half_binomial(n, 1.0, p, Side::Upper).unwrap();
            assert!((a - b).abs() <= 1e-14 * a, "p={p} N={n}: {a} vs {b}");
        }
    }
}

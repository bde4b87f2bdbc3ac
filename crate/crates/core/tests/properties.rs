use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use resilience_core::engine::{
    check_resilient, resilient_states, robust_recovery_table, robust_viability_kernel, stochastic_viability_value,
};
use resilience_core::generate::{random_model, random_strategy, random_subset, RandomModelConfig};
use resilience_core::strategy::{build_bundle, prefix_count, simulate};
use resilience_core::{Limits, Policy, RegimeSpec, Scenario, ScenarioDomain, Strategy, StrategyClass, SystemModel};

fn model_from(seed: u64, cfg: &RandomModelConfig) -> (SystemModel, ChaCha8Rng) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = random_model(&mut rng, cfg);
    (m, rng)
}

fn random_scenario(rng: &mut ChaCha8Rng, m: &SystemModel) -> Scenario {
    Scenario((0..m.horizon()).map(|t| rng.gen_range(0..m.n_noise(t))).collect())
}

fn as_adapted(m: &SystemModel, s: &Strategy) -> Strategy {
    let policies = (0..m.horizon())
        .map(|t| {
            let n = prefix_count(m, t) as usize;
            Policy::Adapted(s.policy(t).table().iter().flat_map(|&u| std::iter::repeat(u).take(n)).collect())
        })
        .collect();
    Strategy::new(policies)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn flow_composes(seed in any::<u64>()) {
        let (m, mut rng) = model_from(seed, &RandomModelConfig::default());
        let k = m.horizon();
        let w = random_scenario(&mut rng, &m);
        let controls: Vec<usize> = (0..k).map(|_| rng.gen_range(0..m.n_controls())).collect();
        let x = rng.gen_range(0..m.n_states());
        let whole = m.flow(0, x, &controls, &w).unwrap();
        let r = rng.gen_range(0..=k);
        let head = m.flow(0, x, &controls[..r], &w).unwrap();
        let tail = m.flow(r, head[r], &controls[r..], &w).unwrap();
        prop_assert_eq!(&whole[..=r], &head[..]);
        prop_assert_eq!(&whole[r..], &tail[..]);
    }

    #[test]
    fn closed_loop_is_adapted(seed in any::<u64>()) {
        let (m, mut rng) = model_from(seed, &RandomModelConfig::default());
        let s = random_strategy(&mut rng, &m, StrategyClass::Adapted);
        let x = rng.gen_range(0..m.n_states());
        let a = random_scenario(&mut rng, &m);
        let b = random_scenario(&mut rng, &m);
        let ta = simulate(&m, &s, 0, x, &a).unwrap();
        let tb = simulate(&m, &s, 0, x, &b).unwrap();
        prop_assert!(ta.is_consistent(&m));
        // agree up to the first differing noise, inclusive of the decision taken there
        let d = (0..m.horizon()).find(|&t| a.at(t) != b.at(t)).unwrap_or(m.horizon());
        prop_assert_eq!(&ta.states[..=d], &tb.states[..=d]);
        prop_assert_eq!(&ta.controls[..d.min(m.horizon())], &tb.controls[..d.min(m.horizon())]);
        if d < m.horizon() {
            prop_assert_eq!(ta.controls[d], tb.controls[d]);
        }
    }

    #[test]
    fn markov_strategy_equals_its_adapted_encoding(seed in any::<u64>()) {
        let (m, mut rng) = model_from(seed, &RandomModelConfig::default());
        let s = random_strategy(&mut rng, &m, StrategyClass::Markov);
        let x = rng.gen_range(0..m.n_states());
        let t = rng.gen_range(0..=m.horizon());
        let a = build_bundle(&m, &s, x, t, ScenarioDomain::Full, 1 << 10).unwrap();
        let b = build_bundle(&m, &as_adapted(&m, &s), x, t, ScenarioDomain::Full, 1 << 10).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn past_policies_are_unused(seed in any::<u64>()) {
        let (m, mut rng) = model_from(seed, &RandomModelConfig::default());
        let s = random_strategy(&mut rng, &m, StrategyClass::Adapted);
        let x = rng.gen_range(0..m.n_states());
        let t = rng.gen_range(0..=m.horizon());
        let a = build_bundle(&m, &s, x, t, ScenarioDomain::Full, 1 << 10).unwrap();
        let b = build_bundle(&m, &s.with_zeroed_past(t), x, t, ScenarioDomain::Full, 1 << 10).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn cemetery_absorbs(seed in any::<u64>()) {
        let cfg = RandomModelConfig { cemetery_prob: 0.3, constraint_prob: 0.3, ..Default::default() };
        let (m, mut rng) = model_from(seed, &cfg);
        let s = random_strategy(&mut rng, &m, StrategyClass::Markov);
        let b = build_bundle(&m, &s, rng.gen_range(0..m.n_states()), 0, ScenarioDomain::Full, 1 << 10).unwrap();
        for tr in b.iter() {
            if let Some(i) = tr.states.iter().position(|&x| m.is_cemetery(x)) {
                prop_assert!(tr.states[i..].iter().all(|&x| m.is_cemetery(x)));
            }
        }
    }

    #[test]
    fn kernel_is_a_fixed_point(seed in any::<u64>()) {
        let cfg = RandomModelConfig { robust_subsets: true, ..Default::default() };
        let (m, mut rng) = model_from(seed, &cfg);
        let a = random_subset(&mut rng, m.n_states(), 0.7);
        let kernel = robust_viability_kernel(&m, &a).unwrap();
        prop_assert!(kernel.is_fixed_point(&m, &a));
        prop_assert_eq!(&kernel.members[m.horizon()], &a);
    }

    #[test]
    fn kernel_grows_with_the_acceptable_set(seed in any::<u64>()) {
        let (m, mut rng) = model_from(seed, &RandomModelConfig::default());
        let a = random_subset(&mut rng, m.n_states(), 0.6);
        let mut bigger = a.clone();
        for x in random_subset(&mut rng, m.n_states(), 0.5).iter() {
            bigger.insert(x);
        }
        let small = robust_viability_kernel(&m, &a).unwrap();
        let large = robust_viability_kernel(&m, &bigger).unwrap();
        for t in 0..=m.horizon() {
            prop_assert!(small.members[t].is_subset(&large.members[t]));
        }
    }

    #[test]
    fn kernel_shrinks_with_the_robust_set(seed in any::<u64>()) {
        let cfg = RandomModelConfig { robust_subsets: true, ..Default::default() };
        let (m, mut rng) = model_from(seed, &cfg);
        let a = random_subset(&mut rng, m.n_states(), 0.7);
        let everything = m.with_uncertainty(m.uncertainty().clone().without_robust()).unwrap();
        let narrow = robust_viability_kernel(&m, &a).unwrap();
        let wide = robust_viability_kernel(&everything, &a).unwrap();
        for t in 0..=m.horizon() {
            prop_assert!(wide.members[t].is_subset(&narrow.members[t]));
        }
    }

    #[test]
    fn value_is_a_probability_bounded_by_the_kernel(seed in any::<u64>()) {
        let (m, mut rng) = model_from(seed, &RandomModelConfig::default());
        let a = random_subset(&mut rng, m.n_states(), 0.7);
        let v = stochastic_viability_value(&m, &a).unwrap();
        let kernel = robust_viability_kernel(&m, &a).unwrap();
        for t in 0..=m.horizon() {
            for x in 0..m.n_states() {
                let p = v.value(t, x);
                prop_assert!((-1e-15..=1.0 + 1e-12).contains(&p));
                if kernel.contains(t, x) {
                    prop_assert!((p - 1.0).abs() < 1e-12);
                }
                if !a.contains(x) {
                    prop_assert_eq!(p, 0.0);
                }
            }
        }
    }

    #[test]
    fn stochastic_resilience_shrinks_with_beta(seed in any::<u64>(), b1 in 0.0f64..=1.0, b2 in 0.0f64..=1.0) {
        let (m, mut rng) = model_from(seed, &RandomModelConfig::default());
        let a = random_subset(&mut rng, m.n_states(), 0.7);
        let (lo, hi) = if b1 <= b2 { (b1, b2) } else { (b2, b1) };
        let t = rng.gen_range(0..=m.horizon());
        let limits = Limits::default();
        let r = |beta| {
            resilient_states(&m, t, &RegimeSpec::StochasticViability { set: a.clone(), beta }, StrategyClass::Markov, &limits)
                .unwrap()
                .states
        };
        prop_assert!(r(hi).is_subset(&r(lo)));
    }

    #[test]
    fn recovery_resilience_grows_with_the_deadline(seed in any::<u64>()) {
        let cfg = RandomModelConfig { robust_subsets: true, ..Default::default() };
        let (m, mut rng) = model_from(seed, &cfg);
        let a = random_subset(&mut rng, m.n_states(), 0.6);
        let tables: Vec<_> = (0..=m.horizon()).map(|d| robust_recovery_table(&m, &a, d).unwrap()).collect();
        for d in 1..=m.horizon() {
            prop_assert!(tables[d - 1].resilient().is_subset(&tables[d].resilient()));
        }
        let kernel = robust_viability_kernel(&m, &a).unwrap();
        prop_assert_eq!(tables[0].resilient(), kernel.members[0].clone());
    }

    #[test]
    fn witnesses_certify_membership(seed in any::<u64>(), kind in 0usize..3) {
        let cfg = RandomModelConfig { robust_subsets: kind != 2, ..Default::default() };
        let (m, mut rng) = model_from(seed, &cfg);
        let a = random_subset(&mut rng, m.n_states(), 0.7);
        let t = rng.gen_range(0..=m.horizon());
        let regime = match kind {
            0 => RegimeSpec::Viability { set: a },
            1 => RegimeSpec::RobustRecovery { set: a, deadline: rng.gen_range(t..=m.horizon()) },
            _ => RegimeSpec::StochasticViability { set: a, beta: rng.gen_range(0.0..=1.0) },
        };
        let limits = Limits::default();
        let found = resilient_states(&m, t, &regime, StrategyClass::Markov, &limits).unwrap();
        prop_assert_eq!(found.witnesses.len(), found.states.len());
        for (&x, w) in &found.witnesses {
            prop_assert!(found.states.contains(x));
            prop_assert!(check_resilient(&m, w, x, t, &regime, &limits).unwrap());
        }
    }
}

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use resilience_core::engine::{
    check_resilient, resilient_states, robust_recovery_table_from, robust_viability_kernel, stochastic_viability_value,
    Certificate,
};
use resilience_core::generate::{random_model, random_subset, RandomModelConfig};
use resilience_core::optimize::{minimize_risk, minimize_risk_with, recovery_time_risk, SearchMethod};
use resilience_core::oracle::{
    oracle_max_viability_probability, oracle_min_max_recovery, oracle_min_risk, oracle_resilient_states,
};
use resilience_core::risk::evaluate_risk;
use resilience_core::strategy::build_bundle;
use resilience_core::*;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[test]
fn kernel_matches_enumeration_at_every_start_time() {
    let mut r = rng(11);
    let cfg = RandomModelConfig { robust_subsets: true, ..Default::default() };
    let limits = Limits::default();
    for _ in 0..40 {
        let m = random_model(&mut r, &cfg);
        let a = random_subset(&mut r, m.n_states(), 0.7);
        let kernel = robust_viability_kernel(&m, &a).unwrap();
        let regime = RegimeSpec::Viability { set: a };
        for t in 0..=m.horizon() {
            let brute = oracle_resilient_states(&m, t, &regime, StrategyClass::Markov, &limits).unwrap();
            assert_eq!(kernel.members[t], brute, "t={t} model={m:?}");
        }
    }
}

#[test]
fn value_matches_enumeration_at_every_start_time() {
    let mut r = rng(12);
    let limits = Limits::default();
    for _ in 0..30 {
        let m = random_model(&mut r, &RandomModelConfig::default());
        let a = random_subset(&mut r, m.n_states(), 0.7);
        let v = stochastic_viability_value(&m, &a).unwrap();
        for t in 0..=m.horizon() {
            let brute = oracle_max_viability_probability(&m, t, &a, &limits).unwrap();
            for x in 0..m.n_states() {
                assert!((v.value(t, x) - brute[x]).abs() <= 1e-12, "t={t} x={x}");
            }
        }
    }
}

#[test]
fn recovery_table_matches_min_max_enumeration() {
    let mut r = rng(13);
    let cfg = RandomModelConfig { robust_subsets: true, ..Default::default() };
    let limits = Limits::default();
    for _ in 0..40 {
        let m = random_model(&mut r, &cfg);
        let a = random_subset(&mut r, m.n_states(), 0.6);
        let t = r.gen_range(0..=m.horizon());
        let d = r.gen_range(t..=m.horizon());
        let table = robust_recovery_table_from(&m, &a, d, t).unwrap();
        for x in 0..m.n_states() {
            let (best, _) = oracle_min_max_recovery(&m, x, t, &a, &limits).unwrap();
            let expected = if best <= RecoveryTime::At(d) { best } else { RecoveryTime::Never };
            assert_eq!(table.r_star[x], expected, "x={x} t={t} d={d}");
        }
    }
}

#[test]
fn non_dp_regimes_are_solved_by_enumeration() {
    let mut r = rng(14);
    let limits = Limits::default();
    let cfg = RandomModelConfig { max_states: 3, robust_subsets: true, ..Default::default() };
    for _ in 0..20 {
        let m = random_model(&mut r, &cfg);
        let a = random_subset(&mut r, m.n_states(), 0.7);
        for regime in [
            RegimeSpec::Bounded { set: a.clone() },
            RegimeSpec::AtMostKExits { set: a.clone(), k: 1 },
            RegimeSpec::ProbExcursion { set: a.clone(), beta: 0.3 },
            RegimeSpec::ControlEvent { controls: Subset::from_indices(m.n_controls(), [0]).unwrap() },
        ] {
            let found = resilient_states(&m, 0, &regime, StrategyClass::Markov, &limits).unwrap();
            assert_eq!(found.certificate, Certificate::Exhaustive);
            let brute = oracle_resilient_states(&m, 0, &regime, StrategyClass::Markov, &limits).unwrap();
            assert_eq!(found.states, brute);
            for (&x, w) in &found.witnesses {
                assert!(check_resilient(&m, w, x, 0, &regime, &limits).unwrap());
            }
        }
    }
}

fn risks(m: &SystemModel, a: &Subset) -> Vec<RiskMeasureSpec> {
    vec![
        RiskMeasureSpec::Composed { cost: CostFunction::new(CostKind::ControlEffort(None)), outer: Outer::Expectation },
        RiskMeasureSpec::Composed { cost: CostFunction::new(CostKind::TimeOutside(a.clone())), outer: Outer::Cvar(0.3) },
        RiskMeasureSpec::Exceedance(a.clone()),
        RiskMeasureSpec::ExitCount { set: a.clone(), outer: Outer::WorstCase },
        RiskMeasureSpec::Composed { cost: CostFunction::new(CostKind::Terminal(Subset::full(m.n_states()))), outer: Outer::WorstCase },
    ]
}

#[test]
fn optimizer_is_optimal_and_feasible() {
    let mut r = rng(15);
    let limits = Limits::default();
    for _ in 0..25 {
        let m = random_model(&mut r, &RandomModelConfig { max_states: 4, ..Default::default() });
        let a = random_subset(&mut r, m.n_states(), 0.7);
        let x0 = r.gen_range(0..m.n_states());
        let regime = RegimeSpec::StochasticViability { set: a.clone(), beta: r.gen_range(0.0..=1.0) };
        for risk in risks(&m, &a) {
            let res = minimize_risk_with(&m, x0, 0, &regime, &risk, StrategyClass::Markov, &limits, SearchMethod::Exhaustive)
                .unwrap();
            let brute = oracle_min_risk(&m, x0, 0, &regime, &risk, StrategyClass::Markov, &limits).unwrap();
            assert_eq!(res.value.to_bits(), brute.to_bits(), "{}", risk.name());
            if let Some(best) = &res.best {
                assert!(check_resilient(&m, best, x0, 0, &regime, &limits).unwrap());
                let bundle = build_bundle(&m, best, x0, 0, ScenarioDomain::Full, limits.scenarios).unwrap();
                assert_eq!(evaluate_risk(&m, &risk, &bundle).unwrap().to_bits(), res.value.to_bits());
            } else {
                assert_eq!(res.value, f64::INFINITY);
            }
        }
    }
}

#[test]
fn dp_fast_path_agrees_with_enumeration() {
    let mut r = rng(16);
    let limits = Limits::default();
    let mut used_dp = 0;
    for _ in 0..60 {
        let m = random_model(&mut r, &RandomModelConfig::default());
        let a = random_subset(&mut r, m.n_states(), 0.8);
        let x0 = r.gen_range(0..m.n_states());
        let regime = if r.gen_bool(0.5) {
            RegimeSpec::Viability { set: a.clone() }
        } else {
            RegimeSpec::StochasticViability { set: a.clone(), beta: 1.0 }
        };
        let costs = [CostKind::ControlEffort(None), CostKind::TimeOutside(a.clone())];
        for cost in costs {
            let risk = RiskMeasureSpec::Composed { cost: CostFunction::new(cost), outer: Outer::Expectation };
            let auto = minimize_risk(&m, x0, 0, &regime, &risk, StrategyClass::Markov, &limits).unwrap();
            let ex = minimize_risk_with(&m, x0, 0, &regime, &risk, StrategyClass::Markov, &limits, SearchMethod::Exhaustive)
                .unwrap();
            used_dp += usize::from(auto.certificate == Certificate::Dp);
            assert_eq!(auto.is_resilient(), ex.is_resilient());
            if ex.is_resilient() {
                assert!((auto.value - ex.value).abs() <= 1e-12 * ex.value.abs().max(1.0));
                assert!(check_resilient(&m, auto.best.as_ref().unwrap(), x0, 0, &regime, &limits).unwrap());
            }
        }
    }
    assert!(used_dp > 0);
}

#[test]
fn recovery_indicator_agrees_with_table_and_enumeration() {
    let mut r = rng(17);
    let limits = Limits::default();
    let cfg = RandomModelConfig { robust_subsets: true, ..Default::default() };
    for _ in 0..40 {
        let m = random_model(&mut r, &cfg);
        let a = random_subset(&mut r, m.n_states(), 0.6);
        let d = r.gen_range(0..=m.horizon());
        let x0 = r.gen_range(0..m.n_states());
        let regime = RegimeSpec::RobustRecovery { set: a.clone(), deadline: d };
        let risk = recovery_time_risk(a.clone());
        let auto = minimize_risk(&m, x0, 0, &regime, &risk, StrategyClass::Markov, &limits).unwrap();
        let ex = minimize_risk_with(&m, x0, 0, &regime, &risk, StrategyClass::Markov, &limits, SearchMethod::Exhaustive)
            .unwrap();
        assert_eq!(auto.value, ex.value);
        let table = robust_recovery_table_from(&m, &a, d, 0).unwrap();
        assert_eq!(auto.value, table.r_star[x0].as_f64());
    }
}

#[test]
fn adapted_optimum_is_no_worse_than_markov() {
    let mut r = rng(18);
    let limits = Limits::default();
    let cfg = RandomModelConfig { max_states: 3, max_horizon: 2, ..Default::default() };
    for _ in 0..40 {
        let m = random_model(&mut r, &cfg);
        let a = random_subset(&mut r, m.n_states(), 0.7);
        let x0 = r.gen_range(0..m.n_states());
        let regime = RegimeSpec::StochasticViability { set: a.clone(), beta: r.gen_range(0.0..=1.0) };
        for risk in risks(&m, &a) {
            let run = |class| {
                minimize_risk_with(&m, x0, 0, &regime, &risk, class, &limits, SearchMethod::Exhaustive).unwrap()
            };
            let markov = run(StrategyClass::Markov);
            let adapted = run(StrategyClass::Adapted);
            assert!(adapted.value <= markov.value + 1e-12);
            assert_eq!(adapted.class, StrategyClass::Adapted);
        }
    }
}

//! Risk minimization over resilient strategies and resilience indicators.

use std::cmp::Ordering;

use rayon::prelude::*;

use crate::engine::{robust_recovery_table_from, robust_viability_kernel, Certificate};
use crate::error::{input, Result};
use crate::model::{ScenarioDomain, SystemModel};
use crate::oracle::{domain_for, Limits, StrategyClass, StrategyEnumeration};
use crate::regimes::{regime_membership, RecoveryTime, RegimeSpec, PROBABILITY_TOL};
use crate::risk::{evaluate_risk, CostFunction, CostKind, Outer, RiskMeasureSpec};
use crate::strategy::{build_bundle, bundle_over, Strategy};
use crate::subset::Subset;

/// Best resilient strategy for a risk measure.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizationResult {
    /// `None` when no strategy of the class is resilient.
    pub best: Option<Strategy>,
    /// Risk of `best`, `+∞` when not resilient.
    pub value: f64,
    /// Resilient strategies whose risk was evaluated.
    pub examined: u64,
    pub certificate: Certificate,
    pub class: StrategyClass,
}

impl OptimizationResult {
    pub fn is_resilient(&self) -> bool {
        self.best.is_some()
    }

    fn not_resilient(examined: u64, certificate: Certificate, class: StrategyClass) -> Self {
        OptimizationResult {
            best: None,
            value: f64::INFINITY,
            examined,
            certificate,
            class,
        }
    }
}

/// Search strategy for [`minimize_risk_with`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SearchMethod {
    /// Dynamic programming when it is exact for the pair, otherwise exhaustive.
    Auto,
    Exhaustive,
}

/// Minimizes a risk measure over the resilient strategies of a class.
pub fn minimize_risk(
    model: &SystemModel,
    x0: usize,
    t: usize,
    regime: &RegimeSpec,
    risk: &RiskMeasureSpec,
    class: StrategyClass,
    limits: &Limits,
) -> Result<OptimizationResult> {
    minimize_risk_with(model, x0, t, regime, risk, class, limits, SearchMethod::Auto)
}

#[allow(clippy::too_many_arguments)]
pub fn minimize_risk_with(
    model: &SystemModel,
    x0: usize,
    t: usize,
    regime: &RegimeSpec,
    risk: &RiskMeasureSpec,
    class: StrategyClass,
    limits: &Limits,
    method: SearchMethod,
) -> Result<OptimizationResult> {
    if x0 >= model.n_states() {
        return input(format!("initial state index {x0} is not a listed state"));
    }
    if t > model.horizon() {
        return input(format!("start time {t} beyond horizon {}", model.horizon()));
    }
    regime.validate(model)?;
    risk.validate(model)?;
    if method == SearchMethod::Auto {
        if let Some(result) = fast_path(model, x0, t, regime, risk, class, limits)? {
            return Ok(result);
        }
    }
    exhaustive(model, x0, t, regime, risk, class, limits)
}

fn exhaustive(
    model: &SystemModel,
    x0: usize,
    t: usize,
    regime: &RegimeSpec,
    risk: &RiskMeasureSpec,
    class: StrategyClass,
    limits: &Limits,
) -> Result<OptimizationResult> {
    let strategies = StrategyEnumeration::new(model, class, t, limits.strategies)?;
    let domain = domain_for(regime, Some(risk));
    let scenarios = model.enumerate_scenarios(domain, limits.scenarios)?;
    let (best, examined) = (0..strategies.len())
        .into_par_iter()
        .map(|i| -> Result<(Option<(f64, u64)>, u64)> {
            let bundle = bundle_over(model, &strategies.strategy(i), x0, t, domain, &scenarios);
            if !regime_membership(model, regime, &bundle)? {
                return Ok((None, 0));
            }
            Ok((Some((evaluate_risk(model, risk, &bundle)?, i)), 1))
        })
        .try_reduce(
            || (None, 0),
            |(a, na), (b, nb)| {
                let best = match (a, b) {
                    (Some(a), Some(b)) => Some(lex_min(a, b)),
                    (a, b) => a.or(b),
                };
                Ok((best, na + nb))
            },
        )?;
    Ok(match best {
        Some((value, i)) => OptimizationResult {
            best: Some(strategies.strategy(i)),
            value,
            examined,
            certificate: Certificate::Exhaustive,
            class,
        },
        None => OptimizationResult::not_resilient(examined, Certificate::Exhaustive, class),
    })
}

fn lex_min(a: (f64, u64), b: (f64, u64)) -> (f64, u64) {
    match a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)) {
        Ordering::Greater => b,
        _ => a,
    }
}

/// Smallest scenario probability, `None` without per-time probabilities.
fn min_scenario_weight(model: &SystemModel) -> Option<f64> {
    let p = model.product_probabilities()?;
    Some(
        p.iter()
            .map(|pt| pt.iter().copied().fold(f64::INFINITY, f64::min))
            .product(),
    )
}

/// Dynamic-programming shortcuts that are exact:
///
/// - robust viability (or probability-one viability under full-support noise)
///   with an additive cost in expectation, when every scenario is a shock to
///   withstand: cost DP restricted to kernel-preserving controls;
/// - bounded-deadline robust recovery with the worst-case recovery time as
///   risk: the recovery table itself.
fn fast_path(
    model: &SystemModel,
    x0: usize,
    t: usize,
    regime: &RegimeSpec,
    risk: &RiskMeasureSpec,
    class: StrategyClass,
    limits: &Limits,
) -> Result<Option<OptimizationResult>> {
    if !model.robust_is_product() {
        return Ok(None);
    }
    match (regime, risk) {
        (
            RegimeSpec::RobustRecovery { set, deadline },
            RiskMeasureSpec::Composed {
                cost:
                    CostFunction {
                        kind: CostKind::RecoveryOffset(cost_set),
                        ..
                    },
                outer: Outer::WorstCase,
            },
        ) if set == cost_set => {
            if *deadline < t {
                return Ok(Some(OptimizationResult::not_resilient(0, Certificate::Dp, class)));
            }
            let table = robust_recovery_table_from(model, set, *deadline, t)?;
            let Some(best) = table.witnesses[x0].clone() else {
                return Ok(Some(OptimizationResult::not_resilient(0, Certificate::Dp, class)));
            };
            let value = reported_value(model, &best, x0, t, regime, risk, limits)?;
            debug_assert_eq!(RecoveryTime::At(t + value as usize), table.r_star[x0]);
            Ok(Some(OptimizationResult {
                best: Some(best),
                value,
                examined: 1,
                certificate: Certificate::Dp,
                class,
            }))
        }
        (regime, RiskMeasureSpec::Composed { cost, outer: Outer::Expectation }) if cost.is_additive() => {
            let set = match regime {
                RegimeSpec::Viability { set } => set,
                RegimeSpec::StochasticViability { set, beta } if *beta >= 1.0 => set,
                _ => return Ok(None),
            };
            // Every scenario must be one the kernel guards against, and each
            // must carry enough mass that probability one means surely.
            let full_support = min_scenario_weight(model).is_some_and(|w| w > 2.0 * PROBABILITY_TOL);
            if !model.robust_is_full() || !full_support {
                return Ok(None);
            }
            let kernel = robust_viability_kernel(model, set)?;
            if !kernel.contains(t, x0) {
                return Ok(Some(OptimizationResult::not_resilient(0, Certificate::Dp, class)));
            }
            let best = constrained_cost_dp(model, set, cost, t, &kernel.members);
            let value = reported_value(model, &best, x0, t, regime, risk, limits)?;
            Ok(Some(OptimizationResult {
                best: Some(best),
                value,
                examined: 1,
                certificate: Certificate::Dp,
                class,
            }))
        }
        _ => Ok(None),
    }
}

/// Expected additive cost DP where each kernel state may only use controls
/// that keep every successor in the kernel. Off-kernel states get control 0.
fn constrained_cost_dp(model: &SystemModel, set: &Subset, cost: &CostFunction, start: usize, kernel: &[Subset]) -> Strategy {
    let k = model.horizon();
    let nx = model.n_states();
    let p = model.product_probabilities().expect("checked by caller");
    let mut to_go: Vec<f64> = (0..nx).map(|x| cost.terminal(model, x)).collect();
    let mut tables = vec![vec![0usize; nx]; k];
    for t in (start..k).rev() {
        let row: Vec<(f64, usize)> = (0..nx)
            .into_par_iter()
            .map(|x| {
                if !kernel[t].contains(x) {
                    return (f64::INFINITY, 0);
                }
                let mut best: Option<(f64, usize)> = None;
                for u in model.constraint_set(t, x).iter() {
                    let succ: Vec<usize> = (0..model.n_noise(t)).map(|w| model.dynamics(t, x, u, w)).collect();
                    if !succ.iter().all(|&y| kernel[t + 1].contains(y)) {
                        continue;
                    }
                    let v = cost.stage(model, t, x, u) + succ.iter().zip(&p[t]).map(|(&y, pw)| pw * to_go[y]).sum::<f64>();
                    if best.is_none_or(|(b, _)| v < b) {
                        best = Some((v, u));
                    }
                }
                best.expect("kernel states have a preserving control")
            })
            .collect();
        to_go = row.iter().map(|r| r.0).collect();
        tables[t] = row.iter().map(|r| r.1).collect();
    }
    debug_assert!(kernel[k] == *set);
    Strategy::markov(tables)
}

/// Risk of a strategy's bundle, confirming that it is resilient.
fn reported_value(
    model: &SystemModel,
    strategy: &Strategy,
    x0: usize,
    t: usize,
    regime: &RegimeSpec,
    risk: &RiskMeasureSpec,
    limits: &Limits,
) -> Result<f64> {
    let bundle = build_bundle(model, strategy, x0, t, domain_for(regime, Some(risk)), limits.scenarios)?;
    debug_assert!(regime_membership(model, regime, &bundle)?);
    evaluate_risk(model, risk, &bundle)
}

/// Minimal risk over resilient Markov strategies; `+∞` when none exists.
pub fn resilience_indicator(
    model: &SystemModel,
    x0: usize,
    t: usize,
    regime: &RegimeSpec,
    risk: &RiskMeasureSpec,
    limits: &Limits,
) -> Result<f64> {
    Ok(minimize_risk(model, x0, t, regime, risk, StrategyClass::Markov, limits)?.value)
}

/// The worst-case recovery time risk: recovery time offset, maximized over the robust set.
pub fn recovery_time_risk(set: Subset) -> RiskMeasureSpec {
    RiskMeasureSpec::Composed {
        cost: CostFunction::new(CostKind::RecoveryOffset(set)),
        outer: Outer::WorstCase,
    }
}

/// Min over resilient strategies of the max over robust scenarios of the
/// recovery time offset, under `RobustRecovery(set, deadline)`.
pub fn min_max_recovery_indicator(
    model: &SystemModel,
    x0: usize,
    t: usize,
    set: &Subset,
    deadline: usize,
    limits: &Limits,
) -> Result<f64> {
    let regime = RegimeSpec::RobustRecovery {
        set: set.clone(),
        deadline,
    };
    resilience_indicator(model, x0, t, &regime, &recovery_time_risk(set.clone()), limits)
}

/// Whether a bundle domain suffices for both a regime and a risk measure.
pub fn bundle_domain(regime: &RegimeSpec, risk: &RiskMeasureSpec) -> ScenarioDomain {
    domain_for(regime, Some(risk))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::check_resilient;
    use crate::model::{reference_model, reference_model_benign};

    fn a(idx: &[usize]) -> Subset {
        Subset::from_indices(4, idx.iter().copied()).unwrap()
    }

    fn effort() -> RiskMeasureSpec {
        RiskMeasureSpec::Composed {
            cost: CostFunction::new(CostKind::ControlEffort(None)),
            outer: Outer::Expectation,
        }
    }

    #[test]
    fn effort_minimization_reference() {
        let m = reference_model();
        let limits = Limits::default();
        let regime = RegimeSpec::StochasticViability { set: a(&[2, 3]), beta: 1.0 };
        let ex = minimize_risk_with(&m, 2, 0, &regime, &effort(), StrategyClass::Markov, &limits, SearchMethod::Exhaustive)
            .unwrap();
        assert!((ex.value - 2.0).abs() < 1e-12);
        assert_eq!(ex.certificate, Certificate::Exhaustive);
        let best = ex.best.as_ref().unwrap();
        for t in 0..3 {
            assert_eq!(best.policy(t).table()[2], 1);
            assert_eq!(best.policy(t).table()[3], 0);
        }
        let dp = minimize_risk(&m, 2, 0, &regime, &effort(), StrategyClass::Markov, &limits).unwrap();
        assert_eq!(dp.certificate, Certificate::Dp);
        assert!((dp.value - ex.value).abs() < 1e-12);
        assert!(check_resilient(&m, dp.best.as_ref().unwrap(), 2, 0, &regime, &limits).unwrap());
    }

    #[test]
    fn terminal_worst_case_is_zero() {
        let m = reference_model();
        let regime = RegimeSpec::StochasticViability { set: a(&[2, 3]), beta: 1.0 };
        let risk = RiskMeasureSpec::Composed {
            cost: CostFunction::new(CostKind::Terminal(a(&[2, 3]))),
            outer: Outer::WorstCase,
        };
        let r = minimize_risk(&m, 2, 0, &regime, &risk, StrategyClass::Markov, &Limits::default()).unwrap();
        assert_eq!(r.value, 0.0);
    }

    #[test]
    fn not_resilient_result() {
        let m = reference_model();
        let regime = RegimeSpec::Viability { set: a(&[2, 3]) };
        for method in [SearchMethod::Auto, SearchMethod::Exhaustive] {
            let r = minimize_risk_with(&m, 0, 0, &regime, &effort(), StrategyClass::Markov, &Limits::default(), method)
                .unwrap();
            assert!(!r.is_resilient());
            assert_eq!(r.value, f64::INFINITY);
        }
    }

    #[test]
    fn recovery_indicator_reference() {
        let m = reference_model_benign();
        let limits = Limits::default();
        let set = a(&[2, 3]);
        assert_eq!(min_max_recovery_indicator(&m, 0, 0, &set, 3, &limits).unwrap(), 2.0);
        assert_eq!(min_max_recovery_indicator(&m, 2, 0, &set, 3, &limits).unwrap(), 0.0);
        let regime = RegimeSpec::RobustRecovery { set: set.clone(), deadline: 3 };
        let ex = minimize_risk_with(
            &m,
            0,
            0,
            &regime,
            &recovery_time_risk(set.clone()),
            StrategyClass::Markov,
            &limits,
            SearchMethod::Exhaustive,
        )
        .unwrap();
        assert_eq!(ex.value, 2.0);
        let harsh = reference_model();
        assert_eq!(min_max_recovery_indicator(&harsh, 0, 0, &set, 3, &limits).unwrap(), f64::INFINITY);
    }
}

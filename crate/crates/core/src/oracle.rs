//! Brute-force reference answers by exhaustive strategy enumeration.
//!
//! Everything here is computed by chasing definitions: simulate every
//! candidate strategy on every scenario and test the regime directly. Nothing
//! in this module calls the dynamic-programming engine or the optimizer.

use std::cmp::Ordering;

use rayon::prelude::*;

use crate::error::{input, Error, Result};
use crate::model::{Scenario, ScenarioDomain, SystemModel, SCENARIO_CAP};
use crate::regimes::{recovery_time, regime_membership, RecoveryTime, RegimeSpec};
use crate::risk::{evaluate_risk, RiskMeasureSpec};
use crate::strategy::{bundle_over, prefix_count, simulate_unchecked, Policy, Strategy};
use crate::subset::Subset;

/// Default cap on the number of enumerated strategies.
pub const STRATEGY_CAP: u64 = 1_000_000;

/// Which strategies a search ranges over.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StrategyClass {
    /// State feedback `(t, x) -> u`.
    Markov,
    /// Feedback on the state and the past uncertainties.
    Adapted,
}

impl StrategyClass {
    pub fn name(&self) -> &'static str {
        match self {
            StrategyClass::Markov => "markov",
            StrategyClass::Adapted => "adapted",
        }
    }
}

/// Enumeration caps. Exceeding one is an error, never a silent truncation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Limits {
    pub scenarios: usize,
    pub strategies: u64,
}

impl Default for Limits {
    fn default() -> Self {
        Limits {
            scenarios: SCENARIO_CAP,
            strategies: STRATEGY_CAP,
        }
    }
}

/// All strategies of a class acting from `start` on, in lexicographic order of
/// their table encoding (time, then state, then prefix rank; first entry most
/// significant). Policies before `start` are fixed to control 0.
#[derive(Debug, Clone)]
pub struct StrategyEnumeration {
    class: StrategyClass,
    start: usize,
    // table length of each policy 0..K
    table_lens: Vec<usize>,
    n_controls: u64,
    digits: usize,
    count: u64,
}

impl StrategyEnumeration {
    pub fn new(model: &SystemModel, class: StrategyClass, start: usize, cap: u64) -> Result<Self> {
        let k = model.horizon();
        if start > k {
            return input(format!("start time {start} beyond horizon {k}"));
        }
        let nx = model.n_states() as u128;
        let lens: Vec<u128> = (0..k)
            .map(|t| match class {
                StrategyClass::Markov => nx,
                StrategyClass::Adapted => nx * prefix_count(model, t),
            })
            .collect();
        let digits: u128 = lens[start..].iter().sum();
        let nu = model.n_controls() as u128;
        let mut count: u128 = 1;
        for _ in 0..digits {
            count = count.saturating_mul(nu);
            if count > cap as u128 {
                return Err(Error::Capacity {
                    what: "strategy enumeration".into(),
                    required: capped_power(nu, digits),
                    cap: cap as u128,
                });
            }
        }
        Ok(StrategyEnumeration {
            class,
            start,
            table_lens: lens.iter().map(|&l| l as usize).collect(),
            n_controls: nu as u64,
            digits: digits as usize,
            count: count as u64,
        })
    }

    pub fn class(&self) -> StrategyClass {
        self.class
    }

    pub fn len(&self) -> u64 {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    /// The strategy of a given rank.
    pub fn strategy(&self, mut index: u64) -> Strategy {
        let mut digits = vec![0usize; self.digits];
        for d in digits.iter_mut().rev() {
            *d = (index % self.n_controls) as usize;
            index /= self.n_controls;
        }
        let mut cursor = 0;
        let policies = self
            .table_lens
            .iter()
            .enumerate()
            .map(|(t, &len)| {
                let table = if t < self.start {
                    vec![0; len]
                } else {
                    let slice = digits[cursor..cursor + len].to_vec();
                    cursor += len;
                    slice
                };
                match self.class {
                    StrategyClass::Markov => Policy::Markov(table),
                    StrategyClass::Adapted => Policy::Adapted(table),
                }
            })
            .collect();
        Strategy::new(policies)
    }

    pub fn iter(&self) -> impl Iterator<Item = Strategy> + '_ {
        (0..self.count).map(|i| self.strategy(i))
    }
}

fn capped_power(base: u128, exp: u128) -> u128 {
    let mut acc: u128 = 1;
    for _ in 0..exp {
        acc = acc.saturating_mul(base);
    }
    acc
}

/// The scenario domain needed to evaluate a regime and, optionally, a risk measure.
pub fn domain_for(regime: &RegimeSpec, risk: Option<&RiskMeasureSpec>) -> ScenarioDomain {
    let full = regime.required_domain() == ScenarioDomain::Full
        || risk.is_some_and(|r| r.required_domain() == ScenarioDomain::Full);
    if full {
        ScenarioDomain::Full
    } else {
        ScenarioDomain::Robust
    }
}

fn check_x0(model: &SystemModel, x0: usize) -> Result<()> {
    if x0 >= model.n_states() {
        return input(format!("initial state index {x0} is not a listed state"));
    }
    Ok(())
}

/// First strategy (in enumeration order) making `x0` resilient, if any.
pub fn oracle_first_witness(
    model: &SystemModel,
    x0: usize,
    t: usize,
    regime: &RegimeSpec,
    class: StrategyClass,
    limits: &Limits,
) -> Result<Option<Strategy>> {
    check_x0(model, x0)?;
    regime.validate(model)?;
    let strategies = StrategyEnumeration::new(model, class, t, limits.strategies)?;
    let domain = regime.required_domain();
    let scenarios = model.enumerate_scenarios(domain, limits.scenarios)?;
    first_witness(model, &strategies, &scenarios, domain, x0, t, regime)
}

fn first_witness(
    model: &SystemModel,
    strategies: &StrategyEnumeration,
    scenarios: &[Scenario],
    domain: ScenarioDomain,
    x0: usize,
    t: usize,
    regime: &RegimeSpec,
) -> Result<Option<Strategy>> {
    let found = (0..strategies.len())
        .into_par_iter()
        .map(|i| {
            let bundle = bundle_over(model, &strategies.strategy(i), x0, t, domain, scenarios);
            regime_membership(model, regime, &bundle).map(|ok| ok.then_some(i))
        })
        .filter_map(|r| r.transpose())
        .find_first(|_| true);
    match found {
        Some(Ok(i)) => Ok(Some(strategies.strategy(i))),
        Some(Err(e)) => Err(e),
        None => Ok(None),
    }
}

/// Resilient states at time `t`, by scanning every strategy of the class.
pub fn oracle_resilient_states(
    model: &SystemModel,
    t: usize,
    regime: &RegimeSpec,
    class: StrategyClass,
    limits: &Limits,
) -> Result<Subset> {
    regime.validate(model)?;
    let strategies = StrategyEnumeration::new(model, class, t, limits.strategies)?;
    let domain = regime.required_domain();
    let scenarios = model.enumerate_scenarios(domain, limits.scenarios)?;
    let mut out = Subset::empty(model.n_states());
    for x0 in 0..model.n_states() {
        if first_witness(model, &strategies, &scenarios, domain, x0, t, regime)?.is_some() {
            out.insert(x0);
        }
    }
    Ok(out)
}

fn lex_min(a: (f64, u64), b: (f64, u64)) -> (f64, u64) {
    match a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)) {
        Ordering::Greater => b,
        _ => a,
    }
}

/// Minimum of a risk measure over the resilient strategies of the class,
/// `+∞` when there are none.
pub fn oracle_min_risk(
    model: &SystemModel,
    x0: usize,
    t: usize,
    regime: &RegimeSpec,
    risk: &RiskMeasureSpec,
    class: StrategyClass,
    limits: &Limits,
) -> Result<f64> {
    check_x0(model, x0)?;
    regime.validate(model)?;
    risk.validate(model)?;
    let strategies = StrategyEnumeration::new(model, class, t, limits.strategies)?;
    let domain = domain_for(regime, Some(risk));
    let scenarios = model.enumerate_scenarios(domain, limits.scenarios)?;
    let best = (0..strategies.len())
        .into_par_iter()
        .map(|i| -> Result<Option<(f64, u64)>> {
            let bundle = bundle_over(model, &strategies.strategy(i), x0, t, domain, &scenarios);
            if !regime_membership(model, regime, &bundle)? {
                return Ok(None);
            }
            Ok(Some((evaluate_risk(model, risk, &bundle)?, i)))
        })
        .try_reduce(|| None, |a, b| {
            Ok(match (a, b) {
                (Some(a), Some(b)) => Some(lex_min(a, b)),
                (a, b) => a.or(b),
            })
        })?;
    Ok(best.map_or(f64::INFINITY, |(v, _)| v))
}

/// For every state, the largest probability over Markov strategies of keeping
/// the state in `set` with admissible controls from `t` to the horizon.
pub fn oracle_max_viability_probability(
    model: &SystemModel,
    t: usize,
    set: &Subset,
    limits: &Limits,
) -> Result<Vec<f64>> {
    if !model.has_probabilities() {
        return crate::error::config("no probabilities declared for the uncertainty sets");
    }
    let strategies = StrategyEnumeration::new(model, StrategyClass::Markov, t, limits.strategies)?;
    let scenarios = model.enumerate_scenarios(ScenarioDomain::Full, limits.scenarios)?;
    let weights: Vec<f64> = scenarios
        .iter()
        .map(|s| model.scenario_weight(s).unwrap_or(0.0))
        .collect();
    let mut out = Vec::with_capacity(model.n_states());
    for x0 in 0..model.n_states() {
        let best = (0..strategies.len())
            .into_par_iter()
            .map(|i| {
                let strategy = strategies.strategy(i);
                scenarios
                    .iter()
                    .zip(&weights)
                    .filter(|(s, _)| {
                        let tr = simulate_unchecked(model, &strategy, t, x0, s);
                        (t..=model.horizon()).all(|r| {
                            let x = tr.state_at(r);
                            set.contains(x) && (r == model.horizon() || model.is_admissible(r, x, tr.control_at(r)))
                        })
                    })
                    .fold(0.0, |acc, (_, w)| acc + w)
            })
            .reduce(|| f64::NEG_INFINITY, f64::max);
        out.push(best);
    }
    Ok(out)
}

/// Smallest worst-case recovery time over Markov strategies, with the first
/// strategy attaining it.
pub fn oracle_min_max_recovery(
    model: &SystemModel,
    x0: usize,
    t: usize,
    set: &Subset,
    limits: &Limits,
) -> Result<(RecoveryTime, Option<Strategy>)> {
    check_x0(model, x0)?;
    let strategies = StrategyEnumeration::new(model, StrategyClass::Markov, t, limits.strategies)?;
    let scenarios = model.enumerate_scenarios(ScenarioDomain::Robust, limits.scenarios)?;
    let best = (0..strategies.len())
        .into_par_iter()
        .map(|i| {
            let strategy = strategies.strategy(i);
            let worst = scenarios
                .iter()
                .map(|s| recovery_time(model, &simulate_unchecked(model, &strategy, t, x0, s), set))
                .max()
                .unwrap_or(RecoveryTime::At(t));
            (worst, i)
        })
        .min()
        .expect("at least one strategy");
    Ok(match best.0 {
        RecoveryTime::Never => (RecoveryTime::Never, None),
        r => (r, Some(strategies.strategy(best.1))),
    })
}

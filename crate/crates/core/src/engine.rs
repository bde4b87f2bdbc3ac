//! Resilience decision procedures.
//!
//! Dynamic programming handles the viability family (robust viability,
//! bounded-deadline robust recovery, stochastic viability), where Markov
//! strategies are as good as adapted ones. Any other regime falls back to
//! exhaustive search over the requested strategy class.

use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::error::{config, input, Error, Result};
use crate::model::SystemModel;
use crate::oracle::{Limits, StrategyClass, StrategyEnumeration};
use crate::regimes::{regime_membership, RecoveryTime, RegimeSpec, PROBABILITY_TOL};
use crate::strategy::{build_bundle, bundle_over, Strategy};
use crate::subset::Subset;

/// How a result was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Certificate {
    Exhaustive,
    Dp,
}

impl Certificate {
    pub fn name(&self) -> &'static str {
        match self {
            Certificate::Exhaustive => "exhaustive",
            Certificate::Dp => "dp",
        }
    }
}

/// Robust viability kernel per time, with a witnessing control for each member.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelTable {
    /// Membership at times `0..=K`.
    pub members: Vec<Subset>,
    /// Least kernel-preserving control at `(t, x)` for `t < K`, `None` off the kernel.
    pub witness: Vec<Vec<Option<usize>>>,
}

impl KernelTable {
    pub fn contains(&self, t: usize, x: usize) -> bool {
        self.members[t].contains(x)
    }

    /// Markov strategy playing the witnesses (control 0 off the kernel).
    pub fn strategy(&self) -> Strategy {
        Strategy::markov(
            self.witness
                .iter()
                .map(|row| row.iter().map(|u| u.unwrap_or(0)).collect())
                .collect(),
        )
    }

    /// Recomputes the one-step condition and reports whether it reproduces the table.
    pub fn is_fixed_point(&self, model: &SystemModel, set: &Subset) -> bool {
        let k = model.horizon();
        if self.members[k] != *set {
            return false;
        }
        (0..k).all(|t| {
            (0..model.n_states()).all(|x| {
                let expect = set.contains(x).then(|| least_preserving(model, t, x, &self.members[t + 1])).flatten();
                expect == self.witness[t][x] && expect.is_some() == self.members[t].contains(x)
            })
        })
    }
}

/// Least admissible control at `(t, x)` sending every robust uncertainty into `target`.
fn least_preserving(model: &SystemModel, t: usize, x: usize, target: &Subset) -> Option<usize> {
    let robust = model.robust_noise(t);
    model
        .constraint_set(t, x)
        .iter()
        .find(|&u| robust.iter().all(|w| target.contains(model.dynamics(t, x, u, w))))
}

fn require_product_robust(model: &SystemModel) -> Result<()> {
    if !model.robust_is_product() {
        return config("dynamic programming needs a robust set given per time, not as a scenario list");
    }
    Ok(())
}

fn check_state_set(model: &SystemModel, set: &Subset) -> Result<()> {
    if set.universe() != model.n_states() {
        return input(format!(
            "state subset over {} states, model has {}",
            set.universe(),
            model.n_states()
        ));
    }
    Ok(())
}

/// Backward recursion for the robust viability kernel.
pub fn robust_viability_kernel(model: &SystemModel, set: &Subset) -> Result<KernelTable> {
    check_state_set(model, set)?;
    require_product_robust(model)?;
    let k = model.horizon();
    let nx = model.n_states();
    let mut members = vec![Subset::empty(nx); k + 1];
    let mut witness = vec![vec![None; nx]; k];
    members[k] = set.clone();
    for t in (0..k).rev() {
        let next = &members[t + 1];
        let row: Vec<Option<usize>> = (0..nx)
            .into_par_iter()
            .map(|x| if set.contains(x) { least_preserving(model, t, x, next) } else { None })
            .collect();
        members[t] = Subset::from_mask(row.iter().map(Option::is_some).collect());
        witness[t] = row;
    }
    Ok(KernelTable { members, witness })
}

/// Maximal viability probabilities `V_t(x)` with argmax controls.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueTable {
    /// `values[t][x]` for `t` in `0..=K`; the cemetery has value 0.
    pub values: Vec<Vec<f64>>,
    /// Argmax control at `(t, x)` for `t < K` (smallest index on ties).
    pub witness: Vec<Vec<usize>>,
}

impl ValueTable {
    pub fn value(&self, t: usize, x: usize) -> f64 {
        self.values[t].get(x).copied().unwrap_or(0.0)
    }

    pub fn strategy(&self) -> Strategy {
        Strategy::markov(self.witness.clone())
    }

    /// States whose viability probability at `t` reaches `beta`.
    pub fn at_least(&self, t: usize, beta: f64) -> Subset {
        Subset::from_mask(self.values[t].iter().map(|&v| v >= beta - PROBABILITY_TOL).collect())
    }
}

/// Stochastic viability dynamic programming under time-independent noise.
pub fn stochastic_viability_value(model: &SystemModel, set: &Subset) -> Result<ValueTable> {
    check_state_set(model, set)?;
    let Some(p) = model.product_probabilities() else {
        return config("stochastic viability needs per-time probabilities (no joint distribution)");
    };
    let k = model.horizon();
    let nx = model.n_states();
    let mut values = vec![vec![0.0; nx]; k + 1];
    let mut witness = vec![vec![0; nx]; k];
    values[k] = (0..nx).map(|x| if set.contains(x) { 1.0 } else { 0.0 }).collect();
    for t in (0..k).rev() {
        let next = &values[t + 1];
        let value_of = |y: usize| next.get(y).copied().unwrap_or(0.0);
        let row: Vec<(f64, usize)> = (0..nx)
            .into_par_iter()
            .map(|x| {
                let mut best: Option<(f64, usize)> = None;
                for u in model.constraint_set(t, x).iter() {
                    let v: f64 = (0..model.n_noise(t))
                        .map(|w| p[t][w] * value_of(model.dynamics(t, x, u, w)))
                        .sum();
                    if best.is_none_or(|(b, _)| v > b) {
                        best = Some((v, u));
                    }
                }
                let (v, u) = best.expect("constraint sets are nonempty");
                (if set.contains(x) { v } else { 0.0 }, u)
            })
            .collect();
        values[t] = row.iter().map(|r| r.0).collect();
        witness[t] = row.iter().map(|r| r.1).collect();
    }
    Ok(ValueTable { values, witness })
}

/// Worst-case minimal recovery times with witnessing strategies.
#[derive(Debug, Clone, PartialEq)]
pub struct RecoveryTable {
    pub start: usize,
    pub deadline: usize,
    /// Least absolute time `r ≤ deadline` by which recovery can be guaranteed, per state.
    pub r_star: Vec<RecoveryTime>,
    /// A Markov strategy attaining `r_star`, for each state where it is finite.
    pub witnesses: Vec<Option<Strategy>>,
}

impl RecoveryTable {
    pub fn resilient(&self) -> Subset {
        Subset::from_mask(self.r_star.iter().map(|r| r.is_finite()).collect())
    }
}

/// Recovery table from time 0.
pub fn robust_recovery_table(model: &SystemModel, set: &Subset, deadline: usize) -> Result<RecoveryTable> {
    robust_recovery_table_from(model, set, deadline, 0)
}

/// Recovery table from an arbitrary start time.
///
/// For each candidate deadline `D` the states from which recovery by `D` is
/// guaranteed form `Q_D(D) = kernel(D)` and `Q_D(t) = {x : ∃u ∀w F(x,u,w) ∈ Q_D(t+1)}`.
pub fn robust_recovery_table_from(
    model: &SystemModel,
    set: &Subset,
    deadline: usize,
    start: usize,
) -> Result<RecoveryTable> {
    let k = model.horizon();
    if deadline > k {
        return input(format!("deadline {deadline} beyond horizon {k}"));
    }
    if start > k {
        return input(format!("start time {start} beyond horizon {k}"));
    }
    let kernel = robust_viability_kernel(model, set)?;
    let nx = model.n_states();
    let mut r_star = vec![RecoveryTime::Never; nx];
    let mut witnesses: Vec<Option<Strategy>> = vec![None; nx];
    for d in start..=deadline {
        // controls[t] for t in start..d steer into the guaranteed-recovery sets
        let mut reach = kernel.members[d].clone();
        let mut steer: Vec<Vec<Option<usize>>> = vec![vec![None; nx]; d];
        for t in (start..d).rev() {
            let row: Vec<Option<usize>> = (0..nx)
                .into_par_iter()
                .map(|x| least_preserving(model, t, x, &reach))
                .collect();
            reach = Subset::from_mask(row.iter().map(Option::is_some).collect());
            steer[t] = row;
        }
        for x in reach.iter() {
            if r_star[x].is_finite() {
                continue;
            }
            r_star[x] = RecoveryTime::At(d);
            let tables = (0..k)
                .map(|t| {
                    (0..nx)
                        .map(|y| {
                            let u = if t < start {
                                None
                            } else if t < d {
                                steer[t][y]
                            } else {
                                kernel.witness[t][y]
                            };
                            u.unwrap_or(0)
                        })
                        .collect()
                })
                .collect();
            witnesses[x] = Some(Strategy::markov(tables));
        }
    }
    Ok(RecoveryTable {
        start,
        deadline,
        r_star,
        witnesses,
    })
}

/// Builds the bundle a regime quantifies over and tests membership.
pub fn check_resilient(
    model: &SystemModel,
    strategy: &Strategy,
    x0: usize,
    t: usize,
    regime: &RegimeSpec,
    limits: &Limits,
) -> Result<bool> {
    regime.validate(model)?;
    let bundle = build_bundle(model, strategy, x0, t, regime.required_domain(), limits.scenarios)?;
    regime_membership(model, regime, &bundle)
}

/// Resilient states with one witnessing strategy per member.
#[derive(Debug, Clone, PartialEq)]
pub struct ResilientSet {
    pub states: Subset,
    pub witnesses: BTreeMap<usize, Strategy>,
    pub certificate: Certificate,
}

/// Whether a regime is decided by dynamic programming on this model.
pub fn dp_applies(model: &SystemModel, regime: &RegimeSpec) -> bool {
    match regime {
        RegimeSpec::Viability { .. } | RegimeSpec::RobustRecovery { .. } => model.robust_is_product(),
        RegimeSpec::StochasticViability { .. } => model.product_probabilities().is_some(),
        _ => false,
    }
}

/// The set of states at time `t` from which some strategy of the class is resilient.
pub fn resilient_states(
    model: &SystemModel,
    t: usize,
    regime: &RegimeSpec,
    class: StrategyClass,
    limits: &Limits,
) -> Result<ResilientSet> {
    regime.validate(model)?;
    if t > model.horizon() {
        return input(format!("start time {t} beyond horizon {}", model.horizon()));
    }
    if dp_applies(model, regime) {
        return resilient_states_dp(model, t, regime);
    }
    let strategies = StrategyEnumeration::new(model, class, t, limits.strategies).map_err(|e| match e {
        Error::Capacity { what, required, cap } => Error::Capacity {
            what: format!(
                "{what} for regime '{}' (only viability, robust_recovery and stochastic_viability \
                 are solved by dynamic programming)",
                regime.name()
            ),
            required,
            cap,
        },
        e => e,
    })?;
    let domain = regime.required_domain();
    let scenarios = model.enumerate_scenarios(domain, limits.scenarios)?;
    let mut states = Subset::empty(model.n_states());
    let mut witnesses = BTreeMap::new();
    for x0 in 0..model.n_states() {
        let found = (0..strategies.len())
            .into_par_iter()
            .map(|i| {
                let bundle = bundle_over(model, &strategies.strategy(i), x0, t, domain, &scenarios);
                regime_membership(model, regime, &bundle).map(|ok| ok.then_some(i))
            })
            .filter_map(|r| r.transpose())
            .find_first(|_| true)
            .transpose()?;
        if let Some(i) = found {
            states.insert(x0);
            witnesses.insert(x0, strategies.strategy(i));
        }
    }
    Ok(ResilientSet {
        states,
        witnesses,
        certificate: Certificate::Exhaustive,
    })
}

fn resilient_states_dp(model: &SystemModel, t: usize, regime: &RegimeSpec) -> Result<ResilientSet> {
    let (states, witnesses) = match regime {
        RegimeSpec::Viability { set } => {
            let kernel = robust_viability_kernel(model, set)?;
            let w = kernel.strategy();
            let states = kernel.members[t].clone();
            let witnesses = states.iter().map(|x| (x, w.clone())).collect();
            (states, witnesses)
        }
        RegimeSpec::RobustRecovery { set, deadline } => {
            if *deadline < t {
                (Subset::empty(model.n_states()), BTreeMap::new())
            } else {
                let table = robust_recovery_table_from(model, set, *deadline, t)?;
                let witnesses = table
                    .witnesses
                    .iter()
                    .enumerate()
                    .filter_map(|(x, w)| w.clone().map(|w| (x, w)))
                    .collect();
                (table.resilient(), witnesses)
            }
        }
        RegimeSpec::StochasticViability { set, beta } => {
            let table = stochastic_viability_value(model, set)?;
            let w = table.strategy();
            let states = table.at_least(t, *beta);
            let witnesses = states.iter().map(|x| (x, w.clone())).collect();
            (states, witnesses)
        }
        _ => unreachable!("dp_applies admits only the viability family"),
    };
    Ok(ResilientSet {
        states,
        witnesses,
        certificate: Certificate::Dp,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{reference_model, reference_model_benign, PointSet, TimeGrid, UncertaintyStructure};
    use crate::oracle::{oracle_max_viability_probability, oracle_resilient_states};

    fn a(idx: &[usize]) -> Subset {
        Subset::from_indices(4, idx.iter().copied()).unwrap()
    }

    #[test]
    fn kernel_examples() {
        let m = reference_model();
        let k = robust_viability_kernel(&m, &a(&[2, 3])).unwrap();
        for t in 0..=3 {
            assert_eq!(k.members[t], a(&[2, 3]));
        }
        assert_eq!(k.witness[0][2], Some(1));
        assert_eq!(k.witness[0][3], Some(0));
        assert!(k.is_fixed_point(&m, &a(&[2, 3])));
        let k3 = robust_viability_kernel(&m, &a(&[3])).unwrap();
        assert!(k3.members.iter().all(|s| *s == a(&[3])));
        let k0 = robust_viability_kernel(&m, &a(&[0])).unwrap();
        assert!(k0.members.iter().all(|s| *s == a(&[0])));
        assert_eq!(k0.witness[1][0], Some(0));
    }

    #[test]
    fn kernel_matches_brute_force_on_reference() {
        let m = reference_model();
        let limits = Limits::default();
        for set in [a(&[2, 3]), a(&[3]), a(&[0]), a(&[0, 1]), a(&[1, 2, 3])] {
            let regime = RegimeSpec::Viability { set: set.clone() };
            let oracle = oracle_resilient_states(&m, 0, &regime, StrategyClass::Markov, &limits).unwrap();
            assert_eq!(robust_viability_kernel(&m, &set).unwrap().members[0], oracle, "set {set:?}");
        }
    }

    #[test]
    fn value_examples() {
        let m = reference_model();
        let v = stochastic_viability_value(&m, &a(&[2, 3])).unwrap();
        assert_eq!(v.value(0, 2), 1.0);
        assert_eq!(v.value(0, 1), 0.0);
        assert_eq!(v.values[3], vec![0.0, 0.0, 1.0, 1.0]);
        assert!(v.values.iter().flatten().all(|p| (0.0..=1.0).contains(p)));
        let oracle = oracle_max_viability_probability(&m, 0, &a(&[2, 3]), &Limits::default()).unwrap();
        for x in 0..4 {
            assert!((v.value(0, x) - oracle[x]).abs() < 1e-12);
        }
        let bare = m.with_uncertainty(m.uncertainty().clone().without_probabilities()).unwrap();
        assert!(matches!(stochastic_viability_value(&bare, &a(&[2, 3])), Err(Error::Config(_))));
    }

    #[test]
    fn deterministic_value_is_kernel_indicator() {
        let m = SystemModel::from_fn(
            TimeGrid::new(3).unwrap(),
            PointSet::integer_line(4),
            PointSet::integer_line(2),
            UncertaintyStructure::stationary(3, &["0"]).with_probabilities(vec![vec![1.0]; 3]),
            |t, x, u, _| if t == 1 && x == 2 { 0 } else { (x + u).min(3) },
            |_, _| vec![0, 1],
        )
        .unwrap();
        let set = a(&[1, 2, 3]);
        let v = stochastic_viability_value(&m, &set).unwrap();
        let k = robust_viability_kernel(&m, &set).unwrap();
        for t in 0..=3 {
            for x in 0..4 {
                assert_eq!(v.value(t, x), if k.contains(t, x) { 1.0 } else { 0.0 });
            }
        }
    }

    #[test]
    fn recovery_examples() {
        let benign = reference_model_benign();
        let table = robust_recovery_table(&benign, &a(&[2, 3]), 2).unwrap();
        assert_eq!(table.r_star[0], RecoveryTime::At(2));
        assert_eq!(table.r_star[1], RecoveryTime::At(1));
        assert_eq!(table.r_star[2], RecoveryTime::At(0));
        let w = table.witnesses[0].as_ref().unwrap();
        assert_eq!(w.policy(0).table()[0], 1);
        assert_eq!(w.policy(1).table()[1], 1);
        let harsh = reference_model();
        let table = robust_recovery_table(&harsh, &a(&[2, 3]), 3).unwrap();
        assert_eq!(table.r_star[0], RecoveryTime::Never);
        assert_eq!(table.r_star[1], RecoveryTime::Never);
        assert_eq!(table.resilient(), a(&[2, 3]));
        let zero = robust_recovery_table(&benign, &a(&[2, 3]), 0).unwrap();
        assert_eq!(zero.resilient(), robust_viability_kernel(&benign, &a(&[2, 3])).unwrap().members[0]);
        assert!(robust_recovery_table(&benign, &a(&[2, 3]), 4).is_err());
    }

    #[test]
    fn check_resilient_examples() {
        let m = reference_model();
        let limits = Limits::default();
        let viab = RegimeSpec::Viability { set: a(&[2, 3]) };
        assert!(check_resilient(&m, &Strategy::constant(&m, 1), 2, 0, &viab, &limits).unwrap());
        assert!(!check_resilient(&m, &Strategy::constant(&m, 0), 2, 0, &viab, &limits).unwrap());
        let any = RegimeSpec::ControlEvent {
            controls: Subset::full(2),
        };
        assert!(check_resilient(&m, &Strategy::constant(&m, 0), 2, 0, &any, &limits).unwrap());
    }

    #[test]
    fn resilient_set_examples() {
        let m = reference_model();
        let limits = Limits::default();
        let r = resilient_states(&m, 0, &RegimeSpec::Viability { set: a(&[2, 3]) }, StrategyClass::Markov, &limits)
            .unwrap();
        assert_eq!(r.states, a(&[2, 3]));
        assert_eq!(r.certificate, Certificate::Dp);
        let event = RegimeSpec::ControlEvent {
            controls: Subset::from_indices(2, [0]).unwrap(),
        };
        let r = resilient_states(&m, 0, &event, StrategyClass::Markov, &limits).unwrap();
        assert_eq!(r.states, Subset::full(4));
        assert_eq!(r.certificate, Certificate::Exhaustive);
        let sv = RegimeSpec::StochasticViability { set: a(&[2, 3]), beta: 1.0 };
        let r = resilient_states(&m, 0, &sv, StrategyClass::Markov, &limits).unwrap();
        assert_eq!(r.states, a(&[2, 3]));
        for (x, w) in &r.witnesses {
            assert!(check_resilient(&m, w, *x, 0, &sv, &limits).unwrap());
        }
    }

    #[test]
    fn exhaustive_cap_recommends_dp() {
        let m = reference_model();
        let limits = Limits {
            strategies: 100,
            ..Limits::default()
        };
        let event = RegimeSpec::ControlEvent {
            controls: Subset::from_indices(2, [0]).unwrap(),
        };
        let err = resilient_states(&m, 0, &event, StrategyClass::Markov, &limits).unwrap_err();
        assert!(matches!(err, Error::Capacity { required: 4096, .. }));
        assert!(err.to_string().contains("dynamic programming"));
    }
}

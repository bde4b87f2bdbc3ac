//! Recovery regimes and the membership test for trajectory bundles.
//!
//! Regimes that speak of probabilities are evaluated over the full scenario
//! set with exact scenario weights. Every other regime is evaluated for all
//! scenarios of the robust set: a bundle built over the full set is filtered
//! down to its robust scenarios.

use std::fmt;

use crate::error::{config, input, Result};
use crate::model::{ScenarioDomain, SystemModel};
use crate::risk::{self, RiskMeasureSpec};
use crate::strategy::{Trajectory, TrajectoryBundle};
use crate::subset::Subset;

/// Slack used when comparing computed probabilities or risk values with a threshold.
pub const PROBABILITY_TOL: f64 = 1e-12;

/// A declarative recovery regime.
#[derive(Debug, Clone, PartialEq)]
pub enum RegimeSpec {
    /// States stay in `set` and controls stay admissible, for every robust scenario.
    Viability { set: Subset },
    /// Recovery time at most `deadline` (an absolute time) for every robust scenario.
    RobustRecovery { set: Subset, deadline: usize },
    /// Probability of viability at least `beta`.
    StochasticViability { set: Subset, beta: f64 },
    /// States stay in `set`, for every robust scenario.
    Bounded { set: Subset },
    /// Probability of ever leaving `set` at most `beta`.
    ProbExcursion { set: Subset, beta: f64 },
    /// At most `k` times spent outside `set`, for every robust scenario.
    AtMostKExits { set: Subset, k: usize },
    /// Within `radius` of `center` over the last `window` times, for every robust scenario.
    Stabilize { center: usize, radius: f64, window: usize },
    /// Some control in `controls` is used, for every robust scenario.
    ControlEvent { controls: Subset },
    /// Risk measure at most `alpha`.
    RiskContainment { measure: RiskMeasureSpec, alpha: f64 },
}

impl RegimeSpec {
    pub fn name(&self) -> &'static str {
        match self {
            RegimeSpec::Viability { .. } => "viability",
            RegimeSpec::RobustRecovery { .. } => "robust_recovery",
            RegimeSpec::StochasticViability { .. } => "stochastic_viability",
            RegimeSpec::Bounded { .. } => "bounded",
            RegimeSpec::ProbExcursion { .. } => "prob_excursion",
            RegimeSpec::AtMostKExits { .. } => "at_most_k_exits",
            RegimeSpec::Stabilize { .. } => "stabilize",
            RegimeSpec::ControlEvent { .. } => "control_event",
            RegimeSpec::RiskContainment { .. } => "risk_containment",
        }
    }

    /// The scenario domain a bundle must cover to decide membership.
    pub fn required_domain(&self) -> ScenarioDomain {
        match self {
            RegimeSpec::StochasticViability { .. } | RegimeSpec::ProbExcursion { .. } => ScenarioDomain::Full,
            RegimeSpec::RiskContainment { measure, .. } => measure.required_domain(),
            _ => ScenarioDomain::Robust,
        }
    }

    /// The acceptable set of the viability family, if this is one of those regimes.
    pub fn acceptable_set(&self) -> Option<&Subset> {
        match self {
            RegimeSpec::Viability { set }
            | RegimeSpec::RobustRecovery { set, .. }
            | RegimeSpec::StochasticViability { set, .. } => Some(set),
            _ => None,
        }
    }

    pub fn validate(&self, model: &SystemModel) -> Result<()> {
        let k = model.horizon();
        let state_set = |s: &Subset| {
            if s.universe() != model.n_states() {
                input(format!(
                    "state subset over {} states, model has {}",
                    s.universe(),
                    model.n_states()
                ))
            } else {
                Ok(())
            }
        };
        let probability = |b: f64| {
            if (0.0..=1.0).contains(&b) {
                Ok(())
            } else {
                input(format!("probability level {b} outside [0, 1]"))
            }
        };
        let needs_probabilities = || {
            if model.has_probabilities() {
                Ok(())
            } else {
                config(format!("regime '{}' requires probabilities", self.name()))
            }
        };
        match self {
            RegimeSpec::Viability { set } | RegimeSpec::Bounded { set } | RegimeSpec::AtMostKExits { set, .. } => {
                state_set(set)
            }
            RegimeSpec::RobustRecovery { set, deadline } => {
                state_set(set)?;
                if *deadline > k {
                    return input(format!("deadline {deadline} beyond horizon {k}"));
                }
                Ok(())
            }
            RegimeSpec::StochasticViability { set, beta } | RegimeSpec::ProbExcursion { set, beta } => {
                state_set(set)?;
                probability(*beta)?;
                needs_probabilities()
            }
            RegimeSpec::Stabilize { center, radius, window } => {
                if *center >= model.n_states() {
                    return input(format!("stabilization center {center} is not a listed state"));
                }
                if !(*radius >= 0.0) || !radius.is_finite() {
                    return input(format!("radius {radius} must be finite and nonnegative"));
                }
                if *window > k {
                    return input(format!("window {window} beyond horizon {k}"));
                }
                Ok(())
            }
            RegimeSpec::ControlEvent { controls } => {
                if controls.universe() != model.n_controls() {
                    return input("control subset has wrong universe");
                }
                if controls.is_empty() {
                    return input("control event set is empty");
                }
                Ok(())
            }
            RegimeSpec::RiskContainment { measure, alpha } => {
                if !alpha.is_finite() {
                    return input(format!("risk level {alpha} must be finite"));
                }
                measure.validate(model)
            }
        }
    }
}

/// A recovery time: an absolute time, or never (`inf ∅ = +∞`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum RecoveryTime {
    At(usize),
    Never,
}

impl RecoveryTime {
    pub fn as_f64(self) -> f64 {
        match self {
            RecoveryTime::At(t) => t as f64,
            RecoveryTime::Never => f64::INFINITY,
        }
    }

    pub fn is_finite(self) -> bool {
        matches!(self, RecoveryTime::At(_))
    }
}

impl fmt::Display for RecoveryTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RecoveryTime::At(t) => write!(f, "{t}"),
            RecoveryTime::Never => write!(f, "inf"),
        }
    }
}

/// Times `s` at which the state is outside `set`, or (when `use_constraints`)
/// the control is inadmissible. At the final time only the state counts.
pub fn exit_times(model: &SystemModel, trajectory: &Trajectory, set: &Subset, use_constraints: bool) -> Vec<usize> {
    (trajectory.start..=trajectory.end())
        .filter(|&s| is_exit(model, trajectory, set, s, use_constraints))
        .collect()
}

#[inline]
fn is_exit(model: &SystemModel, tr: &Trajectory, set: &Subset, s: usize, use_constraints: bool) -> bool {
    let x = tr.state_at(s);
    !set.contains(x) || (use_constraints && s < tr.end() && !model.is_admissible(s, x, tr.control_at(s)))
}

/// Least `r` from which the state stays in `set` and controls stay admissible.
pub fn recovery_time(model: &SystemModel, trajectory: &Trajectory, set: &Subset) -> RecoveryTime {
    let mut r = None;
    for s in (trajectory.start..=trajectory.end()).rev() {
        if is_exit(model, trajectory, set, s, true) {
            break;
        }
        r = Some(s);
    }
    r.map_or(RecoveryTime::Never, RecoveryTime::At)
}

/// Whether the trajectory never exits (states and controls).
pub(crate) fn is_viable(model: &SystemModel, trajectory: &Trajectory, set: &Subset) -> bool {
    (trajectory.start..=trajectory.end()).all(|s| !is_exit(model, trajectory, set, s, true))
}

/// Trajectories of the bundle whose scenario lies in the robust set.
pub(crate) fn robust_part<'a>(
    model: &'a SystemModel,
    bundle: &'a TrajectoryBundle,
) -> impl Iterator<Item = &'a Trajectory> + 'a {
    let filter = bundle.domain == ScenarioDomain::Full && !model.robust_is_full();
    bundle
        .trajectories
        .iter()
        .filter(move |tr| !filter || model.in_robust_set(&tr.scenario))
}

/// Fails unless the bundle covers the full scenario set.
pub(crate) fn require_full(model: &SystemModel, bundle: &TrajectoryBundle) -> Result<()> {
    if bundle.domain == ScenarioDomain::Robust && !model.robust_is_full() {
        return input("probabilistic evaluation needs a bundle over the full scenario set");
    }
    Ok(())
}

/// Trajectories paired with their scenario probabilities, in bundle order.
pub(crate) fn weighted<'a>(model: &SystemModel, bundle: &'a TrajectoryBundle) -> Result<Vec<(&'a Trajectory, f64)>> {
    require_full(model, bundle)?;
    if !model.has_probabilities() {
        return config("no probabilities declared for the uncertainty sets");
    }
    Ok(bundle
        .trajectories
        .iter()
        .map(|tr| (tr, model.scenario_weight(&tr.scenario).unwrap_or(0.0)))
        .collect())
}

/// Decides whether the bundle belongs to the regime.
pub fn regime_membership(model: &SystemModel, regime: &RegimeSpec, bundle: &TrajectoryBundle) -> Result<bool> {
    regime.validate(model)?;
    if regime.required_domain() == ScenarioDomain::Full {
        require_full(model, bundle)?;
    }
    Ok(match regime {
        RegimeSpec::Viability { set } => robust_part(model, bundle).all(|tr| is_viable(model, tr, set)),
        RegimeSpec::RobustRecovery { set, deadline } => {
            robust_part(model, bundle).all(|tr| recovery_time(model, tr, set) <= RecoveryTime::At(*deadline))
        }
        RegimeSpec::StochasticViability { set, beta } => {
            let p: f64 = weighted(model, bundle)?
                .into_iter()
                .filter(|(tr, _)| is_viable(model, tr, set))
                .fold(0.0, |acc, (_, w)| acc + w);
            p >= beta - PROBABILITY_TOL
        }
        RegimeSpec::Bounded { set } => robust_part(model, bundle).all(|tr| tr.states.iter().all(|&x| set.contains(x))),
        RegimeSpec::ProbExcursion { set, beta } => {
            let p: f64 = weighted(model, bundle)?
                .into_iter()
                .filter(|(tr, _)| tr.states.iter().any(|&x| !set.contains(x)))
                .fold(0.0, |acc, (_, w)| acc + w);
            p <= beta + PROBABILITY_TOL
        }
        RegimeSpec::AtMostKExits { set, k } => {
            robust_part(model, bundle).all(|tr| exit_times(model, tr, set, false).len() <= *k)
        }
        RegimeSpec::Stabilize { center, radius, window } => {
            let from = model.horizon() - window;
            robust_part(model, bundle).all(|tr| {
                (tr.start.max(from)..=tr.end())
                    .all(|s| model.state_distance(tr.state_at(s), *center).is_some_and(|d| d <= *radius))
            })
        }
        RegimeSpec::ControlEvent { controls } => robust_part(model, bundle).all(|tr| {
            (tr.start..tr.end()).any(|s| !model.is_cemetery(tr.state_at(s)) && controls.contains(tr.control_at(s)))
        }),
        RegimeSpec::RiskContainment { measure, alpha } => {
            risk::evaluate_risk(model, measure, bundle)? <= alpha + PROBABILITY_TOL
        }
    })
}

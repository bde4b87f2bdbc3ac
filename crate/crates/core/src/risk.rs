//! Extended risk measures over trajectory bundles.
//!
//! A risk measure maps a bundle (a finite random state-control process) to a
//! real number; lower is better. Probabilistic functionals sum scenario
//! weights in bundle order so results are reproducible bit for bit.

use std::cmp::Ordering;

use crate::error::{input, Result};
use crate::model::{validate_assignment, weight_under, ProbabilityAssignment, ScenarioDomain, SystemModel};
use crate::regimes::{self, exit_times, recovery_time, RecoveryTime};
use crate::strategy::{Trajectory, TrajectoryBundle};
use crate::subset::Subset;

/// Default cost charged per time step spent at the cemetery.
pub const CEMETERY_PENALTY: f64 = 1e18;

/// How per-scenario costs are aggregated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Outer {
    Expectation,
    /// Maximum over the robust scenario set.
    WorstCase,
    /// Mean of the worst `alpha`-probability tail.
    Cvar(f64),
}

impl Outer {
    pub fn required_domain(&self) -> ScenarioDomain {
        match self {
            Outer::WorstCase => ScenarioDomain::Robust,
            _ => ScenarioDomain::Full,
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            Outer::Cvar(a) if !(*a > 0.0 && *a <= 1.0) => input(format!("CVaR level {a} outside (0, 1]")),
            _ => Ok(()),
        }
    }
}

/// Per-trajectory cost `Ψ`.
#[derive(Debug, Clone, PartialEq)]
pub enum CostKind {
    /// Number of times with the state outside the set or the control inadmissible.
    TimeOutside(Subset),
    /// Sum of per-control costs; `None` uses each control's first coordinate.
    ControlEffort(Option<Vec<f64>>),
    /// 0 if the final state is in the set, 1 otherwise.
    Terminal(Subset),
    /// `state[s][x]` for `s` in `0..=K` plus `control[s][u]` for `s` in `0..K`.
    Tabular {
        state: Vec<Vec<f64>>,
        control: Vec<Vec<f64>>,
    },
    /// Recovery time minus start time; infinite when the trajectory never recovers.
    /// The cemetery penalty does not apply.
    RecoveryOffset(Subset),
}

#[derive(Debug, Clone, PartialEq)]
pub struct CostFunction {
    pub kind: CostKind,
    pub cemetery_penalty: f64,
}

impl CostFunction {
    pub fn new(kind: CostKind) -> Self {
        CostFunction {
            kind,
            cemetery_penalty: CEMETERY_PENALTY,
        }
    }

    pub fn name(&self) -> &'static str {
        match self.kind {
            CostKind::TimeOutside(_) => "time_outside",
            CostKind::ControlEffort(_) => "control_effort",
            CostKind::Terminal(_) => "terminal",
            CostKind::Tabular { .. } => "tabular",
            CostKind::RecoveryOffset(_) => "recovery_time",
        }
    }

    /// Whether the cost is a sum of per-step terms (so cost dynamic programming applies).
    pub fn is_additive(&self) -> bool {
        !matches!(self.kind, CostKind::RecoveryOffset(_))
    }

    pub fn validate(&self, model: &SystemModel) -> Result<()> {
        let (k, nx, nu) = (model.horizon(), model.n_states(), model.n_controls());
        match &self.kind {
            CostKind::TimeOutside(s) | CostKind::Terminal(s) | CostKind::RecoveryOffset(s) => {
                check_state_subset(model, s)
            }
            CostKind::ControlEffort(Some(c)) if c.len() != nu => {
                input(format!("{} effort costs for {nu} controls", c.len()))
            }
            CostKind::ControlEffort(_) => Ok(()),
            CostKind::Tabular { state, control } => {
                if state.len() != k + 1 || state.iter().any(|r| r.len() != nx) {
                    return input(format!("state cost table must be {} x {nx}", k + 1));
                }
                if control.len() != k || control.iter().any(|r| r.len() != nu) {
                    return input(format!("control cost table must be {k} x {nu}"));
                }
                Ok(())
            }
        }
    }

    /// Cost of one step `(s, x, u)` at a listed state, `s < K`.
    pub(crate) fn stage(&self, model: &SystemModel, s: usize, x: usize, u: usize) -> f64 {
        match &self.kind {
            CostKind::TimeOutside(a) => f64::from(u8::from(!a.contains(x) || !model.is_admissible(s, x, u))),
            CostKind::ControlEffort(costs) => effort(model, costs.as_deref(), u),
            CostKind::Terminal(_) | CostKind::RecoveryOffset(_) => 0.0,
            CostKind::Tabular { state, control } => state[s][x] + control[s][u],
        }
    }

    /// Cost of the final state at a listed state.
    pub(crate) fn terminal(&self, model: &SystemModel, x: usize) -> f64 {
        match &self.kind {
            CostKind::TimeOutside(a) | CostKind::Terminal(a) => f64::from(u8::from(!a.contains(x))),
            CostKind::ControlEffort(_) | CostKind::RecoveryOffset(_) => 0.0,
            CostKind::Tabular { state, .. } => state[model.horizon()][x],
        }
    }
}

fn effort(model: &SystemModel, costs: Option<&[f64]>, u: usize) -> f64 {
    match costs {
        Some(c) => c[u],
        None => model.controls().coords(u)[0],
    }
}

fn check_state_subset(model: &SystemModel, s: &Subset) -> Result<()> {
    if s.universe() != model.n_states() {
        return input(format!(
            "state subset over {} states, model has {}",
            s.universe(),
            model.n_states()
        ));
    }
    Ok(())
}

/// Evaluates `Ψ` on one trajectory. Each time step spent at the cemetery
/// contributes the cemetery penalty instead of its ordinary term.
pub fn evaluate_cost(model: &SystemModel, cost: &CostFunction, trajectory: &Trajectory) -> f64 {
    if let CostKind::RecoveryOffset(set) = &cost.kind {
        return match recovery_time(model, trajectory, set) {
            RecoveryTime::At(r) => (r - trajectory.start) as f64,
            RecoveryTime::Never => f64::INFINITY,
        };
    }
    let end = trajectory.end();
    let mut total = 0.0;
    for s in trajectory.start..=end {
        let x = trajectory.state_at(s);
        if model.is_cemetery(x) {
            total += cost.cemetery_penalty;
        } else if s < end {
            total += cost.stage(model, s, x, trajectory.control_at(s));
        } else {
            total += cost.terminal(model, x);
        }
    }
    total
}

/// Declarative extended risk measure.
#[derive(Debug, Clone, PartialEq)]
pub enum RiskMeasureSpec {
    /// 1 if some robust scenario visits a state outside the set, else 0.
    WorstCaseViolation(Subset),
    /// Probability of ever leaving the set or using an inadmissible control.
    Exceedance(Subset),
    /// Largest exceedance probability over a family of per-time probability assignments.
    AmbiguityExceedance {
        set: Subset,
        family: Vec<ProbabilityAssignment>,
    },
    /// Aggregated count of exit times (states and controls).
    ExitCount { set: Subset, outer: Outer },
    /// Aggregated per-trajectory cost.
    Composed { cost: CostFunction, outer: Outer },
}

impl RiskMeasureSpec {
    pub fn name(&self) -> &'static str {
        match self {
            RiskMeasureSpec::WorstCaseViolation(_) => "worst_case_violation",
            RiskMeasureSpec::Exceedance(_) => "exceedance",
            RiskMeasureSpec::AmbiguityExceedance { .. } => "ambiguity_exceedance",
            RiskMeasureSpec::ExitCount { .. } => "exit_count",
            RiskMeasureSpec::Composed { .. } => "composed",
        }
    }

    pub fn required_domain(&self) -> ScenarioDomain {
        match self {
            RiskMeasureSpec::WorstCaseViolation(_) => ScenarioDomain::Robust,
            RiskMeasureSpec::Exceedance(_) | RiskMeasureSpec::AmbiguityExceedance { .. } => ScenarioDomain::Full,
            RiskMeasureSpec::ExitCount { outer, .. } | RiskMeasureSpec::Composed { outer, .. } => {
                outer.required_domain()
            }
        }
    }

    /// Whether evaluation needs the model's own probabilities.
    pub fn needs_probabilities(&self) -> bool {
        match self {
            RiskMeasureSpec::Exceedance(_) => true,
            RiskMeasureSpec::ExitCount { outer, .. } | RiskMeasureSpec::Composed { outer, .. } => {
                !matches!(outer, Outer::WorstCase)
            }
            _ => false,
        }
    }

    pub fn validate(&self, model: &SystemModel) -> Result<()> {
        match self {
            RiskMeasureSpec::WorstCaseViolation(s) | RiskMeasureSpec::Exceedance(s) => check_state_subset(model, s),
            RiskMeasureSpec::AmbiguityExceedance { set, family } => {
                check_state_subset(model, set)?;
                if family.is_empty() {
                    return input("ambiguity set is empty");
                }
                family
                    .iter()
                    .try_for_each(|p| validate_assignment(model.uncertainty().sets(), p))
            }
            RiskMeasureSpec::ExitCount { set, outer } => {
                check_state_subset(model, set)?;
                outer.validate()
            }
            RiskMeasureSpec::Composed { cost, outer } => {
                cost.validate(model)?;
                outer.validate()
            }
        }
    }
}

/// Conditional value-at-risk of a discrete distribution at tail mass `alpha`.
///
/// `values` holds `(value, probability)` pairs. The result is the mean of the
/// worst `alpha`-probability tail, i.e. `min_η η + E[(Z - η)⁺] / alpha`;
/// `alpha = 1` gives the expectation.
pub fn cvar(values: &[(f64, f64)], alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return input(format!("CVaR level {alpha} outside (0, 1]"));
    }
    if let Some((_, p)) = values.iter().find(|(_, p)| !(*p >= 0.0)) {
        return input(format!("negative probability {p}"));
    }
    let total: f64 = values.iter().map(|(_, p)| p).sum();
    if (total - 1.0).abs() > crate::model::PROBABILITY_SUM_TOL {
        return input(format!("probabilities sum to {total} ≠ 1"));
    }
    let mut sorted: Vec<(f64, f64)> = values.iter().copied().filter(|(_, p)| *p > 0.0).collect();
    sorted.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut remaining = alpha;
    let mut acc = 0.0;
    for (v, p) in sorted {
        if remaining <= 0.0 {
            break;
        }
        let take = p.min(remaining);
        acc += take * v;
        remaining -= take;
    }
    Ok(acc / alpha)
}

fn aggregate(model: &SystemModel, bundle: &TrajectoryBundle, outer: Outer, value: impl Fn(&Trajectory) -> f64) -> Result<f64> {
    match outer {
        Outer::WorstCase => Ok(regimes::robust_part(model, bundle)
            .map(value)
            .max_by(|a, b| a.partial_cmp(b).unwrap_or(Ordering::Equal))
            .unwrap_or(f64::NEG_INFINITY)),
        Outer::Expectation => Ok(regimes::weighted(model, bundle)?
            .into_iter()
            .filter(|(_, w)| *w > 0.0)
            .fold(0.0, |acc, (tr, w)| acc + w * value(tr))),
        Outer::Cvar(alpha) => {
            let pairs: Vec<(f64, f64)> = regimes::weighted(model, bundle)?
                .into_iter()
                .map(|(tr, w)| (value(tr), w))
                .collect();
            cvar(&pairs, alpha)
        }
    }
}

fn exceeds(model: &SystemModel, tr: &Trajectory, set: &Subset) -> bool {
    !regimes::is_viable(model, tr, set)
}

/// Evaluates a risk measure on a bundle.
pub fn evaluate_risk(model: &SystemModel, spec: &RiskMeasureSpec, bundle: &TrajectoryBundle) -> Result<f64> {
    spec.validate(model)?;
    match spec {
        RiskMeasureSpec::WorstCaseViolation(set) => {
            let violated = regimes::robust_part(model, bundle).any(|tr| tr.states.iter().any(|&x| !set.contains(x)));
            Ok(if violated { 1.0 } else { 0.0 })
        }
        RiskMeasureSpec::Exceedance(set) => Ok(regimes::weighted(model, bundle)?
            .into_iter()
            .filter(|(tr, _)| exceeds(model, tr, set))
            .fold(0.0, |acc, (_, w)| acc + w)),
        RiskMeasureSpec::AmbiguityExceedance { set, family } => {
            regimes::require_full(model, bundle)?;
            let bad: Vec<&Trajectory> = bundle.iter().filter(|tr| exceeds(model, tr, set)).collect();
            Ok(family
                .iter()
                .map(|p| bad.iter().fold(0.0, |acc, tr| acc + weight_under(p, &tr.scenario)))
                .fold(f64::NEG_INFINITY, f64::max))
        }
        RiskMeasureSpec::ExitCount { set, outer } => {
            aggregate(model, bundle, *outer, |tr| exit_times(model, tr, set, true).len() as f64)
        }
        RiskMeasureSpec::Composed { cost, outer } => aggregate(model, bundle, *outer, |tr| evaluate_cost(model, cost, tr)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{reference_model, reference_model_benign, Scenario, SCENARIO_CAP};
    use crate::strategy::{build_bundle, Strategy};

    fn a23() -> Subset {
        Subset::from_indices(4, [2, 3]).unwrap()
    }

    fn traj(states: &[usize], controls: &[usize]) -> Trajectory {
        Trajectory {
            start: 0,
            states: states.to_vec(),
            controls: controls.to_vec(),
            scenario: Scenario(vec![0; controls.len()]),
        }
    }

    /// `min_η η + E[(Z - η)⁺] / α`, minimized over the support (the objective
    /// is convex piecewise linear with kinks only there).
    fn cvar_by_minimization(values: &[(f64, f64)], alpha: f64) -> f64 {
        values
            .iter()
            .map(|&(eta, _)| {
                eta + values.iter().map(|&(v, p)| p * (v - eta).max(0.0)).sum::<f64>() / alpha
            })
            .fold(f64::INFINITY, f64::min)
    }

    #[test]
    fn cvar_examples() {
        let vals: Vec<(f64, f64)> = (0..4).map(|i| (i as f64, 0.25)).collect();
        let expected = cvar_by_minimization(&vals, 0.5);
        assert!((expected - 2.5).abs() < 1e-12);
        assert!((cvar(&vals, 0.5).unwrap() - expected).abs() < 1e-12);
        assert!((cvar(&vals, 1.0).unwrap() - 1.5).abs() < 1e-12);
        let constant = [(4.25, 0.3), (4.25, 0.7)];
        for a in [0.01, 0.3, 1.0] {
            assert!((cvar(&constant, a).unwrap() - 4.25).abs() < 1e-12);
        }
        assert!(cvar(&vals, 0.0).is_err());
        assert!(cvar(&vals, 1.5).is_err());
        assert!(cvar(&[(1.0, 0.5)], 0.5).is_err());
    }

    #[test]
    fn cost_examples() {
        let m = reference_model();
        let outside = CostFunction::new(CostKind::TimeOutside(a23()));
        assert_eq!(evaluate_cost(&m, &outside, &traj(&[0, 1, 2, 3], &[1, 1, 1])), 2.0);
        let effort = CostFunction::new(CostKind::ControlEffort(None));
        assert_eq!(evaluate_cost(&m, &effort, &traj(&[0, 1, 2, 3], &[1, 1, 0])), 2.0);
        let terminal = CostFunction::new(CostKind::Terminal(a23()));
        assert_eq!(evaluate_cost(&m, &terminal, &traj(&[0, 1, 2, 3], &[1, 1, 1])), 0.0);
        assert_eq!(evaluate_cost(&m, &terminal, &traj(&[3, 2, 1, 1], &[0, 0, 0])), 1.0);
        let mut dead = CostFunction::new(CostKind::ControlEffort(None));
        dead.cemetery_penalty = 100.0;
        let c = m.cemetery();
        assert_eq!(evaluate_cost(&m, &dead, &traj(&[1, c, c, c], &[1, 0, 0])), 301.0);
        let rec = CostFunction::new(CostKind::RecoveryOffset(a23()));
        assert_eq!(evaluate_cost(&m, &rec, &traj(&[0, 1, 2, 3], &[1, 1, 1])), 2.0);
        assert_eq!(evaluate_cost(&m, &rec, &traj(&[0, 1, 0, 1], &[1, 0, 1])), f64::INFINITY);
    }

    #[test]
    fn risk_examples() {
        let m = reference_model();
        let rest = build_bundle(&m, &Strategy::constant(&m, 0), 2, 0, ScenarioDomain::Full, SCENARIO_CAP).unwrap();
        let up = build_bundle(&m, &Strategy::constant(&m, 1), 2, 0, ScenarioDomain::Full, SCENARIO_CAP).unwrap();
        let wc = RiskMeasureSpec::WorstCaseViolation(a23());
        assert_eq!(evaluate_risk(&m, &wc, &up).unwrap(), 0.0);
        assert_eq!(evaluate_risk(&m, &wc, &rest).unwrap(), 1.0);
        let exc = RiskMeasureSpec::Exceedance(a23());
        assert!((evaluate_risk(&m, &exc, &rest).unwrap() - 0.875).abs() < 1e-12);
        let amb = RiskMeasureSpec::AmbiguityExceedance {
            set: a23(),
            family: vec![vec![vec![0.5, 0.5]; 3]],
        };
        assert_eq!(evaluate_risk(&m, &amb, &rest).unwrap(), evaluate_risk(&m, &exc, &rest).unwrap());
    }

    #[test]
    fn worst_case_respects_robust_subset() {
        let m = reference_model_benign();
        let rest = build_bundle(&m, &Strategy::constant(&m, 0), 2, 0, ScenarioDomain::Full, SCENARIO_CAP).unwrap();
        // only (0,0,0) is a shock to withstand, and resting at 2 survives it
        let wc = RiskMeasureSpec::WorstCaseViolation(a23());
        assert_eq!(evaluate_risk(&m, &wc, &rest).unwrap(), 0.0);
    }

    #[test]
    fn exit_count_expectation_from_zero() {
        // oracle: enumerate the 8 scenarios by hand for u ≡ 1 from 0
        let m = reference_model();
        let up = build_bundle(&m, &Strategy::constant(&m, 1), 0, 0, ScenarioDomain::Full, SCENARIO_CAP).unwrap();
        let mut expected = 0.0;
        for bits in 0..8u32 {
            let ws = [(bits >> 2) & 1, (bits >> 1) & 1, bits & 1];
            let mut x = 0i64;
            let mut count = u32::from(x < 2);
            for w in ws {
                x = (x + 1 - i64::from(w)).clamp(0, 3);
                count += u32::from(x < 2);
            }
            expected += f64::from(count) / 8.0;
        }
        let spec = RiskMeasureSpec::ExitCount {
            set: a23(),
            outer: Outer::Expectation,
        };
        assert!((evaluate_risk(&m, &spec, &up).unwrap() - expected).abs() < 1e-12);
        assert!((expected - 3.25).abs() < 1e-12);
    }
}

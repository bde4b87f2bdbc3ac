//! Finite discrete-time controlled systems under uncertainty.
//!
//! States, controls and uncertainties are finite labelled sets. A state index
//! equal to [`SystemModel::cemetery`] is the absorbing cemetery point: every
//! transition out of it, and every transition driven by a control outside the
//! constraint set, lands there.

use std::collections::{BTreeMap, BTreeSet};
use std::ops::RangeInclusive;

use crate::error::{input, Error, Result};
use crate::subset::Subset;

/// Default cap on the number of enumerated scenarios.
pub const SCENARIO_CAP: usize = 1 << 20;

/// Tolerance for probability vectors summing to one.
pub const PROBABILITY_SUM_TOL: f64 = 1e-9;

/// Time indices `0..=K`; states live on all of them, controls on `0..K`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TimeGrid {
    horizon: usize,
}

impl TimeGrid {
    pub fn new(horizon: usize) -> Result<Self> {
        if horizon == 0 {
            return input("horizon must be at least 1");
        }
        Ok(TimeGrid { horizon })
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// The integer segment `s..=t` (empty when `s > t`).
    pub fn segment(&self, s: usize, t: usize) -> RangeInclusive<usize> {
        s..=t
    }
}

/// Labelled points with numeric coordinates. Used for both states and controls.
#[derive(Debug, Clone, PartialEq)]
pub struct PointSet {
    labels: Vec<String>,
    coords: Vec<Vec<f64>>,
}

pub type StateSpace = PointSet;
pub type ControlSpace = PointSet;

impl PointSet {
    pub fn new(labels: Vec<String>, coords: Vec<Vec<f64>>) -> Result<Self> {
        if labels.len() != coords.len() {
            return input(format!(
                "{} labels but {} coordinate vectors",
                labels.len(),
                coords.len()
            ));
        }
        let mut seen = BTreeSet::new();
        for l in &labels {
            if !seen.insert(l.as_str()) {
                return input(format!("duplicate label '{l}'"));
            }
        }
        if let Some(first) = coords.first() {
            if first.is_empty() {
                return input("coordinate vectors must have dimension at least 1");
            }
            if let Some((i, _)) = coords.iter().enumerate().find(|(_, c)| c.len() != first.len()) {
                return input(format!(
                    "point '{}' has dimension {} but expected {}",
                    labels[i],
                    coords[i].len(),
                    first.len()
                ));
            }
        }
        Ok(PointSet { labels, coords })
    }

    /// Points labelled `0..n` whose single coordinate equals the label.
    pub fn integer_line(n: usize) -> Self {
        PointSet {
            labels: (0..n).map(|i| i.to_string()).collect(),
            coords: (0..n).map(|i| vec![i as f64]).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn label(&self, i: usize) -> &str {
        &self.labels[i]
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn coords(&self, i: usize) -> &[f64] {
        &self.coords[i]
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }
}

/// A sequence of uncertainty indices `(w_0, ..., w_{K-1})`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Scenario(pub Vec<usize>);

impl Scenario {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn at(&self, t: usize) -> usize {
        self.0[t]
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }
}

/// Which scenarios an enumeration (or a trajectory bundle) ranges over.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScenarioDomain {
    /// The full product of uncertainty sets.
    Full,
    /// The robust subset (shocks the system must withstand).
    Robust,
}

/// Per-time probability vectors, one per uncertainty set.
pub type ProbabilityAssignment = Vec<Vec<f64>>;

/// Per-time uncertainty sets plus optional probabilistic and robust structure.
#[derive(Debug, Clone, PartialEq)]
pub struct UncertaintyStructure {
    sets: Vec<Vec<String>>,
    probabilities: Option<ProbabilityAssignment>,
    robust: Option<Vec<Subset>>,
    robust_scenarios: Option<Vec<Scenario>>,
    joint: Option<BTreeMap<Scenario, f64>>,
}

impl UncertaintyStructure {
    pub fn new(sets: Vec<Vec<String>>) -> Self {
        UncertaintyStructure {
            sets,
            probabilities: None,
            robust: None,
            robust_scenarios: None,
            joint: None,
        }
    }

    /// The same labelled set at every one of `horizon` times.
    pub fn stationary(horizon: usize, labels: &[&str]) -> Self {
        let set: Vec<String> = labels.iter().map(|s| s.to_string()).collect();
        Self::new(vec![set; horizon])
    }

    pub fn with_probabilities(mut self, p: ProbabilityAssignment) -> Self {
        self.probabilities = Some(p);
        self
    }

    /// Robust subsets given per time; the robust scenario set is their product.
    pub fn with_robust(mut self, robust: Vec<Subset>) -> Self {
        self.robust = Some(robust);
        self
    }

    /// An explicit robust scenario list; takes precedence over per-time subsets.
    pub fn with_robust_scenarios(mut self, scenarios: Vec<Scenario>) -> Self {
        let mut s = scenarios;
        s.sort();
        s.dedup();
        self.robust_scenarios = Some(s);
        self
    }

    /// An explicit joint distribution over scenarios; takes precedence over the
    /// per-time vectors for probability evaluation.
    pub fn with_joint(mut self, joint: Vec<(Scenario, f64)>) -> Self {
        self.joint = Some(joint.into_iter().collect());
        self
    }

    pub fn without_probabilities(mut self) -> Self {
        self.probabilities = None;
        self.joint = None;
        self
    }

    pub fn without_robust(mut self) -> Self {
        self.robust = None;
        self.robust_scenarios = None;
        self
    }

    pub fn sets(&self) -> &[Vec<String>] {
        &self.sets
    }

    pub fn probabilities(&self) -> Option<&ProbabilityAssignment> {
        self.probabilities.as_ref()
    }

    pub fn robust(&self) -> Option<&[Subset]> {
        self.robust.as_deref()
    }

    pub fn robust_scenarios(&self) -> Option<&[Scenario]> {
        self.robust_scenarios.as_deref()
    }

    pub fn joint(&self) -> Option<&BTreeMap<Scenario, f64>> {
        self.joint.as_ref()
    }

    fn validate(&self, horizon: usize) -> Result<()> {
        if self.sets.len() != horizon {
            return input(format!(
                "{} uncertainty sets declared for horizon {horizon}",
                self.sets.len()
            ));
        }
        for (t, set) in self.sets.iter().enumerate() {
            if set.is_empty() {
                return input(format!("uncertainty set at time {t} is empty"));
            }
            let distinct: BTreeSet<&String> = set.iter().collect();
            if distinct.len() != set.len() {
                return input(format!("duplicate uncertainty label at time {t}"));
            }
        }
        if let Some(p) = &self.probabilities {
            validate_assignment(&self.sets, p)?;
        }
        if let Some(robust) = &self.robust {
            if robust.len() != horizon {
                return input(format!("{} robust subsets for horizon {horizon}", robust.len()));
            }
            for (t, r) in robust.iter().enumerate() {
                if r.universe() != self.sets[t].len() {
                    return input(format!("robust subset at time {t} has wrong universe"));
                }
                if r.is_empty() {
                    return input(format!("robust subset at time {t} is empty"));
                }
            }
        }
        if let Some(list) = &self.robust_scenarios {
            if list.is_empty() {
                return input("explicit robust scenario list is empty");
            }
            for s in list {
                self.check_scenario(s)?;
            }
        }
        if let Some(joint) = &self.joint {
            let mut sum = 0.0;
            for (s, &p) in joint {
                self.check_scenario(s)?;
                if !(p >= 0.0) {
                    return input(format!("negative joint probability {p}"));
                }
                sum += p;
            }
            if (sum - 1.0).abs() > PROBABILITY_SUM_TOL {
                return input(format!("probabilities sum to {sum} ≠ 1 in joint distribution"));
            }
        }
        Ok(())
    }

    fn check_scenario(&self, s: &Scenario) -> Result<()> {
        if s.len() != self.sets.len() {
            return input(format!(
                "scenario of length {} for horizon {}",
                s.len(),
                self.sets.len()
            ));
        }
        for (t, &w) in s.0.iter().enumerate() {
            if w >= self.sets[t].len() {
                return input(format!("uncertainty index {w} out of range at time {t}"));
            }
        }
        Ok(())
    }
}

/// Checks a per-time probability assignment against the uncertainty sets.
pub fn validate_assignment(sets: &[Vec<String>], p: &ProbabilityAssignment) -> Result<()> {
    if p.len() != sets.len() {
        return input(format!("{} probability vectors for {} times", p.len(), sets.len()));
    }
    for (t, (pt, set)) in p.iter().zip(sets).enumerate() {
        if pt.len() != set.len() {
            return input(format!(
                "probability vector at time {t} has {} entries, uncertainty set has {}",
                pt.len(),
                set.len()
            ));
        }
        if let Some(bad) = pt.iter().find(|v| !(**v >= 0.0)) {
            return input(format!("negative probability {bad} at time {t}"));
        }
        let sum: f64 = pt.iter().sum();
        if (sum - 1.0).abs() > PROBABILITY_SUM_TOL {
            return input(format!("probabilities sum to {sum} ≠ 1 at time {t}"));
        }
    }
    Ok(())
}

/// The finite controlled system: spaces, dynamics table and control constraints.
///
/// Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemModel {
    time: TimeGrid,
    states: StateSpace,
    controls: ControlSpace,
    uncertainty: UncertaintyStructure,
    // [t][x][u][w] flattened; block for time t starts at offsets[t].
    table: Vec<usize>,
    offsets: Vec<usize>,
    constraints: Vec<Vec<Subset>>,
}

impl SystemModel {
    /// Builds and validates a model.
    ///
    /// `dynamics[t][x][u][w]` is the successor state (the cemetery index
    /// `states.len()` is allowed); `constraints[t][x]` is the admissible
    /// control set, a subset of the control space that must be nonempty.
    pub fn new(
        time: TimeGrid,
        states: StateSpace,
        controls: ControlSpace,
        uncertainty: UncertaintyStructure,
        dynamics: Vec<Vec<Vec<Vec<usize>>>>,
        constraints: Vec<Vec<Subset>>,
    ) -> Result<Self> {
        let k = time.horizon();
        let nx = states.len();
        let nu = controls.len();
        if nx == 0 {
            return input("state space is empty");
        }
        if nu == 0 {
            return input("control space is empty");
        }
        uncertainty.validate(k)?;
        if dynamics.len() != k {
            return input(format!("dynamics has {} time blocks, expected {k}", dynamics.len()));
        }
        let mut table = Vec::new();
        let mut offsets = Vec::with_capacity(k);
        for (t, block) in dynamics.iter().enumerate() {
            offsets.push(table.len());
            let nw = uncertainty.sets[t].len();
            if block.len() != nx {
                return input(format!("dynamics not total at time {t}: {} state rows", block.len()));
            }
            for (x, row) in block.iter().enumerate() {
                if row.len() != nu {
                    return input(format!("dynamics not total at (t={t}, x={x})"));
                }
                for (u, cell) in row.iter().enumerate() {
                    if cell.len() != nw {
                        return input(format!("dynamics not total at (t={t}, x={x}, u={u})"));
                    }
                    for (w, &y) in cell.iter().enumerate() {
                        if y > nx {
                            return input(format!(
                                "dynamics image {y} out of range at (t={t}, x={x}, u={u}, w={w})"
                            ));
                        }
                        table.push(y);
                    }
                }
            }
        }
        if constraints.len() != k {
            return input(format!("constraints have {} time blocks, expected {k}", constraints.len()));
        }
        for (t, block) in constraints.iter().enumerate() {
            if block.len() != nx {
                return input(format!("constraints at time {t} cover {} states", block.len()));
            }
            for (x, allowed) in block.iter().enumerate() {
                if allowed.universe() != nu {
                    return input(format!("constraint set at (t={t}, x={x}) has wrong universe"));
                }
                if allowed.is_empty() {
                    return input(format!("constraint set at (t={t}, x={x}) is empty"));
                }
            }
        }
        Ok(SystemModel {
            time,
            states,
            controls,
            uncertainty,
            table,
            offsets,
            constraints,
        })
    }

    /// Same dynamics and constraints with a replaced uncertainty structure.
    /// The uncertainty sets themselves must keep their sizes.
    pub fn with_uncertainty(&self, uncertainty: UncertaintyStructure) -> Result<Self> {
        uncertainty.validate(self.horizon())?;
        if (0..self.horizon()).any(|t| uncertainty.sets[t].len() != self.n_noise(t)) {
            return input("replacement uncertainty sets change sizes");
        }
        Ok(SystemModel {
            uncertainty,
            ..self.clone()
        })
    }

    /// Builds a model from closures. `allowed(t, x)` lists admissible controls.
    pub fn from_fn<F, C>(
        time: TimeGrid,
        states: StateSpace,
        controls: ControlSpace,
        uncertainty: UncertaintyStructure,
        dynamics: F,
        allowed: C,
    ) -> Result<Self>
    where
        F: Fn(usize, usize, usize, usize) -> usize,
        C: Fn(usize, usize) -> Vec<usize>,
    {
        let k = time.horizon();
        let (nx, nu) = (states.len(), controls.len());
        if uncertainty.sets.len() != k {
            return input(format!(
                "{} uncertainty sets declared for horizon {k}",
                uncertainty.sets.len()
            ));
        }
        let table = (0..k)
            .map(|t| {
                let nw = uncertainty.sets[t].len();
                (0..nx)
                    .map(|x| (0..nu).map(|u| (0..nw).map(|w| dynamics(t, x, u, w)).collect()).collect())
                    .collect()
            })
            .collect();
        let mut constraints = Vec::with_capacity(k);
        for t in 0..k {
            let mut block = Vec::with_capacity(nx);
            for x in 0..nx {
                let set = Subset::from_indices(nu, allowed(t, x)).ok_or_else(|| {
                    Error::Input(format!("constraint at (t={t}, x={x}) names an unknown control"))
                })?;
                block.push(set);
            }
            constraints.push(block);
        }
        Self::new(time, states, controls, uncertainty, table, constraints)
    }

    pub fn time(&self) -> TimeGrid {
        self.time
    }

    pub fn horizon(&self) -> usize {
        self.time.horizon()
    }

    pub fn states(&self) -> &StateSpace {
        &self.states
    }

    pub fn controls(&self) -> &ControlSpace {
        &self.controls
    }

    pub fn uncertainty(&self) -> &UncertaintyStructure {
        &self.uncertainty
    }

    pub fn n_states(&self) -> usize {
        self.states.len()
    }

    pub fn n_controls(&self) -> usize {
        self.controls.len()
    }

    pub fn n_noise(&self, t: usize) -> usize {
        self.uncertainty.sets[t].len()
    }

    /// Index of the cemetery point, one past the last listed state.
    pub fn cemetery(&self) -> usize {
        self.states.len()
    }

    pub fn is_cemetery(&self, x: usize) -> bool {
        x == self.cemetery()
    }

    /// The raw dynamics entry `F_t(x, u, w)`, ignoring constraints.
    pub fn dynamics(&self, t: usize, x: usize, u: usize, w: usize) -> usize {
        let nu = self.n_controls();
        let nw = self.n_noise(t);
        self.table[self.offsets[t] + (x * nu + u) * nw + w]
    }

    /// Admissible controls `U_t(x)`.
    pub fn constraint_set(&self, t: usize, x: usize) -> &Subset {
        &self.constraints[t][x]
    }

    /// Whether `u` is admissible at `(t, x)`. Never true at the cemetery.
    #[inline]
    pub fn is_admissible(&self, t: usize, x: usize, u: usize) -> bool {
        x < self.n_states() && self.constraints[t][x].contains(u)
    }

    /// One transition with the cemetery rules applied. Indices must be valid.
    #[inline]
    pub fn next_state(&self, t: usize, x: usize, u: usize, w: usize) -> usize {
        debug_assert!(t < self.horizon() && x <= self.cemetery());
        if x == self.cemetery() || !self.constraints[t][x].contains(u) {
            return self.cemetery();
        }
        self.dynamics(t, x, u, w)
    }

    /// One transition, with index validation.
    pub fn step(&self, t: usize, x: usize, u: usize, w: usize) -> Result<usize> {
        if t >= self.horizon() {
            return input(format!("time {t} out of range 0..{}", self.horizon()));
        }
        if x > self.cemetery() {
            return input(format!("state index {x} out of range"));
        }
        if u >= self.n_controls() {
            return input(format!("control index {u} out of range"));
        }
        if w >= self.n_noise(t) {
            return input(format!("uncertainty index {w} out of range at time {t}"));
        }
        Ok(self.next_state(t, x, u, w))
    }

    /// Open-loop flow from `(s, x)` under a tail control path.
    ///
    /// Returns the states at times `s..=s + controls.len()`, starting with `x`.
    pub fn flow(&self, s: usize, x: usize, controls: &[usize], scenario: &Scenario) -> Result<Vec<usize>> {
        self.check_scenario(scenario)?;
        let t = s + controls.len();
        if t > self.horizon() {
            return input(format!(
                "control path of length {} from time {s} overruns horizon {}",
                controls.len(),
                self.horizon()
            ));
        }
        if x > self.cemetery() {
            return input(format!("state index {x} out of range"));
        }
        let mut path = Vec::with_capacity(controls.len() + 1);
        path.push(x);
        let mut cur = x;
        for (r, &u) in (s..t).zip(controls) {
            cur = self.step(r, cur, u, scenario.at(r))?;
            path.push(cur);
        }
        Ok(path)
    }

    pub fn check_scenario(&self, s: &Scenario) -> Result<()> {
        self.uncertainty.check_scenario(s)
    }

    /// Number of scenarios in a domain, computed without enumeration.
    pub fn scenario_count(&self, domain: ScenarioDomain) -> u128 {
        match (domain, &self.uncertainty.robust_scenarios) {
            (ScenarioDomain::Robust, Some(list)) => list.len() as u128,
            (ScenarioDomain::Robust, None) => (0..self.horizon())
                .map(|t| self.robust_noise(t).len() as u128)
                .product(),
            (ScenarioDomain::Full, _) => (0..self.horizon()).map(|t| self.n_noise(t) as u128).product(),
        }
    }

    /// Scenarios of a domain in lexicographic order.
    pub fn enumerate_scenarios(&self, domain: ScenarioDomain, cap: usize) -> Result<Vec<Scenario>> {
        let required = self.scenario_count(domain);
        if required > cap as u128 {
            return Err(Error::Capacity {
                what: "scenario enumeration".into(),
                required,
                cap: cap as u128,
            });
        }
        if let (ScenarioDomain::Robust, Some(list)) = (domain, &self.uncertainty.robust_scenarios) {
            return Ok(list.clone());
        }
        let choices: Vec<Vec<usize>> = (0..self.horizon())
            .map(|t| match domain {
                ScenarioDomain::Full => (0..self.n_noise(t)).collect(),
                ScenarioDomain::Robust => self.robust_noise(t).to_vec(),
            })
            .collect();
        let mut out = Vec::with_capacity(required as usize);
        let mut digits = vec![0usize; choices.len()];
        loop {
            out.push(Scenario(digits.iter().zip(&choices).map(|(&d, c)| c[d]).collect()));
            // odometer, last time fastest
            let mut pos = choices.len();
            loop {
                if pos == 0 {
                    return Ok(out);
                }
                pos -= 1;
                digits[pos] += 1;
                if digits[pos] < choices[pos].len() {
                    break;
                }
                digits[pos] = 0;
            }
        }
    }

    /// Robust uncertainty subset at time `t` (the full set when none declared).
    ///
    /// Meaningless for an explicit robust scenario list; see [`Self::robust_is_product`].
    pub fn robust_noise(&self, t: usize) -> Subset {
        match &self.uncertainty.robust {
            Some(r) => r[t].clone(),
            None => Subset::full(self.n_noise(t)),
        }
    }

    /// True unless the robust set is given as an explicit scenario list.
    pub fn robust_is_product(&self) -> bool {
        self.uncertainty.robust_scenarios.is_none()
    }

    /// Whether the robust scenario set is all of the sample set.
    pub fn robust_is_full(&self) -> bool {
        self.scenario_count(ScenarioDomain::Robust) == self.scenario_count(ScenarioDomain::Full)
    }

    pub fn in_robust_set(&self, s: &Scenario) -> bool {
        match &self.uncertainty.robust_scenarios {
            Some(list) => list.binary_search(s).is_ok(),
            None => match &self.uncertainty.robust {
                Some(r) => s.0.iter().zip(r).all(|(&w, set)| set.contains(w)),
                None => true,
            },
        }
    }

    pub fn has_probabilities(&self) -> bool {
        self.uncertainty.probabilities.is_some() || self.uncertainty.joint.is_some()
    }

    /// Per-time probabilities usable by stochastic dynamic programming; `None`
    /// when absent or overridden by a joint distribution.
    pub fn product_probabilities(&self) -> Option<&ProbabilityAssignment> {
        if self.uncertainty.joint.is_some() {
            None
        } else {
            self.uncertainty.probabilities.as_ref()
        }
    }

    /// Probability of a scenario, or `None` when no probabilities are declared.
    pub fn scenario_weight(&self, s: &Scenario) -> Option<f64> {
        if let Some(joint) = &self.uncertainty.joint {
            return Some(joint.get(s).copied().unwrap_or(0.0));
        }
        self.uncertainty
            .probabilities
            .as_ref()
            .map(|p| weight_under(p, s))
    }

    pub fn state_index(&self, label: &str) -> Option<usize> {
        self.states.index_of(label)
    }

    pub fn control_index(&self, label: &str) -> Option<usize> {
        self.controls.index_of(label)
    }

    pub fn noise_index(&self, t: usize, label: &str) -> Option<usize> {
        self.uncertainty.sets[t].iter().position(|l| l == label)
    }

    /// Label of a state index, with `∂` for the cemetery.
    pub fn state_label(&self, x: usize) -> &str {
        if x == self.cemetery() {
            "∂"
        } else {
            self.states.label(x)
        }
    }

    /// Euclidean distance between two listed states; `None` if either is the cemetery.
    pub fn state_distance(&self, a: usize, b: usize) -> Option<f64> {
        if a >= self.n_states() || b >= self.n_states() {
            return None;
        }
        let d2: f64 = self
            .states
            .coords(a)
            .iter()
            .zip(self.states.coords(b))
            .map(|(p, q)| (p - q) * (p - q))
            .sum();
        Some(d2.sqrt())
    }
}

/// Product weight `∏ p_t(w_t)` of a scenario.
pub fn weight_under(p: &ProbabilityAssignment, s: &Scenario) -> f64 {
    s.0.iter().enumerate().map(|(t, &w)| p[t][w]).product()
}

/// The reference fixture: four states on a line, push up or rest, one unit of
/// downward noise with probability one half, acceptable set `{2, 3}`.
pub fn reference_model() -> SystemModel {
    let k = 3;
    SystemModel::from_fn(
        TimeGrid::new(k).expect("positive horizon"),
        PointSet::integer_line(4),
        PointSet::integer_line(2),
        UncertaintyStructure::stationary(k, &["0", "1"]).with_probabilities(vec![vec![0.5, 0.5]; k]),
        |_, x, u, w| (x + u).saturating_sub(w).min(3),
        |_, _| vec![0, 1],
    )
    .expect("reference model is valid")
}

/// The reference fixture with the robust subset restricted to noise `0` at every time.
pub fn reference_model_benign() -> SystemModel {
    let m = reference_model();
    let robust = vec![Subset::from_indices(2, [0]).expect("index in range"); m.horizon()];
    m.with_uncertainty(m.uncertainty.clone().with_robust(robust))
        .expect("robust subset is valid")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn restricted(allowed: Vec<usize>) -> SystemModel {
        SystemModel::from_fn(
            TimeGrid::new(3).unwrap(),
            PointSet::integer_line(4),
            PointSet::integer_line(2),
            UncertaintyStructure::stationary(3, &["0", "1"]),
            |_, x, u, w| (x + u).saturating_sub(w).min(3),
            move |_, _| allowed.clone(),
        )
        .unwrap()
    }

    #[test]
    fn step_examples() {
        let m = reference_model();
        assert_eq!(m.step(0, 2, 1, 1).unwrap(), 2);
        let dead = m.cemetery();
        for u in 0..2 {
            for w in 0..2 {
                assert_eq!(m.step(1, dead, u, w).unwrap(), dead);
            }
        }
        let r = restricted(vec![0]);
        assert_eq!(r.step(0, 1, 1, 0).unwrap(), r.cemetery());
        assert_eq!(r.step(0, 1, 0, 0).unwrap(), 1);
    }

    #[test]
    fn step_rejects_bad_indices() {
        let m = reference_model();
        assert!(matches!(m.step(3, 0, 0, 0), Err(Error::Input(_))));
        assert!(matches!(m.step(0, 5, 0, 0), Err(Error::Input(_))));
        assert!(matches!(m.step(0, 0, 2, 0), Err(Error::Input(_))));
        assert!(matches!(m.step(0, 0, 0, 2), Err(Error::Input(_))));
    }

    #[test]
    fn flow_examples() {
        let m = reference_model();
        let up = Scenario(vec![0, 0, 0]);
        assert_eq!(m.flow(0, 0, &[1, 1], &up).unwrap(), vec![0, 1, 2]);
        assert_eq!(m.flow(2, 1, &[], &up).unwrap(), vec![1]);
        let down = Scenario(vec![1, 1, 1]);
        assert_eq!(m.flow(0, 0, &[1, 1, 1], &down).unwrap(), vec![0, 0, 0, 0]);
        assert!(m.flow(2, 0, &[1, 1], &up).is_err());
        assert!(m.flow(0, 0, &[1], &Scenario(vec![0, 0])).is_err());
    }

    #[test]
    fn scenario_enumeration() {
        let m = reference_model();
        let all = m.enumerate_scenarios(ScenarioDomain::Full, SCENARIO_CAP).unwrap();
        assert_eq!(all.len(), 8);
        assert_eq!(all[0], Scenario(vec![0, 0, 0]));
        assert_eq!(all[1], Scenario(vec![0, 0, 1]));
        assert_eq!(all[7], Scenario(vec![1, 1, 1]));
        let b = reference_model_benign();
        assert_eq!(
            b.enumerate_scenarios(ScenarioDomain::Robust, SCENARIO_CAP).unwrap(),
            vec![Scenario(vec![0, 0, 0])]
        );
        let one = SystemModel::from_fn(
            TimeGrid::new(1).unwrap(),
            PointSet::integer_line(1),
            PointSet::integer_line(1),
            UncertaintyStructure::stationary(1, &["a", "b", "c"]),
            |_, _, _, _| 0,
            |_, _| vec![0],
        )
        .unwrap();
        assert_eq!(one.enumerate_scenarios(ScenarioDomain::Full, SCENARIO_CAP).unwrap().len(), 3);
    }

    #[test]
    fn scenario_cap_is_enforced() {
        let m = reference_model();
        match m.enumerate_scenarios(ScenarioDomain::Full, 7) {
            Err(Error::Capacity { required, .. }) => assert_eq!(required, 8),
            other => panic!("expected capacity error, got {other:?}"),
        }
    }

    #[test]
    fn validation_errors() {
        assert!(TimeGrid::new(0).is_err());
        assert!(PointSet::new(vec!["a".into(), "a".into()], vec![vec![0.0], vec![1.0]]).is_err());
        assert!(PointSet::new(vec!["a".into(), "b".into()], vec![vec![0.0], vec![1.0, 2.0]]).is_err());
        let bad_probs = SystemModel::from_fn(
            TimeGrid::new(1).unwrap(),
            PointSet::integer_line(2),
            PointSet::integer_line(1),
            UncertaintyStructure::stationary(1, &["a", "b"]).with_probabilities(vec![vec![0.5, 0.6]]),
            |_, x, _, _| x,
            |_, _| vec![0],
        );
        assert!(matches!(bad_probs, Err(Error::Input(m)) if m.contains("sum to")));
        let empty_constraint = SystemModel::from_fn(
            TimeGrid::new(1).unwrap(),
            PointSet::integer_line(2),
            PointSet::integer_line(1),
            UncertaintyStructure::stationary(1, &["a"]),
            |_, x, _, _| x,
            |_, _| vec![],
        );
        assert!(empty_constraint.is_err());
        let bad_image = SystemModel::from_fn(
            TimeGrid::new(1).unwrap(),
            PointSet::integer_line(2),
            PointSet::integer_line(1),
            UncertaintyStructure::stationary(1, &["a"]),
            |_, _, _, _| 3,
            |_, _| vec![0],
        );
        assert!(bad_image.is_err());
    }

    #[test]
    fn weights_and_robust_membership() {
        let m = reference_model_benign();
        assert_eq!(m.scenario_weight(&Scenario(vec![0, 1, 0])), Some(0.125));
        assert!(m.in_robust_set(&Scenario(vec![0, 0, 0])));
        assert!(!m.in_robust_set(&Scenario(vec![0, 1, 0])));
        assert!(!m.robust_is_full());
        assert!(reference_model().robust_is_full());
    }
}

//! Policies, strategies and the closed-loop flow.

use rayon::prelude::*;

use crate::error::{input, Result};
use crate::model::{Scenario, ScenarioDomain, SystemModel};

/// Decision rule at one time.
///
/// Adapted tables are indexed by `x * n_prefixes + rank`, where `rank` is the
/// lexicographic rank of the uncertainty prefix `w_0..w_{t-1}` (first entry
/// most significant). Both kinds return control 0 at the cemetery.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Policy {
    Markov(Vec<usize>),
    Adapted(Vec<usize>),
}

impl Policy {
    pub fn is_markov(&self) -> bool {
        matches!(self, Policy::Markov(_))
    }

    pub fn table(&self) -> &[usize] {
        match self {
            Policy::Markov(t) | Policy::Adapted(t) => t,
        }
    }
}

/// Number of uncertainty prefixes `w_0..w_{t-1}` (1 at `t = 0`).
pub fn prefix_count(model: &SystemModel, t: usize) -> u128 {
    (0..t).map(|r| model.n_noise(r) as u128).product()
}

/// Lexicographic rank of the prefix of `scenario` of length `t`.
pub fn prefix_rank(model: &SystemModel, scenario: &[usize], t: usize) -> usize {
    (0..t).fold(0, |acc, r| acc * model.n_noise(r) + scenario[r])
}

/// Decodes a prefix rank back into uncertainty indices.
pub fn prefix_from_rank(model: &SystemModel, t: usize, mut rank: usize) -> Vec<usize> {
    let mut out = vec![0; t];
    for r in (0..t).rev() {
        let n = model.n_noise(r);
        out[r] = rank % n;
        rank /= n;
    }
    out
}

/// One policy per time `0..K`. Kinds may mix across time.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Strategy {
    policies: Vec<Policy>,
}

impl Strategy {
    pub fn new(policies: Vec<Policy>) -> Self {
        Strategy { policies }
    }

    /// Markovian strategy from per-time tables `state -> control`.
    pub fn markov(tables: Vec<Vec<usize>>) -> Self {
        Strategy {
            policies: tables.into_iter().map(Policy::Markov).collect(),
        }
    }

    /// Applies control `u` everywhere.
    pub fn constant(model: &SystemModel, u: usize) -> Self {
        Strategy::markov(vec![vec![u; model.n_states()]; model.horizon()])
    }

    pub fn policies(&self) -> &[Policy] {
        &self.policies
    }

    pub fn policy(&self, t: usize) -> &Policy {
        &self.policies[t]
    }

    pub fn is_markov(&self) -> bool {
        self.policies.iter().all(Policy::is_markov)
    }

    /// Checks that the strategy has the right shape for `model`.
    pub fn validate(&self, model: &SystemModel) -> Result<()> {
        if self.policies.len() != model.horizon() {
            return input(format!(
                "strategy has {} policies, horizon is {}",
                self.policies.len(),
                model.horizon()
            ));
        }
        let nx = model.n_states();
        for (t, p) in self.policies.iter().enumerate() {
            let expected = match p {
                Policy::Markov(_) => nx as u128,
                Policy::Adapted(_) => nx as u128 * prefix_count(model, t),
            };
            if p.table().len() as u128 != expected {
                return input(format!(
                    "policy at time {t} has {} entries, expected {expected}",
                    p.table().len()
                ));
            }
            if let Some(u) = p.table().iter().find(|&&u| u >= model.n_controls()) {
                return input(format!("policy at time {t} names control index {u}"));
            }
        }
        Ok(())
    }

    /// The control prescribed at `(t, x)` given the prefix rank.
    #[inline]
    pub fn control(&self, model: &SystemModel, t: usize, x: usize, rank: usize) -> usize {
        if x >= model.n_states() {
            return 0;
        }
        match &self.policies[t] {
            Policy::Markov(table) => table[x],
            Policy::Adapted(table) => {
                let n = table.len() / model.n_states();
                table[x * n + rank]
            }
        }
    }

    /// Same strategy with every policy before `start` replaced by control 0.
    pub fn with_zeroed_past(&self, start: usize) -> Strategy {
        let policies = self
            .policies
            .iter()
            .enumerate()
            .map(|(t, p)| {
                if t >= start {
                    p.clone()
                } else {
                    match p {
                        Policy::Markov(v) => Policy::Markov(vec![0; v.len()]),
                        Policy::Adapted(v) => Policy::Adapted(vec![0; v.len()]),
                    }
                }
            })
            .collect();
        Strategy { policies }
    }
}

/// True when every prescribed control at every listed state (and prefix) is admissible.
pub fn is_admissible(model: &SystemModel, strategy: &Strategy) -> Result<bool> {
    strategy.validate(model)?;
    let nx = model.n_states();
    Ok(strategy.policies.iter().enumerate().all(|(t, p)| match p {
        Policy::Markov(table) => (0..nx).all(|x| model.is_admissible(t, x, table[x])),
        Policy::Adapted(table) => {
            let n = table.len() / nx;
            (0..nx).all(|x| table[x * n..(x + 1) * n].iter().all(|&u| model.is_admissible(t, x, u)))
        }
    }))
}

/// State and control paths from a start time, with the scenario that drove them.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trajectory {
    pub start: usize,
    /// States at `start..=K`.
    pub states: Vec<usize>,
    /// Controls at `start..K`.
    pub controls: Vec<usize>,
    pub scenario: Scenario,
}

impl Trajectory {
    pub fn end(&self) -> usize {
        self.start + self.controls.len()
    }

    pub fn state_at(&self, s: usize) -> usize {
        self.states[s - self.start]
    }

    pub fn control_at(&self, s: usize) -> usize {
        self.controls[s - self.start]
    }

    /// Replays the step recursion and reports whether every state matches.
    pub fn is_consistent(&self, model: &SystemModel) -> bool {
        self.states.len() == self.controls.len() + 1
            && (0..self.controls.len()).all(|i| {
                let s = self.start + i;
                model.next_state(s, self.states[i], self.controls[i], self.scenario.at(s)) == self.states[i + 1]
            })
    }
}

/// Closed-loop simulation without shape checks. `x0` may be any index up to
/// and including the cemetery.
pub(crate) fn simulate_unchecked(
    model: &SystemModel,
    strategy: &Strategy,
    start: usize,
    x0: usize,
    scenario: &Scenario,
) -> Trajectory {
    let k = model.horizon();
    let mut states = Vec::with_capacity(k - start + 1);
    let mut controls = Vec::with_capacity(k - start);
    let mut rank = prefix_rank(model, scenario.as_slice(), start);
    let mut x = x0;
    states.push(x);
    for t in start..k {
        let u = strategy.control(model, t, x, rank);
        let w = scenario.at(t);
        x = model.next_state(t, x, u, w);
        rank = rank * model.n_noise(t) + w;
        controls.push(u);
        states.push(x);
    }
    Trajectory {
        start,
        states,
        controls,
        scenario: scenario.clone(),
    }
}

/// Closed-loop trajectory from `(start, x0)` along one scenario.
pub fn simulate(
    model: &SystemModel,
    strategy: &Strategy,
    start: usize,
    x0: usize,
    scenario: &Scenario,
) -> Result<Trajectory> {
    strategy.validate(model)?;
    model.check_scenario(scenario)?;
    check_start(model, start, x0)?;
    Ok(simulate_unchecked(model, strategy, start, x0, scenario))
}

/// Closed-loop trajectory from time 0.
pub fn simulate_closed_loop(
    model: &SystemModel,
    strategy: &Strategy,
    x0: usize,
    scenario: &Scenario,
) -> Result<Trajectory> {
    simulate(model, strategy, 0, x0, scenario)
}

fn check_start(model: &SystemModel, start: usize, x0: usize) -> Result<()> {
    if start > model.horizon() {
        return input(format!("start time {start} beyond horizon {}", model.horizon()));
    }
    if x0 >= model.n_states() {
        return input(format!("initial state index {x0} is not a listed state"));
    }
    Ok(())
}

/// All closed-loop trajectories from `(start, x0)` over a scenario domain,
/// in scenario rank order.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryBundle {
    pub start: usize,
    pub initial: usize,
    pub domain: ScenarioDomain,
    pub trajectories: Vec<Trajectory>,
}

impl TrajectoryBundle {
    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Trajectory> {
        self.trajectories.iter()
    }
}

/// Builds the bundle induced by a strategy. Trajectories are computed in
/// parallel; their order is the scenario enumeration order.
pub fn build_bundle(
    model: &SystemModel,
    strategy: &Strategy,
    x0: usize,
    start: usize,
    domain: ScenarioDomain,
    scenario_cap: usize,
) -> Result<TrajectoryBundle> {
    strategy.validate(model)?;
    check_start(model, start, x0)?;
    let scenarios = model.enumerate_scenarios(domain, scenario_cap)?;
    let trajectories = scenarios
        .par_iter()
        .map(|s| simulate_unchecked(model, strategy, start, x0, s))
        .collect();
    Ok(TrajectoryBundle {
        start,
        initial: x0,
        domain,
        trajectories,
    })
}

/// Sequential bundle construction over pre-enumerated scenarios.
pub(crate) fn bundle_over(
    model: &SystemModel,
    strategy: &Strategy,
    x0: usize,
    start: usize,
    domain: ScenarioDomain,
    scenarios: &[Scenario],
) -> TrajectoryBundle {
    TrajectoryBundle {
        start,
        initial: x0,
        domain,
        trajectories: scenarios
            .iter()
            .map(|s| simulate_unchecked(model, strategy, start, x0, s))
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{reference_model, reference_model_benign, PointSet, TimeGrid, UncertaintyStructure, SCENARIO_CAP};

    fn parity_adapted(model: &SystemModel) -> Strategy {
        let policies = (0..model.horizon())
            .map(|t| {
                let n = prefix_count(model, t) as usize;
                let mut table = vec![0; model.n_states() * n];
                for x in 0..model.n_states() {
                    for r in 0..n {
                        let prefix = prefix_from_rank(model, t, r);
                        table[x * n + r] = prefix.iter().sum::<usize>() % 2;
                    }
                }
                Policy::Adapted(table)
            })
            .collect();
        Strategy::new(policies)
    }

    #[test]
    fn admissibility() {
        let m = reference_model();
        assert!(is_admissible(&m, &Strategy::constant(&m, 1)).unwrap());
        assert!(is_admissible(&m, &parity_adapted(&m)).unwrap());
        let r = SystemModel::from_fn(
            TimeGrid::new(2).unwrap(),
            PointSet::integer_line(3),
            PointSet::integer_line(2),
            UncertaintyStructure::stationary(2, &["0"]),
            |_, x, _, _| x,
            |_, _| vec![0],
        )
        .unwrap();
        assert!(!is_admissible(&r, &Strategy::constant(&r, 1)).unwrap());
        assert!(is_admissible(&r, &Strategy::constant(&r, 0)).unwrap());
        assert!(is_admissible(&m, &Strategy::markov(vec![vec![0; 4]; 2])).is_err());
    }

    #[test]
    fn closed_loop_examples() {
        let m = reference_model();
        let up = Strategy::constant(&m, 1);
        let rest = Strategy::constant(&m, 0);
        let t = simulate_closed_loop(&m, &up, 0, &Scenario(vec![0, 0, 0])).unwrap();
        assert_eq!(t.states, vec![0, 1, 2, 3]);
        assert_eq!(t.controls, vec![1, 1, 1]);
        let t = simulate_closed_loop(&m, &up, 0, &Scenario(vec![1, 1, 1])).unwrap();
        assert_eq!(t.states, vec![0, 0, 0, 0]);
        let t = simulate_closed_loop(&m, &rest, 2, &Scenario(vec![1, 0, 0])).unwrap();
        assert_eq!(t.states, vec![2, 1, 1, 1]);
        assert!(t.is_consistent(&m));
        assert!(simulate_closed_loop(&m, &rest, m.cemetery(), &Scenario(vec![0, 0, 0])).is_err());
    }

    #[test]
    fn bundle_examples() {
        let m = reference_model();
        let up = Strategy::constant(&m, 1);
        let b = build_bundle(&m, &up, 2, 0, ScenarioDomain::Full, SCENARIO_CAP).unwrap();
        assert_eq!(b.len(), 8);
        assert!(b.iter().all(|tr| tr.states.iter().all(|&x| x == 2 || x == 3)));
        let benign = reference_model_benign();
        let b = build_bundle(&benign, &up, 2, 0, ScenarioDomain::Robust, SCENARIO_CAP).unwrap();
        assert_eq!(b.len(), 1);
        let b = build_bundle(&m, &up, 1, 3, ScenarioDomain::Full, SCENARIO_CAP).unwrap();
        assert!(b.iter().all(|tr| tr.states == vec![1] && tr.controls.is_empty()));
    }

    #[test]
    fn prefix_rank_round_trip() {
        let m = reference_model();
        for t in 0..=m.horizon() {
            for r in 0..prefix_count(&m, t) as usize {
                let p = prefix_from_rank(&m, t, r);
                assert_eq!(prefix_rank(&m, &p, t), r);
            }
        }
    }

    #[test]
    fn cemetery_trajectory_stays_dead() {
        let r = SystemModel::from_fn(
            TimeGrid::new(3).unwrap(),
            PointSet::integer_line(2),
            PointSet::integer_line(2),
            UncertaintyStructure::stationary(3, &["0"]),
            |_, x, _, _| x,
            |_, _| vec![0],
        )
        .unwrap();
        let t = simulate_closed_loop(&r, &Strategy::constant(&r, 1), 0, &Scenario(vec![0, 0, 0])).unwrap();
        assert_eq!(t.states, vec![0, 2, 2, 2]);
        assert_eq!(t.controls, vec![1, 0, 0]);
    }
}

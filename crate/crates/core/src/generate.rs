//! Random small models for randomized testing.

use rand::Rng;

use crate::model::{PointSet, SystemModel, TimeGrid, UncertaintyStructure};
use crate::oracle::StrategyClass;
use crate::strategy::{prefix_count, Policy, Strategy};
use crate::subset::Subset;

/// Size bounds and shape of generated models. Every bound is inclusive and at least 1.
#[derive(Debug, Clone, PartialEq)]
pub struct RandomModelConfig {
    pub max_states: usize,
    pub max_controls: usize,
    pub max_noise: usize,
    pub max_horizon: usize,
    pub probabilities: bool,
    /// Draw a random nonempty robust subset per time (otherwise Ω̄ = Ω).
    pub robust_subsets: bool,
    /// Chance that a transition is undefined and falls to the cemetery.
    pub cemetery_prob: f64,
    /// Chance that a control is dropped from a constraint set.
    pub constraint_prob: f64,
}

impl Default for RandomModelConfig {
    fn default() -> Self {
        RandomModelConfig {
            max_states: 5,
            max_controls: 2,
            max_noise: 2,
            max_horizon: 3,
            probabilities: true,
            robust_subsets: false,
            cemetery_prob: 0.05,
            constraint_prob: 0.1,
        }
    }
}

/// Each element independently with probability `p`.
pub fn random_subset<R: Rng + ?Sized>(rng: &mut R, universe: usize, p: f64) -> Subset {
    Subset::from_mask((0..universe).map(|_| rng.gen_bool(p)).collect())
}

fn nonempty_subset<R: Rng + ?Sized>(rng: &mut R, universe: usize, p: f64) -> Subset {
    let mut s = random_subset(rng, universe, p);
    if s.is_empty() {
        s.insert(rng.gen_range(0..universe));
    }
    s
}

/// Random probability vector with every entry positive.
pub fn random_distribution<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| rng.gen_range(0.05..=1.0)).collect();
    let total: f64 = raw.iter().sum();
    raw.iter().map(|v| v / total).collect()
}

pub fn random_model<R: Rng + ?Sized>(rng: &mut R, cfg: &RandomModelConfig) -> SystemModel {
    let k = rng.gen_range(1..=cfg.max_horizon);
    let nx = rng.gen_range(1..=cfg.max_states);
    let nu = rng.gen_range(1..=cfg.max_controls);
    let nw: Vec<usize> = (0..k).map(|_| rng.gen_range(1..=cfg.max_noise)).collect();
    let sets: Vec<Vec<String>> = nw.iter().map(|&n| (0..n).map(|w| w.to_string()).collect()).collect();
    let mut uncertainty = UncertaintyStructure::new(sets);
    if cfg.probabilities {
        uncertainty = uncertainty.with_probabilities(nw.iter().map(|&n| random_distribution(rng, n)).collect());
    }
    if cfg.robust_subsets {
        uncertainty = uncertainty.with_robust(nw.iter().map(|&n| nonempty_subset(rng, n, 0.6)).collect());
    }
    let dynamics = (0..k)
        .map(|t| {
            (0..nx)
                .map(|_| {
                    (0..nu)
                        .map(|_| {
                            (0..nw[t])
                                .map(|_| {
                                    if rng.gen_bool(cfg.cemetery_prob) {
                                        nx
                                    } else {
                                        rng.gen_range(0..nx)
                                    }
                                })
                                .collect()
                        })
                        .collect()
                })
                .collect()
        })
        .collect();
    let constraints = (0..k)
        .map(|_| (0..nx).map(|_| nonempty_subset(rng, nu, 1.0 - cfg.constraint_prob)).collect())
        .collect();
    SystemModel::new(
        TimeGrid::new(k).expect("positive horizon"),
        PointSet::integer_line(nx),
        PointSet::integer_line(nu),
        uncertainty,
        dynamics,
        constraints,
    )
    .expect("generated model is valid")
}

/// A random strategy of the given class; every prescribed control is admissible.
pub fn random_strategy<R: Rng + ?Sized>(rng: &mut R, model: &SystemModel, class: StrategyClass) -> Strategy {
    let nx = model.n_states();
    let policies = (0..model.horizon())
        .map(|t| {
            let n = match class {
                StrategyClass::Markov => 1,
                StrategyClass::Adapted => prefix_count(model, t) as usize,
            };
            let table: Vec<usize> = (0..nx * n)
                .map(|i| {
                    let allowed = model.constraint_set(t, i / n).to_vec();
                    allowed[rng.gen_range(0..allowed.len())]
                })
                .collect();
            match class {
                StrategyClass::Markov => Policy::Markov(table),
                StrategyClass::Adapted => Policy::Adapted(table),
            }
        })
        .collect();
    Strategy::new(policies)
}

/// The same model with probabilities and joint distribution removed.
pub fn strip_probabilities(model: &SystemModel) -> SystemModel {
    model
        .with_uncertainty(model.uncertainty().clone().without_probabilities())
        .expect("same sets")
}

//! Resilience of finite controlled systems under uncertainty.
//!
//! A [`SystemModel`] is a finite-horizon controlled system with an absorbing
//! cemetery state. Strategies (Markov or adapted to past noise) are simulated
//! into trajectory bundles, tested against recovery regimes and scored by
//! risk measures. [`engine`] solves the viability family by dynamic
//! programming; [`oracle`] answers the same questions by exhaustive
//! enumeration.

pub mod engine;
mod error;
pub mod generate;
pub mod model;
pub mod optimize;
pub mod oracle;
pub mod regimes;
pub mod risk;
pub mod strategy;
mod subset;

pub use error::{Error, Result};
pub use model::{
    ControlSpace, PointSet, ProbabilityAssignment, Scenario, ScenarioDomain, StateSpace, SystemModel, TimeGrid,
    UncertaintyStructure,
};
pub use oracle::{Limits, StrategyClass};
pub use regimes::{RecoveryTime, RegimeSpec};
pub use risk::{CostFunction, CostKind, Outer, RiskMeasureSpec};
pub use strategy::{Policy, Strategy, Trajectory, TrajectoryBundle};
pub use subset::Subset;

//! Sample-split iterative estimators for phase retrieval and mixtures of
//! linear regressions, with their deterministic Gordon and population state
//! evolutions and independent Monte-Carlo and auxiliary-loss checks.

pub mod analysis;
pub mod cli;
pub mod error;
pub mod iterates;
pub mod models;
pub mod oracle;
pub mod rng;
pub mod scalarized_ao;
pub mod state_evolution;

pub use error::{Error, Result};
pub use iterates::{AlgorithmKind, AlgorithmSpec, TrajectoryRecord};
pub use models::{Batch, GroundTruth, ModelKind, ModelSpec, WeightFunction};
pub use state_evolution::{ExpandedState, SeKind, SeOperator, StatePoint};

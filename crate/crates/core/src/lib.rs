//! Hybrid additive models `h(x) = h_k(x_k) + gamma + h_a(x)`: a parametric
//! prior plus a learned residual, with sequential, alternate, joint and
//! partial-dependence-based training for static regression and for
//! dynamical systems.

pub mod data;
pub mod config;
pub mod error;
pub mod hybrid;
pub mod metrics;
pub mod nn;
pub mod ode;
pub mod pd;
pub mod problems;
pub mod prior;
pub mod report;
pub mod residual;
pub mod runner;
pub mod schemes;
pub mod trees;

pub use data::{Dataset, Split, TrajectoryDataset};
pub use error::{Error, Result};
pub use hybrid::HybridModel;
pub use prior::{ParametricPrior, PriorForm};
pub use residual::{Predictor, ResidualConfig, ResidualKind, ResidualModel};

//! CART regression trees and the two ensembles built on them.

mod boost;
mod forest;
mod tree;

pub use boost::{fit_gb, BoostConfig, BoostedModel};
pub use forest::{fit_rf, ForestConfig, ForestModel};
pub use tree::{fit_tree, RegressionTree, TreeConfig};

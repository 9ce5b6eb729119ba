//! Training schemes for hybrid models.

pub mod dynamics;
pub mod regression;

pub use dynamics::{DynamicScheme, DynamicSchemeConfig, DynamicOutcome};
pub use regression::{fit_prior, run_static, PriorFitConfig, StaticOutcome, StaticScheme, StaticSchemeConfig};

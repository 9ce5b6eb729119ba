//! TOML experiment configuration.
//!
//! ```toml
//! name = "friedman"
//! problem = "friedman"
//! replicates = 10
//! seed = 0
//! schemes = ["sequential", "alternate", "pd_based", "ha_only", "fk_then_ha"]
//! models = ["mlp", "gb", "rf"]
//! filters = [false, true]
//!
//! [training]
//! mlp_epochs = 2000
//!
//! [static]
//! pd_repeats = 5
//! ```
//!
//! `scale` multiplies trajectory counts and epoch budgets of dynamical
//! problems; static problems always use their stated sizes.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Activation, TrainConfig};
use crate::problems::ProblemId;
use crate::residual::{ResidualConfig, ResidualKind};
use crate::schemes::{DynamicScheme, DynamicSchemeConfig, StaticScheme, StaticSchemeConfig};
use crate::trees::{BoostConfig, ForestConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelId {
    Mlp,
    Gb,
    Rf,
    Convnet,
}

impl ModelId {
    pub fn id(self) -> &'static str {
        match self {
            ModelId::Mlp => "mlp",
            ModelId::Gb => "gb",
            ModelId::Rf => "rf",
            ModelId::Convnet => "convnet",
        }
    }
}

/// Scheme of either family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SchemeId {
    Static(StaticScheme),
    Dynamic(DynamicScheme),
}

impl SchemeId {
    pub fn id(self) -> &'static str {
        match self {
            SchemeId::Static(s) => s.id(),
            SchemeId::Dynamic(s) => s.id(),
        }
    }

    pub fn estimates_prior(self) -> bool {
        match self {
            SchemeId::Static(s) => s.estimates_prior(),
            SchemeId::Dynamic(s) => s.estimates_prior(),
        }
    }
}

/// Optional overrides of the per-problem model defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingOverrides {
    pub mlp_epochs: Option<usize>,
    pub mlp_lr: Option<f64>,
    pub mlp_hidden_layers: Option<usize>,
    pub mlp_width: Option<usize>,
    pub gb_trees: Option<usize>,
    pub gb_depth: Option<usize>,
    pub gb_shrinkage: Option<f64>,
    pub rf_trees: Option<usize>,
    pub rf_min_samples_split: Option<usize>,
    pub conv_layers: Option<usize>,
    pub conv_channels: Option<usize>,
}

/// Optional overrides of the dynamic-scheme defaults (applied before
/// scaling).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DynamicOverrides {
    pub epochs: Option<usize>,
    pub lr: Option<f64>,
    pub batch_size: Option<usize>,
    pub init_epochs: Option<usize>,
    pub pd_block_epochs: Option<usize>,
    pub pd_repeats: Option<usize>,
    pub pd_final_epochs: Option<usize>,
    pub pd_background: Option<usize>,
    pub pd_queries: Option<usize>,
    pub val_every: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub problem: ProblemId,
    #[serde(default = "one")]
    pub replicates: usize,
    /// Master seed; replicate `r` uses `seed + r`.
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "unit")]
    pub scale: f64,
    pub schemes: Vec<String>,
    #[serde(default)]
    pub models: Vec<ModelId>,
    #[serde(default)]
    pub filters: Vec<bool>,
    /// Training-set sizes to sweep (static problems); empty means default.
    #[serde(default)]
    pub train_sizes: Vec<usize>,
    #[serde(default)]
    pub noise_sd: Option<f64>,
    #[serde(default)]
    pub data_dir: Option<PathBuf>,
    /// Adds wall-clock seconds to each record (breaks byte-identical reruns).
    #[serde(default)]
    pub record_timing: bool,
    #[serde(default)]
    pub threads: Option<usize>,
    #[serde(default)]
    pub training: TrainingOverrides,
    #[serde(default, rename = "static")]
    pub static_cfg: StaticSchemeConfig,
    #[serde(default)]
    pub dynamic: DynamicOverrides,
}

fn one() -> usize {
    1
}
fn unit() -> f64 {
    1.0
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut cfg = Self::from_toml(&std::fs::read_to_string(path)?)?;
        if let Some(dir) = &cfg.data_dir {
            if dir.is_relative() {
                cfg.data_dir = path.parent().map(|p| p.join(dir));
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.replicates == 0 {
            return Err(Error::config("replicates must be >= 1"));
        }
        if !(self.scale > 0.0) {
            return Err(Error::config("scale must be positive"));
        }
        if self.schemes.is_empty() {
            return Err(Error::config("at least one scheme is required"));
        }
        self.scheme_ids()?;
        for m in self.model_ids() {
            let ok = match m {
                ModelId::Convnet => self.problem == ProblemId::ReactionDiffusion,
                ModelId::Mlp => self.problem != ProblemId::ReactionDiffusion,
                ModelId::Gb | ModelId::Rf => !self.problem.is_dynamic(),
            };
            if !ok {
                return Err(Error::config(format!("model '{}' is not available for {}", m.id(), self.problem.id())));
            }
        }
        if self.train_sizes.contains(&0) {
            return Err(Error::config("training sizes must be positive"));
        }
        if self.problem.is_dynamic() && !self.train_sizes.is_empty() {
            return Err(Error::config("train_sizes applies to static problems only"));
        }
        Ok(())
    }

    pub fn scheme_ids(&self) -> Result<Vec<SchemeId>> {
        self.schemes
            .iter()
            .map(|s| {
                let v = serde_json::Value::String(s.clone());
                let parsed = if self.problem.is_dynamic() {
                    serde_json::from_value(v).map(SchemeId::Dynamic)
                } else {
                    serde_json::from_value(v).map(SchemeId::Static)
                };
                parsed.map_err(|_| Error::config(format!("unknown scheme '{s}' for {}", self.problem.id())))
            })
            .collect()
    }

    pub fn model_ids(&self) -> Vec<ModelId> {
        if !self.models.is_empty() {
            return self.models.clone();
        }
        match self.problem {
            ProblemId::ReactionDiffusion => vec![ModelId::Convnet],
            _ => vec![ModelId::Mlp],
        }
    }

    pub fn filter_flags(&self) -> Vec<bool> {
        if self.filters.is_empty() {
            vec![false]
        } else {
            self.filters.clone()
        }
    }

    /// Residual learner for a model id on this problem.
    pub fn residual(&self, model: ModelId, filter: Vec<usize>) -> ResidualConfig {
        let t = &self.training;
        let (layers, width, trees_gb, trees_rf) = match self.problem {
            ProblemId::Friedman | ProblemId::CorrFriedman => (2, 15, 700, 500),
            ProblemId::CorrLinear | ProblemId::Overlapping => (2, 10, 400, 500),
            ProblemId::LotkaVolterra | ProblemId::Pendulum | ProblemId::ReactionDiffusion => (2, 64, 0, 0),
            _ => (2, 30, 300, 200),
        };
        let train = TrainConfig::full_batch_adam(t.mlp_epochs.unwrap_or(2000), t.mlp_lr.unwrap_or(0.005));
        let kind = match model {
            ModelId::Mlp => ResidualKind::Mlp {
                hidden_layers: t.mlp_hidden_layers.unwrap_or(layers),
                width: t.mlp_width.unwrap_or(width),
                activation: Activation::Tanh,
            },
            ModelId::Gb => ResidualKind::GradientBoosting(BoostConfig {
                shrinkage: t.gb_shrinkage.unwrap_or(0.3),
                ..BoostConfig::new(t.gb_trees.unwrap_or(trees_gb), t.gb_depth.unwrap_or(2))
            }),
            ModelId::Rf => ResidualKind::RandomForest(ForestConfig::new(t.rf_trees.unwrap_or(trees_rf), t.rf_min_samples_split.unwrap_or(5))),
            ModelId::Convnet => ResidualKind::Conv {
                layers: t.conv_layers.unwrap_or(3),
                hidden_channels: t.conv_channels.unwrap_or(8),
            },
        };
        ResidualConfig::new(kind, train).filtered(filter)
    }

    /// Dynamic scheme settings: problem defaults, then overrides, then the
    /// scale factor on epoch counts.
    pub fn dynamic_cfg(&self) -> DynamicSchemeConfig {
        let mut c = if self.problem == ProblemId::ReactionDiffusion {
            DynamicSchemeConfig::field_system()
        } else {
            DynamicSchemeConfig::small_system()
        };
        let o = &self.dynamic;
        c.epochs = o.epochs.unwrap_or(c.epochs);
        c.lr = o.lr.unwrap_or(c.lr);
        c.batch_size = o.batch_size.unwrap_or(c.batch_size);
        c.init_epochs = o.init_epochs.or(c.init_epochs);
        c.pd_block_epochs = o.pd_block_epochs.unwrap_or(c.pd_block_epochs);
        c.pd_repeats = o.pd_repeats.unwrap_or(c.pd_repeats);
        c.pd_final_epochs = o.pd_final_epochs.unwrap_or(c.pd_final_epochs);
        c.pd_background = o.pd_background.unwrap_or(c.pd_background);
        c.pd_queries = o.pd_queries.unwrap_or(c.pd_queries);
        c.val_every = o.val_every.unwrap_or(c.val_every);
        c.scaled(self.scale)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_parses_with_defaults() {
        let c = ExperimentConfig::from_toml("name = \"x\"\nproblem = \"corr_linear\"\nschemes = [\"sequential\"]\n").unwrap();
        assert_eq!(c.replicates, 1);
        assert_eq!(c.model_ids(), vec![ModelId::Mlp]);
        assert_eq!(c.filter_flags(), vec![false]);
        assert_eq!(c.static_cfg, StaticSchemeConfig::default());
    }

    #[test]
    fn unknown_ids_are_rejected() {
        for text in [
            "name=\"x\"\nproblem=\"nope\"\nschemes=[\"sequential\"]",
            "name=\"x\"\nproblem=\"friedman\"\nschemes=[\"joint\"]",
            "name=\"x\"\nproblem=\"pendulum\"\nschemes=[\"joint\"]\nmodels=[\"gb\"]",
            "name=\"x\"\nproblem=\"friedman\"\nschemes=[\"sequential\"]\nbogus=1",
        ] {
            assert!(ExperimentConfig::from_toml(text).is_err(), "{text}");
        }
    }

    #[test]
    fn scale_shrinks_dynamic_epochs() {
        let c = ExperimentConfig::from_toml("name=\"x\"\nproblem=\"lotka_volterra\"\nschemes=[\"joint\"]\nscale=0.25").unwrap();
        let d = c.dynamic_cfg();
        assert_eq!((d.epochs, d.pd_block_epochs, d.pd_final_epochs), (125, 13, 38));
    }
}

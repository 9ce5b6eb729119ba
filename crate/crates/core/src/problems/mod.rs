//! Benchmark problems: seeded generators, real-data ingestion and export.

pub mod real;
pub mod synthetic;
pub mod systems;

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, TrajectoryDataset};
use crate::error::{Error, Result};
use crate::prior::{ParametricPrior, PriorForm};

pub use real::{load_real, RealDataset, SplitMode};
pub use synthetic::Sizes;

/// Train/validation/test regression data with its prior family and, for
/// simulated problems, the ground-truth prior (offset zero).
#[derive(Debug, Clone)]
pub struct StaticProblem {
    pub id: String,
    pub seed: u64,
    pub train: Dataset,
    pub val: Dataset,
    pub test: Dataset,
    pub init_form: PriorForm,
    pub truth: Option<ParametricPrior>,
    pub notes: Vec<String>,
}

/// Trajectory splits and the ground-truth prior.
#[derive(Debug, Clone)]
pub struct DynamicProblem {
    pub id: String,
    pub seed: u64,
    pub train: TrajectoryDataset,
    pub val: TrajectoryDataset,
    pub test: TrajectoryDataset,
    pub truth: ParametricPrior,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProblemId {
    Friedman,
    CorrFriedman,
    CorrLinear,
    Overlapping,
    LotkaVolterra,
    Pendulum,
    ReactionDiffusion,
    CcppInt,
    CcppExt,
    CcsInt,
    CcsExt,
}

impl ProblemId {
    pub const ALL: [ProblemId; 11] = [
        ProblemId::Friedman,
        ProblemId::CorrFriedman,
        ProblemId::CorrLinear,
        ProblemId::Overlapping,
        ProblemId::LotkaVolterra,
        ProblemId::Pendulum,
        ProblemId::ReactionDiffusion,
        ProblemId::CcppInt,
        ProblemId::CcppExt,
        ProblemId::CcsInt,
        ProblemId::CcsExt,
    ];

    pub fn id(self) -> &'static str {
        match self {
            ProblemId::Friedman => "friedman",
            ProblemId::CorrFriedman => "corr_friedman",
            ProblemId::CorrLinear => "corr_linear",
            ProblemId::Overlapping => "overlapping",
            ProblemId::LotkaVolterra => "lotka_volterra",
            ProblemId::Pendulum => "pendulum",
            ProblemId::ReactionDiffusion => "reaction_diffusion",
            ProblemId::CcppInt => "ccpp_int",
            ProblemId::CcppExt => "ccpp_ext",
            ProblemId::CcsInt => "ccs_int",
            ProblemId::CcsExt => "ccs_ext",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|p| p.id() == s)
            .ok_or_else(|| Error::config(format!("unknown problem id '{s}'")))
    }

    pub fn is_dynamic(self) -> bool {
        matches!(self, ProblemId::LotkaVolterra | ProblemId::Pendulum | ProblemId::ReactionDiffusion)
    }

    pub fn real(self) -> Option<(RealDataset, SplitMode)> {
        match self {
            ProblemId::CcppInt => Some((RealDataset::Ccpp, SplitMode::Int)),
            ProblemId::CcppExt => Some((RealDataset::Ccpp, SplitMode::Ext)),
            ProblemId::CcsInt => Some((RealDataset::Ccs, SplitMode::Int)),
            ProblemId::CcsExt => Some((RealDataset::Ccs, SplitMode::Ext)),
            _ => None,
        }
    }

    /// Default split sizes of the simulated static problems.
    pub fn default_sizes(self) -> Sizes {
        match self {
            ProblemId::Friedman | ProblemId::CorrFriedman => synthetic::FRIEDMAN_SIZES,
            _ => synthetic::SMALL_SIZES,
        }
    }
}

/// Options shared by the generators.
#[derive(Debug, Clone, PartialEq)]
pub struct GenOptions {
    /// Overrides the default split sizes (static problems).
    pub sizes: Option<Sizes>,
    /// Standard deviation of the additive noise (static problems).
    pub noise_sd: Option<f64>,
    /// Trajectory-count multiplier (dynamic problems).
    pub scale: f64,
    /// Directory holding `ccpp.csv` / `ccs.csv`.
    pub data_dir: Option<std::path::PathBuf>,
}

impl Default for GenOptions {
    fn default() -> Self {
        Self {
            sizes: None,
            noise_sd: None,
            scale: 1.0,
            data_dir: None,
        }
    }
}

pub fn static_problem(id: ProblemId, seed: u64, opts: &GenOptions) -> Result<StaticProblem> {
    let sizes = opts.sizes.unwrap_or(id.default_sizes());
    match id {
        ProblemId::Friedman => synthetic::friedman(seed, sizes, None, opts.noise_sd.unwrap_or(1.0)),
        ProblemId::CorrFriedman => synthetic::corr_friedman(seed, sizes, None, opts.noise_sd.unwrap_or(1.0)),
        ProblemId::CorrLinear => synthetic::corr_linear(seed, sizes, opts.noise_sd.unwrap_or(0.5)),
        ProblemId::Overlapping => synthetic::overlapping(seed, sizes, opts.noise_sd.unwrap_or(0.5)),
        other => match other.real() {
            Some((ds, mode)) => {
                let dir = opts
                    .data_dir
                    .as_ref()
                    .ok_or_else(|| Error::config(format!("{} needs a data directory", other.id())))?;
                load_real(&dir.join(ds.file_name()), ds, mode, seed)
            }
            None => Err(Error::config(format!("{} is not a static problem", other.id()))),
        },
    }
}

pub fn dynamic_problem(id: ProblemId, seed: u64, opts: &GenOptions) -> Result<DynamicProblem> {
    match id {
        ProblemId::LotkaVolterra => systems::lotka_volterra(seed, opts.scale),
        ProblemId::Pendulum => systems::pendulum(seed, opts.scale),
        ProblemId::ReactionDiffusion => systems::reaction_diffusion(seed, opts.scale),
        other => Err(Error::config(format!("{} is not a dynamical system", other.id()))),
    }
}

fn write_dataset(path: &Path, data: &Dataset) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<String> = (0..data.n_features()).map(|j| format!("x{j}")).collect();
    header.push("y".into());
    w.write_record(&header)?;
    for (x, y) in data.features().rows().into_iter().zip(data.targets()) {
        let mut rec: Vec<String> = x.iter().map(|v| format!("{v:e}")).collect();
        rec.push(format!("{y:e}"));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
struct TrajectoryManifest {
    problem: String,
    seed: u64,
    dt: f64,
    horizon: usize,
    state_dim: usize,
    grid_shape: Option<(usize, usize)>,
    splits: Vec<(String, usize)>,
    truth: ParametricPrior,
}

#[derive(Debug, Serialize, Deserialize)]
struct StaticManifest {
    problem: String,
    seed: u64,
    known: Vec<usize>,
    truth: Option<ParametricPrior>,
    notes: Vec<String>,
}

/// Writes `train.csv`, `val.csv`, `test.csv` and `manifest.json`.
pub fn export_static(p: &StaticProblem, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_dataset(&dir.join("train.csv"), &p.train)?;
    write_dataset(&dir.join("val.csv"), &p.val)?;
    write_dataset(&dir.join("test.csv"), &p.test)?;
    let m = StaticManifest {
        problem: p.id.clone(),
        seed: p.seed,
        known: p.train.known().to_vec(),
        truth: p.truth.clone(),
        notes: p.notes.clone(),
    };
    fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&m)?)?;
    Ok(())
}

/// Writes one CSV per trajectory (`<split>/<index>.csv`, one state per
/// row) plus `manifest.json`.
pub fn export_dynamic(p: &DynamicProblem, dir: &Path) -> Result<()> {
    let mut splits = Vec::new();
    for (name, data) in [("train", &p.train), ("val", &p.val), ("test", &p.test)] {
        let sub = dir.join(name);
        fs::create_dir_all(&sub)?;
        for (i, tr) in data.trajectories().iter().enumerate() {
            let mut w = csv::Writer::from_path(sub.join(format!("{i:05}.csv")))?;
            w.write_record((0..tr.ncols()).map(|j| format!("s{j}")))?;
            for row in tr.rows() {
                w.write_record(row.iter().map(|v| format!("{v:e}")))?;
            }
            w.flush()?;
        }
        splits.push((name.to_string(), data.len()));
    }
    let m = TrajectoryManifest {
        problem: p.id.clone(),
        seed: p.seed,
        dt: p.train.dt(),
        horizon: p.train.horizon(),
        state_dim: p.train.state_dim(),
        grid_shape: p.train.grid_shape(),
        splits,
        truth: p.truth.clone(),
    };
    fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&m)?)?;
    Ok(())
}

//! Supervised datasets and observed state trajectories.

use ndarray::{s, Array1, Array2, Array3, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

/// Input/output pairs plus the index set of the inputs read by the prior.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Array2<f64>,
    targets: Array1<f64>,
    known: Vec<usize>,
    split: Split,
}

impl Dataset {
    pub fn new(
        features: Array2<f64>,
        targets: Array1<f64>,
        known: Vec<usize>,
        split: Split,
    ) -> Result<Self> {
        let (n, d) = features.dim();
        if n == 0 {
            return Err(Error::Empty("dataset has no rows".into()));
        }
        if targets.len() != n {
            return Err(Error::shape(format!("{n} targets"), targets.len()));
        }
        if known.is_empty() {
            return Err(Error::config("known feature set is empty"));
        }
        if let Some(&bad) = known.iter().find(|&&k| k >= d) {
            return Err(Error::config(format!(
                "known feature index {bad} out of bounds for {d} features"
            )));
        }
        if features.iter().chain(targets.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("dataset contains NaN or Inf".into()));
        }
        Ok(Self {
            features,
            targets,
            known,
            split,
        })
    }

    pub fn features(&self) -> ArrayView2<'_, f64> {
        self.features.view()
    }

    pub fn targets(&self) -> ArrayView1<'_, f64> {
        self.targets.view()
    }

    pub fn known(&self) -> &[usize] {
        &self.known
    }

    pub fn split(&self) -> Split {
        self.split
    }

    pub fn len(&self) -> usize {
        self.features.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn n_features(&self) -> usize {
        self.features.ncols()
    }

    /// Same inputs, new targets.
    pub fn with_targets(&self, targets: Array1<f64>) -> Result<Self> {
        Self::new(
            self.features.clone(),
            targets,
            self.known.clone(),
            self.split,
        )
    }

    pub fn select_rows(&self, rows: &[usize]) -> Result<Self> {
        let features = self.features.select(Axis(0), rows);
        let targets = self.targets.select(Axis(0), rows);
        Self::new(features, targets, self.known.clone(), self.split)
    }

    pub fn with_split(mut self, split: Split) -> Self {
        self.split = split;
        self
    }
}

/// Observed state trajectories sharing a time step and state dimension.
///
/// Each trajectory is a `(T+1) x d` matrix. Field-valued states carry a
/// `grid_shape` and are stored channel-major (`c * H * W + i * W + j`).
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryDataset {
    trajectories: Vec<Array2<f64>>,
    dt: f64,
    grid_shape: Option<(usize, usize)>,
    split: Split,
}

impl TrajectoryDataset {
    pub fn new(
        trajectories: Vec<Array2<f64>>,
        dt: f64,
        grid_shape: Option<(usize, usize)>,
        split: Split,
    ) -> Result<Self> {
        let first = trajectories
            .first()
            .ok_or_else(|| Error::Empty("no trajectories".into()))?;
        let (steps, d) = first.dim();
        if steps < 2 {
            return Err(Error::Precondition("horizon T must be at least 1".into()));
        }
        if !(dt > 0.0) {
            return Err(Error::config("dt must be positive"));
        }
        for tr in &trajectories {
            if tr.dim() != (steps, d) {
                return Err(Error::shape(format!("{steps}x{d}"), format!("{:?}", tr.dim())));
            }
            if tr.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("trajectory contains NaN or Inf".into()));
            }
        }
        if let Some((h, w)) = grid_shape {
            if h * w == 0 || d % (h * w) != 0 {
                return Err(Error::config(format!(
                    "grid {h}x{w} does not divide state dimension {d}"
                )));
            }
        }
        Ok(Self {
            trajectories,
            dt,
            grid_shape,
            split,
        })
    }

    pub fn trajectories(&self) -> &[Array2<f64>] {
        &self.trajectories
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Number of steps T (each trajectory holds T+1 states).
    pub fn horizon(&self) -> usize {
        self.trajectories[0].nrows() - 1
    }

    pub fn state_dim(&self) -> usize {
        self.trajectories[0].ncols()
    }

    pub fn grid_shape(&self) -> Option<(usize, usize)> {
        self.grid_shape
    }

    pub fn channels(&self) -> usize {
        match self.grid_shape {
            Some((h, w)) => self.state_dim() / (h * w),
            None => self.state_dim(),
        }
    }

    pub fn split(&self) -> Split {
        self.split
    }

    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }

    /// Initial states stacked as rows.
    pub fn initial_states(&self) -> Array2<f64> {
        let mut x0 = Array2::zeros((self.len(), self.state_dim()));
        for (mut row, tr) in x0.rows_mut().into_iter().zip(&self.trajectories) {
            row.assign(&tr.row(0));
        }
        x0
    }

    /// Every observed state of every trajectory, stacked as rows.
    pub fn pooled_states(&self) -> Array2<f64> {
        let views: Vec<_> = self.trajectories.iter().map(|t| t.view()).collect();
        ndarray::concatenate(Axis(0), &views).expect("trajectories share width")
    }

    /// Sub-trajectories of `len` states taken every `stride` steps, as a
    /// `(n_windows, len, d)` array.
    pub fn windows(&self, len: usize, stride: usize) -> Result<Array3<f64>> {
        let total = self.horizon() + 1;
        if len < 2 || len > total || stride == 0 {
            return Err(Error::config(format!(
                "window length {len} / stride {stride} invalid for {total} states"
            )));
        }
        let per = (total - len) / stride + 1;
        let d = self.state_dim();
        let mut out = Array3::zeros((per * self.len(), len, d));
        let mut w = 0;
        for tr in &self.trajectories {
            for k in 0..per {
                let start = k * stride;
                out.slice_mut(s![w, .., ..])
                    .assign(&tr.slice(s![start..start + len, ..]));
                w += 1;
            }
        }
        Ok(out)
    }
}

/// Number of windows [`TrajectoryDataset::windows`] yields per trajectory.
pub fn windows_per_trajectory(states: usize, len: usize, stride: usize) -> usize {
    if len > states || stride == 0 {
        0
    } else {
        (states - len) / stride + 1
    }
}

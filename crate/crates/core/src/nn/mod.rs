//! Differentiable models and first-order optimizers.

pub mod checkpoint;
pub mod conv;
pub mod mlp;
pub mod optim;
pub mod train;

use ndarray::{Array2, ArrayView2};
use rand::Rng;
use serde::{Deserialize, Serialize};

pub use conv::{ConvCache, ConvNet, ConvSpec};
pub use mlp::{Activation, Mlp, MlpCache, MlpSpec};
pub use optim::{OptimizerKind, OptimizerState};
pub use train::{fit_regression, mse_grad, FitSummary, TrainConfig};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NetSpec {
    Mlp(MlpSpec),
    Conv(ConvSpec),
}

impl NetSpec {
    pub fn input_dim(&self) -> usize {
        match self {
            NetSpec::Mlp(s) => s.input_dim,
            NetSpec::Conv(s) => s.input_dim(),
        }
    }

    pub fn output_dim(&self) -> usize {
        match self {
            NetSpec::Mlp(s) => s.output_dim,
            NetSpec::Conv(s) => s.output_dim(),
        }
    }
}

/// Either network kind behind one interface.
#[derive(Debug, Clone, PartialEq)]
pub enum Net {
    Mlp(Mlp),
    Conv(ConvNet),
}

#[derive(Debug, Clone)]
pub enum NetCache {
    Mlp(MlpCache),
    Conv(ConvCache),
}

impl Net {
    pub fn new<R: Rng + ?Sized>(spec: NetSpec, rng: &mut R) -> Result<Self> {
        Ok(match spec {
            NetSpec::Mlp(s) => Net::Mlp(Mlp::new(s, rng)?),
            NetSpec::Conv(s) => Net::Conv(ConvNet::new(s, rng)?),
        })
    }

    pub fn zeros(spec: NetSpec) -> Result<Self> {
        Ok(match spec {
            NetSpec::Mlp(s) => Net::Mlp(Mlp::zeros(s)?),
            NetSpec::Conv(s) => Net::Conv(ConvNet::zeros(s)?),
        })
    }

    pub fn spec(&self) -> NetSpec {
        match self {
            Net::Mlp(m) => NetSpec::Mlp(m.spec().clone()),
            Net::Conv(c) => NetSpec::Conv(c.spec().clone()),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.spec().input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.spec().output_dim()
    }

    pub fn params(&self) -> &[f64] {
        match self {
            Net::Mlp(m) => m.params(),
            Net::Conv(c) => c.params(),
        }
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        match self {
            Net::Mlp(m) => m.params_mut(),
            Net::Conv(c) => c.params_mut(),
        }
    }

    pub fn set_params(&mut self, p: &[f64]) {
        self.params_mut().copy_from_slice(p);
    }

    pub fn n_params(&self) -> usize {
        self.params().len()
    }

    pub fn forward(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        match self {
            Net::Mlp(m) => m.forward(x),
            Net::Conv(c) => c.forward(x),
        }
    }

    pub fn forward_cached(&self, x: ArrayView2<'_, f64>) -> Result<(Array2<f64>, NetCache)> {
        Ok(match self {
            Net::Mlp(m) => {
                let (o, c) = m.forward_cached(x)?;
                (o, NetCache::Mlp(c))
            }
            Net::Conv(n) => {
                let (o, c) = n.forward_cached(x)?;
                (o, NetCache::Conv(c))
            }
        })
    }

    /// Accumulates parameter gradients into `grad` (if given) and returns
    /// the gradient with respect to the input.
    pub fn backward(&self, cache: &NetCache, g_out: ArrayView2<'_, f64>, grad: Option<&mut [f64]>) -> Array2<f64> {
        match (self, cache) {
            (Net::Mlp(m), NetCache::Mlp(c)) => m.backward(c, g_out, grad),
            (Net::Conv(n), NetCache::Conv(c)) => n.backward(c, g_out, grad),
            _ => panic!("cache does not belong to this network kind"),
        }
    }

    pub(crate) fn check_out(&self, y: &ArrayView2<'_, f64>) -> Result<()> {
        if y.ncols() != self.output_dim() {
            return Err(Error::shape(format!("{} target columns", self.output_dim()), y.ncols()));
        }
        Ok(())
    }
}

//! One interface over every learner usable as the residual term `h_a`.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::train::run_epoch;
use crate::nn::{fit_regression, Activation, ConvSpec, MlpSpec, Net, NetSpec, OptimizerState, TrainConfig};
use crate::trees::{fit_gb, fit_rf, BoostConfig, BoostedModel, ForestConfig, ForestModel};

/// Anything that maps input rows to output rows.
pub trait Predictor {
    fn n_inputs(&self) -> usize;
    fn n_outputs(&self) -> usize;
    fn predict(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>>;
    /// Input columns the predictor is blind to.
    fn excluded_inputs(&self) -> Vec<usize> {
        Vec::new()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ResidualKind {
    Mlp {
        hidden_layers: usize,
        width: usize,
        #[serde(default = "tanh")]
        activation: Activation,
    },
    /// Circular 3x3 conv net on the state grid.
    Conv { layers: usize, hidden_channels: usize },
    RandomForest(ForestConfig),
    GradientBoosting(BoostConfig),
    /// Predicts zero and never trains.
    Zero,
}

fn tanh() -> Activation {
    Activation::Tanh
}

impl ResidualKind {
    pub fn id(&self) -> &'static str {
        match self {
            ResidualKind::Mlp { .. } => "mlp",
            ResidualKind::Conv { .. } => "convnet",
            ResidualKind::RandomForest(_) => "random_forest",
            ResidualKind::GradientBoosting(_) => "gradient_boosting",
            ResidualKind::Zero => "zero",
        }
    }

    pub fn is_differentiable(&self) -> bool {
        matches!(self, ResidualKind::Mlp { .. } | ResidualKind::Conv { .. } | ResidualKind::Zero)
    }

    pub fn is_net(&self) -> bool {
        matches!(self, ResidualKind::Mlp { .. } | ResidualKind::Conv { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualConfig {
    pub kind: ResidualKind,
    /// Input columns hidden from the model.
    #[serde(default)]
    pub input_filter: Vec<usize>,
    /// Optimizer settings for neural kinds; ignored by trees.
    pub train: TrainConfig,
}

impl ResidualConfig {
    pub fn new(kind: ResidualKind, train: TrainConfig) -> Self {
        Self {
            kind,
            input_filter: Vec::new(),
            train,
        }
    }

    pub fn filtered(mut self, exclude: Vec<usize>) -> Self {
        self.input_filter = exclude;
        self
    }
}

#[derive(Debug, Clone)]
enum Inner {
    Net(Net),
    Forest(Option<ForestModel>),
    Boosted(Option<BoostedModel>),
    Zero,
}

/// A residual learner plus the columns it is allowed to see.
#[derive(Debug, Clone)]
pub struct ResidualModel {
    cfg: ResidualConfig,
    in_dim: usize,
    out_dim: usize,
    keep: Vec<usize>,
    seed: u64,
    fits: u64,
    inner: Inner,
    /// Optimizer carried across single-epoch updates.
    step_opt: Option<OptimizerState>,
}

impl ResidualModel {
    /// `grid` is required for conv nets: `(channels, height, width)`.
    pub fn new(cfg: ResidualConfig, in_dim: usize, out_dim: usize, grid: Option<(usize, usize, usize)>, seed: u64) -> Result<Self> {
        if let Some(&bad) = cfg.input_filter.iter().find(|&&i| i >= in_dim) {
            return Err(Error::config(format!("filtered column {bad} out of range for {in_dim} inputs")));
        }
        let keep: Vec<usize> = (0..in_dim).filter(|i| !cfg.input_filter.contains(i)).collect();
        if keep.is_empty() && !matches!(cfg.kind, ResidualKind::Zero) {
            return Err(Error::config("input filter removes every column"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inner = match &cfg.kind {
            ResidualKind::Mlp {
                hidden_layers,
                width,
                activation,
            } => {
                let mut spec = MlpSpec::new(keep.len(), *hidden_layers, *width, out_dim);
                spec.activation = *activation;
                Inner::Net(Net::new(NetSpec::Mlp(spec), &mut rng)?)
            }
            ResidualKind::Conv { layers, hidden_channels } => {
                if !cfg.input_filter.is_empty() {
                    return Err(Error::config("conv residuals cannot filter inputs"));
                }
                let (c, h, w) = grid.ok_or_else(|| Error::config("conv residual needs a grid shape"))?;
                if c * h * w != in_dim || in_dim != out_dim {
                    return Err(Error::config("conv residual must map the grid onto itself"));
                }
                let spec = ConvSpec::new(c, *layers, *hidden_channels, c, h, w);
                Inner::Net(Net::new(NetSpec::Conv(spec), &mut rng)?)
            }
            ResidualKind::RandomForest(_) | ResidualKind::GradientBoosting(_) if out_dim != 1 => {
                return Err(Error::config("tree residuals are scalar-output only"));
            }
            ResidualKind::RandomForest(_) => Inner::Forest(None),
            ResidualKind::GradientBoosting(_) => Inner::Boosted(None),
            ResidualKind::Zero => Inner::Zero,
        };
        Ok(Self {
            cfg,
            in_dim,
            out_dim,
            keep,
            seed,
            fits: 0,
            inner,
            step_opt: None,
        })
    }

    pub fn config(&self) -> &ResidualConfig {
        &self.cfg
    }

    pub fn kind(&self) -> &ResidualKind {
        &self.cfg.kind
    }

    pub fn input_filter(&self) -> &[usize] {
        &self.cfg.input_filter
    }

    pub fn is_differentiable(&self) -> bool {
        self.cfg.kind.is_differentiable()
    }

    pub fn net(&self) -> Option<&Net> {
        match &self.inner {
            Inner::Net(n) => Some(n),
            _ => None,
        }
    }

    pub fn net_mut(&mut self) -> Option<&mut Net> {
        match &mut self.inner {
            Inner::Net(n) => Some(n),
            _ => None,
        }
    }

    /// Trainable parameters of neural kinds (empty otherwise).
    pub fn params(&self) -> Vec<f64> {
        self.net().map_or_else(Vec::new, |n| n.params().to_vec())
    }

    /// Columns of `x` the model actually reads.
    pub fn visible(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        if self.keep.len() == self.in_dim {
            x.to_owned()
        } else {
            x.select(Axis(1), &self.keep)
        }
    }

    /// Scatters a gradient with respect to visible columns back to all columns.
    pub fn scatter_input_grad(&self, g: Array2<f64>) -> Array2<f64> {
        if self.keep.len() == self.in_dim {
            return g;
        }
        let mut out = Array2::zeros((g.nrows(), self.in_dim));
        for (j, &k) in self.keep.iter().enumerate() {
            out.column_mut(k).assign(&g.column(j));
        }
        out
    }

    fn check(&self, x: &ArrayView2<'_, f64>) -> Result<()> {
        if x.ncols() != self.in_dim {
            return Err(Error::config(format!("residual expects {} inputs, got {}", self.in_dim, x.ncols())));
        }
        Ok(())
    }

    fn next_seed(&mut self) -> u64 {
        self.fits += 1;
        self.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(self.fits)
    }

    /// Complete fit on `(x, y)`. Nets warm-start from their current
    /// parameters with a fresh optimizer and keep the best validation epoch.
    pub fn fit(&mut self, x: ArrayView2<'_, f64>, y: ArrayView2<'_, f64>, val: Option<(ArrayView2<'_, f64>, ArrayView2<'_, f64>)>) -> Result<()> {
        self.check(&x)?;
        let seed = self.next_seed();
        let xv = self.visible(x);
        let val_vis = val.map(|(vx, vy)| (self.visible(vx), vy));
        let val_view = val_vis.as_ref().map(|(vx, vy)| (vx.view(), *vy));
        match &mut self.inner {
            Inner::Net(net) => {
                let cfg = TrainConfig { seed, ..self.cfg.train.clone() };
                fit_regression(net, xv.view(), y, val_view, &cfg)?;
            }
            Inner::Forest(slot) => {
                let ResidualKind::RandomForest(c) = self.cfg.kind else { unreachable!() };
                *slot = Some(fit_rf(xv.view(), y.column(0), c, seed)?);
            }
            Inner::Boosted(slot) => {
                let ResidualKind::GradientBoosting(c) = self.cfg.kind else { unreachable!() };
                let v = val_view.filter(|_| c.early_stopping).map(|(vx, vy)| (vx, vy.index_axis_move(Axis(1), 0)));
                *slot = Some(fit_gb(xv.view(), y.column(0), c, v, seed)?);
            }
            Inner::Zero => {}
        }
        self.step_opt = None;
        Ok(())
    }

    /// Scalar-target convenience wrapper around [`fit`](Self::fit).
    pub fn fit_vec(&mut self, x: ArrayView2<'_, f64>, y: ArrayView1<'_, f64>, val: Option<(ArrayView2<'_, f64>, ArrayView1<'_, f64>)>) -> Result<()> {
        let y2 = y.insert_axis(Axis(1));
        let v2 = val.map(|(vx, vy)| (vx, vy.insert_axis(Axis(1))));
        self.fit(x, y2, v2)
    }

    /// One epoch for nets (optimizer state persists between calls), a
    /// complete refit for trees.
    pub fn step(&mut self, x: ArrayView2<'_, f64>, y: ArrayView1<'_, f64>) -> Result<()> {
        if !self.cfg.kind.is_net() {
            return self.fit_vec(x, y, None);
        }
        self.check(&x)?;
        let xv = self.visible(x);
        let y2 = y.insert_axis(Axis(1));
        let seed = self.next_seed();
        let train = self.cfg.train.clone();
        let Inner::Net(net) = &mut self.inner else { unreachable!() };
        let opt = self
            .step_opt
            .get_or_insert_with(|| OptimizerState::new(train.optimizer, train.lr, net.n_params()));
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        run_epoch(net, opt, xv.view(), y2, train.batch_size, &mut rng)?;
        Ok(())
    }

    pub fn predict_vec(&self, x: ArrayView2<'_, f64>) -> Result<Array1<f64>> {
        Ok(self.predict(x)?.column(0).to_owned())
    }
}

impl Predictor for ResidualModel {
    fn n_inputs(&self) -> usize {
        self.in_dim
    }

    fn n_outputs(&self) -> usize {
        self.out_dim
    }

    fn predict(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        self.check(&x)?;
        let n = x.nrows();
        let one = |v: Array1<f64>| v.insert_axis(Axis(1));
        match &self.inner {
            Inner::Net(net) => net.forward(self.visible(x).view()),
            Inner::Forest(Some(m)) => Ok(one(m.predict(self.visible(x).view())?)),
            Inner::Boosted(Some(m)) => Ok(one(m.predict(self.visible(x).view())?)),
            // An unfitted tree ensemble behaves like the zero model.
            Inner::Forest(None) | Inner::Boosted(None) | Inner::Zero => Ok(Array2::zeros((n, self.out_dim))),
        }
    }

    fn excluded_inputs(&self) -> Vec<usize> {
        self.cfg.input_filter.clone()
    }
}

impl Predictor for crate::prior::ParametricPrior {
    fn n_inputs(&self) -> usize {
        self.form.min_in_dim()
    }

    fn n_outputs(&self) -> usize {
        self.out_dim()
    }

    fn predict(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        self.check_input(x.ncols())?;
        Ok(self.eval_batch(x))
    }
}

/// Wraps a closure as a [`Predictor`]; handy for oracles in tests.
pub struct FnPredictor<F> {
    pub n_inputs: usize,
    pub n_outputs: usize,
    pub f: F,
}

impl<F> Predictor for FnPredictor<F>
where
    F: Fn(ArrayView1<'_, f64>) -> Vec<f64>,
{
    fn n_inputs(&self) -> usize {
        self.n_inputs
    }

    fn n_outputs(&self) -> usize {
        self.n_outputs
    }

    fn predict(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.n_inputs {
            return Err(Error::config(format!("expected {} inputs, got {}", self.n_inputs, x.ncols())));
        }
        let mut out = Array2::zeros((x.nrows(), self.n_outputs));
        for (r, mut o) in x.rows().into_iter().zip(out.rows_mut()) {
            o.assign(&Array1::from((self.f)(r)));
        }
        Ok(out)
    }
}

//! Trajectory-fitting schemes for hybrid vector fields.
//!
//! Losses are computed by unrolling explicit Euler steps at the observation
//! time step over sub-trajectory windows and differentiating through the
//! unrolled computation (discretize-then-optimize). With `x_{t+1} = x_t +
//! dt f(x_t)` the adjoint recursion is
//! `l_t = dL/dx_t + l_{t+1} + dt J_f(x_t)^T l_{t+1}`.

use ndarray::{s, Array2, Array3, ArrayView2, ArrayView3, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::regression::{fit_prior_multi, PriorFitConfig};
use crate::data::TrajectoryDataset;
use crate::error::{Error, Result};
use crate::hybrid::HybridModel;
use crate::metrics::{eval_traj_mse, observed_states};
use crate::nn::{Net, NetCache, OptimizerKind, OptimizerState};
use crate::ode::IntegratorCfg;
use crate::pd::pd_grid;
use crate::prior::ParametricPrior;
use crate::residual::{ResidualConfig, ResidualModel};

/// Windows per parallel work unit. Fixed so the gradient summation order
/// does not depend on the thread count.
const CHUNK: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct WindowGrad {
    pub loss: f64,
    /// Gradient in `(theta, gamma)`.
    pub prior: Vec<f64>,
    /// Gradient in the residual net parameters (empty without a net).
    pub net: Vec<f64>,
}

/// Hybrid field `h_k + gamma + h_a` evaluated on a batch of states.
pub fn field(prior: &ParametricPrior, net: Option<&Net>, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    let mut f = prior.eval_batch(x);
    if let Some(net) = net {
        f += &net.forward(x)?;
    }
    Ok(f)
}

fn chunk_grad(prior: &ParametricPrior, net: Option<&Net>, w: ArrayView3<'_, f64>, dt: f64, norm: f64) -> Result<WindowGrad> {
    let (b, l, d) = w.dim();
    let mut xs: Vec<Array2<f64>> = Vec::with_capacity(l);
    xs.push(w.slice(s![.., 0, ..]).to_owned());
    let mut caches: Vec<Option<NetCache>> = Vec::with_capacity(l - 1);
    let mut loss = 0.0;
    for t in 0..l - 1 {
        let x = &xs[t];
        let mut f = prior.eval_batch(x.view());
        let cache = match net {
            Some(net) => {
                let (o, c) = net.forward_cached(x.view())?;
                f += &o;
                Some(c)
            }
            None => None,
        };
        caches.push(cache);
        let next = x + &(f * dt);
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::diverged("unrolled Euler", t + 1));
        }
        loss += (&next - &w.slice(s![.., t + 1, ..])).iter().map(|e| e * e).sum::<f64>();
        xs.push(next);
    }
    let mut gp = vec![0.0; prior.n_params()];
    let mut gn = vec![0.0; net.map_or(0, |n| n.n_params())];
    let scale = 2.0 / norm;
    let mut lam = (&xs[l - 1] - &w.slice(s![.., l - 1, ..])) * scale;
    for t in (0..l - 1).rev() {
        let a = &lam * dt;
        let x = &xs[t];
        let mut gx = Array2::<f64>::zeros((b, d));
        for i in 0..b {
            let (xr, ar) = (x.row(i), a.row(i));
            let (xr, ar) = (xr.as_slice().expect("contiguous"), ar.as_slice().expect("contiguous"));
            prior.vjp_params(xr, ar, &mut gp);
            prior.vjp_input(xr, ar, gx.row_mut(i).as_slice_mut().expect("contiguous"));
        }
        if let (Some(net), Some(cache)) = (net, caches[t].as_ref()) {
            gx += &net.backward(cache, a.view(), Some(&mut gn));
        }
        lam += &gx;
        if t > 0 {
            lam += &((x - &w.slice(s![.., t, ..])) * scale);
        }
    }
    Ok(WindowGrad {
        loss: loss / norm,
        prior: gp,
        net: gn,
    })
}

/// Mean squared error of unrolled Euler predictions over steps `1..L` of
/// every window, and its gradient.
pub fn window_loss_grad(prior: &ParametricPrior, net: Option<&Net>, windows: ArrayView3<'_, f64>, dt: f64) -> Result<WindowGrad> {
    let (b, l, d) = windows.dim();
    if b == 0 || l < 2 {
        return Err(Error::Empty("need at least one window of two states".into()));
    }
    prior.check_input(d)?;
    let norm = (b * (l - 1) * d) as f64;
    let starts: Vec<usize> = (0..b).step_by(CHUNK).collect();
    let parts: Vec<Result<WindowGrad>> = starts
        .par_iter()
        .map(|&s0| chunk_grad(prior, net, windows.slice(s![s0..(s0 + CHUNK).min(b), .., ..]), dt, norm))
        .collect();
    let mut total = WindowGrad {
        loss: 0.0,
        prior: vec![0.0; prior.n_params()],
        net: vec![0.0; net.map_or(0, |n| n.n_params())],
    };
    for part in parts {
        let part = part?;
        total.loss += part.loss;
        total.prior.iter_mut().zip(&part.prior).for_each(|(a, b)| *a += b);
        total.net.iter_mut().zip(&part.net).for_each(|(a, b)| *a += b);
    }
    Ok(total)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DynamicScheme {
    HaOnly,
    Joint,
    Alternate,
    AlternateInit,
    PdBased,
    FkThenHa,
}

impl DynamicScheme {
    pub fn id(self) -> &'static str {
        match self {
            DynamicScheme::HaOnly => "ha_only",
            DynamicScheme::Joint => "joint",
            DynamicScheme::Alternate => "alternate",
            DynamicScheme::AlternateInit => "alternate_init",
            DynamicScheme::PdBased => "pd_based",
            DynamicScheme::FkThenHa => "fk_then_ha",
        }
    }

    /// Whether the scheme fits `(theta_k, gamma)` itself.
    pub fn estimates_prior(self) -> bool {
        !matches!(self, DynamicScheme::HaOnly | DynamicScheme::FkThenHa)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DynamicSchemeConfig {
    pub epochs: usize,
    pub lr: f64,
    #[serde(default = "batch32")]
    pub batch_size: usize,
    pub window_len: usize,
    pub window_stride: usize,
    /// Epochs of prior-only trajectory fitting before alternate training.
    #[serde(default)]
    pub init_epochs: Option<usize>,
    pub pd_block_epochs: usize,
    pub pd_repeats: usize,
    pub pd_final_epochs: usize,
    /// PD background rows drawn from the pooled training states.
    #[serde(default = "pd_background")]
    pub pd_background: usize,
    /// Pooled states used as PD query points for the prior refit.
    #[serde(default = "pd_queries")]
    pub pd_queries: usize,
    /// Validate every this many epochs.
    #[serde(default = "one")]
    pub val_every: usize,
}

fn batch32() -> usize {
    32
}
fn pd_background() -> usize {
    256
}
fn pd_queries() -> usize {
    4096
}
fn one() -> usize {
    1
}

impl DynamicSchemeConfig {
    /// Defaults for the low-dimensional systems: 500 epochs, 41-state
    /// windows every 2 steps, PD blocks of 50 x 10 + 150.
    pub fn small_system() -> Self {
        Self {
            epochs: 500,
            lr: 5e-4,
            batch_size: 32,
            window_len: 41,
            window_stride: 2,
            init_epochs: None,
            pd_block_epochs: 50,
            pd_repeats: 10,
            pd_final_epochs: 150,
            pd_background: pd_background(),
            pd_queries: pd_queries(),
            val_every: 1,
        }
    }

    /// Defaults for the field-valued system.
    pub fn field_system() -> Self {
        Self {
            epochs: 1000,
            lr: 1e-4,
            window_len: 51,
            window_stride: 20,
            pd_block_epochs: 100,
            pd_final_epochs: 1000,
            ..Self::small_system()
        }
    }

    /// Multiplies every epoch count by `factor` (at least one epoch each).
    pub fn scaled(mut self, factor: f64) -> Self {
        let sc = |e: usize| ((e as f64 * factor).round() as usize).max(1);
        self.epochs = sc(self.epochs);
        self.pd_block_epochs = sc(self.pd_block_epochs);
        self.pd_final_epochs = sc(self.pd_final_epochs);
        self.init_epochs = self.init_epochs.map(sc);
        self
    }
}

#[derive(Debug, Clone)]
pub struct DynamicOutcome {
    pub model: HybridModel,
    /// Validation trajectory MSE of the kept model.
    pub val_loss: Option<f64>,
    pub val_history: Vec<f64>,
}

/// Mutable training state: prior, residual net and their optimizers.
struct Trainer<'a> {
    prior: ParametricPrior,
    residual: ResidualModel,
    prior_opt: OptimizerState,
    net_opt: OptimizerState,
    windows: Array3<f64>,
    dt: f64,
    cfg: &'a DynamicSchemeConfig,
    rng: ChaCha8Rng,
    val: Option<&'a TrajectoryDataset>,
    best: Option<(f64, HybridModel)>,
    history: Vec<f64>,
    epoch: usize,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Update {
    Prior,
    Net,
    Both,
}

impl<'a> Trainer<'a> {
    fn new(
        prior: ParametricPrior,
        residual: ResidualModel,
        train: &TrajectoryDataset,
        val: Option<&'a TrajectoryDataset>,
        cfg: &'a DynamicSchemeConfig,
        seed: u64,
    ) -> Result<Self> {
        if cfg.batch_size == 0 || cfg.val_every == 0 {
            return Err(Error::config("batch_size and val_every must be positive"));
        }
        let n_net = residual.net().map_or(0, |n| n.n_params());
        Ok(Self {
            prior_opt: OptimizerState::new(OptimizerKind::Adam, cfg.lr, prior.n_params()),
            net_opt: OptimizerState::new(OptimizerKind::Adam, cfg.lr, n_net),
            prior,
            residual,
            windows: train.windows(cfg.window_len, cfg.window_stride)?,
            dt: train.dt(),
            cfg,
            rng: ChaCha8Rng::seed_from_u64(seed ^ 0x6479_6e),
            val,
            best: None,
            history: Vec::new(),
            epoch: 0,
        })
    }

    fn net_active(&self) -> Option<&Net> {
        self.residual.net()
    }

    /// One pass over shuffled minibatches of windows.
    fn pass(&mut self, update: Update, with_net: bool) -> Result<f64> {
        let n = self.windows.shape()[0];
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut self.rng);
        let mut total = 0.0;
        for chunk in idx.chunks(self.cfg.batch_size) {
            let batch = self.windows.select(Axis(0), chunk);
            let net = if with_net { self.net_active() } else { None };
            let g = window_loss_grad(&self.prior, net, batch.view(), self.dt).map_err(|e| match e {
                Error::Divergence { context, .. } => Error::Divergence { context, step: self.epoch },
                other => other,
            })?;
            total += g.loss * chunk.len() as f64;
            if matches!(update, Update::Prior | Update::Both) {
                let mut p = self.prior.params();
                self.prior_opt.update(&mut p, &g.prior);
                self.prior.set_params(&p);
            }
            if with_net && matches!(update, Update::Net | Update::Both) {
                if let Some(net) = self.residual.net_mut() {
                    self.net_opt.update(net.params_mut(), &g.net);
                }
            }
        }
        let params_ok = self.prior.params().iter().all(|v| v.is_finite()) && self.residual.params().iter().all(|v| v.is_finite());
        if !params_ok || !total.is_finite() {
            return Err(Error::diverged("trajectory fit", self.epoch));
        }
        Ok(total / n as f64)
    }

    fn model(&self) -> Result<HybridModel> {
        HybridModel::new(self.prior.clone(), self.residual.clone())
    }

    /// Records a candidate for global model selection.
    fn offer(&mut self, force: bool) -> Result<()> {
        let Some(val) = self.val else {
            self.best = Some((f64::NAN, self.model()?));
            return Ok(());
        };
        if !force && !self.epoch.is_multiple_of(self.cfg.val_every) {
            return Ok(());
        }
        let model = self.model()?;
        let loss = match eval_traj_mse(&model, val, IntegratorCfg::euler(val.dt())) {
            Ok(l) if l.is_finite() => l,
            Ok(_) | Err(Error::Divergence { .. }) | Err(Error::NonFinite(_)) => f64::INFINITY,
            Err(e) => return Err(e),
        };
        self.history.push(loss);
        if self.best.as_ref().is_none_or(|(b, _)| loss < *b) {
            self.best = Some((loss, model));
        }
        Ok(())
    }

    fn finish(mut self) -> Result<DynamicOutcome> {
        if self.best.is_none() {
            self.offer(true)?;
        }
        let (loss, model) = self.best.take().expect("candidate recorded");
        if self.val.is_some() && !loss.is_finite() {
            return Err(Error::diverged("validation integration", self.epoch));
        }
        Ok(DynamicOutcome {
            model,
            val_loss: self.val.map(|_| loss),
            val_history: self.history,
        })
    }

    /// Prior-only trajectory fitting, outside model selection.
    fn fit_prior_only(&mut self, epochs: usize) -> Result<()> {
        for _ in 0..epochs {
            self.epoch += 1;
            self.pass(Update::Prior, false)?;
        }
        Ok(())
    }

    /// Residual-only epochs with the prior frozen.
    fn fit_net(&mut self, epochs: usize, select: bool) -> Result<()> {
        for _ in 0..epochs {
            self.epoch += 1;
            self.pass(Update::Net, true)?;
            if select {
                self.offer(false)?;
            }
        }
        Ok(())
    }
}

fn check_dynamic(prior: &ParametricPrior, residual_cfg: &ResidualConfig, train: &TrajectoryDataset) -> Result<()> {
    prior.check_input(train.state_dim())?;
    if prior.out_dim() != train.state_dim() {
        return Err(Error::config(format!(
            "prior outputs {} values for a {}-dimensional state",
            prior.out_dim(),
            train.state_dim()
        )));
    }
    if !residual_cfg.kind.is_net() && !matches!(residual_cfg.kind, crate::residual::ResidualKind::Zero) {
        return Err(Error::config("dynamic schemes need a differentiable residual"));
    }
    if !residual_cfg.input_filter.is_empty() {
        return Err(Error::config("dynamic residuals take the full state"));
    }
    Ok(())
}

fn new_residual(residual_cfg: &ResidualConfig, train: &TrajectoryDataset, seed: u64) -> Result<ResidualModel> {
    let d = train.state_dim();
    let grid = train.grid_shape().map(|(h, w)| (train.channels(), h, w));
    ResidualModel::new(residual_cfg.clone(), d, d, grid, seed)
}

/// Neural-ODE fit of the residual with the prior held fixed. Returns the
/// best-validation hybrid.
pub fn fit_node(
    prior: ParametricPrior,
    residual_cfg: &ResidualConfig,
    train: &TrajectoryDataset,
    val: Option<&TrajectoryDataset>,
    cfg: &DynamicSchemeConfig,
    seed: u64,
) -> Result<DynamicOutcome> {
    check_dynamic(&prior, residual_cfg, train)?;
    let residual = new_residual(residual_cfg, train, seed)?;
    let mut tr = Trainer::new(prior, residual, train, val, cfg, seed)?;
    tr.fit_net(cfg.epochs, true)?;
    tr.finish()
}

/// Residual alone, no prior.
pub fn ha_only_dyn(residual_cfg: &ResidualConfig, train: &TrajectoryDataset, val: Option<&TrajectoryDataset>, cfg: &DynamicSchemeConfig, seed: u64) -> Result<DynamicOutcome> {
    let d = train.state_dim();
    fit_node(ParametricPrior::null(d, d), residual_cfg, train, val, cfg, seed)
}

/// Simultaneous updates of `(theta_k, gamma, theta_a)` from `init`.
pub fn joint_fit(
    init: ParametricPrior,
    residual_cfg: &ResidualConfig,
    train: &TrajectoryDataset,
    val: Option<&TrajectoryDataset>,
    cfg: &DynamicSchemeConfig,
    seed: u64,
) -> Result<DynamicOutcome> {
    check_dynamic(&init, residual_cfg, train)?;
    let residual = new_residual(residual_cfg, train, seed)?;
    let mut tr = Trainer::new(init, residual, train, val, cfg, seed)?;
    for _ in 0..cfg.epochs {
        tr.epoch += 1;
        tr.pass(Update::Both, true)?;
        tr.offer(false)?;
    }
    tr.finish()
}

/// Per epoch one pass on `theta_a`, then one on `(theta_k, gamma)`; a
/// final residual pass closes the run. With `init_prior` the prior is first
/// fitted alone to the trajectories.
pub fn alternate_fit_dyn(
    init: ParametricPrior,
    residual_cfg: &ResidualConfig,
    train: &TrajectoryDataset,
    val: Option<&TrajectoryDataset>,
    cfg: &DynamicSchemeConfig,
    init_prior: bool,
    seed: u64,
) -> Result<DynamicOutcome> {
    check_dynamic(&init, residual_cfg, train)?;
    let residual = new_residual(residual_cfg, train, seed)?;
    let mut tr = Trainer::new(init, residual, train, val, cfg, seed)?;
    if init_prior {
        tr.fit_prior_only(cfg.init_epochs.unwrap_or(cfg.epochs))?;
        tr.prior_opt = tr.prior_opt.reset();
        tr.epoch = 0;
    }
    for _ in 0..cfg.epochs {
        tr.epoch += 1;
        tr.pass(Update::Net, true)?;
        tr.pass(Update::Prior, true)?;
        tr.offer(false)?;
    }
    tr.pass(Update::Net, true)?;
    tr.offer(true)?;
    tr.finish()
}

fn subsample(x: Array2<f64>, n: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    if x.nrows() <= n {
        return x;
    }
    let mut idx: Vec<usize> = (0..x.nrows()).collect();
    idx.shuffle(rng);
    idx.truncate(n);
    idx.sort_unstable();
    x.select(Axis(0), &idx)
}

/// Partial-dependence-based training for trajectory data.
pub fn pd_fit_dyn(
    init: ParametricPrior,
    residual_cfg: &ResidualConfig,
    train: &TrajectoryDataset,
    val: Option<&TrajectoryDataset>,
    cfg: &DynamicSchemeConfig,
    seed: u64,
) -> Result<DynamicOutcome> {
    check_dynamic(&init, residual_cfg, train)?;
    let known = init.form.pd_indices();
    let d = train.state_dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x7064);
    let pooled = observed_states(train);
    let background = subsample(pooled.clone(), cfg.pd_background, &mut rng);
    let queries = subsample(pooled, cfg.pd_queries, &mut rng);
    let prior_cfg = PriorFitConfig {
        epochs: cfg.pd_block_epochs,
        lr: cfg.lr,
        optimizer: OptimizerKind::Adam,
        batch_size: Some(cfg.batch_size),
        seed,
    };

    let residual = new_residual(residual_cfg, train, seed)?;
    let mut tr = Trainer::new(ParametricPrior::null(d, d), residual, train, val, cfg, seed)?;
    tr.fit_net(cfg.pd_block_epochs, false)?;

    let mut prior = init;
    let pd = pd_grid(&tr.residual, &known, queries.view(), background.view())?;
    fit_prior_multi(&mut prior, queries.view(), pd.view(), &prior_cfg)?;
    tr.prior = prior;

    for _ in 0..cfg.pd_repeats {
        tr.fit_net(cfg.pd_block_epochs, true)?;
        let pd = pd_grid(&tr.residual, &known, queries.view(), background.view())?;
        let target = tr.prior.eval_batch(queries.view()) + &pd;
        fit_prior_multi(&mut tr.prior, queries.view(), target.view(), &prior_cfg)?;
    }
    tr.fit_net(cfg.pd_final_epochs, true)?;
    tr.offer(true)?;
    tr.finish()
}

/// Dispatches to the scheme. `init` is the starting prior; `truth` is only
/// read by [`DynamicScheme::FkThenHa`].
#[allow(clippy::too_many_arguments)]
pub fn run_dynamic(
    scheme: DynamicScheme,
    init: ParametricPrior,
    truth: &ParametricPrior,
    residual_cfg: &ResidualConfig,
    train: &TrajectoryDataset,
    val: Option<&TrajectoryDataset>,
    cfg: &DynamicSchemeConfig,
    seed: u64,
) -> Result<DynamicOutcome> {
    match scheme {
        DynamicScheme::HaOnly => ha_only_dyn(residual_cfg, train, val, cfg, seed),
        DynamicScheme::Joint => joint_fit(init, residual_cfg, train, val, cfg, seed),
        DynamicScheme::Alternate => alternate_fit_dyn(init, residual_cfg, train, val, cfg, false, seed),
        DynamicScheme::AlternateInit => alternate_fit_dyn(init, residual_cfg, train, val, cfg, true, seed),
        DynamicScheme::PdBased => pd_fit_dyn(init, residual_cfg, train, val, cfg, seed),
        DynamicScheme::FkThenHa => fit_node(truth.clone(), residual_cfg, train, val, cfg, seed),
    }
}

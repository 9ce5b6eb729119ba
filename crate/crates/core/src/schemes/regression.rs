//! Static regression schemes: sequential, alternate and PD-based training,
//! plus the residual-only and known-prior baselines.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::hybrid::HybridModel;
use crate::nn::{OptimizerKind, OptimizerState};
use crate::pd::pd_grid;
use crate::prior::ParametricPrior;
use crate::residual::{Predictor, ResidualConfig, ResidualModel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PriorFitConfig {
    pub epochs: usize,
    pub lr: f64,
    pub optimizer: OptimizerKind,
    /// `None` means full batch.
    pub batch_size: Option<usize>,
    pub seed: u64,
}

impl Default for PriorFitConfig {
    fn default() -> Self {
        Self {
            epochs: 5000,
            lr: 0.005,
            optimizer: OptimizerKind::Adam,
            batch_size: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PriorFitSummary {
    pub initial_loss: f64,
    pub final_loss: f64,
}

/// MSE of `h_k + gamma` on `(x, y)` and its gradient in `(theta, gamma)`.
pub fn prior_mse_grad(prior: &ParametricPrior, x: ArrayView2<'_, f64>, y: ArrayView2<'_, f64>) -> Result<(f64, Vec<f64>)> {
    let n = (x.nrows() * prior.out_dim()) as f64;
    let mut grad = vec![0.0; prior.n_params()];
    let mut out = vec![0.0; prior.out_dim()];
    let mut row = vec![0.0; x.ncols()];
    let mut loss = 0.0;
    for (xr, yr) in x.rows().into_iter().zip(y.rows()) {
        row.iter_mut().zip(xr.iter()).for_each(|(r, v)| *r = *v);
        prior.eval(&row, &mut out);
        for (o, t) in out.iter_mut().zip(yr.iter()) {
            let e = *o - t;
            loss += e * e;
            *o = 2.0 * e / n;
        }
        prior.vjp_params(&row, &out, &mut grad);
    }
    let loss = loss / n;
    if !loss.is_finite() {
        return Err(Error::NonFinite("prior loss".into()));
    }
    Ok((loss, grad))
}

/// Fits `(theta, gamma)` by full-batch gradient descent, starting from the
/// current parameters, and keeps the lowest-loss iterate.
pub fn fit_prior(prior: &mut ParametricPrior, x: ArrayView2<'_, f64>, y: ArrayView1<'_, f64>, cfg: &PriorFitConfig) -> Result<PriorFitSummary> {
    fit_prior_multi(prior, x, y.insert_axis(Axis(1)), cfg)
}

/// Vector-target variant of [`fit_prior`].
pub fn fit_prior_multi(prior: &mut ParametricPrior, x: ArrayView2<'_, f64>, y: ArrayView2<'_, f64>, cfg: &PriorFitConfig) -> Result<PriorFitSummary> {
    if cfg.epochs == 0 {
        return Err(Error::Precondition("prior fit needs >= 1 epoch".into()));
    }
    prior.check_input(x.ncols())?;
    if y.ncols() != prior.out_dim() || y.nrows() != x.nrows() {
        return Err(Error::shape(format!("{} x {}", x.nrows(), prior.out_dim()), format!("{:?}", y.dim())));
    }
    let mut opt = OptimizerState::new(cfg.optimizer, cfg.lr, prior.n_params());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut params = prior.params();
    let (init, _) = prior_mse_grad(prior, x, y)?;
    let (mut best, mut best_params) = (init, params.clone());
    let mut idx: Vec<usize> = (0..x.nrows()).collect();
    for epoch in 1..=cfg.epochs {
        let loss = match cfg.batch_size {
            Some(b) if b < x.nrows() => {
                idx.shuffle(&mut rng);
                for chunk in idx.chunks(b) {
                    let (xb, yb) = (x.select(Axis(0), chunk), y.select(Axis(0), chunk));
                    let (_, grad) = prior_mse_grad(prior, xb.view(), yb.view()).map_err(|_| Error::diverged("fit_prior", epoch))?;
                    opt.update(&mut params, &grad);
                    prior.set_params(&params);
                }
                prior_mse_grad(prior, x, y).map_err(|_| Error::diverged("fit_prior", epoch))?.0
            }
            _ => {
                let (loss, grad) = prior_mse_grad(prior, x, y).map_err(|_| Error::diverged("fit_prior", epoch))?;
                if loss < best {
                    best = loss;
                    best_params.copy_from_slice(&params);
                }
                opt.update(&mut params, &grad);
                prior.set_params(&params);
                continue;
            }
        };
        if loss < best {
            best = loss;
            best_params.copy_from_slice(&params);
        }
    }
    let (last, _) = prior_mse_grad(prior, x, y).map_err(|_| Error::diverged("fit_prior", cfg.epochs))?;
    if last < best {
        best = last;
        best_params.copy_from_slice(&params);
    }
    prior.set_params(&best_params);
    Ok(PriorFitSummary {
        initial_loss: init,
        final_loss: best,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StaticScheme {
    Sequential,
    Alternate,
    PdBased,
    HaOnly,
    FkThenHa,
}

impl StaticScheme {
    pub fn id(self) -> &'static str {
        match self {
            StaticScheme::Sequential => "sequential",
            StaticScheme::Alternate => "alternate",
            StaticScheme::PdBased => "pd_based",
            StaticScheme::HaOnly => "ha_only",
            StaticScheme::FkThenHa => "fk_then_ha",
        }
    }

    /// Whether the scheme fits `(theta_k, gamma)` itself.
    pub fn estimates_prior(self) -> bool {
        matches!(self, StaticScheme::Sequential | StaticScheme::Alternate | StaticScheme::PdBased)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StaticSchemeConfig {
    #[serde(default)]
    pub prior_fit: PriorFitConfig,
    /// Alternate epochs `N_e` for neural residuals.
    #[serde(default = "net_alt_epochs")]
    pub alt_epochs_net: usize,
    /// Alternate epochs `N_e` for tree residuals (each one is a full refit).
    #[serde(default = "tree_alt_epochs")]
    pub alt_epochs_tree: usize,
    /// Step size of the single prior gradient step per alternate epoch.
    #[serde(default = "alt_lr")]
    pub alt_prior_lr: f64,
    /// PD repeats `N_r`.
    #[serde(default = "pd_repeats")]
    pub pd_repeats: usize,
    /// Extra PD query points drawn uniformly inside the observed `x_k` box.
    #[serde(default)]
    pub pd_extra_queries: usize,
}

fn net_alt_epochs() -> usize {
    2000
}
fn tree_alt_epochs() -> usize {
    50
}
fn alt_lr() -> f64 {
    0.005
}
fn pd_repeats() -> usize {
    5
}

impl Default for StaticSchemeConfig {
    fn default() -> Self {
        Self {
            prior_fit: PriorFitConfig::default(),
            alt_epochs_net: net_alt_epochs(),
            alt_epochs_tree: tree_alt_epochs(),
            alt_prior_lr: alt_lr(),
            pd_repeats: pd_repeats(),
            pd_extra_queries: 0,
        }
    }
}

/// A trained hybrid plus the validation loss it was selected on.
#[derive(Debug, Clone)]
pub struct StaticOutcome {
    pub model: HybridModel,
    pub val_loss: Option<f64>,
    /// Validation loss of every candidate considered, in training order.
    pub val_history: Vec<f64>,
}

struct Selector<'a> {
    val: Option<&'a Dataset>,
    best: Option<(f64, HybridModel)>,
    history: Vec<f64>,
}

impl<'a> Selector<'a> {
    fn new(val: Option<&'a Dataset>) -> Self {
        Self {
            val,
            best: None,
            history: Vec::new(),
        }
    }

    fn offer(&mut self, prior: &ParametricPrior, residual: &ResidualModel) -> Result<()> {
        let model = HybridModel::new(prior.clone(), residual.clone())?;
        let Some(val) = self.val else {
            self.best = Some((f64::NAN, model));
            return Ok(());
        };
        let loss = mse_vec(&model.predict_vec(val.features())?, val.targets());
        if !loss.is_finite() {
            return Err(Error::NonFinite("validation loss".into()));
        }
        self.history.push(loss);
        if self.best.as_ref().is_none_or(|(b, _)| loss < *b) {
            self.best = Some((loss, model));
        }
        Ok(())
    }

    fn finish(self) -> StaticOutcome {
        let (loss, model) = self.best.expect("at least one candidate");
        StaticOutcome {
            model,
            val_loss: self.val.map(|_| loss),
            val_history: self.history,
        }
    }
}

fn mse_vec(p: &Array1<f64>, y: ArrayView1<'_, f64>) -> f64 {
    p.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / p.len() as f64
}

fn residual_targets(prior: &ParametricPrior, data: &Dataset) -> Array1<f64> {
    let p = prior.eval_batch(data.features());
    &data.targets() - &p.column(0)
}

fn fit_residual(residual: &mut ResidualModel, prior: &ParametricPrior, train: &Dataset, val: Option<&Dataset>) -> Result<()> {
    let y = residual_targets(prior, train);
    let vy = val.map(|v| residual_targets(prior, v));
    let v = val.zip(vy.as_ref()).map(|(v, vy)| (v.features(), vy.view()));
    residual.fit_vec(train.features(), y.view(), v)
}

fn check_static(prior: &ParametricPrior, train: &Dataset) -> Result<()> {
    prior.check_input(train.n_features())?;
    if prior.out_dim() != 1 {
        return Err(Error::config("static priors must be scalar-valued"));
    }
    Ok(())
}

/// Fit the prior on `y`, then the residual on what is left.
pub fn sequential_fit(
    mut prior: ParametricPrior,
    residual_cfg: &ResidualConfig,
    train: &Dataset,
    val: Option<&Dataset>,
    cfg: &StaticSchemeConfig,
    seed: u64,
) -> Result<StaticOutcome> {
    check_static(&prior, train)?;
    let mut residual = ResidualModel::new(residual_cfg.clone(), train.n_features(), 1, None, seed)?;
    fit_prior(&mut prior, train.features(), train.targets(), &cfg.prior_fit)?;
    fit_residual(&mut residual, &prior, train, val)?;
    let mut sel = Selector::new(val);
    sel.offer(&prior, &residual)?;
    Ok(sel.finish())
}

/// Prior fit on `y`, then `N_e` rounds of (residual update, one prior
/// gradient step), then a final residual update.
pub fn alternate_fit(
    mut prior: ParametricPrior,
    residual_cfg: &ResidualConfig,
    train: &Dataset,
    val: Option<&Dataset>,
    cfg: &StaticSchemeConfig,
    seed: u64,
) -> Result<StaticOutcome> {
    check_static(&prior, train)?;
    let epochs = if residual_cfg.kind.is_net() { cfg.alt_epochs_net } else { cfg.alt_epochs_tree };
    if epochs == 0 {
        return Err(Error::Precondition("alternate training needs >= 1 epoch".into()));
    }
    let mut residual = ResidualModel::new(residual_cfg.clone(), train.n_features(), 1, None, seed)?;
    fit_prior(&mut prior, train.features(), train.targets(), &cfg.prior_fit)?;
    let x = train.features();
    let y = train.targets().insert_axis(Axis(1));
    let mut params = prior.params();
    let mut sel = Selector::new(val);
    for epoch in 1..=epochs {
        let r = residual_targets(&prior, train);
        residual.step(x, r.view()).map_err(|e| diverged_or(e, "alternate residual", epoch))?;
        let target = &y - &residual.predict(x)?;
        let (_, grad) = prior_mse_grad(&prior, x, target.view()).map_err(|_| Error::diverged("alternate prior", epoch))?;
        for (p, g) in params.iter_mut().zip(&grad) {
            *p -= cfg.alt_prior_lr * g;
        }
        prior.set_params(&params);
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::diverged("alternate prior", epoch));
        }
        sel.offer(&prior, &residual)?;
    }
    let r = residual_targets(&prior, train);
    residual.step(x, r.view())?;
    sel.offer(&prior, &residual)?;
    Ok(sel.finish())
}

fn diverged_or(e: Error, ctx: &str, epoch: usize) -> Error {
    match e {
        Error::NonFinite(_) | Error::Divergence { .. } => Error::diverged(ctx, epoch),
        other => other,
    }
}

/// Rows at which the PD proxy dataset is built: the training rows, plus
/// optional extra points spread over the observed `x_k` box.
fn pd_queries(x: ArrayView2<'_, f64>, known: &[usize], extra: usize, seed: u64) -> Array2<f64> {
    if extra == 0 {
        return x.to_owned();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5044);
    let mut q = Array2::zeros((x.nrows() + extra, x.ncols()));
    q.slice_mut(ndarray::s![..x.nrows(), ..]).assign(&x);
    for &k in known {
        let col = x.column(k);
        let (lo, hi) = col.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| (l.min(*v), h.max(*v)));
        for i in 0..extra {
            q[[x.nrows() + i, k]] = if hi > lo { rng.gen_range(lo..=hi) } else { lo };
        }
    }
    q
}

/// Partial-dependence training. The residual used inside the loop always
/// sees every input (partial dependence on `x_k` needs them); when the
/// configuration filters inputs, only the final residual is filtered and it
/// is fitted against the prior of the best loop stage.
pub fn pd_fit(
    mut prior: ParametricPrior,
    residual_cfg: &ResidualConfig,
    train: &Dataset,
    val: Option<&Dataset>,
    cfg: &StaticSchemeConfig,
    seed: u64,
) -> Result<StaticOutcome> {
    check_static(&prior, train)?;
    let known = prior.form.pd_indices();
    let loop_cfg = ResidualConfig {
        input_filter: vec![],
        ..residual_cfg.clone()
    };
    let mut residual = ResidualModel::new(loop_cfg, train.n_features(), 1, None, seed)?;
    let x = train.features();
    let queries = pd_queries(x, &known, cfg.pd_extra_queries, seed);

    let zero = ParametricPrior::null(train.n_features(), 1);
    fit_residual(&mut residual, &zero, train, val)?;
    let pd = pd_grid(&residual, &known, queries.view(), x)?;
    fit_prior(&mut prior, queries.view(), pd.column(0), &cfg.prior_fit)?;

    let mut sel = Selector::new(val);
    for _ in 0..cfg.pd_repeats {
        fit_residual(&mut residual, &prior, train, val)?;
        sel.offer(&prior, &residual)?;
        let pd = pd_grid(&residual, &known, queries.view(), x)?;
        let target = &prior.eval_batch(queries.view()).column(0) + &pd.column(0);
        fit_prior(&mut prior, queries.view(), target.view(), &cfg.prior_fit)?;
    }
    fit_residual(&mut residual, &prior, train, val)?;
    sel.offer(&prior, &residual)?;
    let stage = sel.finish();
    if residual_cfg.input_filter.is_empty() {
        return Ok(stage);
    }
    let prior = stage.model.prior;
    let mut filtered = ResidualModel::new(residual_cfg.clone(), train.n_features(), 1, None, seed)?;
    fit_residual(&mut filtered, &prior, train, val)?;
    let mut sel = Selector::new(val);
    sel.history = stage.val_history;
    sel.offer(&prior, &filtered)?;
    Ok(sel.finish())
}

/// Residual alone on `y`.
pub fn ha_only(residual_cfg: &ResidualConfig, train: &Dataset, val: Option<&Dataset>, seed: u64) -> Result<StaticOutcome> {
    let zero = ParametricPrior::null(train.n_features(), 1);
    let mut residual = ResidualModel::new(residual_cfg.clone(), train.n_features(), 1, None, seed)?;
    fit_residual(&mut residual, &zero, train, val)?;
    let mut sel = Selector::new(val);
    sel.offer(&zero, &residual)?;
    Ok(sel.finish())
}

/// Residual fit on `y - f_k(x_k)` with the true prior held fixed.
pub fn fk_then_ha(truth: &ParametricPrior, residual_cfg: &ResidualConfig, train: &Dataset, val: Option<&Dataset>, seed: u64) -> Result<StaticOutcome> {
    check_static(truth, train)?;
    let mut residual = ResidualModel::new(residual_cfg.clone(), train.n_features(), 1, None, seed)?;
    fit_residual(&mut residual, truth, train, val)?;
    let mut sel = Selector::new(val);
    sel.offer(truth, &residual)?;
    Ok(sel.finish())
}

/// Dispatches to the scheme. `init` is the starting prior for hybrid
/// schemes; `truth` is only read by [`StaticScheme::FkThenHa`].
#[allow(clippy::too_many_arguments)]
pub fn run_static(
    scheme: StaticScheme,
    init: ParametricPrior,
    truth: &ParametricPrior,
    residual_cfg: &ResidualConfig,
    train: &Dataset,
    val: Option<&Dataset>,
    cfg: &StaticSchemeConfig,
    seed: u64,
) -> Result<StaticOutcome> {
    match scheme {
        StaticScheme::Sequential => sequential_fit(init, residual_cfg, train, val, cfg, seed),
        StaticScheme::Alternate => alternate_fit(init, residual_cfg, train, val, cfg, seed),
        StaticScheme::PdBased => pd_fit(init, residual_cfg, train, val, cfg, seed),
        StaticScheme::HaOnly => ha_only(residual_cfg, train, val, seed),
        StaticScheme::FkThenHa => fk_then_ha(truth, residual_cfg, train, val, seed),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Split;
    use crate::nn::TrainConfig;
    use crate::prior::PriorForm;
    use crate::residual::ResidualKind;
    use rand_distr::StandardNormal;

    fn linear_data(n: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Array2::from_shape_fn((n, 2), |_| rng.gen_range(-1.0f64..1.0));
        let y = x.rows().into_iter().map(|r| 1.5 * r[0] - 0.7 + (3.0 * r[1]).sin()).collect::<Array1<f64>>();
        Dataset::new(x, y, vec![0], Split::Train).unwrap()
    }

    #[test]
    fn prior_recovers_exact_line() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let x = Array2::from_shape_fn((50, 1), |_| rng.gen_range(-2.0..2.0));
        let y: Array1<f64> = x.column(0).mapv(|v| 3.0 * v + 1.0);
        // closed-form oracle
        let mx = x.column(0).mean().unwrap();
        let my = y.mean().unwrap();
        let sxy: f64 = x.column(0).iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
        let sxx: f64 = x.column(0).iter().map(|a| (a - mx) * (a - mx)).sum();
        let (slope, icpt) = (sxy / sxx, my - sxy / sxx * mx);
        let mut p = ParametricPrior::with_theta(PriorForm::Linear { known: vec![0] }, vec![0.0]).unwrap();
        let s = fit_prior(&mut p, x.view(), y.view(), &PriorFitConfig::default()).unwrap();
        assert!(s.final_loss <= s.initial_loss);
        assert!((p.theta[0] - slope).abs() < 1e-3 && (p.gamma[0] - icpt).abs() < 1e-3, "{p:?}");
    }

    #[test]
    fn constant_targets_go_to_offset() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = Array2::from_shape_fn((40, 1), |_| rng.sample::<f64, _>(StandardNormal));
        let y = Array1::from_elem(40, 2.5);
        let mut p = ParametricPrior::with_theta(PriorForm::Linear { known: vec![0] }, vec![0.4]).unwrap();
        fit_prior(&mut p, x.view(), y.view(), &PriorFitConfig::default()).unwrap();
        assert!(p.theta[0].abs() < 1e-3 && (p.gamma[0] - 2.5).abs() < 1e-3, "{p:?}");
    }

    #[test]
    fn sequential_leaves_nothing_when_prior_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = Array2::from_shape_fn((80, 2), |_| rng.gen_range(-1.0..1.0));
        let y = x.column(0).mapv(|v| -2.0 * v + 0.5);
        let train = Dataset::new(x, y, vec![0], Split::Train).unwrap();
        let cfg = ResidualConfig::new(
            ResidualKind::GradientBoosting(crate::trees::BoostConfig::new(50, 2)),
            TrainConfig::full_batch_adam(1, 0.1),
        );
        let prior = ParametricPrior::with_theta(PriorForm::Linear { known: vec![0] }, vec![0.0]).unwrap();
        let sc = StaticSchemeConfig {
            prior_fit: PriorFitConfig { epochs: 20000, ..Default::default() },
            ..Default::default()
        };
        let out = sequential_fit(prior, &cfg, &train, None, &sc, 0).unwrap();
        let r = out.model.residual.predict(train.features()).unwrap();
        assert!(r.iter().all(|v| v.abs() < 1e-3), "max {}", r.iter().fold(0.0f64, |m, v| m.max(v.abs())));
    }

    #[test]
    fn alternate_with_zero_residual_is_prior_fit() {
        let train = linear_data(60, 3);
        let cfg = ResidualConfig::new(ResidualKind::Zero, TrainConfig::full_batch_adam(1, 0.1));
        let sc = StaticSchemeConfig {
            prior_fit: PriorFitConfig { epochs: 20000, ..Default::default() },
            ..Default::default()
        };
        let init = ParametricPrior::with_theta(PriorForm::Linear { known: vec![0] }, vec![0.0]).unwrap();
        let mut direct = init.clone();
        fit_prior(&mut direct, train.features(), train.targets(), &sc.prior_fit).unwrap();
        let alt = alternate_fit(init, &cfg, &train, None, &sc, 0).unwrap();
        for (a, b) in alt.model.prior.params().iter().zip(direct.params()) {
            assert!((a - b).abs() < 1e-6, "{a} vs {b}");
        }
    }

    #[test]
    fn pd_filter_applies_to_final_residual_only() {
        let train = linear_data(40, 4);
        let kind = ResidualKind::RandomForest(crate::trees::ForestConfig::new(5, 3));
        let plain = ResidualConfig::new(kind.clone(), TrainConfig::full_batch_adam(1, 0.1));
        let init = ParametricPrior::with_theta(PriorForm::Linear { known: vec![0] }, vec![0.0]).unwrap();
        let cfg = StaticSchemeConfig {
            pd_repeats: 2,
            prior_fit: PriorFitConfig { epochs: 200, ..Default::default() },
            ..Default::default()
        };
        let a = pd_fit(init.clone(), &plain, &train, None, &cfg, 0).unwrap();
        let b = pd_fit(init, &plain.clone().filtered(vec![0]), &train, None, &cfg, 0).unwrap();
        assert_eq!(a.model.prior, b.model.prior);
        assert_eq!(b.model.residual.input_filter(), &[0]);
        assert!(a.model.residual.input_filter().is_empty());
    }
}

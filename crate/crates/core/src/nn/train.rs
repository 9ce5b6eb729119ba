//! Supervised training loop with best-validation snapshotting.

use ndarray::{ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Net, OptimizerKind, OptimizerState};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub optimizer: OptimizerKind,
    /// `None` means full batch.
    pub batch_size: Option<usize>,
    pub seed: u64,
}

impl TrainConfig {
    pub fn full_batch_adam(epochs: usize, lr: f64) -> Self {
        Self {
            epochs,
            lr,
            optimizer: OptimizerKind::Adam,
            batch_size: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitSummary {
    /// 1-based epoch whose parameters were kept (0 = initial parameters).
    pub best_epoch: usize,
    pub best_loss: f64,
    pub train_loss: Vec<f64>,
    /// Selection loss per epoch (validation if given, else training).
    pub selection_loss: Vec<f64>,
}

/// Mean squared error over all outputs and its parameter gradient.
pub fn mse_grad(net: &Net, x: ArrayView2<'_, f64>, y: ArrayView2<'_, f64>) -> Result<(f64, Vec<f64>)> {
    net.check_out(&y)?;
    let (out, cache) = net.forward_cached(x)?;
    if out.nrows() != y.nrows() {
        return Err(Error::shape(out.nrows(), y.nrows()));
    }
    let diff = &out - &y;
    let n = diff.len() as f64;
    let loss = diff.iter().map(|d| d * d).sum::<f64>() / n;
    if !loss.is_finite() {
        return Err(Error::NonFinite("loss".into()));
    }
    let g = diff * (2.0 / n);
    let mut grad = vec![0.0; net.n_params()];
    net.backward(&cache, g.view(), Some(&mut grad));
    Ok((loss, grad))
}

pub fn mse(net: &Net, x: ArrayView2<'_, f64>, y: ArrayView2<'_, f64>) -> Result<f64> {
    net.check_out(&y)?;
    let out = net.forward(x)?;
    let n = out.len() as f64;
    Ok(out.iter().zip(y.iter()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / n)
}

/// Runs one epoch of updates and returns the mean training loss seen.
pub(crate) fn run_epoch(
    net: &mut Net,
    opt: &mut OptimizerState,
    x: ArrayView2<'_, f64>,
    y: ArrayView2<'_, f64>,
    batch_size: Option<usize>,
    rng: &mut ChaCha8Rng,
) -> Result<f64> {
    let n = x.nrows();
    match batch_size {
        Some(b) if b < n => {
            let mut idx: Vec<usize> = (0..n).collect();
            idx.shuffle(rng);
            let mut total = 0.0;
            for chunk in idx.chunks(b) {
                let xb = x.select(Axis(0), chunk);
                let yb = y.select(Axis(0), chunk);
                let (l, g) = mse_grad(net, xb.view(), yb.view())?;
                let mut p = net.params().to_vec();
                opt.update(&mut p, &g);
                net.set_params(&p);
                total += l * chunk.len() as f64;
            }
            Ok(total / n as f64)
        }
        _ => {
            let (l, g) = mse_grad(net, x, y)?;
            opt.update(net.params_mut(), &g);
            Ok(l)
        }
    }
}

/// Fits `net` to `(x, y)` and leaves it at the parameters with the lowest
/// validation MSE (training MSE when no validation set is given).
pub fn fit_regression(
    net: &mut Net,
    x: ArrayView2<'_, f64>,
    y: ArrayView2<'_, f64>,
    val: Option<(ArrayView2<'_, f64>, ArrayView2<'_, f64>)>,
    cfg: &TrainConfig,
) -> Result<FitSummary> {
    if cfg.epochs == 0 {
        return Err(Error::Precondition("epochs must be >= 1".into()));
    }
    let mut opt = OptimizerState::new(cfg.optimizer, cfg.lr, net.n_params());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let select = |net: &Net| -> Result<f64> {
        match val {
            Some((vx, vy)) => mse(net, vx, vy),
            None => mse(net, x, y),
        }
    };
    let mut best = select(net)?;
    let mut best_params = net.params().to_vec();
    let mut summary = FitSummary {
        best_epoch: 0,
        best_loss: best,
        train_loss: Vec::with_capacity(cfg.epochs),
        selection_loss: Vec::with_capacity(cfg.epochs),
    };
    for epoch in 1..=cfg.epochs {
        let train = run_epoch(net, &mut opt, x, y, cfg.batch_size, &mut rng)
            .map_err(|_| Error::diverged("fit_regression", epoch))?;
        let sel = select(net)?;
        if !sel.is_finite() || net.params().iter().any(|p| !p.is_finite()) {
            return Err(Error::diverged("fit_regression", epoch));
        }
        summary.train_loss.push(train);
        summary.selection_loss.push(sel);
        if sel < best {
            best = sel;
            best_params.copy_from_slice(net.params());
            summary.best_epoch = epoch;
        }
    }
    net.set_params(&best_params);
    summary.best_loss = best;
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Activation, MlpSpec, NetSpec};
    use ndarray::{Array1, Array2};

    fn linear_net() -> Net {
        let mut spec = MlpSpec::new(1, 1, 1, 1);
        spec.activation = Activation::Identity;
        Net::zeros(NetSpec::Mlp(spec)).unwrap()
    }

    #[test]
    fn recovers_slope_of_noiseless_line() {
        let x = Array2::from_shape_fn((100, 1), |(i, _)| -1.0 + 2.0 * i as f64 / 99.0);
        let y = x.mapv(|v| 2.0 * v);
        // closed-form least squares through the origin
        let ols = x.iter().zip(y.iter()).map(|(a, b)| a * b).sum::<f64>() / x.iter().map(|a| a * a).sum::<f64>();
        let mut net = linear_net();
        net.set_params(&[0.5, 0.0, 0.5, 0.0]);
        fit_regression(&mut net, x.view(), y.view(), None, &TrainConfig::full_batch_adam(3000, 0.01)).unwrap();
        let p = net.params();
        let slope = p[0] * p[2];
        assert!((slope - ols).abs() / ols < 0.01, "slope {slope}");
    }

    #[test]
    fn zero_epochs_is_precondition_error() {
        let mut net = linear_net();
        let x = Array2::zeros((3, 1));
        let r = fit_regression(&mut net, x.view(), x.view(), None, &TrainConfig::full_batch_adam(0, 0.1));
        assert!(matches!(r, Err(Error::Precondition(_))));
    }

    #[test]
    fn divergence_reports_epoch() {
        let mut net = linear_net();
        net.set_params(&[1.0, 0.0, 1.0, 0.0]);
        let x = Array2::from_elem((4, 1), 1e150);
        let y = Array2::zeros((4, 1));
        let cfg = TrainConfig {
            optimizer: OptimizerKind::Sgd,
            ..TrainConfig::full_batch_adam(5, 1.0)
        };
        match fit_regression(&mut net, x.view(), y.view(), None, &cfg) {
            Err(Error::Divergence { step, .. }) => assert!(step >= 1),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn returned_loss_is_best_recorded() {
        let spec = MlpSpec::new(2, 1, 8, 1);
        let mut net = Net::new(NetSpec::Mlp(spec), &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        let x = Array2::from_shape_fn((40, 2), |(i, j)| ((i * 3 + j * 7) % 11) as f64 / 11.0);
        let y: Array1<f64> = x.rows().into_iter().map(|r| (3.0 * r[0]).sin() + r[1]).collect();
        let y = y.insert_axis(Axis(1));
        let (vx, vy) = (x.slice(ndarray::s![..10, ..]), y.slice(ndarray::s![..10, ..]));
        let s = fit_regression(&mut net, x.view(), y.view(), Some((vx, vy)), &TrainConfig::full_batch_adam(200, 0.05)).unwrap();
        assert!(s.selection_loss.iter().all(|l| s.best_loss <= *l));
        assert!((mse(&net, vx, vy).unwrap() - s.best_loss).abs() < 1e-15);
    }

    #[test]
    fn training_is_deterministic() {
        let run = || {
            let spec = MlpSpec::new(2, 2, 6, 1);
            let mut net = Net::new(NetSpec::Mlp(spec), &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
            let x = Array2::from_shape_fn((30, 2), |(i, j)| ((i + 1) * (j + 2)) as f64 / 40.0);
            let y = x.map_axis(Axis(1), |r| r[0] - r[1]).insert_axis(Axis(1));
            let cfg = TrainConfig {
                batch_size: Some(8),
                seed: 3,
                ..TrainConfig::full_batch_adam(20, 0.01)
            };
            fit_regression(&mut net, x.view(), y.view(), None, &cfg).unwrap();
            net.params().to_vec()
        };
        assert_eq!(run(), run());
    }
}

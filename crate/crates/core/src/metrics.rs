//! Evaluation metrics: generalization error, prior error, relative
//! parameter error and trajectory error.

use ndarray::{Array2, ArrayView2, Axis};

use crate::data::{Dataset, TrajectoryDataset};
use crate::error::{Error, Result};
use crate::ode::{integrate_batch, IntegratorCfg};
use crate::prior::ParametricPrior;
use crate::residual::Predictor;

fn finite(name: &str, v: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFinite(format!("{name} evaluated to {v}")))
    }
}

/// Mean squared error of `model` on `data`.
pub fn eval_d_hat(model: &dyn Predictor, data: &Dataset) -> Result<f64> {
    if data.n_features() != model.n_inputs() || model.n_outputs() != 1 {
        return Err(Error::config(format!(
            "model maps {} -> {}, data has {} features and a scalar target",
            model.n_inputs(),
            model.n_outputs(),
            data.n_features()
        )));
    }
    let pred = model.predict(data.features())?;
    let y = data.targets();
    let s: f64 = pred.column(0).iter().zip(y).map(|(p, t)| (p - t) * (p - t)).sum();
    finite("d_hat", s / data.len() as f64)
}

/// Mean squared gap between `h_k` of two priors (offsets excluded) over the
/// rows of `points`, averaged over outputs too.
pub fn eval_dk_hat(prior: &ParametricPrior, truth: &ParametricPrior, points: ArrayView2<'_, f64>) -> Result<f64> {
    if prior.form != truth.form {
        return Err(Error::config(format!("prior forms differ: {} vs {}", prior.form.id(), truth.form.id())));
    }
    if points.nrows() == 0 {
        return Err(Error::Empty("no evaluation points".into()));
    }
    prior.check_input(points.ncols())?;
    let a = prior.eval_known_batch(points);
    let b = truth.eval_known_batch(points);
    let s: f64 = a.iter().zip(b.iter()).map(|(u, v)| (u - v) * (u - v)).sum();
    finite("dk_hat", s / a.len() as f64)
}

/// States `x_1..x_T` of every trajectory, stacked.
pub fn observed_states(data: &TrajectoryDataset) -> Array2<f64> {
    let views: Vec<_> = data.trajectories().iter().map(|t| t.slice(ndarray::s![1.., ..])).collect();
    ndarray::concatenate(Axis(0), &views).expect("shared width")
}

/// Prior error on a trajectory set, averaged over states `t >= 1` and components.
pub fn eval_dk_hat_traj(prior: &ParametricPrior, truth: &ParametricPrior, data: &TrajectoryDataset) -> Result<f64> {
    eval_dk_hat(prior, truth, observed_states(data).view())
}

/// Relative mean absolute error in percent.
pub fn eval_rmae(theta_hat: &[f64], theta_star: &[f64]) -> Result<f64> {
    if theta_hat.len() != theta_star.len() || theta_hat.is_empty() {
        return Err(Error::shape(theta_star.len(), theta_hat.len()));
    }
    if theta_star.contains(&0.0) {
        return Err(Error::Precondition("relative error undefined for a zero true parameter".into()));
    }
    let s: f64 = theta_hat.iter().zip(theta_star).map(|(h, t)| ((h - t) / t).abs()).sum();
    finite("rmae", 100.0 * s / theta_hat.len() as f64)
}

/// Integrates `model` from every initial state over the full horizon and
/// returns the mean squared state error over trajectories, steps `1..=T`
/// and components.
pub fn eval_traj_mse(model: &dyn Predictor, data: &TrajectoryDataset, cfg: IntegratorCfg) -> Result<f64> {
    let x0 = data.initial_states();
    let pred = integrate_batch(model, x0.view(), cfg, data.horizon())?;
    let mut s = 0.0;
    for (i, tr) in data.trajectories().iter().enumerate() {
        for t in 1..=data.horizon() {
            for j in 0..data.state_dim() {
                let e = pred[[t, i, j]] - tr[[t, j]];
                s += e * e;
            }
        }
    }
    let n = (data.len() * data.horizon() * data.state_dim()) as f64;
    finite("trajectory mse", s / n)
}

pub fn eval_log_traj_mse(model: &dyn Predictor, data: &TrajectoryDataset, cfg: IntegratorCfg) -> Result<f64> {
    let m = eval_traj_mse(model, data, cfg)?;
    if m <= 0.0 {
        return Err(Error::NonFinite("log of zero trajectory error".into()));
    }
    Ok(m.ln())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Split;
    use crate::prior::PriorForm;
    use crate::residual::FnPredictor;
    use ndarray::{array, ArrayView1};

    #[test]
    fn constant_model_hand_value() {
        let data = Dataset::new(array![[0.0], [1.0]], array![0.0, 2.0], vec![0], Split::Test).unwrap();
        let m = FnPredictor {
            n_inputs: 1,
            n_outputs: 1,
            f: |_: ArrayView1<'_, f64>| vec![1.0],
        };
        assert_eq!(eval_d_hat(&m, &data).unwrap(), 1.0);
    }

    #[test]
    fn width_mismatch_is_config_error() {
        let data = Dataset::new(array![[0.0, 1.0]], array![0.0], vec![0], Split::Test).unwrap();
        let m = FnPredictor {
            n_inputs: 1,
            n_outputs: 1,
            f: |_: ArrayView1<'_, f64>| vec![1.0],
        };
        assert!(matches!(eval_d_hat(&m, &data), Err(Error::Config(_))));
    }

    #[test]
    fn dk_hat_hand_value_and_offset_ignored() {
        let form = PriorForm::Linear { known: vec![0] };
        let p = ParametricPrior::new(form.clone(), vec![1.0], vec![5.0]).unwrap();
        let t = ParametricPrior::new(form, vec![2.0], vec![0.0]).unwrap();
        assert_eq!(eval_dk_hat(&p, &t, array![[1.0], [-1.0]].view()).unwrap(), 1.0);
        assert_eq!(eval_dk_hat(&t, &t, array![[1.0], [-1.0]].view()).unwrap(), 0.0);
    }

    #[test]
    fn dk_hat_rejects_mismatched_forms() {
        let p = ParametricPrior::with_theta(PriorForm::Quadratic { index: 0 }, vec![1.0]).unwrap();
        let t = ParametricPrior::with_theta(PriorForm::Linear { known: vec![0] }, vec![1.0]).unwrap();
        assert!(matches!(eval_dk_hat(&p, &t, array![[1.0]].view()), Err(Error::Config(_))));
    }

    #[test]
    fn rmae_values() {
        assert_eq!(eval_rmae(&[1.0, 3.0], &[2.0, 2.0]).unwrap(), 50.0);
        assert!((eval_rmae(&[0.625], &[-0.5]).unwrap() - 225.0).abs() < 1e-9);
        assert_eq!(eval_rmae(&[0.3], &[0.3]).unwrap(), 0.0);
        assert!(eval_rmae(&[1.0], &[0.0]).is_err());
    }
}

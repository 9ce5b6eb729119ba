//! Simulated dynamical systems, generated with RK4 at a fine step and
//! observed at a coarser one.

use ndarray::{Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::DynamicProblem;
use crate::data::{Split, TrajectoryDataset};
use crate::error::{Error, Result};
use crate::ode::{integrate_batch, IntegratorCfg};
use crate::prior::{laplacian_periodic, ParametricPrior, PriorForm};
use crate::residual::Predictor;

pub const DT_SIM: f64 = 1e-3;

/// Trajectory count after applying the scale factor (at least 4, so every
/// split is non-empty).
pub fn scaled_count(full: usize, scale: f64) -> usize {
    ((full as f64 * scale).round() as usize).max(4)
}

fn substeps(dt_obs: f64) -> usize {
    (dt_obs / DT_SIM).round() as usize
}

/// 50/25/25 split of trajectories in generation order.
fn split_trajectories(all: Vec<Array2<f64>>, dt: f64, grid: Option<(usize, usize)>) -> Result<[TrajectoryDataset; 3]> {
    let n = all.len();
    let n_train = n / 2;
    let n_val = (n - n_train) / 2;
    let mut it = all.into_iter();
    let train: Vec<_> = it.by_ref().take(n_train).collect();
    let val: Vec<_> = it.by_ref().take(n_val).collect();
    let test: Vec<_> = it.collect();
    Ok([
        TrajectoryDataset::new(train, dt, grid, Split::Train)?,
        TrajectoryDataset::new(val, dt, grid, Split::Val)?,
        TrajectoryDataset::new(test, dt, grid, Split::Test)?,
    ])
}

fn simulate(f: &dyn Predictor, x0: Array2<f64>, dt: f64, steps: usize) -> Result<Vec<Array2<f64>>> {
    let traj = integrate_batch(f, x0.view(), IntegratorCfg::rk4(dt, substeps(dt)), steps)?;
    Ok((0..x0.nrows()).map(|i| traj.index_axis(Axis(1), i).to_owned()).collect())
}

/// Prior plus a row-wise closure for the unmodelled part.
pub struct Additive<F> {
    pub prior: ParametricPrior,
    pub residual: F,
}

impl<F> Predictor for Additive<F>
where
    F: Fn(&[f64], &mut [f64]) + Sync,
{
    fn n_inputs(&self) -> usize {
        self.prior.out_dim()
    }

    fn n_outputs(&self) -> usize {
        self.prior.out_dim()
    }

    fn predict(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        self.prior.check_input(x.ncols())?;
        let mut out = self.prior.eval_batch(x);
        let mut buf = vec![0.0; out.ncols()];
        let mut row = vec![0.0; x.ncols()];
        for (xr, mut o) in x.rows().into_iter().zip(out.rows_mut()) {
            row.iter_mut().zip(xr.iter()).for_each(|(r, v)| *r = *v);
            (self.residual)(&row, &mut buf);
            o.iter_mut().zip(&buf).for_each(|(a, b)| *a += b);
        }
        Ok(out)
    }
}

pub const LV_COEF: [f64; 4] = [1.0, 1.0, 1.0, 1.0];

/// Log-state Lotka-Volterra `p' = a - b e^q`, `q' = -d + c e^p` with all
/// coefficients 1; prior `(-theta e^q, 0)` with `theta* = 1`.
pub fn lotka_volterra(seed: u64, scale: f64) -> Result<DynamicProblem> {
    let [a, b, c, d] = LV_COEF;
    let n = scaled_count(200, scale);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x0 = Array2::from_shape_fn((n, 2), |_| rng.gen_range(f64::MIN_POSITIVE..1.0).ln());
    let truth = ParametricPrior::with_theta(PriorForm::LotkaVolterra, vec![b])?;
    let f = Additive {
        prior: truth.clone(),
        residual: move |x: &[f64], o: &mut [f64]| {
            o[0] = a;
            o[1] = -d + c * x[0].exp();
        },
    };
    let [train, val, test] = split_trajectories(simulate(&f, x0, 0.05, 400)?, 0.05, None)?;
    Ok(DynamicProblem {
        id: "lotka_volterra".into(),
        seed,
        train,
        val,
        test,
        truth,
        notes: vec![],
    })
}

/// Damped pendulum `angle'' = -w0^2 sin(angle) - xi angle'` with `(w0, xi)`
/// drawn once per dataset; prior `(omega, -theta sin(angle))`, `theta* = w0^2`.
pub fn pendulum(seed: u64, scale: f64) -> Result<DynamicProblem> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // the published range is given to two decimals, not as pi
    #[allow(clippy::approx_constant)]
    let w0 = rng.gen_range(0.785..3.14);
    let xi = rng.gen_range(0.0..0.8);
    pendulum_with(seed, scale, w0, xi)
}

/// Pendulum with explicit frequency and damping.
pub fn pendulum_with(seed: u64, scale: f64, w0: f64, xi: f64) -> Result<DynamicProblem> {
    let n = scaled_count(200, scale);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    let half_pi = std::f64::consts::FRAC_PI_2;
    let x0 = Array2::from_shape_fn((n, 2), |(_, j)| if j == 0 { rng.gen_range(-half_pi..half_pi) } else { rng.gen_range(0.0..0.1) });
    let truth = ParametricPrior::with_theta(PriorForm::Pendulum, vec![w0 * w0])?;
    let f = Additive {
        prior: truth.clone(),
        residual: move |x: &[f64], o: &mut [f64]| {
            o[0] = 0.0;
            o[1] = -xi * x[1];
        },
    };
    let [train, val, test] = split_trajectories(simulate(&f, x0, 0.05, 200)?, 0.05, None)?;
    Ok(DynamicProblem {
        id: "pendulum".into(),
        seed,
        train,
        val,
        test,
        truth,
        notes: vec![format!("w0 = {w0}, xi = {xi}")],
    })
}

pub const RD_GRID: usize = 32;
/// Diffusion of `u`, diffusion of `v`, reaction offset.
pub const RD_COEF: [f64; 3] = [1e-3, 5e-3, 5e-3];

pub fn rd_form(grid: usize) -> PriorForm {
    PriorForm::ReactionDiffusion {
        height: grid,
        width: grid,
        spacing: 2.0 / grid as f64,
    }
}

/// Field-valued reaction-diffusion dynamics on a periodic grid.
pub struct ReactionDiffusion {
    pub grid: usize,
    pub coef: [f64; 3],
}

impl ReactionDiffusion {
    pub fn eval_row(&self, x: &[f64], out: &mut [f64]) {
        let cell = self.grid * self.grid;
        let spacing = 2.0 / self.grid as f64;
        let [alpha, beta, k] = self.coef;
        let (u, v) = x.split_at(cell);
        let (ou, ov) = out.split_at_mut(cell);
        laplacian_periodic(u, self.grid, self.grid, spacing, ou);
        laplacian_periodic(v, self.grid, self.grid, spacing, ov);
        for i in 0..cell {
            ou[i] = alpha * ou[i] + u[i] - u[i].powi(3) - k - v[i];
            ov[i] = beta * ov[i] + u[i] - v[i];
        }
    }
}

impl Predictor for ReactionDiffusion {
    fn n_inputs(&self) -> usize {
        2 * self.grid * self.grid
    }

    fn n_outputs(&self) -> usize {
        self.n_inputs()
    }

    fn predict(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.n_inputs() {
            return Err(Error::shape(self.n_inputs(), x.ncols()));
        }
        let mut out = Array2::zeros(x.dim());
        let mut row = vec![0.0; x.ncols()];
        for (xr, mut o) in x.rows().into_iter().zip(out.rows_mut()) {
            row.iter_mut().zip(xr.iter()).for_each(|(r, v)| *r = *v);
            self.eval_row(&row, o.as_slice_mut().expect("row-major"));
        }
        Ok(out)
    }
}

/// Reaction-diffusion on a 32 x 32 periodic grid over `[-1, 1]^2`, 246
/// states at dt 0.01; prior `(theta0 lap u, theta1 lap v)` with one offset
/// per channel.
pub fn reaction_diffusion(seed: u64, scale: f64) -> Result<DynamicProblem> {
    reaction_diffusion_with(seed, scaled_count(1920, scale), RD_GRID, 245)
}

/// Reaction-diffusion with explicit trajectory count, grid and horizon.
pub fn reaction_diffusion_with(seed: u64, n: usize, grid: usize, steps: usize) -> Result<DynamicProblem> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = 2 * grid * grid;
    let x0 = Array2::from_shape_fn((n, d), |_| rng.gen::<f64>());
    let f = ReactionDiffusion { grid, coef: RD_COEF };
    let truth = ParametricPrior::with_theta(rd_form(grid), vec![RD_COEF[0], RD_COEF[1]])?;
    let trajs = simulate(&f, x0, 0.01, steps)?;
    let [train, val, test] = split_trajectories(trajs, 0.01, Some((grid, grid)))?;
    Ok(DynamicProblem {
        id: "reaction_diffusion".into(),
        seed,
        train,
        val,
        test,
        truth,
        notes: vec![],
    })
}

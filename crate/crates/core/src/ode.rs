//! Fixed-step integration of autonomous systems `dx/dt = f(x)`.

use ndarray::{Array2, Array3, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::residual::Predictor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Euler,
    Rk4,
}

/// `dt` is the observation interval; each interval is split into
/// `substeps` integrator steps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegratorCfg {
    pub method: Method,
    pub dt: f64,
    pub substeps: usize,
}

impl IntegratorCfg {
    pub fn euler(dt: f64) -> Self {
        Self {
            method: Method::Euler,
            dt,
            substeps: 1,
        }
    }

    pub fn rk4(dt: f64, substeps: usize) -> Self {
        Self {
            method: Method::Rk4,
            dt,
            substeps,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || self.substeps == 0 {
            return Err(Error::config("integrator needs dt > 0 and >= 1 substep"));
        }
        Ok(())
    }
}

fn step(f: &dyn Predictor, x: &Array2<f64>, method: Method, h: f64) -> Result<Array2<f64>> {
    Ok(match method {
        Method::Euler => x + &(f.predict(x.view())? * h),
        Method::Rk4 => {
            let k1 = f.predict(x.view())?;
            let k2 = f.predict((x + &(&k1 * (0.5 * h))).view())?;
            let k3 = f.predict((x + &(&k2 * (0.5 * h))).view())?;
            let k4 = f.predict((x + &(&k3 * h)).view())?;
            x + &((k1 + (k2 + k3) * 2.0 + k4) * (h / 6.0))
        }
    })
}

/// Integrates a batch of initial states (rows of `x0`) and returns the
/// `(n_steps + 1, batch, d)` observed states.
pub fn integrate_batch(f: &dyn Predictor, x0: ArrayView2<'_, f64>, cfg: IntegratorCfg, n_steps: usize) -> Result<Array3<f64>> {
    cfg.validate()?;
    let (b, d) = x0.dim();
    if f.n_inputs() != d || f.n_outputs() != d {
        return Err(Error::config(format!("dynamics map {} -> {}, state has {d}", f.n_inputs(), f.n_outputs())));
    }
    let h = cfg.dt / cfg.substeps as f64;
    let mut out = Array3::zeros((n_steps + 1, b, d));
    let mut x = x0.to_owned();
    out.index_axis_mut(ndarray::Axis(0), 0).assign(&x);
    for t in 1..=n_steps {
        for _ in 0..cfg.substeps {
            x = step(f, &x, cfg.method, h)?;
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::diverged("integration", t));
        }
        out.index_axis_mut(ndarray::Axis(0), t).assign(&x);
    }
    Ok(out)
}

/// Single trajectory as an `(n_steps + 1) x d` matrix.
pub fn integrate(f: &dyn Predictor, x0: ArrayView1<'_, f64>, cfg: IntegratorCfg, n_steps: usize) -> Result<Array2<f64>> {
    let x0 = x0.insert_axis(ndarray::Axis(0));
    let traj = integrate_batch(f, x0, cfg, n_steps)?;
    Ok(traj.index_axis(ndarray::Axis(1), 0).to_owned())
}

//! Parametric priors `h_k(x_k; theta) + gamma` with analytic gradients.

use ndarray::{Array2, ArrayView2};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Algebraic family of a prior. Each variant fixes which inputs it reads and
/// how many parameters it has.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "snake_case")]
pub enum PriorForm {
    /// `theta0 * sin(theta1 * x0 * x1)`.
    FriedmanSine,
    /// `sum_j theta_j * x[known_j]`.
    Linear { known: Vec<usize> },
    /// `theta * x[index]^2`.
    Quadratic { index: usize },
    /// Log-state predator/prey: `(-theta * exp(q), 0)` on state `(p, q)`.
    LotkaVolterra,
    /// `(omega, -theta * sin(angle))` on state `(angle, omega)`.
    Pendulum,
    /// `(theta0 * lap(u), theta1 * lap(v))` on a periodic `height x width` grid.
    ReactionDiffusion {
        height: usize,
        width: usize,
        spacing: f64,
    },
    /// Always zero, no parameters. Used by data-driven baselines.
    Null { in_dim: usize, out_dim: usize },
}

impl PriorForm {
    pub fn id(&self) -> &'static str {
        match self {
            PriorForm::FriedmanSine => "friedman_sine",
            PriorForm::Linear { .. } => "linear",
            PriorForm::Quadratic { .. } => "quadratic",
            PriorForm::LotkaVolterra => "lotka_volterra",
            PriorForm::Pendulum => "pendulum",
            PriorForm::ReactionDiffusion { .. } => "reaction_diffusion",
            PriorForm::Null { .. } => "null",
        }
    }

    pub fn n_theta(&self) -> usize {
        match self {
            PriorForm::FriedmanSine => 2,
            PriorForm::Linear { known } => known.len(),
            PriorForm::Quadratic { .. } => 1,
            PriorForm::LotkaVolterra | PriorForm::Pendulum => 1,
            PriorForm::ReactionDiffusion { .. } => 2,
            PriorForm::Null { .. } => 0,
        }
    }

    pub fn out_dim(&self) -> usize {
        match self {
            PriorForm::FriedmanSine | PriorForm::Linear { .. } | PriorForm::Quadratic { .. } => 1,
            PriorForm::LotkaVolterra | PriorForm::Pendulum => 2,
            PriorForm::ReactionDiffusion { height, width, .. } => 2 * height * width,
            PriorForm::Null { out_dim, .. } => *out_dim,
        }
    }

    /// Number of offsets: one per output, or one per channel on a grid.
    pub fn n_gamma(&self) -> usize {
        match self {
            PriorForm::ReactionDiffusion { .. } => 2,
            _ => self.out_dim(),
        }
    }

    /// Smallest input width the form can read.
    pub fn min_in_dim(&self) -> usize {
        match self {
            PriorForm::Null { in_dim, .. } => *in_dim,
            PriorForm::ReactionDiffusion { .. } => self.out_dim(),
            _ => self.known_indices().iter().max().map_or(0, |m| m + 1),
        }
    }

    /// Inputs `x_k` the form depends on.
    pub fn known_indices(&self) -> Vec<usize> {
        match self {
            PriorForm::FriedmanSine => vec![0, 1],
            PriorForm::Linear { known } => known.clone(),
            PriorForm::Quadratic { index } => vec![*index],
            PriorForm::LotkaVolterra => vec![1],
            PriorForm::Pendulum => vec![0, 1],
            PriorForm::ReactionDiffusion { .. } => (0..self.out_dim()).collect(),
            PriorForm::Null { .. } => vec![],
        }
    }

    /// Inputs the parametric term depends on; partial dependence is taken
    /// with respect to these. Differs from [`Self::known_indices`] only when
    /// the form also passes an input through unparameterized.
    pub fn pd_indices(&self) -> Vec<usize> {
        match self {
            PriorForm::Pendulum => vec![0],
            _ => self.known_indices(),
        }
    }
}

/// A prior with its current parameters. `gamma` holds one offset per output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParametricPrior {
    pub form: PriorForm,
    pub theta: Vec<f64>,
    pub gamma: Vec<f64>,
}

impl ParametricPrior {
    pub fn new(form: PriorForm, theta: Vec<f64>, gamma: Vec<f64>) -> Result<Self> {
        if theta.len() != form.n_theta() {
            return Err(Error::shape(
                format!("{} theta entries for {}", form.n_theta(), form.id()),
                theta.len(),
            ));
        }
        if gamma.len() != form.n_gamma() {
            return Err(Error::shape(
                format!("{} gamma entries", form.n_gamma()),
                gamma.len(),
            ));
        }
        Ok(Self { form, theta, gamma })
    }

    /// Parameters `theta`, zero offset.
    pub fn with_theta(form: PriorForm, theta: Vec<f64>) -> Result<Self> {
        let gamma = vec![0.0; form.n_gamma()];
        Self::new(form, theta, gamma)
    }

    /// Random `theta` with zero offset: standard normal, except for the
    /// diffusion coefficients of the field prior, which are drawn from
    /// `U(0, 0.01)` so that explicit Euler at the observation step stays
    /// stable on the grid.
    pub fn random<R: Rng + ?Sized>(form: PriorForm, rng: &mut R) -> Self {
        let theta = match form {
            PriorForm::ReactionDiffusion { .. } => (0..form.n_theta()).map(|_| rng.gen_range(0.0..0.01)).collect(),
            _ => (0..form.n_theta()).map(|_| rng.sample(StandardNormal)).collect(),
        };
        let gamma = vec![0.0; form.n_gamma()];
        Self { form, theta, gamma }
    }

    pub fn null(in_dim: usize, out_dim: usize) -> Self {
        Self {
            form: PriorForm::Null { in_dim, out_dim },
            theta: vec![],
            gamma: vec![0.0; out_dim],
        }
    }

    /// Equivalent parameters in a canonical sign convention, so that
    /// parameter errors are not inflated by symmetries of the form
    /// (`a sin(b t) = -a sin(-b t)`).
    pub fn canonical(&self) -> Self {
        let mut out = self.clone();
        if self.form == PriorForm::FriedmanSine && self.theta[1] < 0.0 {
            out.theta.iter_mut().for_each(|t| *t = -*t);
        }
        out
    }

    pub fn is_null(&self) -> bool {
        matches!(self.form, PriorForm::Null { .. })
    }

    pub fn out_dim(&self) -> usize {
        self.form.out_dim()
    }

    pub fn known_indices(&self) -> Vec<usize> {
        self.form.known_indices()
    }

    /// Total trainable parameter count, `theta` then `gamma`.
    pub fn n_params(&self) -> usize {
        self.theta.len() + self.gamma.len()
    }

    pub fn params(&self) -> Vec<f64> {
        self.theta.iter().chain(&self.gamma).copied().collect()
    }

    pub fn set_params(&mut self, p: &[f64]) {
        let nt = self.theta.len();
        self.theta.copy_from_slice(&p[..nt]);
        self.gamma.copy_from_slice(&p[nt..]);
    }

    pub fn check_input(&self, in_dim: usize) -> Result<()> {
        let need = self.form.min_in_dim();
        let ok = match self.form {
            PriorForm::ReactionDiffusion { .. } | PriorForm::Null { .. } => in_dim == need,
            _ => in_dim >= need,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::config(format!(
                "prior {} needs {need} inputs, data has {in_dim}",
                self.form.id()
            )))
        }
    }

    /// `h_k(x)` without the offset.
    pub fn eval_known(&self, x: &[f64], out: &mut [f64]) {
        let th = &self.theta;
        match &self.form {
            PriorForm::FriedmanSine => out[0] = th[0] * (th[1] * x[0] * x[1]).sin(),
            PriorForm::Linear { known } => {
                out[0] = known.iter().zip(th).map(|(&k, t)| t * x[k]).sum();
            }
            PriorForm::Quadratic { index } => out[0] = th[0] * x[*index] * x[*index],
            PriorForm::LotkaVolterra => {
                out[0] = -th[0] * x[1].exp();
                out[1] = 0.0;
            }
            PriorForm::Pendulum => {
                out[0] = x[1];
                out[1] = -th[0] * x[0].sin();
            }
            PriorForm::ReactionDiffusion {
                height,
                width,
                spacing,
            } => {
                let cell = height * width;
                for c in 0..2 {
                    let field = &x[c * cell..(c + 1) * cell];
                    let o = &mut out[c * cell..(c + 1) * cell];
                    laplacian_periodic(field, *height, *width, *spacing, o);
                    o.iter_mut().for_each(|v| *v *= th[c]);
                }
            }
            PriorForm::Null { .. } => out.iter_mut().for_each(|v| *v = 0.0),
        }
    }

    /// `h_k(x) + gamma`.
    pub fn eval(&self, x: &[f64], out: &mut [f64]) {
        self.eval_known(x, out);
        if let PriorForm::ReactionDiffusion { height, width, .. } = self.form {
            let cell = height * width;
            for (c, chunk) in out.chunks_mut(cell).enumerate() {
                chunk.iter_mut().for_each(|v| *v += self.gamma[c]);
            }
        } else {
            out.iter_mut().zip(&self.gamma).for_each(|(o, g)| *o += g);
        }
    }

    /// Row-wise [`eval`](Self::eval).
    pub fn eval_batch(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        let mut out = Array2::zeros((x.nrows(), self.out_dim()));
        let mut buf = vec![0.0; x.ncols()];
        for (row, mut o) in x.rows().into_iter().zip(out.rows_mut()) {
            buf.iter_mut().zip(row.iter()).for_each(|(b, v)| *b = *v);
            self.eval(&buf, o.as_slice_mut().expect("standard layout"));
        }
        out
    }

    /// Row-wise `h_k` without offset.
    pub fn eval_known_batch(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        let mut out = Array2::zeros((x.nrows(), self.out_dim()));
        let mut buf = vec![0.0; x.ncols()];
        for (row, mut o) in x.rows().into_iter().zip(out.rows_mut()) {
            buf.iter_mut().zip(row.iter()).for_each(|(b, v)| *b = *v);
            self.eval_known(&buf, o.as_slice_mut().expect("standard layout"));
        }
        out
    }

    /// Accumulates `J_params^T g` into `grad` (layout: theta then gamma).
    pub fn vjp_params(&self, x: &[f64], g: &[f64], grad: &mut [f64]) {
        let th = &self.theta;
        let nt = th.len();
        match &self.form {
            PriorForm::FriedmanSine => {
                let u = x[0] * x[1];
                let (s, c) = (th[1] * u).sin_cos();
                grad[0] += g[0] * s;
                grad[1] += g[0] * th[0] * c * u;
            }
            PriorForm::Linear { known } => {
                for (j, &k) in known.iter().enumerate() {
                    grad[j] += g[0] * x[k];
                }
            }
            PriorForm::Quadratic { index } => grad[0] += g[0] * x[*index] * x[*index],
            PriorForm::LotkaVolterra => grad[0] -= g[0] * x[1].exp(),
            PriorForm::Pendulum => grad[0] -= g[1] * x[0].sin(),
            PriorForm::ReactionDiffusion {
                height,
                width,
                spacing,
            } => {
                let cell = height * width;
                let mut lap = vec![0.0; cell];
                for c in 0..2 {
                    laplacian_periodic(&x[c * cell..(c + 1) * cell], *height, *width, *spacing, &mut lap);
                    let gc = &g[c * cell..(c + 1) * cell];
                    grad[c] += lap.iter().zip(gc).map(|(l, g)| l * g).sum::<f64>();
                    grad[nt + c] += gc.iter().sum::<f64>();
                }
                return;
            }
            PriorForm::Null { .. } => return,
        }
        for (gg, gi) in grad[nt..].iter_mut().zip(g) {
            *gg += gi;
        }
    }

    /// Accumulates `J_x^T g` into `gx`.
    pub fn vjp_input(&self, x: &[f64], g: &[f64], gx: &mut [f64]) {
        let th = &self.theta;
        match &self.form {
            PriorForm::FriedmanSine => {
                let c = th[0] * (th[1] * x[0] * x[1]).cos() * th[1];
                gx[0] += g[0] * c * x[1];
                gx[1] += g[0] * c * x[0];
            }
            PriorForm::Linear { known } => {
                for (j, &k) in known.iter().enumerate() {
                    gx[k] += g[0] * th[j];
                }
            }
            PriorForm::Quadratic { index } => gx[*index] += g[0] * 2.0 * th[0] * x[*index],
            PriorForm::LotkaVolterra => gx[1] -= g[0] * th[0] * x[1].exp(),
            PriorForm::Pendulum => {
                gx[1] += g[0];
                gx[0] -= g[1] * th[0] * x[0].cos();
            }
            PriorForm::ReactionDiffusion {
                height,
                width,
                spacing,
            } => {
                // The periodic 5-point stencil is symmetric, so its adjoint is itself.
                let cell = height * width;
                let mut lap = vec![0.0; cell];
                for c in 0..2 {
                    laplacian_periodic(&g[c * cell..(c + 1) * cell], *height, *width, *spacing, &mut lap);
                    for (o, l) in gx[c * cell..(c + 1) * cell].iter_mut().zip(&lap) {
                        *o += th[c] * l;
                    }
                }
            }
            PriorForm::Null { .. } => {}
        }
    }
}

/// 5-point Laplacian on a `height x width` grid with periodic boundaries.
pub fn laplacian_periodic(field: &[f64], height: usize, width: usize, spacing: f64, out: &mut [f64]) {
    let inv = 1.0 / (spacing * spacing);
    for i in 0..height {
        let up = &field[if i == 0 { height - 1 } else { i - 1 } * width..][..width];
        let down = &field[if i + 1 == height { 0 } else { i + 1 } * width..][..width];
        let row = &field[i * width..][..width];
        let o = &mut out[i * width..][..width];
        for j in 0..width {
            let left = row[if j == 0 { width - 1 } else { j - 1 }];
            let right = row[if j + 1 == width { 0 } else { j + 1 }];
            o[j] = (up[j] + down[j] + left + right - 4.0 * row[j]) * inv;
        }
    }
}

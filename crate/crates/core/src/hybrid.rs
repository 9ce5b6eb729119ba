//! `h(x) = h_k(x_k) + gamma + h_a(x)`.

use ndarray::{Array1, Array2, ArrayView2};

use crate::error::Result;
use crate::prior::ParametricPrior;
use crate::residual::{Predictor, ResidualModel};

#[derive(Debug, Clone)]
pub struct HybridModel {
    pub prior: ParametricPrior,
    pub residual: ResidualModel,
}

impl HybridModel {
    pub fn new(prior: ParametricPrior, residual: ResidualModel) -> Result<Self> {
        prior.check_input(residual.n_inputs())?;
        Ok(Self { prior, residual })
    }

    pub fn predict_vec(&self, x: ArrayView2<'_, f64>) -> Result<Array1<f64>> {
        Ok(self.predict(x)?.column(0).to_owned())
    }
}

impl Predictor for HybridModel {
    fn n_inputs(&self) -> usize {
        self.residual.n_inputs()
    }

    fn n_outputs(&self) -> usize {
        self.prior.out_dim()
    }

    fn predict(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        let r = self.residual.predict(x)?;
        self.prior.check_input(x.ncols())?;
        Ok(self.prior.eval_batch(x) + r)
    }
}

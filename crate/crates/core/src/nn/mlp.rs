//! Fully connected networks with hand-written reverse-mode backprop.
//!
//! Parameters live in one flat vector (per layer: weights row-major
//! `out x in`, then biases) so optimizers, checkpoints and finite-difference
//! checks can treat every model the same way.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Relu,
    Identity,
}

impl Activation {
    fn apply(self, z: &mut Array2<f64>) {
        match self {
            Activation::Tanh => z.mapv_inplace(f64::tanh),
            Activation::Relu => z.mapv_inplace(|v| v.max(0.0)),
            Activation::Identity => {}
        }
    }

    /// Multiplies `g` by the derivative, expressed through the activated value.
    fn backprop(self, g: &mut Array2<f64>, activated: &Array2<f64>) {
        match self {
            Activation::Tanh => g.zip_mut_with(activated, |g, a| *g *= 1.0 - a * a),
            Activation::Relu => g.zip_mut_with(activated, |g, a| {
                if *a <= 0.0 {
                    *g = 0.0
                }
            }),
            Activation::Identity => {}
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub hidden_layers: usize,
    pub width: usize,
    pub activation: Activation,
    pub input_dim: usize,
    pub output_dim: usize,
}

impl MlpSpec {
    pub fn new(input_dim: usize, hidden_layers: usize, width: usize, output_dim: usize) -> Self {
        Self {
            hidden_layers,
            width,
            activation: Activation::Tanh,
            input_dim,
            output_dim,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden_layers == 0 || self.width == 0 {
            return Err(Error::config("MLP needs at least one hidden layer of width >= 1"));
        }
        if self.input_dim == 0 || self.output_dim == 0 {
            return Err(Error::config("MLP input and output dims must be positive"));
        }
        Ok(())
    }

    fn dims(&self) -> Vec<usize> {
        let mut d = vec![self.input_dim];
        d.extend(std::iter::repeat_n(self.width, self.hidden_layers));
        d.push(self.output_dim);
        d
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct LayerSlot {
    w: usize,
    b: usize,
    fan_in: usize,
    fan_out: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    spec: MlpSpec,
    params: Vec<f64>,
    layers: Vec<LayerSlot>,
}

/// Layer inputs recorded by [`Mlp::forward_cached`].
#[derive(Debug, Clone)]
pub struct MlpCache {
    inputs: Vec<Array2<f64>>,
}

impl Mlp {
    /// All-zero parameters.
    pub fn zeros(spec: MlpSpec) -> Result<Self> {
        spec.validate()?;
        let dims = spec.dims();
        let mut layers = Vec::with_capacity(dims.len() - 1);
        let mut off = 0;
        for w in dims.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            layers.push(LayerSlot {
                w: off,
                b: off + fan_in * fan_out,
                fan_in,
                fan_out,
            });
            off += fan_in * fan_out + fan_out;
        }
        Ok(Self {
            spec,
            params: vec![0.0; off],
            layers,
        })
    }

    /// Uniform `[-1/sqrt(fan_in), 1/sqrt(fan_in)]` initialization.
    pub fn new<R: Rng + ?Sized>(spec: MlpSpec, rng: &mut R) -> Result<Self> {
        let mut m = Self::zeros(spec)?;
        for l in m.layers.clone() {
            let bound = 1.0 / (l.fan_in as f64).sqrt();
            for p in &mut m.params[l.w..l.b + l.fan_out] {
                *p = rng.gen_range(-bound..bound);
            }
        }
        Ok(m)
    }

    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn set_params(&mut self, p: &[f64]) {
        self.params.copy_from_slice(p);
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    fn weights(&self, l: LayerSlot) -> ArrayView2<'_, f64> {
        ArrayView2::from_shape((l.fan_out, l.fan_in), &self.params[l.w..l.b]).expect("layout")
    }

    fn bias(&self, l: LayerSlot) -> ArrayView1<'_, f64> {
        ArrayView1::from(&self.params[l.b..l.b + l.fan_out])
    }

    fn check(&self, x: &ArrayView2<'_, f64>) -> Result<()> {
        if x.ncols() != self.spec.input_dim {
            return Err(Error::shape(format!("{} input columns", self.spec.input_dim), x.ncols()));
        }
        Ok(())
    }

    pub fn forward(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        self.check(&x)?;
        let last = self.layers.len() - 1;
        let mut a = x.to_owned();
        for (i, &l) in self.layers.iter().enumerate() {
            let mut z = a.dot(&self.weights(l).t()) + self.bias(l);
            if i < last {
                self.spec.activation.apply(&mut z);
            }
            a = z;
        }
        Ok(a)
    }

    pub fn forward_cached(&self, x: ArrayView2<'_, f64>) -> Result<(Array2<f64>, MlpCache)> {
        self.check(&x)?;
        let last = self.layers.len() - 1;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut a = x.to_owned();
        for (i, &l) in self.layers.iter().enumerate() {
            let mut z = a.dot(&self.weights(l).t()) + self.bias(l);
            if i < last {
                self.spec.activation.apply(&mut z);
            }
            inputs.push(std::mem::replace(&mut a, z));
        }
        Ok((a, MlpCache { inputs }))
    }

    /// Backpropagates `g_out` (d loss / d output). Parameter gradients are
    /// accumulated into `grad` when given; returns d loss / d input.
    pub fn backward(
        &self,
        cache: &MlpCache,
        g_out: ArrayView2<'_, f64>,
        mut grad: Option<&mut [f64]>,
    ) -> Array2<f64> {
        let mut g = g_out.to_owned();
        for (i, &l) in self.layers.iter().enumerate().rev() {
            let a_in = &cache.inputs[i];
            if let Some(grad) = grad.as_deref_mut() {
                let gw = g.t().dot(a_in);
                for (dst, src) in grad[l.w..l.b].iter_mut().zip(gw.iter()) {
                    *dst += src;
                }
                let gb: Array1<f64> = g.sum_axis(Axis(0));
                for (dst, src) in grad[l.b..l.b + l.fan_out].iter_mut().zip(gb.iter()) {
                    *dst += src;
                }
            }
            let mut g_in = g.dot(&self.weights(l));
            if i > 0 {
                self.spec.activation.backprop(&mut g_in, a_in);
            }
            g = g_in;
        }
        g
    }

    /// Mean squared error over all outputs and its parameter gradient.
    pub fn mse_and_grad(&self, x: ArrayView2<'_, f64>, y: ArrayView2<'_, f64>) -> Result<(f64, Vec<f64>)> {
        let (out, cache) = self.forward_cached(x)?;
        if out.dim() != y.dim() {
            return Err(Error::shape(format!("{:?}", out.dim()), format!("{:?}", y.dim())));
        }
        let diff = &out - &y;
        let n = diff.len() as f64;
        let loss = diff.iter().map(|d| d * d).sum::<f64>() / n;
        let g = diff * (2.0 / n);
        let mut grad = vec![0.0; self.n_params()];
        self.backward(&cache, g.view(), Some(&mut grad));
        Ok((loss, grad))
    }
}

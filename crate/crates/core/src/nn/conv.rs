//! 3x3 convolutions with circular padding on a periodic grid.
//!
//! States come in channel-major (`c * H * W + i * W + j`) rows. Internally a
//! batch is kept pixel-major, one row per `(sample, i, j)` and one column per
//! channel, so each layer is an im2col product followed by a GEMM.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::mlp::Activation;
use crate::error::{Error, Result};

const TAPS: usize = 9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvSpec {
    /// Number of conv layers (the last one is linear).
    pub layers: usize,
    pub hidden_channels: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    pub height: usize,
    pub width: usize,
    pub activation: Activation,
}

impl ConvSpec {
    pub fn new(in_channels: usize, layers: usize, hidden_channels: usize, out_channels: usize, height: usize, width: usize) -> Self {
        Self {
            layers,
            hidden_channels,
            in_channels,
            out_channels,
            height,
            width,
            activation: Activation::Tanh,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers == 0 || (self.layers > 1 && self.hidden_channels == 0) {
            return Err(Error::config("conv net needs >= 1 layer and >= 1 hidden channel"));
        }
        if self.height < 3 || self.width < 3 {
            return Err(Error::config("conv grid must be at least 3x3"));
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.in_channels * self.height * self.width
    }

    pub fn output_dim(&self) -> usize {
        self.out_channels * self.height * self.width
    }

    fn channels(&self) -> Vec<usize> {
        let mut c = vec![self.in_channels];
        c.extend(std::iter::repeat_n(self.hidden_channels, self.layers - 1));
        c.push(self.out_channels);
        c
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct ConvSlot {
    w: usize,
    b: usize,
    c_in: usize,
    c_out: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvNet {
    spec: ConvSpec,
    params: Vec<f64>,
    layers: Vec<ConvSlot>,
    /// For each pixel and tap, the flat index of the neighbour it reads.
    neighbours: Vec<usize>,
}

/// Pixel-major layer inputs recorded by [`ConvNet::forward_cached`].
#[derive(Debug, Clone)]
pub struct ConvCache {
    inputs: Vec<Array2<f64>>,
    batch: usize,
}

impl ConvNet {
    pub fn zeros(spec: ConvSpec) -> Result<Self> {
        spec.validate()?;
        let ch = spec.channels();
        let mut layers = Vec::new();
        let mut off = 0;
        for w in ch.windows(2) {
            let (c_in, c_out) = (w[0], w[1]);
            layers.push(ConvSlot {
                w: off,
                b: off + c_out * c_in * TAPS,
                c_in,
                c_out,
            });
            off += c_out * c_in * TAPS + c_out;
        }
        let (h, wd) = (spec.height, spec.width);
        let mut neighbours = Vec::with_capacity(h * wd * TAPS);
        for i in 0..h {
            for j in 0..wd {
                for di in 0..3 {
                    for dj in 0..3 {
                        let ii = (i + h + di - 1) % h;
                        let jj = (j + wd + dj - 1) % wd;
                        neighbours.push(ii * wd + jj);
                    }
                }
            }
        }
        Ok(Self {
            spec,
            params: vec![0.0; off],
            layers,
            neighbours,
        })
    }

    /// Uniform `[-1/sqrt(fan_in), 1/sqrt(fan_in)]` with `fan_in = 9 * c_in`.
    pub fn new<R: Rng + ?Sized>(spec: ConvSpec, rng: &mut R) -> Result<Self> {
        let mut net = Self::zeros(spec)?;
        for l in net.layers.clone() {
            let bound = 1.0 / ((l.c_in * TAPS) as f64).sqrt();
            for p in &mut net.params[l.w..l.b + l.c_out] {
                *p = rng.gen_range(-bound..bound);
            }
        }
        Ok(net)
    }

    pub fn spec(&self) -> &ConvSpec {
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

    fn weights(&self, l: ConvSlot) -> ArrayView2<'_, f64> {
        ArrayView2::from_shape((l.c_out, l.c_in * TAPS), &self.params[l.w..l.b]).expect("layout")
    }

    fn bias(&self, l: ConvSlot) -> ArrayView1<'_, f64> {
        ArrayView1::from(&self.params[l.b..l.b + l.c_out])
    }

    fn pixels(&self) -> usize {
        self.spec.height * self.spec.width
    }

    fn to_pixel_major(&self, x: ArrayView2<'_, f64>, channels: usize) -> Array2<f64> {
        let p = self.pixels();
        let mut out = Array2::zeros((x.nrows() * p, channels));
        for (b, row) in x.rows().into_iter().enumerate() {
            for c in 0..channels {
                for q in 0..p {
                    out[[b * p + q, c]] = row[c * p + q];
                }
            }
        }
        out
    }

    fn to_channel_major(&self, a: &Array2<f64>, batch: usize) -> Array2<f64> {
        let p = self.pixels();
        let channels = a.ncols();
        let mut out = Array2::zeros((batch, channels * p));
        for b in 0..batch {
            for q in 0..p {
                for c in 0..channels {
                    out[[b, c * p + q]] = a[[b * p + q, c]];
                }
            }
        }
        out
    }

    /// `(batch*pixels) x (9*c_in)` patch matrix, column `tap * c_in + c`.
    fn im2col(&self, a: &Array2<f64>, batch: usize) -> Array2<f64> {
        let p = self.pixels();
        let c_in = a.ncols();
        let src = a.as_slice().expect("standard layout");
        let mut cols = Vec::with_capacity(batch * p * c_in * TAPS);
        for b in 0..batch {
            for nb in self.neighbours.chunks_exact(TAPS) {
                for &n in nb {
                    let at = (b * p + n) * c_in;
                    cols.extend_from_slice(&src[at..at + c_in]);
                }
            }
        }
        Array2::from_shape_vec((batch * p, c_in * TAPS), cols).expect("patch layout")
    }

    fn col2im(&self, cols: &Array2<f64>, batch: usize, c_in: usize) -> Array2<f64> {
        let p = self.pixels();
        let mut out = Array2::zeros((batch * p, c_in));
        let src = cols.as_slice().expect("standard layout");
        let dst = out.as_slice_mut().expect("standard layout");
        let width = c_in * TAPS;
        for b in 0..batch {
            for (q, nb) in self.neighbours.chunks_exact(TAPS).enumerate() {
                let row = &src[(b * p + q) * width..(b * p + q + 1) * width];
                for (&n, taps) in nb.iter().zip(row.chunks_exact(c_in)) {
                    let at = (b * p + n) * c_in;
                    for (d, v) in dst[at..at + c_in].iter_mut().zip(taps) {
                        *d += v;
                    }
                }
            }
        }
        out
    }

    fn check(&self, x: &ArrayView2<'_, f64>) -> Result<()> {
        if x.ncols() != self.spec.input_dim() {
            return Err(Error::shape(format!("{} input columns", self.spec.input_dim()), x.ncols()));
        }
        Ok(())
    }

    pub fn forward(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        Ok(self.forward_cached(x)?.0)
    }

    pub fn forward_cached(&self, x: ArrayView2<'_, f64>) -> Result<(Array2<f64>, ConvCache)> {
        self.check(&x)?;
        let batch = x.nrows();
        let last = self.layers.len() - 1;
        let mut a = self.to_pixel_major(x, self.spec.in_channels);
        let mut inputs = Vec::with_capacity(self.layers.len());
        for (i, &l) in self.layers.iter().enumerate() {
            let cols = self.im2col(&a, batch);
            let mut z = cols.dot(&self.weights(l).t()) + self.bias(l);
            if i < last {
                apply(self.spec.activation, &mut z);
            }
            inputs.push(std::mem::replace(&mut a, z));
        }
        let out = self.to_channel_major(&a, batch);
        Ok((out, ConvCache { inputs, batch }))
    }

    /// Same contract as [`Mlp::backward`](super::Mlp::backward).
    pub fn backward(&self, cache: &ConvCache, g_out: ArrayView2<'_, f64>, mut grad: Option<&mut [f64]>) -> Array2<f64> {
        let batch = cache.batch;
        let mut g = self.to_pixel_major(g_out, self.spec.out_channels);
        for (i, &l) in self.layers.iter().enumerate().rev() {
            let a_in = &cache.inputs[i];
            let cols = self.im2col(a_in, batch);
            if let Some(grad) = grad.as_deref_mut() {
                let gw = g.t().dot(&cols);
                for (dst, src) in grad[l.w..l.b].iter_mut().zip(gw.iter()) {
                    *dst += src;
                }
                let gb: Array1<f64> = g.sum_axis(Axis(0));
                for (dst, src) in grad[l.b..l.b + l.c_out].iter_mut().zip(gb.iter()) {
                    *dst += src;
                }
            }
            let g_cols = g.dot(&self.weights(l));
            let mut g_in = self.col2im(&g_cols, batch, l.c_in);
            if i > 0 {
                backprop(self.spec.activation, &mut g_in, a_in);
            }
            g = g_in;
        }
        self.to_channel_major(&g, batch)
    }
}

fn apply(act: Activation, z: &mut Array2<f64>) {
    match act {
        Activation::Tanh => z.mapv_inplace(f64::tanh),
        Activation::Relu => z.mapv_inplace(|v| v.max(0.0)),
        Activation::Identity => {}
    }
}

fn backprop(act: Activation, g: &mut Array2<f64>, a: &Array2<f64>) {
    match act {
        Activation::Tanh => g.zip_mut_with(a, |g, a| *g *= 1.0 - a * a),
        Activation::Relu => g.zip_mut_with(a, |g, a| {
            if *a <= 0.0 {
                *g = 0.0
            }
        }),
        Activation::Identity => {}
    }
}

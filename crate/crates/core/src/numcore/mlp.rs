//! Dense feed-forward network with leaky-ReLU hidden layers and a linear
//! output layer, plus hand-derived reverse-mode gradients.

use crate::error::{Error, Result};
use crate::numcore::{Matrix, Rng};

/// Negative slope of the hidden-layer leaky ReLU.
pub const LEAKY_SLOPE: f64 = 0.2;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    LeakyRelu,
    Linear,
}

impl Activation {
    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::LeakyRelu => leaky_relu(z),
            Activation::Linear => z,
        }
    }

    #[inline]
    fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::LeakyRelu => {
                if z > 0.0 {
                    1.0
                } else {
                    LEAKY_SLOPE
                }
            }
            Activation::Linear => 1.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::LeakyRelu => "leaky_relu",
            Activation::Linear => "linear",
        }
    }
}

#[inline]
pub fn leaky_relu(z: f64) -> f64 {
    if z > 0.0 {
        z
    } else {
        LEAKY_SLOPE * z
    }
}

/// One affine layer: `y = x · weight + bias`, `weight` shaped `(fan_in, fan_out)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

/// Network weights. Also used as the gradient container.
#[derive(Clone, Debug, PartialEq)]
pub struct Params {
    layer_sizes: Vec<usize>,
    pub layers: Vec<Dense>,
    pub hidden_activation: Activation,
    pub output_activation: Activation,
}

/// Per-layer inputs and pre-activations from [`Params::forward`].
#[derive(Clone, Debug)]
pub struct MlpCache {
    layer_sizes: Vec<usize>,
    inputs: Vec<Matrix>,
    pre: Vec<Matrix>,
}

impl MlpCache {
    pub fn batch(&self) -> usize {
        self.inputs.first().map_or(0, Matrix::rows)
    }
}

impl Params {
    /// He-style init: `N(0, 2/fan_in)` weights, zero biases.
    pub fn init(layer_sizes: &[usize], rng: &mut Rng) -> Result<Self> {
        let mut p = Self::zeros(layer_sizes)?;
        for layer in &mut p.layers {
            let std = (2.0 / layer.weight.rows() as f64).sqrt();
            for w in layer.weight.data_mut() {
                *w = std * rng.normal();
            }
        }
        Ok(p)
    }

    pub fn zeros(layer_sizes: &[usize]) -> Result<Self> {
        if layer_sizes.len() < 2 {
            return Err(Error::Config(format!(
                "an MLP needs at least an input and an output width, got {layer_sizes:?}"
            )));
        }
        if layer_sizes.contains(&0) {
            return Err(Error::Config(format!(
                "layer widths must be positive, got {layer_sizes:?}"
            )));
        }
        let layers = layer_sizes
            .windows(2)
            .map(|w| Dense {
                weight: Matrix::zeros(w[0], w[1]),
                bias: vec![0.0; w[1]],
            })
            .collect();
        Ok(Self {
            layer_sizes: layer_sizes.to_vec(),
            layers,
            hidden_activation: Activation::LeakyRelu,
            output_activation: Activation::Linear,
        })
    }

    pub fn zeros_like(&self) -> Self {
        let mut p = Self::zeros(&self.layer_sizes).expect("sizes already validated");
        p.hidden_activation = self.hidden_activation;
        p.output_activation = self.output_activation;
        p
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    pub fn num_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weight.data().len() + l.bias.len())
            .sum()
    }

    #[inline]
    fn activation_for(&self, layer: usize) -> Activation {
        if layer + 1 == self.layers.len() {
            self.output_activation
        } else {
            self.hidden_activation
        }
    }

    /// Flattened view, layer by layer (weights then bias).
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for l in &self.layers {
            out.extend_from_slice(l.weight.data());
            out.extend_from_slice(&l.bias);
        }
        out
    }

    pub fn set_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.num_params() {
            return Err(Error::dim("Params::set_flat", self.num_params(), flat.len()));
        }
        let mut off = 0;
        for l in &mut self.layers {
            let n = l.weight.data().len();
            l.weight.data_mut().copy_from_slice(&flat[off..off + n]);
            off += n;
            let n = l.bias.len();
            l.bias.copy_from_slice(&flat[off..off + n]);
            off += n;
        }
        Ok(())
    }

    pub fn add_assign(&mut self, other: &Params) -> Result<()> {
        if self.layer_sizes != other.layer_sizes {
            return Err(Error::dim(
                "Params::add_assign",
                format!("{:?}", self.layer_sizes),
                format!("{:?}", other.layer_sizes),
            ));
        }
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.weight.add_assign(&b.weight)?;
            for (x, y) in a.bias.iter_mut().zip(&b.bias) {
                *x += y;
            }
        }
        Ok(())
    }

    pub fn scale(&mut self, s: f64) {
        for l in &mut self.layers {
            l.weight.scale(s);
            l.bias.iter_mut().for_each(|b| *b *= s);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weight.is_finite() && l.bias.iter().all(|b| b.is_finite()))
    }

    /// Batched forward pass, keeping what backprop needs.
    pub fn forward(&self, x: &Matrix) -> Result<(Matrix, MlpCache)> {
        if x.cols() != self.input_dim() {
            return Err(Error::dim("mlp forward input", self.input_dim(), x.cols()));
        }
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut a = x.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = a.matmul(&layer.weight)?;
            add_bias(&mut z, &layer.bias);
            let act = self.activation_for(i);
            let mut out = z.clone();
            if act != Activation::Linear {
                out.data_mut().iter_mut().for_each(|v| *v = act.apply(*v));
            }
            inputs.push(a);
            pre.push(z);
            a = out;
        }
        Ok((
            a,
            MlpCache {
                layer_sizes: self.layer_sizes.clone(),
                inputs,
                pre,
            },
        ))
    }

    /// Forward pass without a cache.
    pub fn predict(&self, x: &Matrix) -> Result<Matrix> {
        if x.cols() != self.input_dim() {
            return Err(Error::dim("mlp predict input", self.input_dim(), x.cols()));
        }
        let mut a = x.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = a.matmul(&layer.weight)?;
            add_bias(&mut z, &layer.bias);
            let act = self.activation_for(i);
            if act != Activation::Linear {
                z.data_mut().iter_mut().for_each(|v| *v = act.apply(*v));
            }
            a = z;
        }
        Ok(a)
    }

    /// Single-row forward pass.
    pub fn predict_row(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_dim() {
            return Err(Error::dim("mlp predict input", self.input_dim(), x.len()));
        }
        let mut a = x.to_vec();
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = layer.bias.clone();
            let w = &layer.weight;
            for (k, &av) in a.iter().enumerate() {
                for (zv, &wv) in z.iter_mut().zip(w.row(k)) {
                    *zv += av * wv;
                }
            }
            let act = self.activation_for(i);
            if act != Activation::Linear {
                z.iter_mut().for_each(|v| *v = act.apply(*v));
            }
            a = z;
        }
        Ok(a)
    }

    /// Reverse pass: given `dL/dy`, returns `(dL/dθ, dL/dx)`.
    pub fn backward(&self, cache: &MlpCache, grad_y: &Matrix) -> Result<(Params, Matrix)> {
        if cache.layer_sizes != self.layer_sizes || cache.inputs.len() != self.layers.len() {
            return Err(Error::Internal(
                "cache was produced by a network with a different layout".into(),
            ));
        }
        if grad_y.shape() != (cache.batch(), self.output_dim()) {
            return Err(Error::dim(
                "mlp backward grad_y",
                format!("({}, {})", cache.batch(), self.output_dim()),
                format!("{:?}", grad_y.shape()),
            ));
        }
        let mut grads = self.zeros_like();
        let mut g = grad_y.clone();
        for i in (0..self.layers.len()).rev() {
            let act = self.activation_for(i);
            if act != Activation::Linear {
                for (gv, &z) in g.data_mut().iter_mut().zip(cache.pre[i].data()) {
                    *gv *= act.derivative(z);
                }
            }
            grads.layers[i].weight = cache.inputs[i].matmul_tn(&g)?;
            let bias = &mut grads.layers[i].bias;
            for row in g.iter_rows() {
                for (b, v) in bias.iter_mut().zip(row) {
                    *b += v;
                }
            }
            g = g.matmul_nt(&self.layers[i].weight)?;
        }
        Ok((grads, g))
    }
}

fn add_bias(z: &mut Matrix, bias: &[f64]) {
    let cols = z.cols();
    if cols == 0 {
        return;
    }
    for row in z.data_mut().chunks_exact_mut(cols) {
        for (v, b) in row.iter_mut().zip(bias) {
            *v += b;
        }
    }
}

//! Feed-forward network core: forward pass and exact reverse-mode gradients.
//!
//! Networks are dense MLPs with rectified-linear hidden activations and an
//! identity output layer. All arithmetic is `f64`. The gradient path is
//! deliberately narrow: reverse mode for scalar batch losses that are
//! expressed through per-sample output gradients, which is all the masked
//! TD-losses in this crate need.

use crate::error::{Error, Result};
use crate::nn::rng::RngStream;

/// Weight initialisation scheme.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitScheme {
    /// Uniform on `[-sqrt(6/fan_in), sqrt(6/fan_in)]`; weight variance 2/fan_in.
    HeUniform,
    /// Uniform on `[-scale, scale]`.
    FixedScale(f64),
}

/// One dense layer: row-major `out x in` weights plus a bias vector.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub rows: usize,
    pub cols: usize,
}

impl LayerParams {
    fn zeros(rows: usize, cols: usize) -> Self {
        LayerParams {
            weights: vec![0.0; rows * cols],
            bias: vec![0.0; rows],
            rows,
            cols,
        }
    }

    #[inline]
    pub fn weight(&self, row: usize, col: usize) -> f64 {
        self.weights[row * self.cols + col]
    }
}

/// Parameters of a full network. Hidden layers use ReLU, the output layer is
/// linear. The ReLU subgradient at exactly zero is taken to be zero.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    pub layers: Vec<LayerParams>,
}

/// Gradient (or any co-shaped accumulator) for [`MlpParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct MlpGrad {
    pub layers: Vec<LayerParams>,
}

/// Intermediate activations kept for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// `inputs[0]` is the network input; `inputs[l]` the input of layer `l`.
    inputs: Vec<Vec<f64>>,
    /// Pre-activation values of every layer.
    pre: Vec<Vec<f64>>,
}

impl ForwardCache {
    pub fn output(&self) -> &[f64] {
        self.pre.last().expect("cache of an empty network")
    }
}

impl MlpParams {
    /// Initialise a network for the given layer sizes.
    ///
    /// `layer_sizes[0]` is the input width, the last entry the number of
    /// outputs. Weights follow `scheme`; biases start at zero.
    pub fn init(layer_sizes: &[usize], rng: &mut RngStream, scheme: InitScheme) -> Result<Self> {
        if layer_sizes.len() < 2 {
            return Err(Error::invalid("need at least an input and an output size"));
        }
        if layer_sizes.iter().any(|&s| s == 0) {
            return Err(Error::invalid("layer sizes must be positive"));
        }
        let mut layers = Vec::with_capacity(layer_sizes.len() - 1);
        for w in layer_sizes.windows(2) {
            let (cols, rows) = (w[0], w[1]);
            let mut layer = LayerParams::zeros(rows, cols);
            let limit = match scheme {
                InitScheme::HeUniform => (6.0 / cols as f64).sqrt(),
                InitScheme::FixedScale(s) => s,
            };
            for v in layer.weights.iter_mut() {
                *v = rng.uniform_range(-limit, limit);
            }
            layers.push(layer);
        }
        Ok(MlpParams { layers })
    }

    /// All-zero network with the same architecture as `self`.
    pub fn zeros_like(&self) -> MlpGrad {
        MlpGrad {
            layers: self
                .layers
                .iter()
                .map(|l| LayerParams::zeros(l.rows, l.cols))
                .collect(),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].cols
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("empty network").rows
    }

    pub fn num_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum()
    }

    /// Forward pass. Exploits sparsity of the input vector (observations in
    /// this crate are one-hot), which does not change the result bit-wise
    /// because skipped terms are exact zeros.
    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        if input.len() != self.input_dim() {
            return Err(Error::invalid(format!(
                "input length {} does not match first layer width {}",
                input.len(),
                self.input_dim()
            )));
        }
        let mut act = layer_apply(&self.layers[0], input);
        for layer in &self.layers[1..] {
            relu_inplace(&mut act);
            act = layer_apply(layer, &act);
        }
        Ok(act)
    }

    /// Forward pass that retains activations for [`MlpParams::backward`].
    pub fn forward_cached(&self, input: &[f64]) -> Result<ForwardCache> {
        if input.len() != self.input_dim() {
            return Err(Error::invalid("input length does not match first layer"));
        }
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut cur = input.to_vec();
        for (i, layer) in self.layers.iter().enumerate() {
            if i > 0 {
                relu_inplace(&mut cur);
            }
            let out = layer_apply(layer, &cur);
            inputs.push(cur);
            pre.push(out.clone());
            cur = out;
        }
        Ok(ForwardCache { inputs, pre })
    }

    /// Accumulate into `grad` the gradient of `sum(output * output_grad)`
    /// with respect to the parameters, for the sample recorded in `cache`.
    pub fn backward(&self, cache: &ForwardCache, output_grad: &[f64], grad: &mut MlpGrad) {
        let depth = self.layers.len();
        let mut delta = output_grad.to_vec();
        for l in (0..depth).rev() {
            let layer = &self.layers[l];
            let g = &mut grad.layers[l];
            let input = &cache.inputs[l];
            // Parameter gradients for this layer.
            for (row, &d) in delta.iter().enumerate() {
                if d == 0.0 {
                    g.bias[row] += d;
                    continue;
                }
                g.bias[row] += d;
                let wrow = &mut g.weights[row * g.cols..(row + 1) * g.cols];
                for (col, &x) in input.iter().enumerate() {
                    if x != 0.0 {
                        wrow[col] += d * x;
                    }
                }
            }
            if l == 0 {
                break;
            }
            // Propagate to the previous layer through W^T and the ReLU mask.
            let prev_pre = &cache.pre[l - 1];
            let mut next = vec![0.0; layer.cols];
            for (row, &d) in delta.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                let wrow = &layer.weights[row * layer.cols..(row + 1) * layer.cols];
                for (col, nx) in next.iter_mut().enumerate() {
                    *nx += d * wrow[col];
                }
            }
            for (nx, &p) in next.iter_mut().zip(prev_pre.iter()) {
                if p <= 0.0 {
                    *nx = 0.0;
                }
            }
            delta = next;
        }
    }

    /// In-place `self += scale * grad`.
    pub fn add_scaled(&mut self, grad: &MlpGrad, scale: f64) {
        for (l, g) in self.layers.iter_mut().zip(grad.layers.iter()) {
            for (w, gw) in l.weights.iter_mut().zip(g.weights.iter()) {
                *w += scale * gw;
            }
            for (b, gb) in l.bias.iter_mut().zip(g.bias.iter()) {
                *b += scale * gb;
            }
        }
    }

    pub fn all_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(l.bias.iter()).all(|v| v.is_finite()))
    }

    /// Iterate over every parameter value.
    pub fn iter(&self) -> impl Iterator<Item = &f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(l.bias.iter()))
    }

    /// Mutable access to the flat parameter vector, used by the optimizer
    /// and by finite-difference probes in tests.
    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.weights.iter_mut().chain(l.bias.iter_mut()))
    }
}

impl MlpGrad {
    pub fn iter(&self) -> impl Iterator<Item = &f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(l.bias.iter()))
    }

    pub fn scale(&mut self, s: f64) {
        for l in self.layers.iter_mut() {
            for v in l.weights.iter_mut().chain(l.bias.iter_mut()) {
                *v *= s;
            }
        }
    }
}

/// Gradient of a batch loss expressed through per-sample output gradients.
///
/// For each `(input, dloss_doutput)` pair the contribution of that sample is
/// accumulated; the result is the exact reverse-mode gradient of the batch
/// loss with respect to every parameter.
pub fn mlp_grad(params: &MlpParams, batch: &[(&[f64], &[f64])]) -> Result<MlpGrad> {
    let mut grad = params.zeros_like();
    for (input, output_grad) in batch {
        let cache = params.forward_cached(input)?;
        params.backward(&cache, output_grad, &mut grad);
    }
    Ok(grad)
}

#[inline]
fn relu_inplace(v: &mut [f64]) {
    for x in v.iter_mut() {
        if *x < 0.0 {
            *x = 0.0;
        }
    }
}

/// `W x + b`, skipping exactly-zero input entries.
fn layer_apply(layer: &LayerParams, input: &[f64]) -> Vec<f64> {
    let mut out = layer.bias.clone();
    for (col, &x) in input.iter().enumerate() {
        if x == 0.0 {
            continue;
        }
        for (row, o) in out.iter_mut().enumerate() {
            *o += layer.weights[row * layer.cols + col] * x;
        }
    }
    out
}

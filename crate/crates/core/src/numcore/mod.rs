//! Small dense-network engine: fully connected layers with relu or identity
//! activations, exact backpropagation for squared loss, uniform fan-in
//! initialization and momentum SGD.
//!
//! Everything is `f64`. Parameters live in flat row-major buffers so that the
//! optimizer, the perturbation analysis and the checkpoint writer can treat a
//! model as a list of tensors (see [`Parameters`]).

mod optim;

pub use optim::{clip_elems, sgd_step, OptState, Parameters};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Identity,
}

impl Activation {
    #[inline]
    fn apply(self, v: f64) -> f64 {
        match self {
            Activation::Relu => v.max(0.0),
            Activation::Identity => v,
        }
    }

    #[inline]
    fn derivative(self, pre: f64) -> f64 {
        match self {
            Activation::Relu => {
                if pre > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }
}

/// Affine map followed by an activation. `weights` is `fan_out x fan_in`,
/// row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    pub fan_in: usize,
    pub fan_out: usize,
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
    pub activation: Activation,
}

impl DenseLayer {
    pub fn zeros(fan_in: usize, fan_out: usize, activation: Activation) -> Self {
        Self {
            fan_in,
            fan_out,
            weights: vec![0.0; fan_in * fan_out],
            biases: vec![0.0; fan_out],
            activation,
        }
    }

    pub fn weight(&self, row: usize, col: usize) -> f64 {
        self.weights[row * self.fan_in + col]
    }

    /// Every weight and bias drawn from `U[-sqrt(1/M), sqrt(1/M)]`, `M = fan_in`.
    pub fn init_uniform<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        let bound = (1.0 / self.fan_in as f64).sqrt();
        for v in self.weights.iter_mut().chain(self.biases.iter_mut()) {
            *v = rng.random_range(-bound..=bound);
        }
    }

    fn forward_into(&self, x: &[f64], pre: &mut Vec<f64>, out: &mut Vec<f64>) {
        pre.clear();
        out.clear();
        for (row, b) in self.weights.chunks_exact(self.fan_in).zip(&self.biases) {
            let z = b + dot(row, x);
            pre.push(z);
            out.push(self.activation.apply(z));
        }
    }

    fn check(&self) -> Result<()> {
        if self.weights.len() != self.fan_in * self.fan_out || self.biases.len() != self.fan_out {
            return Err(Error::Shape(format!(
                "layer {}x{} holds {} weights and {} biases",
                self.fan_out,
                self.fan_in,
                self.weights.len(),
                self.biases.len()
            )));
        }
        Ok(())
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for i in 0..chunks {
        let k = 4 * i;
        acc[0] += a[k] * b[k];
        acc[1] += a[k + 1] * b[k + 1];
        acc[2] += a[k + 2] * b[k + 2];
        acc[3] += a[k + 3] * b[k + 3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for k in 4 * chunks..a.len() {
        s += a[k] * b[k];
    }
    s
}

/// Ordered stack of dense layers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    pub layers: Vec<DenseLayer>,
}

/// Per-layer inputs and pre-activations recorded by [`Network::forward`].
#[derive(Debug, Clone)]
pub struct ForwardCache {
    inputs: Vec<Vec<f64>>,
    pre: Vec<Vec<f64>>,
    output: Vec<f64>,
}

impl ForwardCache {
    pub fn output(&self) -> &[f64] {
        &self.output
    }

    pub fn input(&self) -> &[f64] {
        &self.inputs[0]
    }
}

impl Network {
    pub fn new(layers: Vec<DenseLayer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Shape("network needs at least one layer".into()));
        }
        for layer in &layers {
            layer.check()?;
        }
        for (k, pair) in layers.windows(2).enumerate() {
            if pair[0].fan_out != pair[1].fan_in {
                return Err(Error::Shape(format!(
                    "layer {k} outputs {} values but layer {} expects {}",
                    pair[0].fan_out,
                    k + 1,
                    pair[1].fan_in
                )));
            }
        }
        Ok(Self { layers })
    }

    /// Zero-initialized MLP over `dims` (input, hidden..., output). Hidden
    /// layers use `hidden`, the last layer uses `last`.
    pub fn mlp(dims: &[usize], hidden: Activation, last: Activation) -> Self {
        assert!(dims.len() >= 2, "an MLP needs an input and an output width");
        let n = dims.len() - 1;
        let layers = (0..n)
            .map(|k| {
                let act = if k + 1 == n { last } else { hidden };
                DenseLayer::zeros(dims[k], dims[k + 1], act)
            })
            .collect();
        Self { layers }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].fan_in
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].fan_out
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.biases.len()).sum()
    }

    pub fn init_uniform<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        for layer in &mut self.layers {
            layer.init_uniform(rng);
        }
    }

    /// Same architecture, all parameters zero. Used as a gradient accumulator.
    pub fn zeros_like(&self) -> Self {
        Self {
            layers: self
                .layers
                .iter()
                .map(|l| DenseLayer::zeros(l.fan_in, l.fan_out, l.activation))
                .collect(),
        }
    }

    pub fn fill(&mut self, value: f64) {
        for layer in &mut self.layers {
            layer.weights.fill(value);
            layer.biases.fill(value);
        }
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(Error::Shape(format!(
                "network expects {} inputs, got {}",
                self.input_dim(),
                x.len()
            )));
        }
        Ok(())
    }

    pub fn forward(&self, x: &[f64]) -> Result<ForwardCache> {
        self.check_input(x)?;
        Ok(self.forward_unchecked(x))
    }

    pub(crate) fn forward_unchecked(&self, x: &[f64]) -> ForwardCache {
        let n = self.layers.len();
        let mut inputs = Vec::with_capacity(n);
        let mut pre = Vec::with_capacity(n);
        let mut current = x.to_vec();
        for layer in &self.layers {
            let mut z = Vec::with_capacity(layer.fan_out);
            let mut a = Vec::with_capacity(layer.fan_out);
            layer.forward_into(&current, &mut z, &mut a);
            inputs.push(current);
            pre.push(z);
            current = a;
        }
        ForwardCache {
            inputs,
            pre,
            output: current,
        }
    }

    /// Forward pass without keeping a cache.
    pub fn predict(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        Ok(self.predict_unchecked(x))
    }

    pub(crate) fn predict_unchecked(&self, x: &[f64]) -> Vec<f64> {
        let mut current = x.to_vec();
        let mut pre = Vec::new();
        let mut next = Vec::new();
        for layer in &self.layers {
            layer.forward_into(&current, &mut pre, &mut next);
            std::mem::swap(&mut current, &mut next);
        }
        current
    }

    /// Backpropagates `d_out` (gradient of the loss w.r.t. the network output)
    /// through the cached pass.
    ///
    /// Parameter gradients are added into `grads` when given; a frozen network
    /// passes `None` and only propagates. Returns the gradient w.r.t. the
    /// network input when `need_input_grad` is set.
    pub fn backward(
        &self,
        cache: &ForwardCache,
        d_out: &[f64],
        mut grads: Option<&mut Network>,
        need_input_grad: bool,
    ) -> Result<Option<Vec<f64>>> {
        if cache.pre.len() != self.layers.len()
            || cache
                .pre
                .iter()
                .zip(&self.layers)
                .any(|(p, l)| p.len() != l.fan_out || cache.inputs.len() != self.layers.len())
        {
            return Err(Error::Shape("forward cache does not belong to this network".into()));
        }
        if d_out.len() != self.output_dim() {
            return Err(Error::Shape(format!(
                "output gradient has {} entries, network outputs {}",
                d_out.len(),
                self.output_dim()
            )));
        }
        if let Some(g) = grads.as_deref() {
            if g.layers.len() != self.layers.len() {
                return Err(Error::Shape("gradient accumulator has a different depth".into()));
            }
        }

        let mut delta: Vec<f64> = d_out.to_vec();
        let mut d_input = Vec::new();
        for k in (0..self.layers.len()).rev() {
            let layer = &self.layers[k];
            for (d, &z) in delta.iter_mut().zip(&cache.pre[k]) {
                *d *= layer.activation.derivative(z);
            }
            let input = &cache.inputs[k];
            if let Some(g) = grads.as_deref_mut() {
                let gl = &mut g.layers[k];
                for ((grow, gb), &d) in gl
                    .weights
                    .chunks_exact_mut(layer.fan_in)
                    .zip(gl.biases.iter_mut())
                    .zip(&delta)
                {
                    if d == 0.0 {
                        continue;
                    }
                    *gb += d;
                    for (gw, &xi) in grow.iter_mut().zip(input) {
                        *gw += d * xi;
                    }
                }
            }
            if k == 0 && !need_input_grad {
                return Ok(None);
            }
            d_input.clear();
            d_input.resize(layer.fan_in, 0.0);
            for (row, &d) in layer.weights.chunks_exact(layer.fan_in).zip(&delta) {
                if d == 0.0 {
                    continue;
                }
                for (di, &wv) in d_input.iter_mut().zip(row) {
                    *di += d * wv;
                }
            }
            std::mem::swap(&mut delta, &mut d_input);
        }
        Ok(Some(delta))
    }

    /// Gradients of `sum_k (y_k - yhat_k)^2` for one sample: parameter
    /// gradients and the gradient w.r.t. the input.
    pub fn backward_sq(&self, cache: &ForwardCache, y_true: &[f64]) -> Result<(Network, Vec<f64>)> {
        if y_true.len() != cache.output.len() {
            return Err(Error::Shape(format!(
                "{} targets for {} outputs",
                y_true.len(),
                cache.output.len()
            )));
        }
        let d_out: Vec<f64> = cache.output.iter().zip(y_true).map(|(yh, y)| 2.0 * (yh - y)).collect();
        let mut grads = self.zeros_like();
        let dx = self
            .backward(cache, &d_out, Some(&mut grads), true)?
            .expect("input gradient requested");
        Ok((grads, dx))
    }
}

impl Parameters for Network {
    fn tensors(&self) -> Vec<(&[f64], bool)> {
        self.layers
            .iter()
            .flat_map(|l| [(l.weights.as_slice(), true), (l.biases.as_slice(), true)])
            .collect()
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers
            .iter_mut()
            .flat_map(|l| [l.weights.as_mut_slice(), l.biases.as_mut_slice()])
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn single(w: f64, b: f64, act: Activation) -> Network {
        Network::new(vec![DenseLayer {
            fan_in: 1,
            fan_out: 1,
            weights: vec![w],
            biases: vec![b],
            activation: act,
        }])
        .unwrap()
    }

    #[test]
    fn identity_layer_passes_input_through() {
        let mut layer = DenseLayer::zeros(3, 3, Activation::Identity);
        for i in 0..3 {
            layer.weights[i * 3 + i] = 1.0;
        }
        let net = Network::new(vec![layer]).unwrap();
        let x = [0.5, -2.0, 7.0];
        assert_eq!(net.predict(&x).unwrap(), x.to_vec());
    }

    #[test]
    fn zero_relu_network_outputs_zero() {
        let net = Network::mlp(&[4, 3, 2], Activation::Relu, Activation::Relu);
        assert_eq!(net.predict(&[1.0, -1.0, 3.0, 2.0]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn hand_evaluated_relu_unit() {
        let net = single(2.0, -1.0, Activation::Relu);
        assert_eq!(net.predict(&[1.0]).unwrap(), vec![1.0]);
    }

    #[test]
    fn squared_loss_gradient_by_hand() {
        let net = single(1.0, 0.0, Activation::Identity);
        let cache = net.forward(&[1.0]).unwrap();
        let (g, dx) = net.backward_sq(&cache, &[0.0]).unwrap();
        assert_eq!(g.layers[0].weights[0], 2.0);
        assert_eq!(g.layers[0].biases[0], 2.0);
        assert_eq!(dx, vec![2.0]);
    }

    #[test]
    fn perfect_prediction_has_zero_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut net = Network::mlp(&[3, 4, 1], Activation::Relu, Activation::Identity);
        net.init_uniform(&mut rng);
        let x = [0.3, -0.2, 0.9];
        let cache = net.forward(&x).unwrap();
        let y = cache.output().to_vec();
        let (g, dx) = net.backward_sq(&cache, &y).unwrap();
        assert!(g.tensors().iter().all(|(t, _)| t.iter().all(|&v| v == 0.0)));
        assert!(dx.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn init_respects_fan_in_bound_and_seed() {
        let mut a = Network::mlp(&[40, 7], Activation::Relu, Activation::Identity);
        let mut b = a.clone();
        a.init_uniform(&mut ChaCha8Rng::seed_from_u64(5));
        b.init_uniform(&mut ChaCha8Rng::seed_from_u64(5));
        assert_eq!(a, b);
        let bound = (1.0f64 / 40.0).sqrt();
        assert!((bound - 0.158114).abs() < 1e-6);
        assert!(a.tensors().iter().all(|(t, _)| t.iter().all(|v| v.abs() <= bound)));

        let mut one = Network::mlp(&[1, 50], Activation::Relu, Activation::Identity);
        one.init_uniform(&mut ChaCha8Rng::seed_from_u64(9));
        assert!(one.tensors().iter().all(|(t, _)| t.iter().all(|v| v.abs() <= 1.0)));
    }

    #[test]
    fn mismatched_dims_are_rejected() {
        let err = Network::new(vec![
            DenseLayer::zeros(3, 4, Activation::Relu),
            DenseLayer::zeros(5, 1, Activation::Identity),
        ]);
        assert!(matches!(err, Err(Error::Shape(_))));
        let net = Network::mlp(&[3, 1], Activation::Relu, Activation::Identity);
        assert!(matches!(net.forward(&[1.0]), Err(Error::Shape(_))));
    }

    #[test]
    fn cache_from_other_network_is_rejected() {
        let a = Network::mlp(&[3, 4, 1], Activation::Relu, Activation::Identity);
        let b = Network::mlp(&[3, 2, 1], Activation::Relu, Activation::Identity);
        let cache = b.forward(&[1.0, 2.0, 3.0]).unwrap();
        assert!(a.backward_sq(&cache, &[0.0]).is_err());
    }
}

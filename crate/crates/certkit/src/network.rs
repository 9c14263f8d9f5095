//! Feed-forward ReLU networks: representation, exact inference, and
//! reverse-mode gradients.
//!
//! A network is a strict alternation of affine layers and elementwise ReLU,
//! starting and ending with an affine layer. All arithmetic is `f64` and all
//! operations are pure, so values are safe to share across threads.

use crate::error::{Error, Result};
use crate::rng::rng_from_seed;
use rand::Rng;
use serde::{Deserialize, Serialize};

/// One layer of a [`Network`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Layer {
    /// Dense affine map `x -> W x + b`. `weights[i]` is row `i` (length = in_dim).
    Affine {
        weights: Vec<Vec<f64>>,
        bias: Vec<f64>,
    },
    /// Elementwise `max(x, 0)`.
    Relu,
}

impl Layer {
    /// (out_dim, in_dim) for affine layers.
    pub fn affine_dims(&self) -> Option<(usize, usize)> {
        match self {
            Layer::Affine { weights, .. } => {
                Some((weights.len(), weights.first().map_or(0, Vec::len)))
            }
            Layer::Relu => None,
        }
    }
}

/// A feed-forward ReLU classifier.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    layers: Vec<Layer>,
    input_dim: usize,
    num_classes: usize,
}

impl Network {
    /// Build a network, validating the structural invariants: affine and ReLU
    /// layers strictly alternate, the first and last layers are affine, and
    /// adjacent dimensions chain.
    pub fn new(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::MalformedNetwork("network has no layers".into()));
        }
        let mut expect_affine = true;
        let mut cur_dim: Option<usize> = None;
        let mut input_dim = 0;
        for (i, layer) in layers.iter().enumerate() {
            match layer {
                Layer::Affine { weights, bias } => {
                    if !expect_affine {
                        return Err(Error::MalformedNetwork(format!(
                            "layer {i}: expected relu, found affine"
                        )));
                    }
                    let (out_dim, in_dim) = layer.affine_dims().unwrap();
                    if out_dim == 0 || in_dim == 0 {
                        return Err(Error::MalformedNetwork(format!("layer {i}: empty matrix")));
                    }
                    if weights.iter().any(|row| row.len() != in_dim) {
                        return Err(Error::MalformedNetwork(format!(
                            "layer {i}: ragged weight rows"
                        )));
                    }
                    if bias.len() != out_dim {
                        return Err(Error::MalformedNetwork(format!(
                            "layer {i}: bias length {} != {out_dim} rows",
                            bias.len()
                        )));
                    }
                    match cur_dim {
                        None => input_dim = in_dim,
                        Some(d) if d == in_dim => {}
                        Some(d) => {
                            return Err(Error::MalformedNetwork(format!(
                                "layer {i}: input dim {in_dim} does not chain with {d}"
                            )))
                        }
                    }
                    cur_dim = Some(out_dim);
                }
                Layer::Relu => {
                    if expect_affine {
                        return Err(Error::MalformedNetwork(format!(
                            "layer {i}: expected affine, found relu"
                        )));
                    }
                }
            }
            expect_affine = !expect_affine;
        }
        if matches!(layers.last(), Some(Layer::Relu)) {
            return Err(Error::MalformedNetwork("last layer must be affine".into()));
        }
        Ok(Network {
            input_dim,
            num_classes: cur_dim.unwrap(),
            layers,
        })
    }

    /// Build from affine (weights, bias) pairs, inserting ReLU between them.
    pub fn from_affine_layers(affine: Vec<(Vec<Vec<f64>>, Vec<f64>)>) -> Result<Self> {
        let mut layers = Vec::with_capacity(affine.len() * 2 - 1);
        let n = affine.len();
        for (i, (weights, bias)) in affine.into_iter().enumerate() {
            layers.push(Layer::Affine { weights, bias });
            if i + 1 < n {
                layers.push(Layer::Relu);
            }
        }
        Network::new(layers)
    }

    /// Random network with the given hidden widths; weights and biases are
    /// drawn uniformly from `[-scale, scale]`. Deterministic under `seed`.
    pub fn random(
        input_dim: usize,
        hidden: &[usize],
        num_classes: usize,
        scale: f64,
        seed: u64,
    ) -> Self {
        let mut rng = rng_from_seed(seed);
        let mut dims = vec![input_dim];
        dims.extend_from_slice(hidden);
        dims.push(num_classes);
        let mut affine = Vec::new();
        for w in dims.windows(2) {
            let (in_dim, out_dim) = (w[0], w[1]);
            let weights = (0..out_dim)
                .map(|_| (0..in_dim).map(|_| rng.gen_range(-scale..=scale)).collect())
                .collect();
            let bias = (0..out_dim).map(|_| rng.gen_range(-scale..=scale)).collect();
            affine.push((weights, bias));
        }
        Network::from_affine_layers(affine).expect("generated dims always chain")
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    /// Number of affine layers.
    pub fn num_affine(&self) -> usize {
        self.layers
            .iter()
            .filter(|l| matches!(l, Layer::Affine { .. }))
            .count()
    }

    /// Affine layers in order, as (weights, bias) references.
    pub fn affine_layers(&self) -> Vec<(&Vec<Vec<f64>>, &Vec<f64>)> {
        self.layers
            .iter()
            .filter_map(|l| match l {
                Layer::Affine { weights, bias } => Some((weights, bias)),
                Layer::Relu => None,
            })
            .collect()
    }

    /// Exact forward pass; returns the logits.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_dim {
            return Err(Error::DimensionMismatch(format!(
                "input length {} != input_dim {}",
                x.len(),
                self.input_dim
            )));
        }
        let mut cur = x.to_vec();
        for layer in &self.layers {
            cur = match layer {
                Layer::Affine { weights, bias } => affine_apply(weights, bias, &cur),
                Layer::Relu => cur.iter().map(|v| v.max(0.0)).collect(),
            };
        }
        Ok(cur)
    }

    /// Predicted class: argmax of the logits, ties broken by the lowest index.
    pub fn predict(&self, x: &[f64]) -> Result<usize> {
        Ok(argmax(&self.forward(x)?))
    }

    /// Forward pass that records the input of every layer (and the logits at
    /// the end). `trace[i]` is the input to layer `i`; `trace.last()` is the
    /// output.
    pub fn forward_trace(&self, x: &[f64]) -> Result<Vec<Vec<f64>>> {
        if x.len() != self.input_dim {
            return Err(Error::DimensionMismatch(format!(
                "input length {} != input_dim {}",
                x.len(),
                self.input_dim
            )));
        }
        let mut trace = Vec::with_capacity(self.layers.len() + 1);
        trace.push(x.to_vec());
        for layer in &self.layers {
            let cur = trace.last().unwrap();
            let next = match layer {
                Layer::Affine { weights, bias } => affine_apply(weights, bias, cur),
                Layer::Relu => cur.iter().map(|v| v.max(0.0)).collect(),
            };
            trace.push(next);
        }
        Ok(trace)
    }

    /// Reverse-mode gradient of `grad_logits . f(x)` with respect to `x`.
    ///
    /// The ReLU subgradient at exactly zero is taken as 0.
    pub fn backward_input(&self, x: &[f64], grad_logits: &[f64]) -> Result<Vec<f64>> {
        if grad_logits.len() != self.num_classes {
            return Err(Error::DimensionMismatch(format!(
                "grad length {} != num_classes {}",
                grad_logits.len(),
                self.num_classes
            )));
        }
        let trace = self.forward_trace(x)?;
        let mut grad = grad_logits.to_vec();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            match layer {
                Layer::Affine { weights, .. } => {
                    grad = matvec_transpose(weights, &grad);
                }
                Layer::Relu => {
                    // trace[i] is the pre-activation feeding this ReLU
                    for (g, &z) in grad.iter_mut().zip(&trace[i]) {
                        if z <= 0.0 {
                            *g = 0.0;
                        }
                    }
                }
            }
        }
        Ok(grad)
    }

    /// Gradients of `grad_logits . f(x)` with respect to every affine layer's
    /// weights and bias. Returns one (dW, db) per affine layer, in order.
    pub fn backward_params(&self, x: &[f64], grad_logits: &[f64]) -> Result<ParamGrads> {
        let trace = self.forward_trace(x)?;
        let mut grads = ParamGrads::zeros_like(self);
        let mut grad = grad_logits.to_vec();
        let mut affine_idx = self.num_affine();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            match layer {
                Layer::Affine { weights, .. } => {
                    affine_idx -= 1;
                    let input = &trace[i];
                    let (dw, db) = &mut grads.layers[affine_idx];
                    for (r, &g) in grad.iter().enumerate() {
                        db[r] += g;
                        for (c, &v) in input.iter().enumerate() {
                            dw[r][c] += g * v;
                        }
                    }
                    grad = matvec_transpose(weights, &grad);
                }
                Layer::Relu => {
                    for (g, &z) in grad.iter_mut().zip(&trace[i]) {
                        if z <= 0.0 {
                            *g = 0.0;
                        }
                    }
                }
            }
        }
        Ok(grads)
    }

    /// Apply a gradient step `W -= lr * dW` to every affine layer.
    pub fn apply_gradients(&mut self, grads: &ParamGrads, lr: f64) {
        let mut affine_idx = 0;
        for layer in &mut self.layers {
            if let Layer::Affine { weights, bias } = layer {
                let (dw, db) = &grads.layers[affine_idx];
                for (row, drow) in weights.iter_mut().zip(dw) {
                    for (w, d) in row.iter_mut().zip(drow) {
                        *w -= lr * d;
                    }
                }
                for (b, d) in bias.iter_mut().zip(db) {
                    *b -= lr * d;
                }
                affine_idx += 1;
            }
        }
    }
}

/// Per-affine-layer parameter gradients.
#[derive(Debug, Clone)]
pub struct ParamGrads {
    /// One (dW, db) per affine layer.
    pub layers: Vec<(Vec<Vec<f64>>, Vec<f64>)>,
}

impl ParamGrads {
    pub fn zeros_like(net: &Network) -> Self {
        let layers = net
            .affine_layers()
            .iter()
            .map(|(w, b)| (vec![vec![0.0; w[0].len()]; w.len()], vec![0.0; b.len()]))
            .collect();
        ParamGrads { layers }
    }

    pub fn add_scaled(&mut self, other: &ParamGrads, factor: f64) {
        for ((dw, db), (ow, ob)) in self.layers.iter_mut().zip(&other.layers) {
            for (row, orow) in dw.iter_mut().zip(ow) {
                for (v, o) in row.iter_mut().zip(orow) {
                    *v += factor * o;
                }
            }
            for (v, o) in db.iter_mut().zip(ob) {
                *v += factor * o;
            }
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for (dw, db) in &mut self.layers {
            for row in dw {
                for v in row {
                    *v *= factor;
                }
            }
            for v in db {
                *v *= factor;
            }
        }
    }
}

/// `W x + b`.
pub fn affine_apply(weights: &[Vec<f64>], bias: &[f64], x: &[f64]) -> Vec<f64> {
    weights
        .iter()
        .zip(bias)
        .map(|(row, &b)| row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + b)
        .collect()
}

/// `W^T g`.
pub fn matvec_transpose(weights: &[Vec<f64>], g: &[f64]) -> Vec<f64> {
    let in_dim = weights.first().map_or(0, Vec::len);
    let mut out = vec![0.0; in_dim];
    for (row, &gi) in weights.iter().zip(g) {
        for (o, &w) in out.iter_mut().zip(row) {
            *o += gi * w;
        }
    }
    out
}

/// Argmax with ties broken by the lowest index.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = i;
        }
    }
    best
}

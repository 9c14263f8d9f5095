//! Interval bound propagation (IBP): the loosest and fastest verifier.
//!
//! Boxes are pushed through each affine layer with the positive/negative
//! weight-part rule and through ReLU by clamping, costing four matrix-vector
//! products per layer.

use crate::error::{Error, Result};
use crate::network::{Layer, Network};
use crate::problem::{MarginVerdict, Norm, VerificationProblem};

/// Per-neuron interval bounds for one layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerBounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl LayerBounds {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::DimensionMismatch(format!(
                "bounds lengths differ: {} vs {}",
                lower.len(),
                upper.len()
            )));
        }
        if lower.iter().zip(&upper).any(|(l, u)| l > u) {
            return Err(Error::InvalidParameter(
                "lower bound exceeds upper bound".into(),
            ));
        }
        Ok(LayerBounds { lower, upper })
    }

    pub fn len(&self) -> usize {
        self.lower.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lower.is_empty()
    }

    /// Bounds after an elementwise ReLU.
    pub fn relu(&self) -> LayerBounds {
        LayerBounds {
            lower: self.lower.iter().map(|v| v.max(0.0)).collect(),
            upper: self.upper.iter().map(|v| v.max(0.0)).collect(),
        }
    }

    /// True if the interval admits both signs (strictly crosses zero).
    pub fn is_unstable(&self, j: usize) -> bool {
        self.lower[j] < 0.0 && self.upper[j] > 0.0
    }

    pub fn contains(&self, v: &[f64], slack: f64) -> bool {
        v.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(x, (l, u))| *x >= l - slack && *x <= u + slack)
    }
}

/// Bounds for every layer output of a network under a box input region.
#[derive(Debug, Clone)]
pub struct PropagatedBounds {
    /// `after[i]` bounds the output of `net.layers()[i]`.
    pub after: Vec<LayerBounds>,
    pub input: LayerBounds,
}

impl PropagatedBounds {
    /// Bounds of the logits.
    pub fn output(&self) -> &LayerBounds {
        self.after.last().expect("networks are non-empty")
    }

    /// Pre-activation bounds, one per ReLU layer in order.
    pub fn preactivations(&self, net: &Network) -> Vec<LayerBounds> {
        net.layers()
            .iter()
            .enumerate()
            .filter(|(_, l)| matches!(l, Layer::Relu))
            .map(|(i, _)| self.after[i - 1].clone())
            .collect()
    }

    /// Post-activation bounds of the layer feeding the final affine layer.
    /// For a network with no hidden layer this is the input box.
    pub fn penultimate(&self) -> &LayerBounds {
        if self.after.len() >= 2 {
            &self.after[self.after.len() - 2]
        } else {
            &self.input
        }
    }
}

/// Interval bounds of `W x + b` for `x` in `[lower, upper]`:
/// `l' = W+ l + W- u + b`, `u' = W+ u + W- l + b`.
pub fn affine_interval(
    weights: &[Vec<f64>],
    bias: &[f64],
    bounds: &LayerBounds,
) -> LayerBounds {
    let mut lower = Vec::with_capacity(weights.len());
    let mut upper = Vec::with_capacity(weights.len());
    for (row, &b) in weights.iter().zip(bias) {
        let mut lo = b;
        let mut hi = b;
        for ((&w, &l), &u) in row.iter().zip(&bounds.lower).zip(&bounds.upper) {
            if w >= 0.0 {
                lo += w * l;
                hi += w * u;
            } else {
                lo += w * u;
                hi += w * l;
            }
        }
        lower.push(lo);
        upper.push(hi);
    }
    LayerBounds { lower, upper }
}

/// Propagate an input box through the network, returning bounds after every
/// layer. Sound: every input in the box maps to activations inside the bounds.
pub fn ibp_propagate(
    net: &Network,
    input_lower: &[f64],
    input_upper: &[f64],
) -> Result<PropagatedBounds> {
    if input_lower.len() != net.input_dim() || input_upper.len() != net.input_dim() {
        return Err(Error::DimensionMismatch(format!(
            "box dims {}/{} != input_dim {}",
            input_lower.len(),
            input_upper.len(),
            net.input_dim()
        )));
    }
    let input = LayerBounds::new(input_lower.to_vec(), input_upper.to_vec())?;
    let mut after = Vec::with_capacity(net.layers().len());
    let mut cur = input.clone();
    for layer in net.layers() {
        cur = match layer {
            Layer::Affine { weights, bias } => affine_interval(weights, bias, &cur),
            Layer::Relu => cur.relu(),
        };
        after.push(cur.clone());
    }
    Ok(PropagatedBounds { after, input })
}

/// Lower bounds of the margins `f_label - f_other` over a box on the
/// penultimate activations, using the final affine layer's row differences
/// rather than subtracting independent output intervals.
pub fn margin_lower_bounds(
    net: &Network,
    penultimate: &LayerBounds,
    label: usize,
) -> Vec<(usize, f64)> {
    let affine = net.affine_layers();
    let (weights, bias) = affine.last().expect("networks are non-empty");
    let mut out = Vec::with_capacity(weights.len().saturating_sub(1));
    for other in 0..weights.len() {
        if other == label {
            continue;
        }
        let mut lo = bias[label] - bias[other];
        for j in 0..weights[label].len() {
            let dw = weights[label][j] - weights[other][j];
            lo += if dw >= 0.0 {
                dw * penultimate.lower[j]
            } else {
                dw * penultimate.upper[j]
            };
        }
        out.push((other, lo));
    }
    out
}

/// IBP robustness verification. The box represents Linf balls exactly; for
/// L2/L1 the enclosing box is used, which is sound but loose. `clip`
/// intersects the box with `[0,1]^n` (Linf only).
pub fn ibp_verify(
    problem: &VerificationProblem,
    net: &Network,
    clip: bool,
) -> Result<MarginVerdict> {
    let (lo, hi) = if clip && problem.norm == Norm::Linf {
        problem.enclosing_box_clipped()
    } else {
        problem.enclosing_box()
    };
    let bounds = ibp_propagate(net, &lo, &hi)?;
    let margins = margin_lower_bounds(net, bounds.penultimate(), problem.label);
    Ok(MarginVerdict::from_margins(margins))
}

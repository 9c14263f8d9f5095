//! Desk-scale trainers for the three benchmark model families: standard
//! cross-entropy, interval-bound robust training, and noise augmentation.
//!
//! The robust loss upper-bounds the worst-case cross-entropy over the
//! epsilon-box by propagating intervals forward and building the worst-case
//! logit vector from last-layer row differences; gradients flow back through
//! the interval computation with the weight-sign selections treated as fixed
//! within a step. Plain seeded SGD throughout, so identical configurations
//! reproduce identical weights.

use crate::data::LabeledSample;
use crate::error::{Error, Result};
use crate::interval::{affine_interval, LayerBounds};
use crate::network::{Layer, Network, ParamGrads};
use crate::rng::{derive_seed, rng_from_seed};
use crate::smoothing::SmoothingDistribution;
use crate::stats::{log_sum_exp, softmax};
use rand::seq::SliceRandom;

/// Training hyperparameters shared by all three modes.
#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    /// Robust-training radius reached after warmup.
    pub eps_target: f64,
    /// Fraction of epochs spent ramping eps linearly from 0 to the target.
    pub warmup_fraction: f64,
    /// Clean-loss mixing weight in [0,1]: `kappa * clean + (1-kappa) * robust`.
    pub kappa: f64,
    /// Additive noise for augmentation training.
    pub noise_dist: Option<SmoothingDistribution>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 50,
            batch_size: 32,
            learning_rate: 0.1,
            seed: 0,
            eps_target: 0.0,
            warmup_fraction: 0.5,
            kappa: 0.5,
            noise_dist: None,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::InvalidParameter(
                "epochs and batch_size must be positive".into(),
            ));
        }
        if self.learning_rate <= 0.0 {
            return Err(Error::InvalidParameter("learning rate must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.kappa) {
            return Err(Error::InvalidParameter(format!(
                "kappa must lie in [0,1], got {}",
                self.kappa
            )));
        }
        if !(0.0..=1.0).contains(&self.warmup_fraction) {
            return Err(Error::InvalidParameter(
                "warmup fraction must lie in [0,1]".into(),
            ));
        }
        if self.eps_target < 0.0 {
            return Err(Error::InvalidParameter("eps_target must be >= 0".into()));
        }
        Ok(())
    }
}

/// Cross-entropy loss and its logit gradient.
pub fn cross_entropy(logits: &[f64], label: usize) -> (f64, Vec<f64>) {
    let loss = log_sum_exp(logits) - logits[label];
    let mut grad = softmax(logits);
    grad[label] -= 1.0;
    (loss, grad)
}

/// Interval-bound robust loss over a batch: for each sample the margins of
/// the true class against every other are lower-bounded over the eps-box via
/// the last-layer row differences, the worst-case logit vector
/// `[0, -margin_1, ...]` feeds a cross-entropy, and the total mixes in the
/// clean loss with weight `kappa`. Returns the batch-mean loss and gradients.
pub fn ibp_robust_loss(
    net: &Network,
    batch: &[LabeledSample],
    eps: f64,
    kappa: f64,
) -> Result<(f64, ParamGrads)> {
    if eps < 0.0 {
        return Err(Error::InvalidParameter("eps must be >= 0".into()));
    }
    let mut grads = ParamGrads::zeros_like(net);
    let mut total = 0.0;
    for sample in batch {
        // Clean term.
        let logits = net.forward(&sample.x)?;
        let (clean_loss, clean_grad_logits) = cross_entropy(&logits, sample.y);
        let clean_grads = net.backward_params(&sample.x, &clean_grad_logits)?;
        // Robust term.
        let (robust_loss, robust_grads) = robust_term(net, sample, eps)?;
        total += kappa * clean_loss + (1.0 - kappa) * robust_loss;
        grads.add_scaled(&clean_grads, kappa);
        grads.add_scaled(&robust_grads, 1.0 - kappa);
    }
    let scale = 1.0 / batch.len().max(1) as f64;
    grads.scale(scale);
    Ok((total * scale, grads))
}

/// Worst-case cross-entropy of one sample over the eps-box, with gradients.
fn robust_term(net: &Network, sample: &LabeledSample, eps: f64) -> Result<(f64, ParamGrads)> {
    let layers = net.layers();
    let last_affine = layers.len() - 1;

    // Forward interval pass up to (not including) the final affine layer,
    // caching each layer's input interval.
    let mut cur = LayerBounds {
        lower: sample.x.iter().map(|v| v - eps).collect(),
        upper: sample.x.iter().map(|v| v + eps).collect(),
    };
    let mut inputs: Vec<LayerBounds> = Vec::with_capacity(last_affine);
    for layer in &layers[..last_affine] {
        inputs.push(cur.clone());
        cur = match layer {
            Layer::Affine { weights, bias } => affine_interval(weights, bias, &cur),
            Layer::Relu => cur.relu(),
        };
    }
    let penultimate = cur;

    // Worst-case margins via the last layer's row differences.
    let (w_last, b_last) = match &layers[last_affine] {
        Layer::Affine { weights, bias } => (weights, bias),
        Layer::Relu => unreachable!("networks end with an affine layer"),
    };
    let label = sample.y;
    let classes = w_last.len();
    let mut worst_logits = vec![0.0; classes];
    for other in 0..classes {
        if other == label {
            continue;
        }
        let mut margin = b_last[label] - b_last[other];
        for j in 0..w_last[label].len() {
            let dw = w_last[label][j] - w_last[other][j];
            margin += if dw >= 0.0 {
                dw * penultimate.lower[j]
            } else {
                dw * penultimate.upper[j]
            };
        }
        worst_logits[other] = -margin;
    }
    let loss = log_sum_exp(&worst_logits); // cross-entropy with logit[label] = 0

    // Backward: d(loss)/d(worst_logits) = softmax(worst_logits) with the
    // label slot pinned at zero (its entry is a constant).
    let probs = softmax(&worst_logits);
    let mut grads = ParamGrads::zeros_like(net);
    let width = penultimate.len();
    let mut d_lower = vec![0.0; width];
    let mut d_upper = vec![0.0; width];
    let last_idx = grads.layers.len() - 1;
    {
        let (dw_last, db_last) = &mut grads.layers[last_idx];
        for other in 0..classes {
            if other == label {
                continue;
            }
            let d_margin = -probs[other]; // d loss / d margin_other
            db_last[label] += d_margin;
            db_last[other] -= d_margin;
            for j in 0..width {
                let dw = w_last[label][j] - w_last[other][j];
                let bound = if dw >= 0.0 {
                    d_lower[j] += d_margin * dw;
                    penultimate.lower[j]
                } else {
                    d_upper[j] += d_margin * dw;
                    penultimate.upper[j]
                };
                dw_last[label][j] += d_margin * bound;
                dw_last[other][j] -= d_margin * bound;
            }
        }
    }

    // Back through the interval chain.
    let mut affine_idx = last_idx;
    for (i, layer) in layers[..last_affine].iter().enumerate().rev() {
        match layer {
            Layer::Relu => {
                let pre = &inputs[i];
                for j in 0..d_lower.len() {
                    if pre.lower[j] <= 0.0 {
                        d_lower[j] = 0.0;
                    }
                    if pre.upper[j] <= 0.0 {
                        d_upper[j] = 0.0;
                    }
                }
            }
            Layer::Affine { weights, .. } => {
                affine_idx -= 1;
                let input = &inputs[i];
                let in_dim = input.len();
                let mut nd_lower = vec![0.0; in_dim];
                let mut nd_upper = vec![0.0; in_dim];
                let (dw, db) = &mut grads.layers[affine_idx];
                for (r, row) in weights.iter().enumerate() {
                    let (dl, du) = (d_lower[r], d_upper[r]);
                    db[r] += dl + du;
                    for (j, &w) in row.iter().enumerate() {
                        if w >= 0.0 {
                            dw[r][j] += dl * input.lower[j] + du * input.upper[j];
                            nd_lower[j] += dl * w;
                            nd_upper[j] += du * w;
                        } else {
                            dw[r][j] += dl * input.upper[j] + du * input.lower[j];
                            nd_lower[j] += du * w;
                            nd_upper[j] += dl * w;
                        }
                    }
                }
                d_lower = nd_lower;
                d_upper = nd_upper;
            }
        }
    }
    Ok((loss, grads))
}

/// Mini-batch SGD on the clean cross-entropy.
pub fn train_standard(net: &Network, data: &[LabeledSample], cfg: &TrainConfig) -> Result<Network> {
    train_loop(net, data, cfg, Mode::Standard)
}

/// Robust training with the interval loss; eps ramps linearly from 0 to the
/// target over the warmup fraction of epochs, then stays fixed. A zero
/// target degenerates exactly to standard training.
pub fn train_ibp(net: &Network, data: &[LabeledSample], cfg: &TrainConfig) -> Result<Network> {
    if cfg.eps_target == 0.0 {
        return train_standard(net, data, cfg);
    }
    train_loop(net, data, cfg, Mode::Ibp)
}

/// Standard training on inputs perturbed by fresh additive noise each epoch.
pub fn train_noise(net: &Network, data: &[LabeledSample], cfg: &TrainConfig) -> Result<Network> {
    let dist = cfg.noise_dist.ok_or_else(|| {
        Error::InvalidParameter("train_noise requires cfg.noise_dist".into())
    })?;
    dist.validate(false)?;
    train_loop(net, data, cfg, Mode::Noise(dist))
}

enum Mode {
    Standard,
    Ibp,
    Noise(SmoothingDistribution),
}

fn train_loop(
    net: &Network,
    data: &[LabeledSample],
    cfg: &TrainConfig,
    mode: Mode,
) -> Result<Network> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::InvalidParameter("empty training set".into()));
    }
    let mut net = net.clone();
    let warmup_epochs = (cfg.epochs as f64 * cfg.warmup_fraction).ceil().max(1.0);
    let mut order: Vec<usize> = (0..data.len()).collect();
    for epoch in 0..cfg.epochs {
        let mut shuffle_rng = rng_from_seed(derive_seed(cfg.seed, 0x5f00 + epoch as u64));
        order.shuffle(&mut shuffle_rng);
        // Noise stream is separate from the shuffle stream, so zero-scale
        // noise reproduces standard training bit-for-bit.
        let mut noise_rng = rng_from_seed(derive_seed(cfg.seed, 0x6e00 + epoch as u64));
        let eps = match mode {
            Mode::Ibp => cfg.eps_target * ((epoch as f64 / warmup_epochs).min(1.0)),
            _ => 0.0,
        };
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<LabeledSample> = chunk
                .iter()
                .map(|&i| match &mode {
                    Mode::Noise(dist) => {
                        let noise = dist.sample(data[i].x.len(), &mut noise_rng);
                        LabeledSample {
                            x: data[i].x.iter().zip(&noise).map(|(a, b)| a + b).collect(),
                            y: data[i].y,
                        }
                    }
                    _ => data[i].clone(),
                })
                .collect();
            let (_, grads) = match mode {
                Mode::Ibp => ibp_robust_loss(&net, &batch, eps, cfg.kappa)?,
                _ => clean_batch_loss(&net, &batch)?,
            };
            net.apply_gradients(&grads, cfg.learning_rate);
        }
    }
    Ok(net)
}

/// Batch-mean cross-entropy loss and gradients.
pub fn clean_batch_loss(net: &Network, batch: &[LabeledSample]) -> Result<(f64, ParamGrads)> {
    let mut grads = ParamGrads::zeros_like(net);
    let mut total = 0.0;
    for sample in batch {
        let logits = net.forward(&sample.x)?;
        let (loss, grad_logits) = cross_entropy(&logits, sample.y);
        total += loss;
        grads.add_scaled(&net.backward_params(&sample.x, &grad_logits)?, 1.0);
    }
    let scale = 1.0 / batch.len().max(1) as f64;
    grads.scale(scale);
    Ok((total * scale, grads))
}

/// Plain accuracy of the network on a dataset.
pub fn accuracy(net: &Network, data: &[LabeledSample]) -> Result<f64> {
    let mut correct = 0;
    for s in data {
        if net.predict(&s.x)? == s.y {
            correct += 1;
        }
    }
    Ok(correct as f64 / data.len().max(1) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::gap_dataset;
    use crate::interval::ibp_verify;
    use crate::problem::{Norm, Verdict, VerificationProblem};
    use crate::rng::rng_from_seed;
    use rand::Rng;

    fn flatten_params(net: &Network) -> Vec<f64> {
        let mut out = Vec::new();
        for (w, b) in net.affine_layers() {
            for row in w {
                out.extend_from_slice(row);
            }
            out.extend_from_slice(b);
        }
        out
    }

    #[test]
    fn zero_eps_robust_loss_equals_cross_entropy() {
        let net = Network::random(3, &[5, 4], 3, 1.0, 601);
        let batch = vec![
            LabeledSample {
                x: vec![0.2, 0.8, 0.5],
                y: 1,
            },
            LabeledSample {
                x: vec![0.9, 0.1, 0.3],
                y: 0,
            },
        ];
        let (robust, _) = ibp_robust_loss(&net, &batch, 0.0, 0.0).unwrap();
        let (clean, _) = clean_batch_loss(&net, &batch).unwrap();
        assert!(
            (robust - clean).abs() < 1e-12,
            "zero-width box must reproduce the clean loss: {robust} vs {clean}"
        );
    }

    #[test]
    fn robust_loss_gradient_matches_finite_differences() {
        let h = 1e-5;
        let mut rng = rng_from_seed(613);
        let mut checked = 0;
        for trial in 0..20 {
            let net = Network::random(2, &[4, 3], 2, 1.0, 613 + trial);
            let sample = LabeledSample {
                x: vec![rng.gen_range(0.2..0.8), rng.gen_range(0.2..0.8)],
                y: (trial % 2) as usize,
            };
            let eps = 0.05;
            // Keep away from weight-sign and activation boundaries where the
            // selections switch.
            if flatten_params(&net).iter().any(|w| w.abs() < 1e-3) {
                continue;
            }
            let batch = [sample.clone()];
            let (_, grads) = ibp_robust_loss(&net, &batch, eps, 0.5).unwrap();

            // Finite differences over every parameter.
            let eval = |n: &Network| ibp_robust_loss(n, &batch, eps, 0.5).unwrap().0;
            let mut max_rel: f64 = 0.0;
            let mut layers = net.layers().to_vec();
            let mut affine_positions = Vec::new();
            for (pos, layer) in layers.iter().enumerate() {
                if matches!(layer, Layer::Affine { .. }) {
                    affine_positions.push(pos);
                }
            }
            for (ai, &pos) in affine_positions.iter().enumerate() {
                let (rows, cols, blen) = match &layers[pos] {
                    Layer::Affine { weights, bias } => {
                        (weights.len(), weights[0].len(), bias.len())
                    }
                    _ => unreachable!(),
                };
                for r in 0..rows {
                    for c in 0..cols {
                        let mut perturb = |delta: f64, layers: &mut Vec<Layer>| {
                            if let Layer::Affine { weights, .. } = &mut layers[pos] {
                                weights[r][c] += delta;
                            }
                        };
                        perturb(h, &mut layers);
                        let fp = eval(&Network::new(layers.clone()).unwrap());
                        perturb(-2.0 * h, &mut layers);
                        let fm = eval(&Network::new(layers.clone()).unwrap());
                        perturb(h, &mut layers);
                        let fd = (fp - fm) / (2.0 * h);
                        let an = grads.layers[ai].0[r][c];
                        let rel = (an - fd).abs() / fd.abs().max(1e-4);
                        max_rel = max_rel.max(rel);
                    }
                }
                for b in 0..blen {
                    let mut perturb = |delta: f64, layers: &mut Vec<Layer>| {
                        if let Layer::Affine { bias, .. } = &mut layers[pos] {
                            bias[b] += delta;
                        }
                    };
                    perturb(h, &mut layers);
                    let fp = eval(&Network::new(layers.clone()).unwrap());
                    perturb(-2.0 * h, &mut layers);
                    let fm = eval(&Network::new(layers.clone()).unwrap());
                    perturb(h, &mut layers);
                    let fd = (fp - fm) / (2.0 * h);
                    let an = grads.layers[ai].1[b];
                    let rel = (an - fd).abs() / fd.abs().max(1e-4);
                    max_rel = max_rel.max(rel);
                }
            }
            assert!(
                max_rel < 1e-4,
                "trial {trial}: max relative gradient error {max_rel}"
            );
            checked += 1;
        }
        assert!(checked >= 10, "only {checked} clean fixtures checked");
    }

    #[test]
    fn robust_loss_nondecreasing_in_eps() {
        let net = Network::random(2, &[5, 4], 2, 1.0, 617);
        let batch = vec![LabeledSample {
            x: vec![0.4, 0.6],
            y: 0,
        }];
        let mut last = f64::NEG_INFINITY;
        for i in 0..20 {
            let eps = 0.01 * i as f64;
            let (loss, _) = ibp_robust_loss(&net, &batch, eps, 0.0).unwrap();
            assert!(loss >= last - 1e-12, "loss decreased as the box widened");
            last = loss;
        }
    }

    #[test]
    fn standard_training_separates_toy_set() {
        let data = gap_dataset(100, 0.3, 0.2, 1);
        let net = Network::random(2, &[8, 8], 2, 0.7, 11);
        let cfg = TrainConfig {
            epochs: 50,
            batch_size: 16,
            learning_rate: 0.2,
            seed: 3,
            ..TrainConfig::default()
        };
        let trained = train_standard(&net, &data, &cfg).unwrap();
        let acc = accuracy(&trained, &data).unwrap();
        assert!(acc >= 0.99, "train accuracy {acc}");
    }

    #[test]
    fn loss_decreases_over_first_epochs() {
        let data = gap_dataset(100, 0.3, 0.2, 2);
        let net = Network::random(2, &[8, 8], 2, 0.7, 13);
        let mut losses = Vec::new();
        let mut current = net.clone();
        for epoch in 0..5 {
            let (loss, _) = clean_batch_loss(&current, &data).unwrap();
            losses.push(loss);
            let cfg = TrainConfig {
                epochs: 1,
                batch_size: 16,
                learning_rate: 0.2,
                seed: 100 + epoch,
                ..TrainConfig::default()
            };
            current = train_standard(&current, &data, &cfg).unwrap();
        }
        for w in losses.windows(2) {
            assert!(w[1] >= 0.0);
        }
        let (final_loss, _) = clean_batch_loss(&current, &data).unwrap();
        assert!(
            final_loss < losses[0],
            "loss failed to decrease: {losses:?} -> {final_loss}"
        );
        // Strictly decreasing epoch over epoch on this easy set.
        for w in losses.windows(2) {
            assert!(w[1] < w[0], "loss not strictly decreasing: {losses:?}");
        }
    }

    #[test]
    fn identical_seeds_identical_weights() {
        let data = gap_dataset(40, 0.3, 0.2, 5);
        let net = Network::random(2, &[6], 2, 0.7, 17);
        let cfg = TrainConfig {
            epochs: 8,
            seed: 42,
            ..TrainConfig::default()
        };
        let a = train_standard(&net, &data, &cfg).unwrap();
        let b = train_standard(&net, &data, &cfg).unwrap();
        assert_eq!(flatten_params(&a), flatten_params(&b));
    }

    #[test]
    fn ibp_training_certifies_where_standard_does_not() {
        // The acceptance suite runs this over 5 seeds; one representative
        // seed keeps the unit test quick.
        let gap = 0.3;
        let eps = gap / 4.0;
        let data = crate::data::xor_gap_dataset(50, gap, 7);
        let init = Network::random(2, &[24, 24], 2, 0.7, 23);
        let cfg = TrainConfig {
            epochs: 150,
            batch_size: 16,
            learning_rate: 0.3,
            seed: 29,
            eps_target: eps,
            kappa: 0.3,
            ..TrainConfig::default()
        };
        let robust_net = train_ibp(&init, &data, &cfg).unwrap();
        let standard_net = train_standard(&init, &data, &cfg).unwrap();
        let certified = |net: &Network| -> f64 {
            let mut ok = 0;
            for s in &data {
                if net.predict(&s.x).unwrap() != s.y {
                    continue;
                }
                let problem =
                    VerificationProblem::new(s.x.clone(), s.y, eps, Norm::Linf).unwrap();
                if ibp_verify(&problem, net, false).unwrap().verdict == Verdict::Robust {
                    ok += 1;
                }
            }
            ok as f64 / data.len() as f64
        };
        let robust_cert = certified(&robust_net);
        let standard_cert = certified(&standard_net);
        assert!(
            robust_cert >= 0.9,
            "IBP-trained certified accuracy {robust_cert}"
        );
        // Single-seed smoke check; the >= 30pp bar is a 5-seed mean enforced
        // by the acceptance suite.
        assert!(
            robust_cert - standard_cert >= 0.1,
            "separation too small: {robust_cert} vs {standard_cert}"
        );
    }

    #[test]
    fn zero_eps_target_is_exactly_standard_training() {
        let data = gap_dataset(30, 0.3, 0.2, 9);
        let net = Network::random(2, &[5], 2, 0.7, 31);
        let cfg = TrainConfig {
            epochs: 5,
            eps_target: 0.0,
            seed: 8,
            ..TrainConfig::default()
        };
        let a = train_ibp(&net, &data, &cfg).unwrap();
        let b = train_standard(&net, &data, &cfg).unwrap();
        assert_eq!(flatten_params(&a), flatten_params(&b));
    }

    #[test]
    fn zero_scale_noise_is_exactly_standard_training() {
        let data = gap_dataset(30, 0.3, 0.2, 10);
        let net = Network::random(2, &[5], 2, 0.7, 37);
        let cfg = TrainConfig {
            epochs: 5,
            seed: 9,
            noise_dist: Some(SmoothingDistribution::Gaussian { sigma: 0.0 }),
            ..TrainConfig::default()
        };
        let a = train_noise(&net, &data, &cfg).unwrap();
        let b = train_standard(&net, &data, &cfg).unwrap();
        assert_eq!(flatten_params(&a), flatten_params(&b));
    }

    #[test]
    fn noise_training_helps_smoothed_accuracy() {
        use crate::smoothing::{predict_smooth, SmoothingDistribution as SD};
        let sigma = 0.25;
        let data = gap_dataset(80, 0.3, 0.2, 11);
        let init = Network::random(2, &[8], 2, 0.7, 41);
        let cfg = TrainConfig {
            epochs: 40,
            batch_size: 16,
            learning_rate: 0.2,
            seed: 43,
            noise_dist: Some(SD::Gaussian { sigma }),
            ..TrainConfig::default()
        };
        let noisy_net = train_noise(&init, &data, &cfg).unwrap();
        let standard_net = train_standard(&init, &data, &cfg).unwrap();
        let smooth_acc = |net: &Network| -> f64 {
            let mut ok = 0;
            for (i, s) in data.iter().enumerate() {
                let p = predict_smooth(net, &s.x, SD::Gaussian { sigma }, 200, 0.05, i as u64)
                    .unwrap();
                if p == Some(s.y) {
                    ok += 1;
                }
            }
            ok as f64 / data.len() as f64
        };
        let a = smooth_acc(&noisy_net);
        let b = smooth_acc(&standard_net);
        assert!(
            a >= b,
            "noise-trained smoothed accuracy {a} below standard {b}"
        );
    }

    #[test]
    fn train_noise_requires_distribution() {
        let data = gap_dataset(10, 0.3, 0.2, 12);
        let net = Network::random(2, &[4], 2, 0.7, 3);
        let cfg = TrainConfig::default();
        assert!(train_noise(&net, &data, &cfg).is_err());
    }
}

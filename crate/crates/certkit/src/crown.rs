//! Polyhedra-abstraction verifier (CROWN style): one linear lower and one
//! linear upper bound per ReLU neuron, propagated backward through the
//! network and concretized over the input ball with the dual-norm bound.

use crate::error::{Error, Result};
use crate::interval::{ibp_propagate, LayerBounds};
use crate::network::{Layer, Network};
use crate::problem::{MarginVerdict, VerificationProblem};

/// How the lower-bound slope of an unstable ReLU is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RelaxMode {
    /// Lower slope parallel to the upper line: `u / (u - l)` (Fast-Lin).
    Parallel,
    /// `1` if `u >= -l`, else `0` (CROWN / DeepPoly heuristic). The default:
    /// it minimizes the relaxation area without per-instance optimization.
    Adaptive,
    /// A caller-supplied slope in `[0, 1]`.
    FixedLambda(f64),
}

/// Where pre-activation bounds come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundSource {
    /// IBP on the enclosing box.
    Interval,
    /// Layer-by-layer backward substitution with dual-norm concretization.
    Polyhedra,
}

/// Linear envelope of one ReLU over `[l, u]`:
/// `lower_slope * z + lower_intercept <= relu(z) <= upper_slope * z + upper_intercept`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReluRelaxation {
    pub lower_slope: f64,
    pub lower_intercept: f64,
    pub upper_slope: f64,
    pub upper_intercept: f64,
}

/// Relaxation of `relu` over `[l, u]`. Stable-active neurons get identity
/// bounds, stable-inactive the zero function; unstable neurons get the chord
/// through `(l, 0)` and `(u, u)` above and a slope through the origin below.
pub fn relu_relax(l: f64, u: f64, mode: RelaxMode) -> Result<ReluRelaxation> {
    if l > u {
        return Err(Error::InvalidParameter(format!(
            "relu_relax requires l <= u, got [{l}, {u}]"
        )));
    }
    if l >= 0.0 {
        return Ok(ReluRelaxation {
            lower_slope: 1.0,
            lower_intercept: 0.0,
            upper_slope: 1.0,
            upper_intercept: 0.0,
        });
    }
    if u <= 0.0 {
        return Ok(ReluRelaxation {
            lower_slope: 0.0,
            lower_intercept: 0.0,
            upper_slope: 0.0,
            upper_intercept: 0.0,
        });
    }
    let upper_slope = u / (u - l);
    let upper_intercept = -upper_slope * l;
    let lower_slope = match mode {
        RelaxMode::Parallel => upper_slope,
        RelaxMode::Adaptive => {
            if u >= -l {
                1.0
            } else {
                0.0
            }
        }
        RelaxMode::FixedLambda(lambda) => {
            if !(0.0..=1.0).contains(&lambda) {
                return Err(Error::InvalidParameter(format!(
                    "lambda must lie in [0,1], got {lambda}"
                )));
            }
            lambda
        }
    };
    Ok(ReluRelaxation {
        lower_slope,
        lower_intercept: 0.0,
        upper_slope,
        upper_intercept,
    })
}

/// Linear bounds on a layer's output as functions of the network input:
/// `L x + b_L <= z(x) <= U x + b_U` over the input region.
#[derive(Debug, Clone)]
pub struct LinearFunctionBounds {
    pub lower_coeffs: Vec<Vec<f64>>,
    pub lower_offset: Vec<f64>,
    pub upper_coeffs: Vec<Vec<f64>>,
    pub upper_offset: Vec<f64>,
}

/// Lower bound of `c . f(x) + c0` over the problem's ball, by propagating the
/// objective backward: affine layers exactly, ReLU layers by picking the lower
/// or upper relaxation per coefficient sign, then concretizing the resulting
/// affine-in-input expression with the dual norm. `preact_bounds` must be
/// sound for the same region (one entry per ReLU layer).
///
/// Besides the fully back-substituted bound, the partially propagated linear
/// form is also concretized against every intermediate post-activation box,
/// and the best of the candidates is returned. Each candidate is a sound
/// lower bound; keeping the max guarantees the result never falls below the
/// plain interval bound built from the same pre-activation bounds.
pub fn backward_lower_bound(
    net: &Network,
    problem: &VerificationProblem,
    c: &[f64],
    c0: f64,
    mode: RelaxMode,
    preact_bounds: &[LayerBounds],
) -> Result<f64> {
    Ok(backward_bound_detail(net, problem, c, c0, mode, preact_bounds)?.value)
}

/// Backward bound plus the ball point attaining the concretized linear form
/// (a useful counterexample candidate for branch-and-bound).
pub(crate) struct BackwardBound {
    pub value: f64,
    pub minimizer: Vec<f64>,
}

pub(crate) fn backward_bound_detail(
    net: &Network,
    problem: &VerificationProblem,
    c: &[f64],
    c0: f64,
    mode: RelaxMode,
    preact_bounds: &[LayerBounds],
) -> Result<BackwardBound> {
    if c.len() != net.num_classes() {
        return Err(Error::DimensionMismatch(format!(
            "objective length {} != num_classes {}",
            c.len(),
            net.num_classes()
        )));
    }
    let num_relu = net.layers().iter().filter(|l| matches!(l, Layer::Relu)).count();
    if preact_bounds.len() != num_relu {
        return Err(Error::DimensionMismatch(format!(
            "{} pre-activation bounds supplied for {num_relu} ReLU layers",
            preact_bounds.len()
        )));
    }

    // Maintain `coeffs . (current layer input) + offset` as a lower bound of
    // the objective, walking the layers from last to first.
    let mut coeffs = c.to_vec();
    let mut offset = c0;
    let mut relu_idx = num_relu;
    let mut best = f64::NEG_INFINITY;
    for layer in net.layers().iter().rev() {
        match layer {
            Layer::Affine { weights, bias } => {
                offset += coeffs.iter().zip(bias).map(|(a, b)| a * b).sum::<f64>();
                coeffs = crate::network::matvec_transpose(weights, &coeffs);
            }
            Layer::Relu => {
                relu_idx -= 1;
                let bounds = &preact_bounds[relu_idx];
                if bounds.len() != coeffs.len() {
                    return Err(Error::DimensionMismatch(format!(
                        "relu layer {relu_idx}: bounds len {} != width {}",
                        bounds.len(),
                        coeffs.len()
                    )));
                }
                // Candidate: stop here and minimize the current linear form
                // over this layer's post-activation box.
                let post = bounds.relu();
                let stop_here: f64 = offset
                    + coeffs
                        .iter()
                        .zip(post.lower.iter().zip(&post.upper))
                        .map(|(a, (l, u))| if *a >= 0.0 { a * l } else { a * u })
                        .sum::<f64>();
                best = best.max(stop_here);
                for (j, a) in coeffs.iter_mut().enumerate() {
                    let relax = relu_relax(bounds.lower[j], bounds.upper[j], mode)?;
                    // For a lower bound: positive coefficients take the ReLU's
                    // lower line, negative ones its upper line.
                    let (slope, intercept) = if *a >= 0.0 {
                        (relax.lower_slope, relax.lower_intercept)
                    } else {
                        (relax.upper_slope, relax.upper_intercept)
                    };
                    offset += *a * intercept;
                    *a *= slope;
                }
            }
        }
    }

    // Concretize a . x + offset over the ball around x0.
    let at_center: f64 = coeffs.iter().zip(&problem.x0).map(|(a, x)| a * x).sum();
    let dual = problem.norm.dual_norm(&coeffs);
    let value = best.max(at_center + offset - problem.eps * dual);
    let minimizer = ball_minimizer(&coeffs, &problem.x0, problem.eps, problem.norm);
    Ok(BackwardBound { value, minimizer })
}

/// Point of the ball minimizing `a . x` (Hölder equality direction).
fn ball_minimizer(a: &[f64], x0: &[f64], eps: f64, norm: crate::problem::Norm) -> Vec<f64> {
    use crate::problem::Norm;
    match norm {
        Norm::Linf => x0
            .iter()
            .zip(a)
            .map(|(x, ai)| x - eps * ai.signum())
            .collect(),
        Norm::L2 => {
            let n = Norm::L2.norm(a);
            if n == 0.0 {
                x0.to_vec()
            } else {
                x0.iter().zip(a).map(|(x, ai)| x - eps * ai / n).collect()
            }
        }
        Norm::L1 => {
            let mut best = 0;
            for (j, v) in a.iter().enumerate() {
                if v.abs() > a[best].abs() {
                    best = j;
                }
            }
            let mut x = x0.to_vec();
            x[best] -= eps * a[best].signum();
            x
        }
    }
}

/// Pre-activation bounds for every ReLU layer.
///
/// `Interval` delegates to IBP on the enclosing box. `Polyhedra` computes each
/// layer's bounds by backward substitution to the input, layer by layer, so
/// later layers concretize against the tighter earlier bounds.
pub fn preactivation_bounds(
    problem: &VerificationProblem,
    net: &Network,
    source: BoundSource,
) -> Result<Vec<LayerBounds>> {
    match source {
        BoundSource::Interval => {
            let (lo, hi) = problem.enclosing_box();
            Ok(ibp_propagate(net, &lo, &hi)?.preactivations(net))
        }
        BoundSource::Polyhedra => polyhedra_preactivation_bounds(problem, net, RelaxMode::Adaptive),
    }
}

fn polyhedra_preactivation_bounds(
    problem: &VerificationProblem,
    net: &Network,
    mode: RelaxMode,
) -> Result<Vec<LayerBounds>> {
    let mut done: Vec<LayerBounds> = Vec::new();
    // Relu layer indices in network order, with the index of their feeding
    // affine layer's position in the layer list.
    let relu_positions: Vec<usize> = net
        .layers()
        .iter()
        .enumerate()
        .filter(|(_, l)| matches!(l, Layer::Relu))
        .map(|(i, _)| i)
        .collect();
    for &pos in &relu_positions {
        // Sub-network consisting of layers 0..pos (ends with the affine layer
        // producing this pre-activation).
        let sub = Network::new(net.layers()[..pos].to_vec())?;
        let width = sub.num_classes();
        let mut lower = Vec::with_capacity(width);
        let mut upper = Vec::with_capacity(width);
        for j in 0..width {
            let mut c = vec![0.0; width];
            c[j] = 1.0;
            let lo = backward_lower_bound(&sub, problem, &c, 0.0, mode, &done)?;
            c[j] = -1.0;
            let hi = -backward_lower_bound(&sub, problem, &c, 0.0, mode, &done)?;
            lower.push(lo);
            upper.push(hi);
        }
        done.push(LayerBounds { lower, upper });
    }
    Ok(done)
}

/// CROWN robustness verification: robust iff the backward lower bound of
/// every margin `f_label - f_other` clears the soundness threshold.
pub fn crown_verify(
    problem: &VerificationProblem,
    net: &Network,
    mode: RelaxMode,
    source: BoundSource,
) -> Result<MarginVerdict> {
    let preact = preactivation_bounds(problem, net, source)?;
    crown_verify_with_bounds(problem, net, mode, &preact)
}

/// CROWN verification against caller-supplied pre-activation bounds (used for
/// shared-bounds comparisons and by branch-and-bound).
pub fn crown_verify_with_bounds(
    problem: &VerificationProblem,
    net: &Network,
    mode: RelaxMode,
    preact: &[LayerBounds],
) -> Result<MarginVerdict> {
    let classes = net.num_classes();
    let mut margins = Vec::with_capacity(classes.saturating_sub(1));
    for other in 0..classes {
        if other == problem.label {
            continue;
        }
        let mut c = vec![0.0; classes];
        c[problem.label] = 1.0;
        c[other] = -1.0;
        let lb = backward_lower_bound(net, problem, &c, 0.0, mode, preact)?;
        margins.push((other, lb));
    }
    Ok(MarginVerdict::from_margins(margins))
}

/// Linear input-space bounds for every affine layer's output, maintained in
/// the `L x + b_L <= z(x) <= U x + b_U` form. Exposed mainly for containment
/// diagnostics; the verifier itself uses the backward objective form above.
pub fn linear_function_bounds(
    net: &Network,
    mode: RelaxMode,
    preact_bounds: &[LayerBounds],
) -> Result<Vec<LinearFunctionBounds>> {
    let mut out = Vec::new();
    for (pos, layer) in net.layers().iter().enumerate() {
        if matches!(layer, Layer::Relu) {
            continue;
        }
        let sub = Network::new(net.layers()[..=pos].to_vec())?;
        let relu_in_sub = sub
            .layers()
            .iter()
            .filter(|l| matches!(l, Layer::Relu))
            .count();
        let width = sub.num_classes();
        let dim = net.input_dim();
        let mut bounds = LinearFunctionBounds {
            lower_coeffs: vec![vec![0.0; dim]; width],
            lower_offset: vec![0.0; width],
            upper_coeffs: vec![vec![0.0; dim]; width],
            upper_offset: vec![0.0; width],
        };
        for j in 0..width {
            let mut c = vec![0.0; width];
            c[j] = 1.0;
            let (lo_c, lo_o) =
                backward_linear_form(&sub, &c, 0.0, mode, &preact_bounds[..relu_in_sub])?;
            c[j] = -1.0;
            let (hi_c, hi_o) =
                backward_linear_form(&sub, &c, 0.0, mode, &preact_bounds[..relu_in_sub])?;
            bounds.lower_coeffs[j] = lo_c;
            bounds.lower_offset[j] = lo_o;
            bounds.upper_coeffs[j] = hi_c.iter().map(|v| -v).collect();
            bounds.upper_offset[j] = -hi_o;
        }
        out.push(bounds);
    }
    Ok(out)
}

/// The affine-in-input lower form `(coeffs, offset)` of `c . f(x) + c0`
/// produced by the backward pass, before concretization.
fn backward_linear_form(
    net: &Network,
    c: &[f64],
    c0: f64,
    mode: RelaxMode,
    preact_bounds: &[LayerBounds],
) -> Result<(Vec<f64>, f64)> {
    let mut coeffs = c.to_vec();
    let mut offset = c0;
    let mut relu_idx = preact_bounds.len();
    for layer in net.layers().iter().rev() {
        match layer {
            Layer::Affine { weights, bias } => {
                offset += coeffs.iter().zip(bias).map(|(a, b)| a * b).sum::<f64>();
                coeffs = crate::network::matvec_transpose(weights, &coeffs);
            }
            Layer::Relu => {
                relu_idx -= 1;
                let bounds = &preact_bounds[relu_idx];
                for (j, a) in coeffs.iter_mut().enumerate() {
                    let relax = relu_relax(bounds.lower[j], bounds.upper[j], mode)?;
                    let (slope, intercept) = if *a >= 0.0 {
                        (relax.lower_slope, relax.lower_intercept)
                    } else {
                        (relax.upper_slope, relax.upper_intercept)
                    };
                    offset += *a * intercept;
                    *a *= slope;
                }
            }
        }
    }
    Ok((coeffs, offset))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::Network;
    use crate::problem::{Norm, Verdict};
    use crate::rng::{derive_seed, rng_from_seed};
    use rand::Rng;

    #[test]
    fn relax_unstable_symmetric() {
        // Chord through (l,0) and (u,u) for l=-1, u=1: slope 1/2, intercept 1/2.
        let r = relu_relax(-1.0, 1.0, RelaxMode::Parallel).unwrap();
        assert!((r.upper_slope - 0.5).abs() < 1e-15);
        assert!((r.upper_intercept - 0.5).abs() < 1e-15);
        assert!((r.lower_slope - 0.5).abs() < 1e-15);
        assert_eq!(r.lower_intercept, 0.0);
    }

    #[test]
    fn relax_stable_cases() {
        let active = relu_relax(0.2, 1.0, RelaxMode::Adaptive).unwrap();
        assert_eq!(active.lower_slope, 1.0);
        assert_eq!(active.upper_slope, 1.0);
        assert_eq!(active.upper_intercept, 0.0);
        let inactive = relu_relax(-2.0, -0.5, RelaxMode::Adaptive).unwrap();
        assert_eq!(inactive.lower_slope, 0.0);
        assert_eq!(inactive.upper_slope, 0.0);
    }

    #[test]
    fn relax_rejects_inverted_interval() {
        assert!(relu_relax(1.0, -1.0, RelaxMode::Adaptive).is_err());
    }

    #[test]
    fn relax_brackets_relu_on_grid() {
        let mut rng = rng_from_seed(7);
        for _ in 0..50 {
            let l = rng.gen_range(-2.0..1.0);
            let u = l + rng.gen_range(0.0..3.0);
            for mode in [
                RelaxMode::Parallel,
                RelaxMode::Adaptive,
                RelaxMode::FixedLambda(rng.gen_range(0.0..=1.0)),
            ] {
                let r = relu_relax(l, u, mode).unwrap();
                for k in 0..=1000 {
                    let z = l + (u - l) * k as f64 / 1000.0;
                    let relu = z.max(0.0);
                    let lo = r.lower_slope * z + r.lower_intercept;
                    let hi = r.upper_slope * z + r.upper_intercept;
                    assert!(lo <= relu + 1e-12, "lower violated at {z} for {mode:?}");
                    assert!(hi >= relu - 1e-12, "upper violated at {z} for {mode:?}");
                }
            }
        }
    }

    #[test]
    fn linear_network_bound_is_exact_hoelder() {
        // No ReLU: bound must equal c.f(x0) + c0 - eps*|cW|_q with equality
        // attained at the dual-direction point.
        let net = Network::from_affine_layers(vec![(
            vec![vec![1.0, -2.0], vec![0.5, 0.5]],
            vec![0.3, -0.1],
        )])
        .unwrap();
        for norm in [Norm::Linf, Norm::L2, Norm::L1] {
            let problem = VerificationProblem::new(vec![0.4, 0.6], 0, 0.1, norm).unwrap();
            let c = vec![1.0, -1.0];
            let detail =
                backward_bound_detail(&net, &problem, &c, 0.25, RelaxMode::Adaptive, &[]).unwrap();
            let logits = net.forward(&detail.minimizer).unwrap();
            let attained = c[0] * logits[0] + c[1] * logits[1] + 0.25;
            assert!(
                (attained - detail.value).abs() < 1e-12,
                "{norm}: bound {} not attained ({attained})",
                detail.value
            );
        }
    }

    #[test]
    fn zero_eps_returns_exact_objective() {
        let net = Network::random(3, &[4, 4], 2, 1.0, 77);
        let x0 = vec![0.2, 0.9, 0.4];
        let problem = VerificationProblem::new(x0.clone(), 0, 0.0, Norm::Linf).unwrap();
        let preact = preactivation_bounds(&problem, &net, BoundSource::Interval).unwrap();
        let c = vec![1.0, -1.0];
        let got =
            backward_lower_bound(&net, &problem, &c, 0.5, RelaxMode::Adaptive, &preact).unwrap();
        let logits = net.forward(&x0).unwrap();
        let exact = logits[0] - logits[1] + 0.5;
        assert!((got - exact).abs() < 1e-10, "got {got}, exact {exact}");
    }

    #[test]
    fn bound_below_sampled_minimum() {
        let net = Network::random(3, &[5, 4], 3, 1.0, 83);
        let x0 = vec![0.5, 0.4, 0.6];
        let problem = VerificationProblem::new(x0.clone(), 0, 0.05, Norm::Linf).unwrap();
        let preact = preactivation_bounds(&problem, &net, BoundSource::Polyhedra).unwrap();
        let c = vec![1.0, -1.0, 0.0];
        let lb =
            backward_lower_bound(&net, &problem, &c, 0.0, RelaxMode::Adaptive, &preact).unwrap();
        let mut rng = rng_from_seed(derive_seed(83, 3));
        let mut sampled_min = f64::INFINITY;
        for _ in 0..10_000 {
            let x: Vec<f64> = x0.iter().map(|v| v + rng.gen_range(-0.05..=0.05)).collect();
            let logits = net.forward(&x).unwrap();
            sampled_min = sampled_min.min(logits[0] - logits[1]);
        }
        assert!(
            lb <= sampled_min + 1e-9,
            "backward bound {lb} exceeds sampled minimum {sampled_min}"
        );
    }

    #[test]
    fn polyhedra_bounds_nested_in_interval() {
        // With shared first-layer bounds the polyhedra bounds must sit inside
        // the interval ones, componentwise.
        let net = Network::random(3, &[6, 5], 2, 1.0, 97);
        let problem =
            VerificationProblem::new(vec![0.5, 0.5, 0.5], 0, 0.08, Norm::Linf).unwrap();
        let ibp = preactivation_bounds(&problem, &net, BoundSource::Interval).unwrap();
        let poly = preactivation_bounds(&problem, &net, BoundSource::Polyhedra).unwrap();
        assert_eq!(ibp.len(), poly.len());
        for (b_ibp, b_poly) in ibp.iter().zip(&poly) {
            for j in 0..b_ibp.len() {
                assert!(b_poly.lower[j] >= b_ibp.lower[j] - 1e-9);
                assert!(b_poly.upper[j] <= b_ibp.upper[j] + 1e-9);
            }
        }
    }

    #[test]
    fn preactivation_bounds_contain_sampled_activations() {
        let net = Network::random(2, &[5, 4], 2, 1.0, 101);
        let x0 = vec![0.5, 0.5];
        let problem = VerificationProblem::new(x0.clone(), 0, 0.06, Norm::Linf).unwrap();
        let poly = preactivation_bounds(&problem, &net, BoundSource::Polyhedra).unwrap();
        let mut rng = rng_from_seed(derive_seed(101, 5));
        for _ in 0..10_000 {
            let x: Vec<f64> = x0.iter().map(|v| v + rng.gen_range(-0.06..=0.06)).collect();
            let trace = net.forward_trace(&x).unwrap();
            let mut relu_idx = 0;
            for (i, layer) in net.layers().iter().enumerate() {
                if matches!(layer, Layer::Relu) {
                    assert!(
                        poly[relu_idx].contains(&trace[i], 1e-9),
                        "pre-activation escaped polyhedra bounds"
                    );
                    relu_idx += 1;
                }
            }
        }
    }

    #[test]
    fn single_affine_layer_bounds_match_interval() {
        let net = Network::from_affine_layers(vec![(
            vec![vec![2.0, -1.0], vec![0.5, 1.5]],
            vec![0.1, -0.2],
        )])
        .unwrap();
        let problem = VerificationProblem::new(vec![0.3, 0.7], 0, 0.05, Norm::Linf).unwrap();
        // No ReLU layer: both sources yield an empty list, and the margin
        // bound itself is the exact interval value.
        let ibp = preactivation_bounds(&problem, &net, BoundSource::Interval).unwrap();
        let poly = preactivation_bounds(&problem, &net, BoundSource::Polyhedra).unwrap();
        assert!(ibp.is_empty() && poly.is_empty());
        let from_crown = crown_verify(&problem, &net, RelaxMode::Adaptive, BoundSource::Polyhedra)
            .unwrap()
            .min_margin();
        let from_ibp = crate::interval::ibp_verify(&problem, &net, false)
            .unwrap()
            .min_margin();
        assert!((from_crown - from_ibp).abs() < 1e-12);
    }

    #[test]
    fn linear_net_verdicts_match_ibp() {
        let net = Network::from_affine_layers(vec![(
            vec![vec![1.0, -1.0], vec![-0.5, 0.5]],
            vec![0.0, 0.0],
        )])
        .unwrap();
        for &eps in &[0.01, 0.1, 0.3, 0.6] {
            let problem = VerificationProblem::new(vec![0.9, 0.2], 0, eps, Norm::Linf).unwrap();
            let a = crate::interval::ibp_verify(&problem, &net, false).unwrap();
            let b =
                crown_verify(&problem, &net, RelaxMode::Adaptive, BoundSource::Polyhedra).unwrap();
            assert_eq!(a.verdict, b.verdict, "eps = {eps}");
        }
    }

    #[test]
    fn constant_output_net_robust_at_any_eps() {
        // Last layer has identical rows: every margin is exactly zero weight,
        // differing only in bias.
        let net = Network::from_affine_layers(vec![
            (vec![vec![1.0], vec![-1.0]], vec![0.0, 0.0]),
            (vec![vec![0.3, 0.3], vec![0.3, 0.3]], vec![1.0, 0.0]),
        ])
        .unwrap();
        let problem = VerificationProblem::new(vec![0.5], 0, 50.0, Norm::Linf).unwrap();
        let verdict =
            crown_verify(&problem, &net, RelaxMode::Adaptive, BoundSource::Polyhedra).unwrap();
        assert_eq!(verdict.verdict, Verdict::Robust);
    }

    #[test]
    fn crown_margin_at_least_ibp_margin_shared_bounds() {
        let mut rng = rng_from_seed(113);
        for trial in 0..40 {
            let net = Network::random(3, &[5, 4], 3, 1.2, derive_seed(113, trial));
            let x0: Vec<f64> = (0..3).map(|_| rng.gen_range(0.2..0.8)).collect();
            let label = net.predict(&x0).unwrap();
            let eps = rng.gen_range(0.02..0.15);
            let problem = VerificationProblem::new(x0, label, eps, Norm::Linf).unwrap();
            let shared = preactivation_bounds(&problem, &net, BoundSource::Interval).unwrap();
            let ibp = crate::interval::ibp_verify(&problem, &net, false).unwrap();
            let crown =
                crown_verify_with_bounds(&problem, &net, RelaxMode::Adaptive, &shared).unwrap();
            for (&(ca, ma), &(cb, mb)) in ibp.margins.iter().zip(&crown.margins) {
                assert_eq!(ca, cb);
                assert!(
                    mb >= ma - 1e-9,
                    "trial {trial}: crown margin {mb} below ibp margin {ma}"
                );
            }
        }
    }

    #[test]
    fn linear_function_bounds_contain_samples() {
        let net = Network::random(2, &[4, 3], 2, 1.0, 131);
        let x0 = vec![0.5, 0.5];
        let problem = VerificationProblem::new(x0.clone(), 0, 0.05, Norm::Linf).unwrap();
        let preact = preactivation_bounds(&problem, &net, BoundSource::Interval).unwrap();
        let lfb = linear_function_bounds(&net, RelaxMode::Adaptive, &preact).unwrap();
        // Check the final entry (the logits) against samples.
        let out = lfb.last().unwrap();
        let mut rng = rng_from_seed(derive_seed(131, 9));
        for _ in 0..10_000 {
            let x: Vec<f64> = x0.iter().map(|v| v + rng.gen_range(-0.05..=0.05)).collect();
            let logits = net.forward(&x).unwrap();
            for (j, &z) in logits.iter().enumerate() {
                let lo: f64 = out.lower_coeffs[j]
                    .iter()
                    .zip(&x)
                    .map(|(a, v)| a * v)
                    .sum::<f64>()
                    + out.lower_offset[j];
                let hi: f64 = out.upper_coeffs[j]
                    .iter()
                    .zip(&x)
                    .map(|(a, v)| a * v)
                    .sum::<f64>()
                    + out.upper_offset[j];
                assert!(lo <= z + 1e-9 && z <= hi + 1e-9, "linear bounds violated");
            }
        }
    }
}

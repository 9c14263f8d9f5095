//! LP-full verifier: the triangle relaxation of every unstable ReLU, solved
//! exactly as one linear program per competitor class. The tightest
//! verification built from single-neuron linear relaxations.

use crate::error::{Error, Result};
use crate::interval::LayerBounds;
use crate::network::Network;
use crate::problem::{MarginVerdict, Norm, Verdict, VerificationProblem, TAU};
use crate::simplex::{simplex_solve, LinearProgram, LpSolution};
use crate::verifier::Deadline;

/// Sign constraint imposed on a split neuron by branch-and-bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SignConstraint {
    /// `zhat >= 0`
    NonNegative,
    /// `zhat <= 0`
    NonPositive,
}

/// LP solver tolerance used by the verifiers.
pub const LP_TOL: f64 = 1e-9;

/// Encode and solve `min f_label - f_other` over the relaxation, returning
/// the optimum value and the input part of the optimizer.
///
/// Variables are the input plus every post-activation. Affine layers become
/// paired-inequality equalities, stable neurons collapse to `z = 0` or
/// `z = zhat`, and each unstable neuron contributes the three polytope rows
/// `z >= 0`, `z >= zhat`, `z <= u/(u-l) (zhat - l)`.
pub fn margin_lp_value(
    net: &Network,
    problem: &VerificationProblem,
    preact_bounds: &[LayerBounds],
    other: usize,
    sign_constraints: &[(usize, usize, SignConstraint)],
) -> Result<LpSolution> {
    let n = net.input_dim();
    let relu_widths: Vec<usize> = preact_bounds.iter().map(LayerBounds::len).collect();
    let total_vars: usize = n + relu_widths.iter().sum::<usize>();

    // Variable layout: x in 0..n, then one block per ReLU layer.
    let mut block_start = Vec::with_capacity(relu_widths.len());
    let mut acc = n;
    for w in &relu_widths {
        block_start.push(acc);
        acc += w;
    }

    let mut lp = LinearProgram::new(vec![0.0; total_vars])?;
    let (box_lo, box_hi) = problem.enclosing_box();
    for j in 0..n {
        lp.bound(j, box_lo[j], box_hi[j]);
    }

    // zhat rows as expressions over the previous block.
    let affine = net.affine_layers();
    let mut relu_idx = 0;
    for (weights, bias) in affine.iter().take(affine.len() - 1) {
        let prev_start = if relu_idx == 0 {
            0
        } else {
            block_start[relu_idx - 1]
        };
        let cur_start = block_start[relu_idx];
        let bounds = &preact_bounds[relu_idx];
        for j in 0..weights.len() {
            // Row builder for `zhat_j = weights[j] . prev + bias[j]`.
            let zhat_row = |scale: f64, extra: &[(usize, f64)]| {
                let mut row = vec![0.0; total_vars];
                for (i, &w) in weights[j].iter().enumerate() {
                    row[prev_start + i] = scale * w;
                }
                for &(col, v) in extra {
                    row[col] += v;
                }
                row
            };
            let z = cur_start + j;
            let (l, u) = (bounds.lower[j], bounds.upper[j]);
            if l >= 0.0 {
                // Stable active: z = zhat.
                lp.add_eq(zhat_row(-1.0, &[(z, 1.0)]), bias[j])?;
            } else if u <= 0.0 {
                // Stable inactive: z = 0.
                lp.bound(z, 0.0, 0.0);
            } else {
                // Triangle: z >= 0, z >= zhat, z <= s (zhat - l).
                lp.bound(z, 0.0, f64::INFINITY);
                lp.add_le(zhat_row(1.0, &[(z, -1.0)]), -bias[j])?;
                let s = u / (u - l);
                lp.add_le(zhat_row(-s, &[(z, 1.0)]), s * (bias[j] - l))?;
            }
            // Interval box on the post-activation (implied, but it keeps the
            // LP tight against whatever bounds the caller supplied).
            lp.bound(z, l.max(0.0), u.max(0.0));
        }
        relu_idx += 1;
    }

    // Branch sign constraints on pre-activations.
    for &(layer, j, sign) in sign_constraints {
        let (weights, bias) = affine[layer];
        let prev_start = if layer == 0 { 0 } else { block_start[layer - 1] };
        let mut row = vec![0.0; total_vars];
        for (i, &w) in weights[j].iter().enumerate() {
            row[prev_start + i] = w;
        }
        match sign {
            SignConstraint::NonPositive => lp.add_le(row, -bias[j])?,
            SignConstraint::NonNegative => lp.add_ge(row, -bias[j])?,
        }
    }

    // Objective: (W_last[label] - W_last[other]) . z_last + bias difference.
    let (w_last, b_last) = affine.last().unwrap();
    let last_start = block_start.last().copied().unwrap_or(0);
    for i in 0..w_last[0].len() {
        lp.objective[last_start + i] = w_last[problem.label][i] - w_last[other][i];
    }
    let constant = b_last[problem.label] - b_last[other];

    match simplex_solve(&lp, LP_TOL)? {
        LpSolution::Optimal { x, value } => Ok(LpSolution::Optimal {
            x: x[..n].to_vec(),
            value: value + constant,
        }),
        other => Ok(other),
    }
}

/// LP-full robustness verification (Linf only: the ball is encoded as box
/// bounds). One LP per competitor class; robust iff every optimum clears the
/// soundness threshold. A solver stall degrades to Unknown with a diagnostic
/// note rather than a wrong verdict.
pub fn lp_full_verify(
    problem: &VerificationProblem,
    net: &Network,
    preact_bounds: &[LayerBounds],
    deadline: Deadline,
) -> Result<MarginVerdict> {
    if problem.norm != Norm::Linf {
        return Err(Error::UnsupportedNorm {
            verifier: "lpfull",
            norm: problem.norm.to_string(),
        });
    }
    let mut margins = Vec::new();
    let mut note = None;
    let mut timed_out = false;
    for other in 0..net.num_classes() {
        if other == problem.label {
            continue;
        }
        if deadline.expired() {
            timed_out = true;
            break;
        }
        match margin_lp_value(net, problem, preact_bounds, other, &[]) {
            Ok(LpSolution::Optimal { value, .. }) => margins.push((other, value)),
            Ok(LpSolution::Infeasible) => {
                // The relaxation contains every true trajectory, so an
                // infeasible LP can only mean inconsistent inputs.
                return Err(Error::InvalidParameter(
                    "relaxation LP infeasible; pre-activation bounds are not sound".into(),
                ));
            }
            Ok(LpSolution::Unbounded) => {
                return Err(Error::InvalidParameter(
                    "relaxation LP unbounded; missing box bounds".into(),
                ))
            }
            Err(Error::SolverStalled { iterations }) => {
                note = Some(format!(
                    "solver stalled after {iterations} pivots on class {other}"
                ));
                margins.push((other, f64::NEG_INFINITY));
            }
            Err(e) => return Err(e),
        }
    }
    if timed_out {
        return Ok(MarginVerdict {
            verdict: Verdict::Timeout,
            margins,
            note: Some("deadline expired between class LPs".into()),
        });
    }
    let verdict = if margins.iter().all(|&(_, m)| m > TAU) {
        Verdict::Robust
    } else {
        Verdict::Unknown
    };
    Ok(MarginVerdict {
        verdict,
        margins,
        note,
    })
}

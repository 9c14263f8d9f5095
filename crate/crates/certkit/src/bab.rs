//! Complete verification by branch-and-bound on ReLU stability, plus the
//! exact brute-force margin oracle used as ground truth in the test suites.
//!
//! Each branch forces a set of neurons active (`zhat >= 0`, `z = zhat`) or
//! inactive (`zhat <= 0`, `z = 0`), tightening the pre-activation intervals;
//! an incomplete verifier bounds the branch, concrete evaluation hunts for
//! counterexamples, and fully-resolved branches collapse to one exact LP over
//! the affine region. Margins inside the floating-point soundness band
//! resolve conservatively through exact forward evaluation at the branch
//! optimum, so a verdict is never asserted off the back of rounding error.

use crate::error::{Error, Result};
use crate::interval::{affine_interval, LayerBounds};
use crate::lpfull::{margin_lp_value, SignConstraint, LP_TOL};
use crate::network::{Layer, Network};
use crate::problem::{Norm, VerificationProblem, TAU};
use crate::simplex::{simplex_solve, LinearProgram, LpSolution};
use crate::verifier::Deadline;
use std::collections::BTreeMap;
use std::time::Instant;

/// Forced phase of a split neuron.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitChoice {
    ForcedActive,
    ForcedInactive,
}

/// One branch of the search tree: the set of neurons split so far, keyed by
/// `(relu layer index, neuron index)`. Each neuron is split at most once.
#[derive(Debug, Clone, Default)]
pub struct BranchState {
    pub splits: BTreeMap<(usize, usize), SplitChoice>,
}

/// Incomplete verifier used for branch bounding.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundingMethod {
    Interval,
    Polyhedra,
    LpFull,
}

/// Neuron selection rule for splitting. The gap rule picks the unstable
/// neuron with the widest pre-activation interval, ties broken by position.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BranchRule {
    #[default]
    WidestGap,
}

#[derive(Debug, Clone)]
pub struct BabConfig {
    /// Wall-clock budget; `None` runs to completion.
    pub timeout_s: Option<f64>,
    pub bounding: BoundingMethod,
    pub branch_rule: BranchRule,
}

impl Default for BabConfig {
    fn default() -> Self {
        BabConfig {
            timeout_s: None,
            bounding: BoundingMethod::Polyhedra,
            branch_rule: BranchRule::WidestGap,
        }
    }
}

/// Outcome of complete verification.
#[derive(Debug, Clone, PartialEq)]
pub enum BabOutcome {
    Robust,
    /// Counterexample satisfying `|x - x0|_inf <= eps` and
    /// `predict(x) != label` under exact forward evaluation.
    NotRobust(Vec<f64>),
    Timeout,
}

#[derive(Debug, Clone)]
pub struct CompleteVerdict {
    pub outcome: BabOutcome,
    pub branches_explored: u64,
    pub wall_time_s: f64,
}

/// Branch-and-bound complete verification (Linf only).
pub fn bab_verify(
    problem: &VerificationProblem,
    net: &Network,
    config: &BabConfig,
) -> Result<CompleteVerdict> {
    bab_verify_with_deadline(problem, net, config, Deadline::none())
}

/// Like [`bab_verify`], bounded additionally by an external deadline (the
/// earlier of it and the config timeout wins).
pub fn bab_verify_with_deadline(
    problem: &VerificationProblem,
    net: &Network,
    config: &BabConfig,
    external: Deadline,
) -> Result<CompleteVerdict> {
    if problem.norm != Norm::Linf {
        return Err(Error::UnsupportedNorm {
            verifier: "bab",
            norm: problem.norm.to_string(),
        });
    }
    let start = Instant::now();
    let deadline = match config.timeout_s {
        Some(s) => Deadline::in_seconds(s).earliest(external),
        None => external,
    };
    let mut branches: u64 = 0;
    for other in 0..net.num_classes() {
        if other == problem.label {
            continue;
        }
        match verify_class(problem, net, other, config, deadline, &mut branches)? {
            ClassOutcome::Verified => {}
            ClassOutcome::Counterexample(x) => {
                return Ok(CompleteVerdict {
                    outcome: BabOutcome::NotRobust(x),
                    branches_explored: branches,
                    wall_time_s: start.elapsed().as_secs_f64(),
                })
            }
            ClassOutcome::TimedOut => {
                return Ok(CompleteVerdict {
                    outcome: BabOutcome::Timeout,
                    branches_explored: branches,
                    wall_time_s: start.elapsed().as_secs_f64(),
                })
            }
        }
    }
    Ok(CompleteVerdict {
        outcome: BabOutcome::Robust,
        branches_explored: branches,
        wall_time_s: start.elapsed().as_secs_f64(),
    })
}

enum ClassOutcome {
    Verified,
    Counterexample(Vec<f64>),
    TimedOut,
}

fn verify_class(
    problem: &VerificationProblem,
    net: &Network,
    other: usize,
    config: &BabConfig,
    deadline: Deadline,
    branches: &mut u64,
) -> Result<ClassOutcome> {
    let mut stack = vec![BranchState::default()];
    while let Some(state) = stack.pop() {
        if deadline.expired() {
            return Ok(ClassOutcome::TimedOut);
        }
        *branches += 1;

        // Interval bounds tightened by the branch's split constraints.
        let Some(branch) = branch_bounds(net, problem, &state) else {
            continue; // interval-empty: the branch region is infeasible
        };

        // Bound the margin with the configured incomplete verifier.
        let (lower_bound, candidate) =
            match bound_branch(problem, net, other, &state, &branch, config.bounding) {
                Ok(BranchBound::Infeasible) => continue,
                Ok(BranchBound::Bound { value, minimizer }) => (value, minimizer),
                Err(Error::SolverStalled { .. }) => (f64::NEG_INFINITY, None),
                Err(e) => return Err(e),
            };
        if lower_bound > TAU {
            continue; // branch verified
        }

        // Upper bounding: exact evaluation of the bound's minimizer, then a
        // short PGD run started from it.
        if let Some(x) = search_counterexample(net, problem, candidate.as_deref())? {
            return Ok(ClassOutcome::Counterexample(x));
        }

        // Choose the next neuron to split.
        let split = pick_split(&branch.preacts, config.branch_rule);
        match split {
            Some(key) => {
                // Inactive branch is explored first (pushed last).
                let mut active = state.clone();
                active.splits.insert(key, SplitChoice::ForcedActive);
                stack.push(active);
                let mut inactive = state;
                inactive.splits.insert(key, SplitChoice::ForcedInactive);
                stack.push(inactive);
            }
            None => {
                // No unstable neuron left: the branch region is one affine
                // piece, so a single exact LP decides it.
                match exact_region_lp(net, problem, &branch.preacts, other)? {
                    LpSolution::Infeasible => continue,
                    LpSolution::Unbounded => {
                        return Err(Error::InvalidParameter(
                            "region LP unbounded despite box bounds".into(),
                        ))
                    }
                    LpSolution::Optimal { x, value } => {
                        if value > TAU {
                            continue;
                        }
                        if let Some(cex) = validate_counterexample(net, problem, &x)? {
                            return Ok(ClassOutcome::Counterexample(cex));
                        }
                        // Exact optimum evaluates nonnegative: the branch
                        // minimum sits inside the soundness band; accept it.
                        continue;
                    }
                }
            }
        }
    }
    Ok(ClassOutcome::Verified)
}

struct BranchBounds {
    /// Pre-activation bounds per ReLU layer, clamped by the splits.
    preacts: Vec<LayerBounds>,
    /// Post-activation bounds of the layer feeding the last affine layer.
    penultimate: LayerBounds,
}

/// Forward interval propagation with split clamps applied at each ReLU input.
/// Returns `None` when a clamp empties an interval (infeasible branch).
fn branch_bounds(
    net: &Network,
    problem: &VerificationProblem,
    state: &BranchState,
) -> Option<BranchBounds> {
    let (lo, hi) = problem.enclosing_box();
    let mut cur = LayerBounds {
        lower: lo,
        upper: hi,
    };
    let mut preacts = Vec::new();
    let mut relu_idx = 0;
    for layer in net.layers() {
        match layer {
            Layer::Affine { weights, bias } => {
                cur = affine_interval(weights, bias, &cur);
            }
            Layer::Relu => {
                for j in 0..cur.len() {
                    match state.splits.get(&(relu_idx, j)) {
                        Some(SplitChoice::ForcedActive) => {
                            cur.lower[j] = cur.lower[j].max(0.0);
                        }
                        Some(SplitChoice::ForcedInactive) => {
                            cur.upper[j] = cur.upper[j].min(0.0);
                        }
                        None => {}
                    }
                    if cur.lower[j] > cur.upper[j] {
                        return None;
                    }
                }
                preacts.push(cur.clone());
                cur = cur.relu();
                relu_idx += 1;
            }
        }
    }
    let penultimate = match preacts.last() {
        Some(last) => last.relu(),
        None => {
            let (lo, hi) = problem.enclosing_box();
            LayerBounds {
                lower: lo,
                upper: hi,
            }
        }
    };
    Some(BranchBounds {
        preacts,
        penultimate,
    })
}

enum BranchBound {
    Bound {
        value: f64,
        minimizer: Option<Vec<f64>>,
    },
    Infeasible,
}

fn bound_branch(
    problem: &VerificationProblem,
    net: &Network,
    other: usize,
    state: &BranchState,
    branch: &BranchBounds,
    method: BoundingMethod,
) -> Result<BranchBound> {
    match method {
        BoundingMethod::Interval => {
            let margins =
                crate::interval::margin_lower_bounds(net, &branch.penultimate, problem.label);
            let value = margins
                .iter()
                .find(|(c, _)| *c == other)
                .map(|&(_, m)| m)
                .expect("competitor class present");
            Ok(BranchBound::Bound {
                value,
                minimizer: None,
            })
        }
        BoundingMethod::Polyhedra => {
            let mut c = vec![0.0; net.num_classes()];
            c[problem.label] = 1.0;
            c[other] = -1.0;
            let detail = crate::crown::backward_bound_detail(
                net,
                problem,
                &c,
                0.0,
                crate::crown::RelaxMode::Adaptive,
                &branch.preacts,
            )?;
            Ok(BranchBound::Bound {
                value: detail.value,
                minimizer: Some(detail.minimizer),
            })
        }
        BoundingMethod::LpFull => {
            let signs: Vec<(usize, usize, SignConstraint)> = state
                .splits
                .iter()
                .map(|(&(layer, j), &choice)| {
                    let sign = match choice {
                        SplitChoice::ForcedActive => SignConstraint::NonNegative,
                        SplitChoice::ForcedInactive => SignConstraint::NonPositive,
                    };
                    (layer, j, sign)
                })
                .collect();
            match margin_lp_value(net, problem, &branch.preacts, other, &signs)? {
                LpSolution::Infeasible => Ok(BranchBound::Infeasible),
                LpSolution::Unbounded => Err(Error::InvalidParameter(
                    "margin LP unbounded despite box bounds".into(),
                )),
                LpSolution::Optimal { x, value } => Ok(BranchBound::Bound {
                    value,
                    minimizer: Some(x),
                }),
            }
        }
    }
}

/// Evaluate the candidate point, then run a 20-step sign-gradient PGD from it
/// (or from x0), all projected into the global ball. Any misclassified point
/// refutes robustness for the whole problem, not just the current branch.
fn search_counterexample(
    net: &Network,
    problem: &VerificationProblem,
    candidate: Option<&[f64]>,
) -> Result<Option<Vec<f64>>> {
    if let Some(x) = candidate {
        if let Some(cex) = validate_counterexample(net, problem, x)? {
            return Ok(Some(cex));
        }
    }
    if problem.eps == 0.0 {
        return validate_counterexample(net, problem, &problem.x0);
    }
    let start = candidate.map(<[f64]>::to_vec).unwrap_or_else(|| problem.x0.clone());
    let step = problem.eps / 10.0;
    let mut x: Vec<f64> = start
        .iter()
        .zip(&problem.x0)
        .map(|(v, c)| v.clamp(c - problem.eps, c + problem.eps))
        .collect();
    for _ in 0..20 {
        if net.predict(&x)? != problem.label {
            return Ok(Some(x));
        }
        let logits = net.forward(&x)?;
        let mut grad_logits = crate::stats::softmax(&logits);
        grad_logits[problem.label] -= 1.0;
        let grad = net.backward_input(&x, &grad_logits)?;
        for ((xi, g), c) in x.iter_mut().zip(&grad).zip(&problem.x0) {
            *xi = (*xi + step * g.signum()).clamp(c - problem.eps, c + problem.eps);
        }
    }
    if net.predict(&x)? != problem.label {
        return Ok(Some(x));
    }
    Ok(None)
}

/// Clamp into the ball and accept only if it truly misclassifies.
fn validate_counterexample(
    net: &Network,
    problem: &VerificationProblem,
    x: &[f64],
) -> Result<Option<Vec<f64>>> {
    let clamped: Vec<f64> = x
        .iter()
        .zip(&problem.x0)
        .map(|(v, c)| v.clamp(c - problem.eps, c + problem.eps))
        .collect();
    if net.predict(&clamped)? != problem.label {
        Ok(Some(clamped))
    } else {
        Ok(None)
    }
}

fn pick_split(preacts: &[LayerBounds], rule: BranchRule) -> Option<(usize, usize)> {
    match rule {
        BranchRule::WidestGap => {
            let mut best: Option<((usize, usize), f64)> = None;
            for (layer, bounds) in preacts.iter().enumerate() {
                for j in 0..bounds.len() {
                    if bounds.is_unstable(j) {
                        let gap = bounds.upper[j] - bounds.lower[j];
                        let better = match best {
                            None => true,
                            Some((_, bg)) => gap > bg,
                        };
                        if better {
                            best = Some(((layer, j), gap));
                        }
                    }
                }
            }
            best.map(|(key, _)| key)
        }
    }
}

/// Neuron phase in a fully-resolved affine region.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum Phase {
    Active,
    Inactive,
}

/// Exact margin LP over one affine region, in input-space variables: the
/// composed affine margin is minimized subject to the box and every neuron's
/// sign constraint.
fn exact_region_lp(
    net: &Network,
    problem: &VerificationProblem,
    preacts: &[LayerBounds],
    other: usize,
) -> Result<LpSolution> {
    let pattern: Vec<Vec<Phase>> = preacts
        .iter()
        .map(|b| {
            (0..b.len())
                .map(|j| if b.lower[j] >= 0.0 { Phase::Active } else { Phase::Inactive })
                .collect()
        })
        .collect();
    // Sanity: the caller guarantees no unstable neurons remain.
    debug_assert!(preacts
        .iter()
        .all(|b| (0..b.len()).all(|j| !b.is_unstable(j))));
    region_margin_lp(net, problem, &pattern, other)
}

/// Minimize the margin of `label` against `other` over the region where the
/// given activation pattern holds, intersected with the box.
fn region_margin_lp(
    net: &Network,
    problem: &VerificationProblem,
    pattern: &[Vec<Phase>],
    other: usize,
) -> Result<LpSolution> {
    let n = net.input_dim();
    let (rows, offsets, constraints) = compose_affine(net, pattern);
    let mut lp = LinearProgram::new(vec![0.0; n])?;
    let (lo, hi) = problem.enclosing_box();
    for j in 0..n {
        lp.bound(j, lo[j], hi[j]);
    }
    for (row, rhs) in constraints {
        lp.add_le(row, rhs)?;
    }
    let c: Vec<f64> = rows[problem.label]
        .iter()
        .zip(&rows[other])
        .map(|(a, b)| a - b)
        .collect();
    let constant = offsets[problem.label] - offsets[other];
    lp.objective = c;
    match simplex_solve(&lp, LP_TOL)? {
        LpSolution::Optimal { x, value } => Ok(LpSolution::Optimal {
            x,
            value: value + constant,
        }),
        otherwise => Ok(otherwise),
    }
}

type AffineForm = (Vec<Vec<f64>>, Vec<f64>);

/// Compose the network's affine form under a fixed activation pattern,
/// collecting each neuron's sign constraint (`<=` rows over the input).
fn compose_affine(
    net: &Network,
    pattern: &[Vec<Phase>],
) -> (Vec<Vec<f64>>, Vec<f64>, Vec<(Vec<f64>, f64)>) {
    let n = net.input_dim();
    // Identity form for the input layer.
    let mut m: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let mut row = vec![0.0; n];
            row[i] = 1.0;
            row
        })
        .collect();
    let mut v = vec![0.0; n];
    let mut constraints = Vec::new();
    let mut relu_idx = 0;
    for layer in net.layers() {
        match layer {
            Layer::Affine { weights, bias } => {
                let (nm, nv) = affine_compose(weights, bias, &m, &v);
                m = nm;
                v = nv;
            }
            Layer::Relu => {
                for j in 0..m.len() {
                    match pattern[relu_idx][j] {
                        Phase::Active => {
                            // zhat_j >= 0  ->  -row . x <= v_j
                            constraints.push((m[j].iter().map(|a| -a).collect(), v[j]));
                        }
                        Phase::Inactive => {
                            // zhat_j <= 0  ->  row . x <= -v_j
                            constraints.push((m[j].clone(), -v[j]));
                            m[j] = vec![0.0; n];
                            v[j] = 0.0;
                        }
                    }
                }
                relu_idx += 1;
            }
        }
    }
    (m, v, constraints)
}

fn affine_compose(weights: &[Vec<f64>], bias: &[f64], m: &[Vec<f64>], v: &[f64]) -> AffineForm {
    let n = m.first().map_or(0, Vec::len);
    let mut out_m = vec![vec![0.0; n]; weights.len()];
    let mut out_v = vec![0.0; weights.len()];
    for (r, (w_row, &b)) in weights.iter().zip(bias).enumerate() {
        let mut acc_v = b;
        for (k, &w) in w_row.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            acc_v += w * v[k];
            for c in 0..n {
                out_m[r][c] += w * m[k][c];
            }
        }
        out_v[r] = acc_v;
    }
    (out_m, out_v)
}

/// Exact minimum of the margin `f_label - f_other` over the ball, per
/// competitor class, by enumerating every activation pattern of the unstable
/// neurons; within a pattern the network is affine and one LP settles it.
/// Refuses when more than `limit` (16) neurons are unstable.
pub fn brute_force_margin(
    problem: &VerificationProblem,
    net: &Network,
) -> Result<Vec<(usize, f64)>> {
    const LIMIT: usize = 16;
    if problem.norm != Norm::Linf {
        return Err(Error::UnsupportedNorm {
            verifier: "brute_force",
            norm: problem.norm.to_string(),
        });
    }
    let (lo, hi) = problem.enclosing_box();
    let bounds = crate::interval::ibp_propagate(net, &lo, &hi)?;
    let preacts = bounds.preactivations(net);
    let mut unstable = Vec::new();
    for (layer, b) in preacts.iter().enumerate() {
        for j in 0..b.len() {
            if b.is_unstable(j) {
                unstable.push((layer, j));
            }
        }
    }
    if unstable.len() > LIMIT {
        return Err(Error::TooManyUnstable {
            count: unstable.len(),
            limit: LIMIT,
        });
    }

    let classes = net.num_classes();
    let mut best: Vec<f64> = vec![f64::INFINITY; classes];
    for mask in 0u32..(1u32 << unstable.len()) {
        // Assemble the full pattern: stable neurons keep their phase,
        // unstable ones follow the mask.
        let mut pattern: Vec<Vec<Phase>> = preacts
            .iter()
            .map(|b| {
                (0..b.len())
                    .map(|j| if b.lower[j] >= 0.0 { Phase::Active } else { Phase::Inactive })
                    .collect()
            })
            .collect();
        for (bit, &(layer, j)) in unstable.iter().enumerate() {
            pattern[layer][j] = if mask & (1 << bit) != 0 {
                Phase::Active
            } else {
                Phase::Inactive
            };
        }
        for other in 0..classes {
            if other == problem.label {
                continue;
            }
            match region_margin_lp(net, problem, &pattern, other)? {
                LpSolution::Optimal { value, .. } => {
                    if value < best[other] {
                        best[other] = value;
                    }
                }
                LpSolution::Infeasible => {}
                LpSolution::Unbounded => {
                    return Err(Error::InvalidParameter(
                        "pattern LP unbounded despite box bounds".into(),
                    ))
                }
            }
        }
    }
    let margins: Vec<(usize, f64)> = (0..classes)
        .filter(|&c| c != problem.label)
        .map(|c| (c, best[c]))
        .collect();
    debug_assert!(
        margins.iter().all(|&(_, m)| m.is_finite()),
        "the clean input's own pattern is always feasible"
    );
    Ok(margins)
}

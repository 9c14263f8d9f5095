//! One interface over every verifier, so the attacker, the benchmark harness,
//! and the CLI can treat them interchangeably, plus the cooperative deadline
//! type they all poll.

use crate::bab::{bab_verify_with_deadline, BabConfig, BabOutcome, BoundingMethod, BranchRule};
use crate::crown::{crown_verify, BoundSource, RelaxMode};
use crate::error::Result;
use crate::interval::ibp_verify;
use crate::lipschitz::lipschitz_verify;
use crate::lpfull::lp_full_verify;
use crate::network::Network;
use crate::problem::{Norm, Verdict, VerificationProblem};
use crate::smoothing::{certify, SmoothingDistribution};
use serde::{Deserialize, Serialize};
use std::time::Instant;

/// Cooperative wall-clock budget. Verifiers poll it between major steps
/// (per branch, per LP, per layer) and bail out with a Timeout verdict, so
/// cancellation is deterministic and needs no preemption machinery.
#[derive(Debug, Clone, Copy, Default)]
pub struct Deadline(Option<Instant>);

impl Deadline {
    /// No limit.
    pub fn none() -> Self {
        Deadline(None)
    }

    /// Expires `seconds` from now.
    pub fn in_seconds(seconds: f64) -> Self {
        Deadline(Some(
            Instant::now() + std::time::Duration::from_secs_f64(seconds.max(0.0)),
        ))
    }

    pub fn expired(&self) -> bool {
        matches!(self.0, Some(t) if Instant::now() >= t)
    }

    /// The earlier of two deadlines.
    pub fn earliest(self, other: Deadline) -> Deadline {
        match (self.0, other.0) {
            (Some(a), Some(b)) => Deadline(Some(a.min(b))),
            (a, b) => Deadline(a.or(b)),
        }
    }

    /// Seconds remaining, if bounded.
    pub fn remaining_s(&self) -> Option<f64> {
        self.0
            .map(|t| t.saturating_duration_since(Instant::now()).as_secs_f64())
    }
}

/// Serde-facing slope choice for the crown verifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RelaxChoice {
    Parallel,
    #[default]
    Adaptive,
}

impl From<RelaxChoice> for RelaxMode {
    fn from(c: RelaxChoice) -> Self {
        match c {
            RelaxChoice::Parallel => RelaxMode::Parallel,
            RelaxChoice::Adaptive => RelaxMode::Adaptive,
        }
    }
}

/// Serde-facing pre-activation bound source.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundsChoice {
    Interval,
    #[default]
    Polyhedra,
}

impl From<BoundsChoice> for BoundSource {
    fn from(c: BoundsChoice) -> Self {
        match c {
            BoundsChoice::Interval => BoundSource::Interval,
            BoundsChoice::Polyhedra => BoundSource::Polyhedra,
        }
    }
}

/// Serde-facing bounding method for branch-and-bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundingChoice {
    Interval,
    #[default]
    Crown,
    Lpfull,
}

impl From<BoundingChoice> for BoundingMethod {
    fn from(c: BoundingChoice) -> Self {
        match c {
            BoundingChoice::Interval => BoundingMethod::Interval,
            BoundingChoice::Crown => BoundingMethod::Polyhedra,
            BoundingChoice::Lpfull => BoundingMethod::LpFull,
        }
    }
}

fn default_n0() -> u64 {
    1000
}
fn default_n() -> u64 {
    100_000
}
fn default_alpha() -> f64 {
    0.001
}

/// A named verifier with its parameters; the unit of configuration for the
/// CLI and the benchmark harness.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "lowercase")]
pub enum VerifierConfig {
    Ibp {
        #[serde(default)]
        clip: bool,
    },
    Crown {
        #[serde(default)]
        relax: RelaxChoice,
        #[serde(default)]
        bounds: BoundsChoice,
    },
    Lpfull,
    Bab {
        #[serde(default)]
        timeout_s: Option<f64>,
        #[serde(default)]
        bounding: BoundingChoice,
    },
    Lipschitz,
    Smooth {
        dist: SmoothingDistribution,
        #[serde(default = "default_n0")]
        n0: u64,
        #[serde(default = "default_n")]
        n: u64,
        #[serde(default = "default_alpha")]
        alpha: f64,
    },
}

impl VerifierConfig {
    pub fn name(&self) -> &'static str {
        match self {
            VerifierConfig::Ibp { .. } => "ibp",
            VerifierConfig::Crown { .. } => "crown",
            VerifierConfig::Lpfull => "lpfull",
            VerifierConfig::Bab { .. } => "bab",
            VerifierConfig::Lipschitz => "lipschitz",
            VerifierConfig::Smooth { .. } => "smooth",
        }
    }

    /// Run the verifier on one problem instance. Deterministic given `seed`
    /// and an unexpired deadline.
    pub fn verify(
        &self,
        problem: &VerificationProblem,
        net: &Network,
        deadline: Deadline,
        seed: u64,
    ) -> Result<VerifierRun> {
        if deadline.expired() {
            return Ok(VerifierRun::timeout());
        }
        match self {
            VerifierConfig::Ibp { clip } => {
                let v = ibp_verify(problem, net, *clip)?;
                Ok(VerifierRun::from_margins(v.verdict, v.min_margin(), v.note))
            }
            VerifierConfig::Crown { relax, bounds } => {
                let v = crown_verify(problem, net, (*relax).into(), (*bounds).into())?;
                Ok(VerifierRun::from_margins(v.verdict, v.min_margin(), v.note))
            }
            VerifierConfig::Lpfull => {
                let preact = crate::crown::preactivation_bounds(
                    problem,
                    net,
                    BoundSource::Interval,
                )?;
                let v = lp_full_verify(problem, net, &preact, deadline)?;
                Ok(VerifierRun::from_margins(v.verdict, v.min_margin(), v.note))
            }
            VerifierConfig::Bab {
                timeout_s,
                bounding,
            } => {
                let cfg = BabConfig {
                    timeout_s: *timeout_s,
                    bounding: (*bounding).into(),
                    branch_rule: BranchRule::WidestGap,
                };
                let v = bab_verify_with_deadline(problem, net, &cfg, deadline)?;
                let (verdict, counterexample) = match v.outcome {
                    BabOutcome::Robust => (Verdict::Robust, None),
                    BabOutcome::NotRobust(x) => (Verdict::NotRobust, Some(x)),
                    BabOutcome::Timeout => (Verdict::Timeout, None),
                };
                Ok(VerifierRun {
                    verdict,
                    margin: None,
                    counterexample,
                    branches: Some(v.branches_explored),
                    radius: None,
                    note: None,
                })
            }
            VerifierConfig::Lipschitz => {
                let (v, cert) = lipschitz_verify(problem, net)?;
                Ok(VerifierRun {
                    verdict: v.verdict,
                    margin: Some(v.min_margin()),
                    counterexample: None,
                    branches: None,
                    radius: Some(cert.certified_radius),
                    note: None,
                })
            }
            VerifierConfig::Smooth { dist, n0, n, alpha } => {
                let cert = certify(net, &problem.x0, *dist, *n0, *n, *alpha, seed)?;
                let radius = match problem.norm {
                    Norm::Linf => cert.radius_linf,
                    Norm::L2 => cert.radius_l2,
                    Norm::L1 => cert.radius_l1,
                };
                let verdict = match cert.predicted {
                    None => Verdict::Abstain,
                    Some(c) if c != problem.label => Verdict::NotRobust,
                    Some(_) if radius > problem.eps => Verdict::Robust,
                    Some(_) => Verdict::Unknown,
                };
                Ok(VerifierRun {
                    verdict,
                    margin: None,
                    counterexample: None,
                    branches: None,
                    radius: Some(radius),
                    note: Some(format!("pa_lower={:.6}", cert.pa_lower)),
                })
            }
        }
    }
}

/// Uniform result record across verifiers.
#[derive(Debug, Clone)]
pub struct VerifierRun {
    pub verdict: Verdict,
    /// Minimum certified margin over competitor classes, when available.
    pub margin: Option<f64>,
    pub counterexample: Option<Vec<f64>>,
    pub branches: Option<u64>,
    /// Certified radius, when the verifier produces one directly.
    pub radius: Option<f64>,
    pub note: Option<String>,
}

impl VerifierRun {
    fn from_margins(verdict: Verdict, margin: f64, note: Option<String>) -> Self {
        VerifierRun {
            verdict,
            margin: Some(margin),
            counterexample: None,
            branches: None,
            radius: None,
            note,
        }
    }

    fn timeout() -> Self {
        VerifierRun {
            verdict: Verdict::Timeout,
            margin: None,
            counterexample: None,
            branches: None,
            radius: None,
            note: None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::Network;

    #[test]
    fn config_json_round_trip() {
        let configs = vec![
            VerifierConfig::Ibp { clip: false },
            VerifierConfig::Crown {
                relax: RelaxChoice::Parallel,
                bounds: BoundsChoice::Interval,
            },
            VerifierConfig::Lpfull,
            VerifierConfig::Bab {
                timeout_s: Some(5.0),
                bounding: BoundingChoice::Crown,
            },
            VerifierConfig::Lipschitz,
            VerifierConfig::Smooth {
                dist: SmoothingDistribution::Gaussian { sigma: 0.5 },
                n0: 100,
                n: 1000,
                alpha: 0.001,
            },
        ];
        let json = serde_json::to_string(&configs).unwrap();
        let back: Vec<VerifierConfig> = serde_json::from_str(&json).unwrap();
        assert_eq!(back, configs);
    }

    #[test]
    fn defaults_fill_in() {
        let cfg: VerifierConfig =
            serde_json::from_str(r#"{"name":"smooth","dist":{"kind":"gaussian","sigma":0.25}}"#)
                .unwrap();
        match cfg {
            VerifierConfig::Smooth { n0, n, alpha, .. } => {
                assert_eq!((n0, n), (1000, 100_000));
                assert_eq!(alpha, 0.001);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn dispatch_runs_each_verifier() {
        let net = Network::random(2, &[4], 2, 1.0, 3);
        let x0 = vec![0.5, 0.5];
        let label = net.predict(&x0).unwrap();
        let linf = VerificationProblem::new(x0.clone(), label, 0.01, Norm::Linf).unwrap();
        let l2 = VerificationProblem::new(x0, label, 0.01, Norm::L2).unwrap();
        for cfg in [
            VerifierConfig::Ibp { clip: false },
            VerifierConfig::Crown {
                relax: RelaxChoice::Adaptive,
                bounds: BoundsChoice::Polyhedra,
            },
            VerifierConfig::Lpfull,
            VerifierConfig::Bab {
                timeout_s: None,
                bounding: BoundingChoice::Crown,
            },
        ] {
            let run = cfg.verify(&linf, &net, Deadline::none(), 0).unwrap();
            assert!(
                matches!(run.verdict, Verdict::Robust | Verdict::Unknown | Verdict::NotRobust),
                "{}: {:?}",
                cfg.name(),
                run.verdict
            );
        }
        let run = VerifierConfig::Lipschitz
            .verify(&l2, &net, Deadline::none(), 0)
            .unwrap();
        assert!(run.radius.is_some());
    }

    #[test]
    fn expired_deadline_short_circuits() {
        let net = Network::random(2, &[4], 2, 1.0, 3);
        let problem = VerificationProblem::new(vec![0.5, 0.5], 0, 0.01, Norm::Linf).unwrap();
        let run = VerifierConfig::Lpfull
            .verify(&problem, &net, Deadline::in_seconds(0.0), 0)
            .unwrap();
        assert_eq!(run.verdict, Verdict::Timeout);
    }
}

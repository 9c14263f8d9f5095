//! Verification problems and the shared verdict vocabulary.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::fmt;

/// Perturbation norm of the adversary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Norm {
    Linf,
    L2,
    L1,
}

impl Norm {
    /// Dual exponent used when concretizing a linear function over the ball:
    /// `min_{|d|_p <= eps} a.d = -eps * |a|_q`.
    pub fn dual_norm(self, a: &[f64]) -> f64 {
        match self {
            Norm::Linf => a.iter().map(|v| v.abs()).sum(),
            Norm::L2 => a.iter().map(|v| v * v).sum::<f64>().sqrt(),
            Norm::L1 => a.iter().fold(0.0_f64, |m, v| m.max(v.abs())),
        }
    }

    /// `|v|_p` of a vector.
    pub fn norm(self, v: &[f64]) -> f64 {
        match self {
            Norm::Linf => v.iter().fold(0.0_f64, |m, x| m.max(x.abs())),
            Norm::L2 => v.iter().map(|x| x * x).sum::<f64>().sqrt(),
            Norm::L1 => v.iter().map(|x| x.abs()).sum(),
        }
    }

    /// Distance between two points in this norm.
    pub fn distance(self, a: &[f64], b: &[f64]) -> f64 {
        let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
        self.norm(&diff)
    }
}

impl fmt::Display for Norm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Norm::Linf => write!(f, "linf"),
            Norm::L2 => write!(f, "l2"),
            Norm::L1 => write!(f, "l1"),
        }
    }
}

impl std::str::FromStr for Norm {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "linf" | "inf" => Ok(Norm::Linf),
            "l2" | "2" => Ok(Norm::L2),
            "l1" | "1" => Ok(Norm::L1),
            other => Err(Error::InvalidParameter(format!("unknown norm `{other}`"))),
        }
    }
}

/// A local robustness query: is the prediction at `x0` stable over the closed
/// `eps`-ball in the given norm?
#[derive(Debug, Clone, PartialEq)]
pub struct VerificationProblem {
    pub x0: Vec<f64>,
    pub label: usize,
    pub eps: f64,
    pub norm: Norm,
}

impl VerificationProblem {
    /// `eps` must be nonnegative (zero-radius queries degenerate to a point
    /// and are useful as sanity anchors).
    pub fn new(x0: Vec<f64>, label: usize, eps: f64, norm: Norm) -> Result<Self> {
        if !eps.is_finite() || eps < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "eps must be finite and >= 0, got {eps}"
            )));
        }
        Ok(VerificationProblem {
            x0,
            label,
            eps,
            norm,
        })
    }

    /// The tightest axis-aligned box enclosing the ball: `[x0-eps, x0+eps]`.
    /// Exact for Linf; a sound superset for L2/L1.
    pub fn enclosing_box(&self) -> (Vec<f64>, Vec<f64>) {
        let lower = self.x0.iter().map(|v| v - self.eps).collect();
        let upper = self.x0.iter().map(|v| v + self.eps).collect();
        (lower, upper)
    }

    /// Enclosing box intersected with `[0,1]^n` (only meaningful for Linf).
    pub fn enclosing_box_clipped(&self) -> (Vec<f64>, Vec<f64>) {
        let (lo, hi) = self.enclosing_box();
        (
            lo.into_iter().map(|v| v.max(0.0)).collect(),
            hi.into_iter().map(|v| v.min(1.0)).collect(),
        )
    }
}

/// Soundness margin subtracted from every certified margin before declaring
/// Robust, guarding against floating-point rounding in the verifiers.
pub const TAU: f64 = 1e-6;

/// Common verdict vocabulary across all verifiers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Robust,
    NotRobust,
    Unknown,
    Timeout,
    Abstain,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Robust => "robust",
            Verdict::NotRobust => "not_robust",
            Verdict::Unknown => "unknown",
            Verdict::Timeout => "timeout",
            Verdict::Abstain => "abstain",
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Outcome of an incomplete verifier: verdict plus the certified lower bound
/// of the margin `f_label - f_other` for every competitor class.
#[derive(Debug, Clone)]
pub struct MarginVerdict {
    pub verdict: Verdict,
    /// (competitor class, certified margin lower bound), ascending by class.
    pub margins: Vec<(usize, f64)>,
    /// Diagnostic note, e.g. when the LP solver stalls.
    pub note: Option<String>,
}

impl MarginVerdict {
    /// Minimum certified margin across competitor classes.
    pub fn min_margin(&self) -> f64 {
        self.margins
            .iter()
            .map(|&(_, m)| m)
            .fold(f64::INFINITY, f64::min)
    }

    pub(crate) fn from_margins(margins: Vec<(usize, f64)>) -> Self {
        let verdict = if margins.iter().all(|&(_, m)| m > TAU) {
            Verdict::Robust
        } else {
            Verdict::Unknown
        };
        MarginVerdict {
            verdict,
            margins,
            note: None,
        }
    }
}

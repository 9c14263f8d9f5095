//! Projected gradient descent attacker: the empirical upper bound on robust
//! accuracy that every sound verifier's certificate must respect.

use crate::error::{Error, Result};
use crate::network::Network;
use crate::problem::Norm;
use crate::rng::{derive_seed, rng_from_seed};
use crate::stats::softmax;
use rand::Rng;

/// PGD configuration. The defaults mirror the usual benchmark protocol:
/// 100 iterations, step size `eps / 50`, random initialization.
#[derive(Debug, Clone)]
pub struct AttackConfig {
    pub steps: usize,
    /// Step size; `None` selects `eps / 50`.
    pub step_size: Option<f64>,
    pub restarts: usize,
    pub random_start: bool,
    pub norm: Norm,
    /// Intersect the search ball with `[0,1]^n` (off by default so the attack
    /// targets exactly the region the verifiers certify).
    pub clip: bool,
    pub seed: u64,
}

impl Default for AttackConfig {
    fn default() -> Self {
        AttackConfig {
            steps: 100,
            step_size: None,
            restarts: 1,
            random_start: true,
            norm: Norm::Linf,
            clip: false,
            seed: 0,
        }
    }
}

/// Attack outcome.
#[derive(Debug, Clone, PartialEq)]
pub enum AttackResult {
    /// A point of the ball misclassified under exact forward evaluation.
    Found { adv: Vec<f64> },
    NotFound,
}

impl AttackResult {
    pub fn found(&self) -> bool {
        matches!(self, AttackResult::Found { .. })
    }
}

/// Run PGD around `x0` against true label `y0`. Ascends the cross-entropy
/// loss, projecting every iterate back onto the `eps`-ball, and returns the
/// first iterate that misclassifies under exact forward evaluation.
pub fn pgd(
    net: &Network,
    x0: &[f64],
    y0: usize,
    eps: f64,
    cfg: &AttackConfig,
) -> Result<AttackResult> {
    if eps <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "attack radius must be positive, got {eps}"
        )));
    }
    if cfg.norm == Norm::L1 {
        return Err(Error::UnsupportedNorm {
            verifier: "pgd",
            norm: "l1".into(),
        });
    }
    let step = match cfg.step_size {
        Some(s) if s > 0.0 => s,
        Some(s) => {
            return Err(Error::InvalidParameter(format!(
                "step size must be positive, got {s}"
            )))
        }
        None => eps / 50.0,
    };

    // The clean point itself is adversarial when already misclassified.
    if net.predict(x0)? != y0 {
        return Ok(AttackResult::Found { adv: x0.to_vec() });
    }

    for restart in 0..cfg.restarts.max(1) {
        let mut rng = rng_from_seed(derive_seed(cfg.seed, restart as u64));
        let mut x: Vec<f64> = if cfg.random_start || restart > 0 {
            random_ball_point(x0, eps, cfg.norm, &mut rng)
        } else {
            x0.to_vec()
        };
        project(&mut x, x0, eps, cfg.norm, cfg.clip);
        if net.predict(&x)? != y0 {
            return Ok(AttackResult::Found { adv: x });
        }
        for _ in 0..cfg.steps {
            let logits = net.forward(&x)?;
            // d(cross-entropy)/d(logits) = softmax - onehot(y0)
            let mut grad_logits = softmax(&logits);
            grad_logits[y0] -= 1.0;
            let grad = net.backward_input(&x, &grad_logits)?;
            match cfg.norm {
                Norm::Linf => {
                    for (xi, g) in x.iter_mut().zip(&grad) {
                        *xi += step * g.signum();
                    }
                }
                Norm::L2 => {
                    let n = Norm::L2.norm(&grad);
                    if n > 0.0 {
                        for (xi, g) in x.iter_mut().zip(&grad) {
                            *xi += step * g / n;
                        }
                    }
                }
                Norm::L1 => unreachable!("rejected above"),
            }
            project(&mut x, x0, eps, cfg.norm, cfg.clip);
            if net.predict(&x)? != y0 {
                debug_assert!(cfg.norm.distance(&x, x0) <= eps + 1e-9);
                return Ok(AttackResult::Found { adv: x });
            }
        }
    }
    Ok(AttackResult::NotFound)
}

/// Project `x` onto the `eps`-ball around `x0` (and `[0,1]^n` when clipping).
fn project(x: &mut [f64], x0: &[f64], eps: f64, norm: Norm, clip: bool) {
    match norm {
        Norm::Linf => {
            for (xi, &c) in x.iter_mut().zip(x0) {
                *xi = xi.clamp(c - eps, c + eps);
            }
        }
        Norm::L2 => {
            let d = Norm::L2.distance(x, x0);
            if d > eps {
                let scale = eps / d;
                for (xi, &c) in x.iter_mut().zip(x0) {
                    *xi = c + (*xi - c) * scale;
                }
            }
        }
        Norm::L1 => {}
    }
    if clip {
        for xi in x.iter_mut() {
            *xi = xi.clamp(0.0, 1.0);
        }
    }
}

fn random_ball_point(x0: &[f64], eps: f64, norm: Norm, rng: &mut impl Rng) -> Vec<f64> {
    match norm {
        Norm::Linf => x0
            .iter()
            .map(|c| c + rng.gen_range(-eps..=eps))
            .collect(),
        Norm::L2 => {
            // Direction from per-coordinate normals, radius ~ u^(1/d).
            let dir: Vec<f64> = x0
                .iter()
                .map(|_| {
                    // Box-Muller keeps us independent of distribution crates here.
                    let u1: f64 = rng.gen_range(1e-12..1.0);
                    let u2: f64 = rng.gen_range(0.0..1.0);
                    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
                })
                .collect();
            let n = Norm::L2.norm(&dir);
            let r = eps * rng.gen_range(0.0f64..1.0).powf(1.0 / x0.len() as f64);
            if n == 0.0 {
                x0.to_vec()
            } else {
                x0.iter().zip(&dir).map(|(c, d)| c + r * d / n).collect()
            }
        }
        Norm::L1 => x0.to_vec(),
    }
}

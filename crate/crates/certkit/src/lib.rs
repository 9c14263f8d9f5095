//! certkit: certified-robustness toolkit for feed-forward ReLU classifiers.
//!
//! The crate bundles, behind one verdict vocabulary, the standard families of
//! robustness verifiers for `lp`-bounded evasion adversaries:
//!
//! - **ibp** — interval bound propagation (fast, loose)
//! - **crown** — backward linear relaxation over per-neuron ReLU polytopes
//! - **lpfull** — exact LP over the triangle relaxation of every unstable ReLU
//! - **bab** — complete branch-and-bound on ReLU stability
//! - **lipschitz** — global spectral-norm Lipschitz certification (l2)
//! - **smooth** — probabilistic certification of randomized-smoothing
//!   classifiers (Gaussian l2, Laplace l1, l∞ by dimension conversion)
//!
//! plus a PGD attacker (the empirical upper bound), robust trainers
//! (standard / interval-loss / noise-augmented), and a benchmark harness
//! measuring certified accuracy and average certified radius under the usual
//! timeout protocol.
//!
//! Everything is deterministic under explicit seeds, and all operations work
//! on immutable values, so concurrent per-instance use is safe.

pub mod attack;
pub mod bab;
pub mod bench;
pub mod crown;
pub mod data;
pub mod error;
pub mod interval;
pub mod lipschitz;
pub mod lpfull;
pub mod model_io;
pub mod network;
pub mod problem;
pub mod rng;
pub mod simplex;
pub mod smoothing;
pub mod stats;
pub mod training;
pub mod verifier;

pub use error::{Error, Result};
pub use network::{Layer, Network};
pub use problem::{Norm, Verdict, VerificationProblem, TAU};

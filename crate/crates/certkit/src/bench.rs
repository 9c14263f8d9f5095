//! Benchmark harness: certified accuracy, average certified radius by binary
//! search, timing, and the PGD upper bound, assembled into CSV and text
//! reports with one row per (model, verifier) cell.
//!
//! Timeouts are enforced cooperatively (verifiers poll a deadline between
//! major steps) and timed-out or Unknown instances count as not verified.
//! All randomness is seeded: the evaluation subsample is drawn once from the
//! config seed and reused for every cell, and instances may evaluate
//! concurrently because the report is assembled in a fixed order.

use crate::attack::{pgd, AttackConfig};
use crate::data::{load_dataset, LabeledSample};
use crate::error::{Error, Result};
use crate::model_io::load_model;
use crate::network::Network;
use crate::problem::{Norm, Verdict, VerificationProblem};
use crate::rng::{derive_seed, rng_from_seed};
use crate::verifier::{Deadline, VerifierConfig};
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

fn default_sample_count() -> usize {
    100
}
fn default_accuracy_timeout() -> f64 {
    60.0
}
fn default_radius_timeout() -> f64 {
    120.0
}
fn default_radius_precision() -> f64 {
    1e-3
}
fn default_norm() -> Norm {
    Norm::Linf
}
fn default_restarts() -> usize {
    1
}
fn default_true() -> bool {
    true
}

/// Full benchmark specification, loadable from JSON.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchmarkConfig {
    pub verifiers: Vec<VerifierConfig>,
    pub models: Vec<String>,
    pub dataset: String,
    /// Size of the uniform subsample evaluated by every cell.
    #[serde(default = "default_sample_count")]
    pub sample_count: usize,
    pub eps: f64,
    #[serde(default = "default_norm")]
    pub norm: Norm,
    /// Per-instance wall budget for one verification call.
    #[serde(default = "default_accuracy_timeout")]
    pub accuracy_timeout_s: f64,
    /// Per-instance wall budget for the whole radius binary search.
    #[serde(default = "default_radius_timeout")]
    pub radius_timeout_s: f64,
    #[serde(default = "default_radius_precision")]
    pub radius_precision: f64,
    /// Also run the radius search for each cell (the expensive half).
    #[serde(default = "default_true")]
    pub compute_radius: bool,
    #[serde(default = "default_restarts")]
    pub attack_restarts: usize,
    #[serde(default)]
    pub seed: u64,
}

/// One report row; `verifier` is a verifier name or the protocol rows
/// `clean` / `pgd`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub model: String,
    pub verifier: String,
    pub eps: f64,
    pub norm: Norm,
    pub certified_accuracy: f64,
    pub avg_radius: Option<f64>,
    pub mean_time_s: f64,
    pub timeouts: usize,
}

#[derive(Debug, Clone, Default)]
pub struct BenchmarkReport {
    pub rows: Vec<ReportRow>,
}

/// Outcome of one cell's accuracy pass.
#[derive(Debug, Clone, Copy)]
pub struct CellAccuracy {
    pub fraction: f64,
    pub mean_time_s: f64,
    pub timeouts: usize,
}

/// Fraction of samples the verifier certifies Robust within the per-instance
/// timeout. Misclassified clean samples count as not verified without
/// invoking the verifier; Unknown and Timeout both count as not verified.
pub fn certified_accuracy(
    verifier: &VerifierConfig,
    net: &Network,
    samples: &[LabeledSample],
    eps: f64,
    norm: Norm,
    timeout_s: f64,
    seed: u64,
) -> Result<CellAccuracy> {
    let results: Vec<Result<(bool, f64, bool)>> = samples
        .par_iter()
        .enumerate()
        .map(|(i, s)| {
            if net.predict(&s.x)? != s.y {
                return Ok((false, 0.0, false));
            }
            let problem = VerificationProblem::new(s.x.clone(), s.y, eps, norm)?;
            let started = Instant::now();
            let run = verifier.verify(
                &problem,
                net,
                Deadline::in_seconds(timeout_s),
                derive_seed(seed, i as u64),
            )?;
            let elapsed = started.elapsed().as_secs_f64();
            Ok((
                run.verdict == Verdict::Robust,
                elapsed,
                run.verdict == Verdict::Timeout,
            ))
        })
        .collect();
    let mut robust = 0usize;
    let mut timeouts = 0usize;
    let mut total_time = 0.0;
    for r in results {
        let (ok, t, timed_out) = r?;
        robust += usize::from(ok);
        timeouts += usize::from(timed_out);
        total_time += t;
    }
    Ok(CellAccuracy {
        fraction: robust as f64 / samples.len().max(1) as f64,
        mean_time_s: total_time / samples.len().max(1) as f64,
        timeouts,
    })
}

/// Mean certified radius over the samples: per sample a binary search on
/// `[0, 0.5]` raises the verified radius while the budget lasts, keeping the
/// best verified value (misclassified samples contribute 0).
pub fn avg_certified_radius(
    verifier: &VerifierConfig,
    net: &Network,
    samples: &[LabeledSample],
    norm: Norm,
    precision: f64,
    budget_s: f64,
    seed: u64,
) -> Result<f64> {
    let radii: Vec<Result<f64>> = samples
        .par_iter()
        .enumerate()
        .map(|(i, s)| {
            if net.predict(&s.x)? != s.y {
                return Ok(0.0);
            }
            let deadline = Deadline::in_seconds(budget_s);
            let (mut lo, mut hi) = (0.0_f64, 0.5_f64);
            while hi - lo > precision && !deadline.expired() {
                let mid = 0.5 * (lo + hi);
                let problem = VerificationProblem::new(s.x.clone(), s.y, mid, norm)?;
                let run =
                    verifier.verify(&problem, net, deadline, derive_seed(seed, i as u64))?;
                if run.verdict == Verdict::Robust {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            Ok(lo)
        })
        .collect();
    let mut total = 0.0;
    for r in radii {
        total += r?;
    }
    Ok(total / samples.len().max(1) as f64)
}

/// Accuracy under the benchmark PGD attack: a sample counts only if it is
/// correctly classified and the attack finds no adversarial example.
pub fn pgd_accuracy(
    net: &Network,
    samples: &[LabeledSample],
    eps: f64,
    norm: Norm,
    restarts: usize,
    seed: u64,
) -> Result<f64> {
    let hits: Vec<Result<bool>> = samples
        .par_iter()
        .enumerate()
        .map(|(i, s)| {
            if net.predict(&s.x)? != s.y {
                return Ok(false);
            }
            let cfg = AttackConfig {
                restarts,
                norm: match norm {
                    Norm::L1 => Norm::Linf, // attack module covers linf/l2
                    other => other,
                },
                seed: derive_seed(seed, i as u64),
                ..AttackConfig::default()
            };
            Ok(!pgd(net, &s.x, s.y, eps, &cfg)?.found())
        })
        .collect();
    let mut ok = 0usize;
    for h in hits {
        ok += usize::from(h?);
    }
    Ok(ok as f64 / samples.len().max(1) as f64)
}

/// Deterministic uniform subsample: shuffle indices under the seed, take the
/// first `count`, and keep them in ascending order.
pub fn subsample_indices(total: usize, count: usize, seed: u64) -> Vec<usize> {
    let mut indices: Vec<usize> = (0..total).collect();
    let mut rng = rng_from_seed(derive_seed(seed, 0x5a5a));
    indices.shuffle(&mut rng);
    indices.truncate(count.min(total));
    indices.sort_unstable();
    indices
}

/// Run the whole benchmark: every (model, verifier) cell plus the clean and
/// PGD protocol rows per model, on one shared subsample.
pub fn run_benchmark(cfg: &BenchmarkConfig) -> Result<BenchmarkReport> {
    if cfg.sample_count == 0 {
        return Err(Error::InvalidParameter("sample_count must be positive".into()));
    }
    let mut models = Vec::new();
    for path in &cfg.models {
        let net = load_model(path)?;
        let name = Path::new(path)
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| path.clone());
        models.push((name, net));
    }
    let first = models
        .first()
        .ok_or_else(|| Error::InvalidParameter("no models listed".into()))?;
    let dataset = load_dataset(&cfg.dataset, first.1.num_classes())?;
    if cfg.sample_count > dataset.len() {
        return Err(Error::InvalidParameter(format!(
            "sample_count {} exceeds dataset size {}",
            cfg.sample_count,
            dataset.len()
        )));
    }
    let indices = subsample_indices(dataset.len(), cfg.sample_count, cfg.seed);
    let samples: Vec<LabeledSample> = indices.iter().map(|&i| dataset[i].clone()).collect();

    let mut report = BenchmarkReport::default();
    for (model_idx, (name, net)) in models.iter().enumerate() {
        // Protocol rows: clean accuracy and accuracy under PGD.
        let clean = crate::training::accuracy(net, &samples)?;
        report.rows.push(ReportRow {
            model: name.clone(),
            verifier: "clean".into(),
            eps: cfg.eps,
            norm: cfg.norm,
            certified_accuracy: clean,
            avg_radius: None,
            mean_time_s: 0.0,
            timeouts: 0,
        });
        let pgd_acc = pgd_accuracy(
            net,
            &samples,
            cfg.eps,
            cfg.norm,
            cfg.attack_restarts,
            derive_seed(cfg.seed, 0x9000 + model_idx as u64),
        )?;
        report.rows.push(ReportRow {
            model: name.clone(),
            verifier: "pgd".into(),
            eps: cfg.eps,
            norm: cfg.norm,
            certified_accuracy: pgd_acc,
            avg_radius: None,
            mean_time_s: 0.0,
            timeouts: 0,
        });

        for (verifier_idx, verifier) in cfg.verifiers.iter().enumerate() {
            let cell_seed = derive_seed(
                cfg.seed,
                0x1000 + (model_idx as u64) * 257 + verifier_idx as u64,
            );
            let acc = certified_accuracy(
                verifier,
                net,
                &samples,
                cfg.eps,
                cfg.norm,
                cfg.accuracy_timeout_s,
                cell_seed,
            )?;
            let avg_radius = if cfg.compute_radius {
                Some(avg_certified_radius(
                    verifier,
                    net,
                    &samples,
                    cfg.norm,
                    cfg.radius_precision,
                    cfg.radius_timeout_s,
                    cell_seed,
                )?)
            } else {
                None
            };
            report.rows.push(ReportRow {
                model: name.clone(),
                verifier: verifier.name().into(),
                eps: cfg.eps,
                norm: cfg.norm,
                certified_accuracy: acc.fraction,
                avg_radius,
                mean_time_s: acc.mean_time_s,
                timeouts: acc.timeouts,
            });
        }
    }
    Ok(report)
}

impl BenchmarkReport {
    /// CSV with the columns
    /// `model,verifier,eps,norm,certified_accuracy,avg_radius,mean_time_s,timeouts`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "model,verifier,eps,norm,certified_accuracy,avg_radius,mean_time_s,timeouts\n",
        );
        for r in &self.rows {
            let radius = r
                .avg_radius
                .map(|v| format!("{v:.6}"))
                .unwrap_or_default();
            let _ = writeln!(
                out,
                "{},{},{},{},{:.6},{},{:.6},{}",
                r.model,
                r.verifier,
                r.eps,
                r.norm,
                r.certified_accuracy,
                radius,
                r.mean_time_s,
                r.timeouts
            );
        }
        out
    }

    /// Aligned text table: verifiers (plus the protocol rows) as rows, models
    /// as columns, certified accuracy as cells.
    pub fn to_table(&self) -> String {
        let mut models: Vec<&str> = Vec::new();
        let mut verifiers: Vec<&str> = Vec::new();
        for r in &self.rows {
            if !models.contains(&r.model.as_str()) {
                models.push(&r.model);
            }
            if !verifiers.contains(&r.verifier.as_str()) {
                verifiers.push(&r.verifier);
            }
        }
        let cell = |v: &str, m: &str| -> String {
            self.rows
                .iter()
                .find(|r| r.verifier == v && r.model == m)
                .map(|r| format!("{:.1}%", 100.0 * r.certified_accuracy))
                .unwrap_or_default()
        };
        let width = models
            .iter()
            .map(|m| m.len())
            .chain(std::iter::once(8))
            .max()
            .unwrap()
            .max(8);
        let name_width = verifiers
            .iter()
            .map(|v| v.len())
            .chain(std::iter::once(8))
            .max()
            .unwrap();
        let mut out = String::new();
        let _ = write!(out, "{:name_width$}", "verifier");
        for m in &models {
            let _ = write!(out, "  {m:>width$}");
        }
        out.push('\n');
        for v in &verifiers {
            let _ = write!(out, "{v:name_width$}");
            for m in &models {
                let _ = write!(out, "  {:>width$}", cell(v, m));
            }
            out.push('\n');
        }
        out
    }

    /// Parse a report back from its CSV form (for the `report` subcommand).
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_reader(text.as_bytes());
        let mut rows = Vec::new();
        for (i, record) in reader.records().enumerate() {
            let line = i + 2;
            let bad = |reason: String| Error::DatasetFormat { line, reason };
            let record = record.map_err(|e| bad(e.to_string()))?;
            if record.len() != 8 {
                return Err(bad(format!("expected 8 columns, found {}", record.len())));
            }
            let parse_f64 = |s: &str| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|_| bad(format!("`{s}` is not a number")))
            };
            rows.push(ReportRow {
                model: record[0].to_string(),
                verifier: record[1].to_string(),
                eps: parse_f64(&record[2])?,
                norm: record[3].parse()?,
                certified_accuracy: parse_f64(&record[4])?,
                avg_radius: if record[5].trim().is_empty() {
                    None
                } else {
                    Some(parse_f64(&record[5])?)
                },
                mean_time_s: if record[6].trim() == "-" {
                    0.0
                } else {
                    parse_f64(&record[6])?
                },
                timeouts: record[7]
                    .trim()
                    .parse()
                    .map_err(|_| bad(format!("`{}` is not a count", &record[7])))?,
            });
        }
        Ok(BenchmarkReport { rows })
    }

    /// CSV with the measured-time column replaced by a placeholder; byte
    /// stable across runs with the same seed, unlike wall-clock timings.
    pub fn to_csv_stable(&self) -> String {
        let mut out = String::from(
            "model,verifier,eps,norm,certified_accuracy,avg_radius,mean_time_s,timeouts\n",
        );
        for r in &self.rows {
            let radius = r
                .avg_radius
                .map(|v| format!("{v:.6}"))
                .unwrap_or_default();
            let _ = writeln!(
                out,
                "{},{},{},{},{:.6},{},-,{}",
                r.model, r.verifier, r.eps, r.norm, r.certified_accuracy, radius, r.timeouts
            );
        }
        out
    }
}

//! Command-line front door for the robustness toolkit: train models, verify
//! or attack them per sample, certify smoothed classifiers, and run the full
//! benchmark protocol.
//!
//! Verdicts are printed as single-line `key=value` records so downstream
//! tooling can parse them, and every subcommand is deterministic under an
//! explicit `--seed` (defaulting to the `CERTKIT_SEED` environment variable,
//! then 0 — never wall-clock entropy). Exit status: 0 for completed runs
//! (Unknown/NotRobust verdicts are results, not failures), 1 for usage
//! errors, 2 for I/O and format errors.

use certkit::bench::{run_benchmark, BenchmarkConfig, BenchmarkReport};
use certkit::data::{load_dataset, LabeledSample};
use certkit::model_io::{load_model, save_model};
use certkit::network::Network;
use certkit::problem::{Norm, VerificationProblem};
use certkit::rng::derive_seed;
use certkit::smoothing::{certify, SmoothingDistribution};
use certkit::training::{accuracy, train_ibp, train_noise, train_standard, TrainConfig};
use certkit::verifier::{
    BoundingChoice, BoundsChoice, Deadline, RelaxChoice, VerifierConfig,
};
use certkit::Error as CkError;
use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "certkit", version, about = "Certified robustness toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model (standard, interval-robust, or noise-augmented).
    Train(TrainArgs),
    /// Verify per-sample robustness with a chosen verifier.
    Verify(VerifyArgs),
    /// Certify samples under randomized smoothing.
    Certify(CertifyArgs),
    /// Attack samples with PGD.
    Attack(AttackArgs),
    /// Run the benchmark protocol from a JSON config.
    Bench(BenchArgs),
    /// Render the text table from a benchmark CSV.
    Report(ReportArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum NormArg {
    Linf,
    L2,
    L1,
}

impl From<NormArg> for Norm {
    fn from(n: NormArg) -> Norm {
        match n {
            NormArg::Linf => Norm::Linf,
            NormArg::L2 => Norm::L2,
            NormArg::L1 => Norm::L1,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum VerifierName {
    Ibp,
    Crown,
    Lpfull,
    Bab,
    Lipschitz,
    Smooth,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum RelaxArg {
    Parallel,
    Adaptive,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum BoundsArg {
    Interval,
    Polyhedra,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum BoundingArg {
    Interval,
    Crown,
    Lpfull,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum TrainMode {
    Standard,
    Ibp,
    Noise,
}

#[derive(Args)]
struct CommonIo {
    /// Model file (JSON).
    #[arg(long)]
    model: PathBuf,
    /// Dataset file (CSV).
    #[arg(long)]
    data: PathBuf,
    /// Evaluate only the first N samples.
    #[arg(long)]
    samples: Option<usize>,
    /// Worker threads for per-instance parallelism.
    #[arg(long)]
    jobs: Option<usize>,
    /// Base seed for all randomized components.
    #[arg(long, env = "CERTKIT_SEED", default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct SmoothingFlags {
    /// Gaussian smoothing standard deviation.
    #[arg(long)]
    sigma: Option<f64>,
    /// Laplace smoothing scale.
    #[arg(long)]
    lambda: Option<f64>,
    /// Uniform smoothing half width.
    #[arg(long)]
    halfwidth: Option<f64>,
    /// Selection-pass sample count.
    #[arg(long, default_value_t = 1000)]
    n0: u64,
    /// Estimation-pass sample count.
    #[arg(long, default_value_t = 100_000)]
    n: u64,
    /// Certification failure probability.
    #[arg(long, default_value_t = 0.001)]
    alpha: f64,
}

impl SmoothingFlags {
    fn distribution(&self) -> Result<SmoothingDistribution, String> {
        match (self.sigma, self.lambda, self.halfwidth) {
            (Some(sigma), None, None) => Ok(SmoothingDistribution::Gaussian { sigma }),
            (None, Some(lambda), None) => Ok(SmoothingDistribution::Laplace { lambda }),
            (None, None, Some(half_width)) => {
                Ok(SmoothingDistribution::Uniform { half_width })
            }
            _ => Err("exactly one of --sigma, --lambda, --halfwidth is required".into()),
        }
    }
}

#[derive(Args)]
struct VerifyArgs {
    #[command(flatten)]
    io: CommonIo,
    /// Which verifier to run.
    #[arg(long, value_enum)]
    verifier: VerifierName,
    /// Perturbation radius.
    #[arg(long)]
    eps: f64,
    /// Perturbation norm.
    #[arg(long, value_enum, default_value_t = NormArg::Linf)]
    norm: NormArg,
    /// crown: lower-slope heuristic.
    #[arg(long, value_enum, default_value_t = RelaxArg::Adaptive)]
    relax: RelaxArg,
    /// crown: pre-activation bound source.
    #[arg(long, value_enum, default_value_t = BoundsArg::Polyhedra)]
    bounds: BoundsArg,
    /// bab: bounding verifier.
    #[arg(long, value_enum, default_value_t = BoundingArg::Crown)]
    bounding: BoundingArg,
    /// bab: per-instance wall budget in seconds.
    #[arg(long)]
    timeout: Option<f64>,
    /// ibp: intersect the box with [0,1]^n.
    #[arg(long)]
    clip: bool,
    #[command(flatten)]
    smoothing: SmoothingFlags,
}

#[derive(Args)]
struct CertifyArgs {
    #[command(flatten)]
    io: CommonIo,
    #[command(flatten)]
    smoothing: SmoothingFlags,
}

#[derive(Args)]
struct AttackArgs {
    #[command(flatten)]
    io: CommonIo,
    #[arg(long)]
    eps: f64,
    #[arg(long, value_enum, default_value_t = NormArg::Linf)]
    norm: NormArg,
    /// Attack iterations.
    #[arg(long, default_value_t = 100)]
    steps: usize,
    /// Step size (defaults to eps/50).
    #[arg(long)]
    step_size: Option<f64>,
    #[arg(long, default_value_t = 1)]
    restarts: usize,
    /// Clip iterates to [0,1]^n.
    #[arg(long)]
    clip: bool,
}

#[derive(Args)]
struct TrainArgs {
    /// Training dataset (CSV).
    #[arg(long)]
    data: PathBuf,
    /// Output model path.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = TrainMode::Standard)]
    mode: TrainMode,
    /// Hidden layer widths, comma separated (e.g. "16,16").
    #[arg(long, default_value = "16,16", value_delimiter = ',')]
    hidden: Vec<usize>,
    /// Number of classes (inferred from the labels when omitted).
    #[arg(long)]
    classes: Option<usize>,
    #[arg(long, default_value_t = 50)]
    epochs: usize,
    #[arg(long, default_value_t = 32)]
    batch_size: usize,
    #[arg(long, default_value_t = 0.1)]
    lr: f64,
    /// ibp mode: target certified radius.
    #[arg(long, default_value_t = 0.0)]
    eps: f64,
    /// ibp mode: clean-loss mixing weight.
    #[arg(long, default_value_t = 0.5)]
    kappa: f64,
    /// ibp mode: warmup fraction of epochs.
    #[arg(long, default_value_t = 0.5)]
    warmup: f64,
    /// noise mode: Gaussian sigma.
    #[arg(long, default_value_t = 0.25)]
    sigma: f64,
    /// Weight initialization scale.
    #[arg(long, default_value_t = 0.7)]
    init_scale: f64,
    #[arg(long, env = "CERTKIT_SEED", default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct BenchArgs {
    /// Benchmark config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Directory for report.csv / report.txt.
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    /// Override the config seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct ReportArgs {
    /// Benchmark CSV to render.
    #[arg(long)]
    csv: PathBuf,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version are successful outputs, not usage errors.
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Train(args) => cmd_train(args),
        Command::Verify(args) => cmd_verify(args),
        Command::Certify(args) => cmd_certify(args),
        Command::Attack(args) => cmd_attack(args),
        Command::Bench(args) => cmd_bench(args),
        Command::Report(args) => cmd_report(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(CliError::Toolkit(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
        Err(CliError::Io(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

enum CliError {
    Usage(String),
    Toolkit(CkError),
    Io(String),
}

impl From<CkError> for CliError {
    fn from(e: CkError) -> Self {
        CliError::Toolkit(e)
    }
}

fn exit_code_for(e: &CkError) -> u8 {
    match e {
        CkError::InvalidParameter(_) | CkError::UnsupportedNorm { .. } => 1,
        _ => 2,
    }
}

fn setup_jobs(jobs: Option<usize>) {
    if let Some(n) = jobs {
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global();
    }
}

fn load_pair(io: &CommonIo) -> Result<(Network, Vec<LabeledSample>), CliError> {
    let net = load_model(&io.model)?;
    let mut data = load_dataset(&io.data, net.num_classes())?;
    if let Some(k) = io.samples {
        data.truncate(k);
    }
    if data.first().map(|s| s.x.len()) != Some(net.input_dim()) && !data.is_empty() {
        return Err(CliError::Usage(format!(
            "dataset features ({}) do not match model input_dim ({})",
            data[0].x.len(),
            net.input_dim()
        )));
    }
    Ok((net, data))
}

fn cmd_verify(args: VerifyArgs) -> Result<(), CliError> {
    setup_jobs(args.io.jobs);
    let (net, data) = load_pair(&args.io)?;
    let norm: Norm = args.norm.into();
    let verifier = match args.verifier {
        VerifierName::Ibp => VerifierConfig::Ibp { clip: args.clip },
        VerifierName::Crown => VerifierConfig::Crown {
            relax: match args.relax {
                RelaxArg::Parallel => RelaxChoice::Parallel,
                RelaxArg::Adaptive => RelaxChoice::Adaptive,
            },
            bounds: match args.bounds {
                BoundsArg::Interval => BoundsChoice::Interval,
                BoundsArg::Polyhedra => BoundsChoice::Polyhedra,
            },
        },
        VerifierName::Lpfull => VerifierConfig::Lpfull,
        VerifierName::Bab => VerifierConfig::Bab {
            timeout_s: args.timeout,
            bounding: match args.bounding {
                BoundingArg::Interval => BoundingChoice::Interval,
                BoundingArg::Crown => BoundingChoice::Crown,
                BoundingArg::Lpfull => BoundingChoice::Lpfull,
            },
        },
        VerifierName::Lipschitz => VerifierConfig::Lipschitz,
        VerifierName::Smooth => VerifierConfig::Smooth {
            dist: args.smoothing.distribution().map_err(CliError::Usage)?,
            n0: args.smoothing.n0,
            n: args.smoothing.n,
            alpha: args.smoothing.alpha,
        },
    };
    let deadline = match args.timeout {
        Some(s) if args.verifier != VerifierName::Bab => Deadline::in_seconds(s),
        _ => Deadline::none(),
    };
    let seed = args.io.seed;
    let records: Vec<Result<String, CkError>> = data
        .par_iter()
        .enumerate()
        .map(|(i, s)| {
            let predicted = net.predict(&s.x)?;
            let problem = VerificationProblem::new(s.x.clone(), s.y, args.eps, norm)?;
            let run = verifier.verify(&problem, &net, deadline, derive_seed(seed, i as u64))?;
            let mut line = format!(
                "sample={i} label={} predicted={predicted} verdict={}",
                s.y, run.verdict
            );
            if let Some(m) = run.margin {
                line.push_str(&format!(" margin={m:.6}"));
            }
            if let Some(r) = run.radius {
                line.push_str(&format!(" radius={r:.6}"));
            }
            if let Some(b) = run.branches {
                line.push_str(&format!(" branches={b}"));
            }
            Ok(line)
        })
        .collect();
    let mut counts = std::collections::BTreeMap::new();
    for rec in records {
        let line = rec?;
        let verdict = line
            .split(" verdict=")
            .nth(1)
            .and_then(|v| v.split_whitespace().next())
            .unwrap_or("unknown")
            .to_string();
        *counts.entry(verdict).or_insert(0usize) += 1;
        println!("{line}");
    }
    let robust = counts.get("robust").copied().unwrap_or(0);
    let mut summary = format!(
        "summary total={} certified_accuracy={:.6}",
        data.len(),
        robust as f64 / data.len().max(1) as f64
    );
    for (verdict, count) in &counts {
        summary.push_str(&format!(" {verdict}={count}"));
    }
    println!("{summary}");
    Ok(())
}

fn cmd_certify(args: CertifyArgs) -> Result<(), CliError> {
    setup_jobs(args.io.jobs);
    let (net, data) = load_pair(&args.io)?;
    let dist = args.smoothing.distribution().map_err(CliError::Usage)?;
    let seed = args.io.seed;
    let records: Vec<Result<String, CkError>> = data
        .par_iter()
        .enumerate()
        .map(|(i, s)| {
            let cert = certify(
                &net,
                &s.x,
                dist,
                args.smoothing.n0,
                args.smoothing.n,
                args.smoothing.alpha,
                derive_seed(seed, i as u64),
            )?;
            let predicted = cert
                .predicted
                .map(|c| c.to_string())
                .unwrap_or_else(|| "abstain".into());
            Ok(format!(
                "sample={i} label={} predicted={predicted} pa_lower={:.6} \
                 radius_l2={:.6} radius_l1={:.6} radius_linf={:.6}",
                s.y, cert.pa_lower, cert.radius_l2, cert.radius_l1, cert.radius_linf
            ))
        })
        .collect();
    let mut abstained = 0usize;
    let mut correct = 0usize;
    for (i, rec) in records.into_iter().enumerate() {
        let line = rec?;
        if line.contains("predicted=abstain") {
            abstained += 1;
        } else if line.contains(&format!("predicted={}", data[i].y)) {
            correct += 1;
        }
        println!("{line}");
    }
    println!(
        "summary total={} certified_correct={correct} abstain={abstained}",
        data.len()
    );
    Ok(())
}

fn cmd_attack(args: AttackArgs) -> Result<(), CliError> {
    use certkit::attack::{pgd, AttackConfig, AttackResult};
    setup_jobs(args.io.jobs);
    let (net, data) = load_pair(&args.io)?;
    let norm: Norm = args.norm.into();
    let seed = args.io.seed;
    let records: Vec<Result<String, CkError>> = data
        .par_iter()
        .enumerate()
        .map(|(i, s)| {
            let cfg = AttackConfig {
                steps: args.steps,
                step_size: args.step_size,
                restarts: args.restarts,
                random_start: true,
                norm,
                clip: args.clip,
                seed: derive_seed(seed, i as u64),
            };
            let line = match pgd(&net, &s.x, s.y, args.eps, &cfg)? {
                AttackResult::Found { adv } => format!(
                    "sample={i} label={} result=found distance={:.6}",
                    s.y,
                    norm.distance(&adv, &s.x)
                ),
                AttackResult::NotFound => format!("sample={i} label={} result=not_found", s.y),
            };
            Ok(line)
        })
        .collect();
    let mut found = 0usize;
    for rec in records {
        let line = rec?;
        if line.contains("result=found") {
            found += 1;
        }
        println!("{line}");
    }
    println!(
        "summary total={} found={found} pgd_accuracy={:.6}",
        data.len(),
        (data.len() - found) as f64 / data.len().max(1) as f64
    );
    Ok(())
}

fn cmd_train(args: TrainArgs) -> Result<(), CliError> {
    // Infer the class count from the labels when not given.
    let classes = match args.classes {
        Some(c) => c,
        None => {
            let probe = load_dataset(&args.data, usize::MAX)?;
            probe.iter().map(|s| s.y).max().map_or(2, |m| m + 1)
        }
    };
    let data = load_dataset(&args.data, classes)?;
    let n_features = data
        .first()
        .map(|s| s.x.len())
        .ok_or_else(|| CliError::Usage("training dataset is empty".into()))?;
    let init = Network::random(
        n_features,
        &args.hidden,
        classes,
        args.init_scale,
        derive_seed(args.seed, 0x1217),
    );
    let cfg = TrainConfig {
        epochs: args.epochs,
        batch_size: args.batch_size,
        learning_rate: args.lr,
        seed: args.seed,
        eps_target: args.eps,
        warmup_fraction: args.warmup,
        kappa: args.kappa,
        noise_dist: match args.mode {
            TrainMode::Noise => Some(SmoothingDistribution::Gaussian { sigma: args.sigma }),
            _ => None,
        },
    };
    let trained = match args.mode {
        TrainMode::Standard => train_standard(&init, &data, &cfg)?,
        TrainMode::Ibp => train_ibp(&init, &data, &cfg)?,
        TrainMode::Noise => train_noise(&init, &data, &cfg)?,
    };
    save_model(&args.out, &trained)?;
    let acc = accuracy(&trained, &data)?;
    let mode = match args.mode {
        TrainMode::Standard => "standard",
        TrainMode::Ibp => "ibp",
        TrainMode::Noise => "noise",
    };
    println!(
        "trained mode={mode} epochs={} samples={} train_accuracy={acc:.6} model={}",
        args.epochs,
        data.len(),
        args.out.display()
    );
    Ok(())
}

fn cmd_bench(args: BenchArgs) -> Result<(), CliError> {
    let text = std::fs::read_to_string(&args.config)
        .map_err(|e| CliError::Io(format!("{}: {e}", args.config.display())))?;
    let mut cfg: BenchmarkConfig = serde_json::from_str(&text)
        .map_err(|e| CliError::Io(format!("{}: {e}", args.config.display())))?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    let report = run_benchmark(&cfg)?;
    std::fs::create_dir_all(&args.out_dir)
        .map_err(|e| CliError::Io(format!("{}: {e}", args.out_dir.display())))?;
    let csv_path = args.out_dir.join("report.csv");
    let txt_path = args.out_dir.join("report.txt");
    std::fs::write(&csv_path, report.to_csv())
        .map_err(|e| CliError::Io(format!("{}: {e}", csv_path.display())))?;
    std::fs::write(&txt_path, report.to_table())
        .map_err(|e| CliError::Io(format!("{}: {e}", txt_path.display())))?;
    print!("{}", report.to_table());
    println!("wrote {}", csv_path.display());
    println!("wrote {}", txt_path.display());
    Ok(())
}

fn cmd_report(args: ReportArgs) -> Result<(), CliError> {
    let text = std::fs::read_to_string(&args.csv)
        .map_err(|e| CliError::Io(format!("{}: {e}", args.csv.display())))?;
    let report = BenchmarkReport::from_csv(&text)?;
    print!("{}", report.to_table());
    Ok(())
}

//! End-to-end pipeline through the library: train, serialize, reload, verify,
//! attack, benchmark; plus a reduced-trial conservativeness check for the
//! smoothing certifier against the analytic halfspace fixture.

use certkit::bench::{run_benchmark, BenchmarkConfig};
use certkit::data::{gap_dataset, save_dataset};
use certkit::model_io::{load_model, save_model};
use certkit::network::Network;
use certkit::problem::Norm;
use certkit::smoothing::{certify, SmoothingDistribution};
use certkit::stats::{std_normal_cdf, std_normal_quantile};
use certkit::training::{train_standard, TrainConfig};
use certkit::verifier::{BoundsChoice, RelaxChoice, VerifierConfig};

#[test]
fn train_save_load_bench_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let data = gap_dataset(40, 0.3, 0.2, 21);
    let data_path = dir.path().join("train.csv");
    save_dataset(&data_path, &data).unwrap();

    let init = Network::random(2, &[8], 2, 0.7, 33);
    let cfg = TrainConfig {
        epochs: 40,
        batch_size: 16,
        learning_rate: 0.2,
        seed: 4,
        ..TrainConfig::default()
    };
    let trained = train_standard(&init, &data, &cfg).unwrap();
    let model_path = dir.path().join("model.json");
    save_model(&model_path, &trained).unwrap();
    let reloaded = load_model(&model_path).unwrap();
    assert_eq!(reloaded, trained);

    let bench = BenchmarkConfig {
        verifiers: vec![
            VerifierConfig::Ibp { clip: false },
            VerifierConfig::Crown {
                relax: RelaxChoice::Adaptive,
                bounds: BoundsChoice::Interval,
            },
            VerifierConfig::Lpfull,
            VerifierConfig::Bab {
                timeout_s: Some(20.0),
                bounding: Default::default(),
            },
        ],
        models: vec![model_path.to_string_lossy().into_owned()],
        dataset: data_path.to_string_lossy().into_owned(),
        sample_count: 12,
        eps: 0.05,
        norm: Norm::Linf,
        accuracy_timeout_s: 30.0,
        radius_timeout_s: 30.0,
        radius_precision: 1e-2,
        compute_radius: true,
        attack_restarts: 2,
        seed: 11,
    };
    let report = run_benchmark(&bench).unwrap();

    let acc = |v: &str| {
        report
            .rows
            .iter()
            .find(|r| r.verifier == v)
            .unwrap()
            .certified_accuracy
    };
    let radius = |v: &str| {
        report
            .rows
            .iter()
            .find(|r| r.verifier == v)
            .unwrap()
            .avg_radius
            .unwrap()
    };
    // Sandwich: certified <= pgd <= clean for every sound verifier row.
    for v in ["ibp", "crown", "lpfull", "bab"] {
        assert!(acc(v) <= acc("pgd") + 1e-12, "{v} broke the sandwich");
    }
    assert!(acc("pgd") <= acc("clean") + 1e-12);
    // Tightness ordering, both as accuracy and as mean certified radius.
    assert!(acc("ibp") <= acc("crown") + 1e-12);
    assert!(acc("crown") <= acc("lpfull") + 1e-12);
    assert!(acc("lpfull") <= acc("bab") + 1e-12);
    let tol = 2.0 * bench.radius_precision;
    assert!(radius("ibp") <= radius("crown") + tol);
    assert!(radius("crown") <= radius("lpfull") + tol);
    assert!(radius("lpfull") <= radius("bab") + tol);
}

#[test]
fn smoothing_conservative_against_analytic_truth() {
    // Halfspace with known smoothed probability p = Phi(margin / (sigma |w|)).
    // Reduced-trial version; the acceptance suite runs 1000 trials.
    let sigma = 0.25;
    let true_p: f64 = 0.9;
    let delta = sigma * std_normal_quantile(true_p);
    let x0 = vec![0.5 + delta, 0.5];
    let net = Network::from_affine_layers(vec![(
        vec![vec![1.0, 0.0], vec![0.0, 0.0]],
        vec![-0.5, 0.0],
    )])
    .unwrap();
    let check = std_normal_cdf((x0[0] - 0.5) / sigma);
    assert!((check - true_p).abs() < 1e-12);
    let true_radius = sigma * std_normal_quantile(true_p);

    let trials = 100u64;
    let mut over = 0;
    for seed in 0..trials {
        let cert = certify(
            &net,
            &x0,
            SmoothingDistribution::Gaussian { sigma },
            200,
            2000,
            0.001,
            seed,
        )
        .unwrap();
        if cert.predicted == Some(0) && cert.radius_l2 > true_radius + 1e-12 {
            over += 1;
        }
    }
    assert!(
        over == 0,
        "{over}/{trials} runs over-certified the analytic radius"
    );
}

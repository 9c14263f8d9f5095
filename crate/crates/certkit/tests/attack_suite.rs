//! Attack-vs-oracle suite: PGD finds counterexamples on almost every instance
//! the exact oracle marks attackable, and never contradicts a certificate.

use certkit::attack::{pgd, AttackConfig};
use certkit::bab::brute_force_margin;
use certkit::interval::ibp_verify;
use certkit::network::Network;
use certkit::problem::{Norm, Verdict, VerificationProblem};
use certkit::rng::{derive_seed, rng_from_seed};
use rand::Rng;

#[test]
fn pgd_finds_most_truly_attackable_instances() {
    let mut attackable = 0usize;
    let mut found = 0usize;
    let mut trial = 0u64;
    while attackable < 60 {
        trial += 1;
        let seed = derive_seed(0xa77ac4, trial);
        let net = Network::random(2, &[4, 3], 2, 1.4, seed);
        let mut rng = rng_from_seed(derive_seed(seed, 1));
        let x0 = vec![rng.gen_range(0.2..0.8), rng.gen_range(0.2..0.8)];
        let label = net.predict(&x0).unwrap();
        let eps = rng.gen_range(0.05..0.3);
        let problem = VerificationProblem::new(x0.clone(), label, eps, Norm::Linf).unwrap();
        let Ok(margins) = brute_force_margin(&problem, &net) else {
            continue;
        };
        let min_margin = margins.iter().map(|&(_, m)| m).fold(f64::INFINITY, f64::min);
        if min_margin >= -1e-4 {
            continue; // not clearly attackable
        }
        attackable += 1;
        let cfg = AttackConfig {
            restarts: 10,
            seed: derive_seed(seed, 2),
            ..AttackConfig::default()
        };
        if let certkit::attack::AttackResult::Found { adv } =
            pgd(&net, &x0, label, eps, &cfg).unwrap()
        {
            assert!(Norm::Linf.distance(&adv, &x0) <= eps + 1e-9);
            assert_ne!(net.predict(&adv).unwrap(), label);
            found += 1;
        }
    }
    let rate = found as f64 / attackable as f64;
    assert!(
        rate >= 0.95,
        "PGD found only {found}/{attackable} truly attackable instances"
    );
}

#[test]
fn certificates_never_contradict_the_attack() {
    // Light version of the fuzzing sandwich; the acceptance suite runs the
    // full thousand-instance protocol.
    let mut checked = 0;
    for trial in 0..120u64 {
        let seed = derive_seed(0x5a4d, trial);
        let net = Network::random(3, &[4, 4], 2, 1.3, seed);
        let mut rng = rng_from_seed(derive_seed(seed, 1));
        let x0: Vec<f64> = (0..3).map(|_| rng.gen_range(0.2..0.8)).collect();
        let label = net.predict(&x0).unwrap();
        let eps = rng.gen_range(0.02..0.2);
        let problem = VerificationProblem::new(x0.clone(), label, eps, Norm::Linf).unwrap();
        let verdict = ibp_verify(&problem, &net, false).unwrap();
        if verdict.verdict != Verdict::Robust {
            continue;
        }
        let cfg = AttackConfig {
            restarts: 10,
            seed: derive_seed(seed, 2),
            ..AttackConfig::default()
        };
        let res = pgd(&net, &x0, label, eps, &cfg).unwrap();
        assert!(
            !res.found(),
            "trial {trial}: attack broke an interval certificate"
        );
        checked += 1;
    }
    assert!(checked >= 20, "too few certified instances exercised: {checked}");
}

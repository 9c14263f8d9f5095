//! Probabilistic certification of smoothed classifiers: Monte-Carlo class
//! counts, exact one-sided confidence bounds, and closed-form certified radii
//! (Gaussian l2, Laplace l1, l-infinity via dimension conversion).
//!
//! The certified radii treat the runner-up probability as `1 - p_A`, so only
//! the top-class lower confidence bound enters the formulas.

use crate::error::{Error, Result};
use crate::network::{argmax, Network};
use crate::rng::{derive_seed, rng_from_seed};
use crate::stats::{binom_p_value_ge_half, clopper_pearson_lower, std_normal_quantile};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

/// Additive, coordinatewise-independent smoothing noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum SmoothingDistribution {
    /// Per-coordinate standard deviation.
    Gaussian { sigma: f64 },
    /// Per-coordinate scale.
    Laplace { lambda: f64 },
    /// Uniform on `[-half_width, half_width]` per coordinate. Supported for
    /// sampling and training; no certified radius is produced for it.
    Uniform { half_width: f64 },
}

impl SmoothingDistribution {
    /// Scale parameter. Zero is tolerated for the training path (noiseless
    /// augmentation); certification requires a positive scale.
    pub fn scale(&self) -> f64 {
        match *self {
            SmoothingDistribution::Gaussian { sigma } => sigma,
            SmoothingDistribution::Laplace { lambda } => lambda,
            SmoothingDistribution::Uniform { half_width } => half_width,
        }
    }

    pub fn validate(&self, for_certification: bool) -> Result<()> {
        let s = self.scale();
        if !s.is_finite() || s < 0.0 || (for_certification && s == 0.0) {
            return Err(Error::InvalidParameter(format!(
                "smoothing scale must be {} , got {s}",
                if for_certification { "> 0" } else { ">= 0" }
            )));
        }
        Ok(())
    }

    /// Draw one noise vector of dimension `dim`.
    pub fn sample(&self, dim: usize, rng: &mut impl Rng) -> Vec<f64> {
        match *self {
            SmoothingDistribution::Gaussian { sigma } => {
                let normal = Normal::new(0.0, 1.0).expect("unit normal is valid");
                (0..dim).map(|_| sigma * normal.sample(rng)).collect()
            }
            SmoothingDistribution::Laplace { lambda } => (0..dim)
                .map(|_| {
                    let u: f64 = rng.gen_range(-0.5..0.5);
                    -lambda * u.signum() * (1.0 - 2.0 * u.abs()).ln()
                })
                .collect(),
            SmoothingDistribution::Uniform { half_width } => (0..dim)
                .map(|_| {
                    let u: f64 = rng.gen_range(-1.0..=1.0);
                    half_width * u
                })
                .collect(),
        }
    }
}

/// Certificate for the smoothed classifier at one input.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothCertificate {
    /// Certified class; `None` means abstain.
    pub predicted: Option<usize>,
    /// One-sided lower confidence bound on the top-class probability.
    pub pa_lower: f64,
    pub radius_l2: f64,
    pub radius_l1: f64,
    pub radius_linf: f64,
    /// (selection samples, estimation samples)
    pub samples_used: (u64, u64),
    pub alpha: f64,
}

/// Count base-classifier predictions over `n` noisy copies of `x0`.
/// Deterministic under `seed`.
pub fn sample_counts(
    net: &Network,
    x0: &[f64],
    dist: SmoothingDistribution,
    n: u64,
    seed: u64,
) -> Result<Vec<u64>> {
    dist.validate(false)?;
    let mut rng = rng_from_seed(seed);
    let mut counts = vec![0u64; net.num_classes()];
    let mut x = vec![0.0; x0.len()];
    for _ in 0..n {
        let noise = dist.sample(x0.len(), &mut rng);
        for ((xi, &c), &d) in x.iter_mut().zip(x0).zip(&noise) {
            *xi = c + d;
        }
        counts[net.predict(&x)?] += 1;
    }
    Ok(counts)
}

/// One-sided lower confidence bound on a binomial success probability
/// (exact Clopper-Pearson; see the stats module for the construction).
pub fn binom_lower_confidence(k: u64, n: u64, alpha: f64) -> f64 {
    clopper_pearson_lower(k, n, alpha)
}

/// Certified l2 radius for Gaussian smoothing:
/// `sigma * quantile(p_A)` above 1/2, else 0 (abstain regime).
pub fn certify_gaussian_l2(pa_lower: f64, sigma: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&pa_lower) {
        return Err(Error::InvalidParameter(format!(
            "p_A must lie in [0,1], got {pa_lower}"
        )));
    }
    if sigma <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "sigma must be positive, got {sigma}"
        )));
    }
    if pa_lower <= 0.5 {
        return Ok(0.0);
    }
    Ok(sigma * std_normal_quantile(pa_lower))
}

/// Certified l1 radius for Laplace smoothing:
/// `-lambda * ln(2 (1 - p_A))` above 1/2, else 0.
pub fn certify_laplace_l1(pa_lower: f64, lambda: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&pa_lower) {
        return Err(Error::InvalidParameter(format!(
            "p_A must lie in [0,1], got {pa_lower}"
        )));
    }
    if lambda <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "lambda must be positive, got {lambda}"
        )));
    }
    if pa_lower <= 0.5 {
        return Ok(0.0);
    }
    Ok(-lambda * (2.0 * (1.0 - pa_lower)).ln())
}

/// l2 -> l-infinity radius conversion: divide by sqrt(input dimension).
pub fn convert_l2_to_linf(radius_l2: f64, dim: usize) -> f64 {
    radius_l2 / (dim.max(1) as f64).sqrt()
}

/// Smoothed prediction with an abstention test: returns the top class only if
/// the exact binomial tail rejects `p <= 1/2` for its count at level `alpha`.
pub fn predict_smooth(
    net: &Network,
    x0: &[f64],
    dist: SmoothingDistribution,
    n: u64,
    alpha: f64,
    seed: u64,
) -> Result<Option<usize>> {
    if n == 0 {
        return Err(Error::InvalidParameter("need at least one sample".into()));
    }
    let counts = sample_counts(net, x0, dist, n, seed)?;
    let top = argmax(&counts.iter().map(|&c| c as f64).collect::<Vec<_>>());
    if binom_p_value_ge_half(counts[top], n) <= alpha {
        Ok(Some(top))
    } else {
        Ok(None)
    }
}

/// Two-pass certification: a selection pass picks the candidate class, a
/// fresh estimation pass bounds its probability from below, and the radii
/// follow from the closed forms (runner-up mass bounded by `1 - p_A`).
#[allow(clippy::too_many_arguments)]
pub fn certify(
    net: &Network,
    x0: &[f64],
    dist: SmoothingDistribution,
    n0: u64,
    n: u64,
    alpha: f64,
    seed: u64,
) -> Result<SmoothCertificate> {
    dist.validate(true)?;
    if n0 == 0 || n == 0 {
        return Err(Error::InvalidParameter(
            "selection and estimation sample counts must be positive".into(),
        ));
    }
    if !(0.0 < alpha && alpha < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "alpha must lie in (0,1), got {alpha}"
        )));
    }
    // Independent sub-streams for the two passes.
    let selection = sample_counts(net, x0, dist, n0, derive_seed(seed, 0xA))?;
    let candidate = argmax(&selection.iter().map(|&c| c as f64).collect::<Vec<_>>());
    let estimation = sample_counts(net, x0, dist, n, derive_seed(seed, 0xB))?;
    let pa_lower = binom_lower_confidence(estimation[candidate], n, alpha);

    if pa_lower <= 0.5 {
        return Ok(SmoothCertificate {
            predicted: None,
            pa_lower,
            radius_l2: 0.0,
            radius_l1: 0.0,
            radius_linf: 0.0,
            samples_used: (n0, n),
            alpha,
        });
    }
    let dim = x0.len();
    let (radius_l2, radius_l1, radius_linf) = match dist {
        SmoothingDistribution::Gaussian { sigma } => {
            let r2 = certify_gaussian_l2(pa_lower, sigma)?;
            // The l1 ball of radius r sits inside the l2 ball of radius r.
            (r2, r2, convert_l2_to_linf(r2, dim))
        }
        SmoothingDistribution::Laplace { lambda } => {
            (0.0, certify_laplace_l1(pa_lower, lambda)?, 0.0)
        }
        SmoothingDistribution::Uniform { .. } => (0.0, 0.0, 0.0),
    };
    Ok(SmoothCertificate {
        predicted: Some(candidate),
        pa_lower,
        radius_l2,
        radius_l1,
        radius_linf,
        samples_used: (n0, n),
        alpha,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::Network;
    use crate::stats::std_normal_cdf;

    /// logits [w.x - b, 0]: class 0 iff w.x > b; under Gaussian sigma the
    /// smoothed class-0 probability is Phi((w.x0 - b) / (sigma |w|_2)).
    fn halfspace(w: Vec<f64>, b: f64) -> Network {
        let zeros = vec![0.0; w.len()];
        Network::from_affine_layers(vec![(vec![w, zeros], vec![-b, 0.0])]).unwrap()
    }

    fn constant_classifier() -> Network {
        // Always predicts class 1: logits [0, 5].
        Network::from_affine_layers(vec![(vec![vec![0.0], vec![0.0]], vec![0.0, 5.0])]).unwrap()
    }

    #[test]
    fn constant_classifier_counts() {
        let net = constant_classifier();
        let counts = sample_counts(
            &net,
            &[0.3],
            SmoothingDistribution::Gaussian { sigma: 1.0 },
            500,
            7,
        )
        .unwrap();
        assert_eq!(counts, vec![0, 500]);
    }

    #[test]
    fn single_sample_one_hot() {
        let net = halfspace(vec![1.0, 0.0], 0.2);
        let counts = sample_counts(
            &net,
            &[0.5, 0.5],
            SmoothingDistribution::Laplace { lambda: 0.3 },
            1,
            3,
        )
        .unwrap();
        assert_eq!(counts.iter().sum::<u64>(), 1);
    }

    #[test]
    fn halfspace_frequency_matches_gaussian_projection() {
        let w = vec![1.5, -0.7];
        let b = 0.55;
        let sigma = 0.8;
        let x0 = vec![0.6, 0.3];
        let net = halfspace(w.clone(), b);
        let n = 100_000u64;
        let counts = sample_counts(
            &net,
            &x0,
            SmoothingDistribution::Gaussian { sigma },
            n,
            11,
        )
        .unwrap();
        let w_norm = (w.iter().map(|v| v * v).sum::<f64>()).sqrt();
        let margin: f64 = w.iter().zip(&x0).map(|(a, b)| a * b).sum::<f64>() - b;
        let p_true = std_normal_cdf(margin / (sigma * w_norm));
        let p_hat = counts[0] as f64 / n as f64;
        let se = (p_true * (1.0 - p_true) / n as f64).sqrt();
        assert!(
            (p_hat - p_true).abs() < 3.0 * se,
            "empirical {p_hat} vs analytic {p_true} (3se = {})",
            3.0 * se
        );
    }

    #[test]
    fn gaussian_radius_examples() {
        assert_eq!(certify_gaussian_l2(0.5, 1.0).unwrap(), 0.0);
        // quantile(0.999) ~ 3.090232; radius = 0.5 * that.
        let r = certify_gaussian_l2(0.999, 0.5).unwrap();
        assert!((r - 1.545116).abs() < 1e-5, "radius {r}");
        assert!(certify_gaussian_l2(1.5, 1.0).is_err());
        assert!(certify_gaussian_l2(0.9, 0.0).is_err());
    }

    /// Numerically solve `Phi(Phi^{-1}(pa) - r / sigma) = 1/2` for r: the
    /// worst-case-shift construction the closed form must reproduce.
    fn np_radius_oracle(pa: f64, sigma: f64) -> f64 {
        let (mut lo, mut hi) = (0.0, 20.0 * sigma);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            let v = std_normal_cdf(std_normal_quantile(pa) - mid / sigma);
            if v > 0.5 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn gaussian_radius_matches_np_bisection() {
        for &pa in &[0.55, 0.7, 0.9, 0.99, 0.999] {
            for &sigma in &[0.25, 0.5, 1.0] {
                let closed = certify_gaussian_l2(pa, sigma).unwrap();
                let oracle = np_radius_oracle(pa, sigma);
                assert!(
                    (closed - oracle).abs() < 1e-6,
                    "pa={pa} sigma={sigma}: {closed} vs {oracle}"
                );
            }
        }
    }

    /// Laplace CDF via quadrature (independent of the closed form). The
    /// integral starts at the kink, where F = 1/2 by symmetry, so Simpson
    /// sees a smooth integrand on one side only.
    fn laplace_cdf_quadrature(t: f64, lambda: f64) -> f64 {
        let f = |x: f64| (-x.abs() / lambda).exp() / (2.0 * lambda);
        let n = 40_000;
        let (a, b, sign) = if t >= 0.0 { (0.0, t, 1.0) } else { (t, 0.0, -1.0) };
        if a == b {
            return 0.5;
        }
        let h = (b - a) / n as f64;
        let mut s = f(a) + f(b);
        for i in 1..n {
            s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(a + i as f64 * h);
        }
        0.5 + sign * s * h / 3.0
    }

    /// Worst-case single-coordinate shift oracle for Laplace smoothing: the
    /// NP-optimal set is a half-line, so the certified radius solves
    /// `F(F^{-1}(p) - r) = 1/2` in one dimension.
    fn laplace_radius_oracle(pa: f64, lambda: f64) -> f64 {
        // t = F^{-1}(pa) by bisection on the quadrature CDF.
        let (mut lo, mut hi) = (-60.0 * lambda, 60.0 * lambda);
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if laplace_cdf_quadrature(mid, lambda) < pa {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let t = 0.5 * (lo + hi);
        // Largest r with F(t - r) > 1/2; by symmetry F(0) = 1/2, so r = t.
        let (mut lo, mut hi) = (0.0, 80.0 * lambda);
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if laplace_cdf_quadrature(t - mid, lambda) > 0.5 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn laplace_radius_examples_and_oracle() {
        assert_eq!(certify_laplace_l1(0.5, 1.0).unwrap(), 0.0);
        let r = certify_laplace_l1(0.75, 1.0).unwrap();
        assert!((r - 0.5f64.ln().abs()).abs() < 1e-12, "radius {r}");
        for &pa in &[0.6, 0.75, 0.9, 0.99] {
            for &lambda in &[0.5, 1.0, 2.0] {
                let closed = certify_laplace_l1(pa, lambda).unwrap();
                let oracle = laplace_radius_oracle(pa, lambda);
                assert!(
                    (closed - oracle).abs() < 1e-5,
                    "pa={pa} lambda={lambda}: {closed} vs {oracle}"
                );
            }
        }
    }

    #[test]
    fn laplace_radius_monotone_in_pa() {
        let mut last = -1.0;
        for i in 0..100 {
            let pa = 0.5 + 0.005 * i as f64;
            let r = certify_laplace_l1(pa.min(0.9999), 1.0).unwrap();
            assert!(r >= last);
            last = r;
        }
    }

    #[test]
    fn linf_conversion_exact() {
        assert_eq!(convert_l2_to_linf(1.0, 1), 1.0);
        assert_eq!(convert_l2_to_linf(1.0, 4), 0.5);
        let r = convert_l2_to_linf(1.5451, 784);
        assert!((r - 0.0551821).abs() < 1e-6);
    }

    #[test]
    fn predict_abstains_near_boundary_and_commits_when_constant() {
        let alpha: f64 = 0.001;
        // Constant classifier: never abstains once n >= ceil(log2(1/alpha)).
        let n_min = (1.0 / alpha).log2().ceil() as u64;
        let net = constant_classifier();
        let got = predict_smooth(
            &net,
            &[0.3],
            SmoothingDistribution::Gaussian { sigma: 0.5 },
            n_min,
            alpha,
            5,
        )
        .unwrap();
        assert_eq!(got, Some(1));
        // Halfspace through the input: abstains in (almost) every trial.
        let net = halfspace(vec![1.0], 0.5);
        let mut abstained = 0;
        for seed in 0..100 {
            let got = predict_smooth(
                &net,
                &[0.5],
                SmoothingDistribution::Gaussian { sigma: 0.5 },
                200,
                alpha,
                seed,
            )
            .unwrap();
            if got.is_none() {
                abstained += 1;
            }
        }
        assert!(abstained >= 99, "abstained only {abstained}/100");
    }

    #[test]
    fn certify_constant_classifier_hits_closed_form() {
        let net = constant_classifier();
        let n = 100;
        let cert = certify(
            &net,
            &[0.3],
            SmoothingDistribution::Gaussian { sigma: 0.5 },
            50,
            n,
            0.001,
            9,
        )
        .unwrap();
        assert_eq!(cert.predicted, Some(1));
        let want_pa = 0.001f64.powf(1.0 / n as f64);
        assert!((cert.pa_lower - want_pa).abs() < 1e-9);
        let want_r = 0.5 * std_normal_quantile(want_pa);
        assert!((cert.radius_l2 - want_r).abs() < 1e-9);
        assert!(cert.radius_l2 > 0.0);
        assert_eq!(cert.radius_linf, convert_l2_to_linf(cert.radius_l2, 1));
    }

    #[test]
    fn certificates_deterministic_and_consistent() {
        let net = halfspace(vec![1.0, 0.3], 0.2);
        let dist = SmoothingDistribution::Gaussian { sigma: 0.4 };
        let a = certify(&net, &[0.6, 0.5], dist, 200, 1000, 0.01, 42).unwrap();
        let b = certify(&net, &[0.6, 0.5], dist, 200, 1000, 0.01, 42).unwrap();
        assert_eq!(a, b, "identical seeds must give identical certificates");
        // Abstain implies zero radii; committed implies pa below frequency.
        match a.predicted {
            None => {
                assert_eq!(a.radius_l2, 0.0);
                assert_eq!(a.radius_l1, 0.0);
                assert_eq!(a.radius_linf, 0.0);
            }
            Some(c) => {
                let counts = sample_counts(&net, &[0.6, 0.5], dist, 1000, derive_seed(42, 0xB))
                    .unwrap();
                assert!(a.pa_lower <= counts[c] as f64 / 1000.0);
                assert!((a.radius_linf - a.radius_l2 / 2.0f64.sqrt()).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn laplace_certificate_reports_l1_only() {
        let net = constant_classifier();
        let cert = certify(
            &net,
            &[0.3],
            SmoothingDistribution::Laplace { lambda: 1.0 },
            100,
            1000,
            0.001,
            3,
        )
        .unwrap();
        assert!(cert.radius_l1 > 0.0);
        assert_eq!(cert.radius_l2, 0.0);
        assert_eq!(cert.radius_linf, 0.0);
    }

    #[test]
    fn uniform_certifies_nothing_but_samples_fine() {
        let net = constant_classifier();
        let cert = certify(
            &net,
            &[0.3],
            SmoothingDistribution::Uniform { half_width: 0.2 },
            100,
            500,
            0.001,
            3,
        )
        .unwrap();
        assert_eq!(cert.predicted, Some(1));
        assert_eq!(
            (cert.radius_l2, cert.radius_l1, cert.radius_linf),
            (0.0, 0.0, 0.0)
        );
    }

    #[test]
    fn certify_rejects_bad_parameters() {
        let net = constant_classifier();
        let g = SmoothingDistribution::Gaussian { sigma: 0.0 };
        assert!(certify(&net, &[0.1], g, 10, 10, 0.001, 0).is_err());
        let g = SmoothingDistribution::Gaussian { sigma: 1.0 };
        assert!(certify(&net, &[0.1], g, 0, 10, 0.001, 0).is_err());
        assert!(certify(&net, &[0.1], g, 10, 10, 0.0, 0).is_err());
    }
}

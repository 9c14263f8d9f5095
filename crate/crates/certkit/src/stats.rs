//! Scalar numerics shared by the probabilistic verifier and the trainers:
//! the error function, the standard normal CDF and quantile, log-sum-exp,
//! and exact binomial tail machinery (Clopper-Pearson, binomial tests).
//!
//! The normal quantile follows the usual rational-approximation-plus-Newton
//! recipe; the test suite pins it against an independent quadrature oracle.

/// `log(sum(exp(v)))` with the max-shift trick.
pub fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    if m.is_infinite() {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

pub fn softmax(v: &[f64]) -> Vec<f64> {
    let lse = log_sum_exp(v);
    v.iter().map(|x| (x - lse).exp()).collect()
}

/// Error function, W. J. Cody's rational approximations (three regions),
/// accurate to a few ulps over the whole line.
pub fn erf(x: f64) -> f64 {
    if x.abs() <= 0.5 {
        erf_small(x)
    } else {
        let e = erfc(x.abs());
        if x > 0.0 {
            1.0 - e
        } else {
            e - 1.0
        }
    }
}

/// Complementary error function.
pub fn erfc(x: f64) -> f64 {
    let y = x.abs();
    if y <= 0.5 {
        return 1.0 - erf_small(x);
    }
    let v = if y <= 4.0 { erfc_mid(y) } else { erfc_far(y) };
    if x < 0.0 {
        2.0 - v
    } else {
        v
    }
}

fn erf_small(x: f64) -> f64 {
    const A: [f64; 5] = [
        3.16112374387056560e0,
        1.13864154151050156e2,
        3.77485237685302021e2,
        3.20937758913846947e3,
        1.85777706184603153e-1,
    ];
    const B: [f64; 4] = [
        2.36012909523441209e1,
        2.44024637934444173e2,
        1.28261652607737228e3,
        2.84423683343917062e3,
    ];
    let z = x * x;
    let mut num = A[4] * z;
    let mut den = z;
    for i in 0..3 {
        num = (num + A[i]) * z;
        den = (den + B[i]) * z;
    }
    x * (num + A[3]) / (den + B[3])
}

fn erfc_mid(y: f64) -> f64 {
    const C: [f64; 9] = [
        5.64188496988670089e-1,
        8.88314979438837594e0,
        6.61191906371416295e1,
        2.98635138197400131e2,
        8.81952221241769090e2,
        1.71204761263407058e3,
        2.05107837782607147e3,
        1.23033935479799725e3,
        2.15311535474403846e-8,
    ];
    const D: [f64; 8] = [
        1.57449261107098347e1,
        1.17693950891312499e2,
        5.37181101862009858e2,
        1.62138957456669019e3,
        3.29079923573345963e3,
        4.36261909014324716e3,
        3.43936767414372164e3,
        1.23033935480374942e3,
    ];
    let mut num = C[8] * y;
    let mut den = y;
    for i in 0..7 {
        num = (num + C[i]) * y;
        den = (den + D[i]) * y;
    }
    (-y * y).exp() * (num + C[7]) / (den + D[7])
}

fn erfc_far(y: f64) -> f64 {
    const P: [f64; 6] = [
        3.05326634961232344e-1,
        3.60344899949804439e-1,
        1.25781726111229246e-1,
        1.60837851487422766e-2,
        6.58749161529837803e-4,
        1.63153871373020978e-2,
    ];
    const Q: [f64; 5] = [
        2.56852019228982242e0,
        1.87295284992346047e0,
        5.27905102951428412e-1,
        6.05183413124413191e-2,
        2.33520497626869185e-3,
    ];
    const INV_SQRT_PI: f64 = 0.564189583547756286948;
    if y >= 26.5 {
        return 0.0;
    }
    let z = 1.0 / (y * y);
    let mut num = P[5] * z;
    let mut den = z;
    for i in 0..4 {
        num = (num + P[i]) * z;
        den = (den + Q[i]) * z;
    }
    let r = z * (num + P[4]) / (den + Q[4]);
    (-y * y).exp() * (INV_SQRT_PI - r) / y
}

/// Standard normal CDF.
pub fn std_normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Standard normal density.
pub fn std_normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Standard normal quantile: rational approximation (Acklam) refined by one
/// Newton step on the CDF. Returns infinities at `p <= 0` / `p >= 1`.
pub fn std_normal_quantile(p: f64) -> f64 {
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    const A: [f64; 6] = [
        -3.969683028665376e+01,
        2.209460984245205e+02,
        -2.759285104469687e+02,
        1.383577518672690e+02,
        -3.066479806614716e+01,
        2.506628277459239e+00,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e+01,
        1.615858368580409e+02,
        -1.556989798598866e+02,
        6.680131188771972e+01,
        -1.328068155288572e+01,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-03,
        -3.223964580411365e-01,
        -2.400758277161838e+00,
        -2.549732539343734e+00,
        4.374664141464968e+00,
        2.938163982698783e+00,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-03,
        3.224671290700398e-01,
        2.445134137142996e+00,
        3.754408661907416e+00,
    ];
    const P_LOW: f64 = 0.02425;
    let x = if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = (-2.0 * (1.0 - p).ln()).sqrt();
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };
    // One Newton step on the CDF cuts the error to a few ulps.
    let err = std_normal_cdf(x) - p;
    let pdf = std_normal_pdf(x);
    if pdf > 0.0 {
        x - err / pdf
    } else {
        x
    }
}

/// Upper binomial tail `P[Bin(n, p) >= k]`, summed in log space.
pub fn binom_tail_ge(k: u64, n: u64, p: f64) -> f64 {
    if k == 0 {
        return 1.0;
    }
    if k > n {
        return 0.0;
    }
    if p <= 0.0 {
        return 0.0;
    }
    if p >= 1.0 {
        return 1.0;
    }
    let ln_p = p.ln();
    let ln_q = (-p).ln_1p();
    // ln C(n, k) by summing logs; n stays desk-scale (<= a few hundred thousand).
    let mut ln_c = 0.0;
    for i in 0..k {
        ln_c += ((n - i) as f64).ln() - ((i + 1) as f64).ln();
    }
    // Online log-sum-exp over terms i = k..=n via the ratio recurrence.
    let mut ln_term = ln_c + k as f64 * ln_p + (n - k) as f64 * ln_q;
    let mut max = ln_term;
    let mut sum = 1.0f64; // sum of exp(ln_term - max)
    for i in k..n {
        ln_term += ((n - i) as f64).ln() - ((i + 1) as f64).ln() + ln_p - ln_q;
        if ln_term > max {
            sum = sum * (max - ln_term).exp() + 1.0;
            max = ln_term;
        } else {
            sum += (ln_term - max).exp();
        }
    }
    (max + sum.ln()).exp().min(1.0)
}

/// Exact one-sided Clopper-Pearson lower confidence bound: the `p` at which
/// the upper tail `P[Bin(n, p) >= k]` equals `alpha`, found by bisection
/// (`0` when `k = 0`). The tail is increasing in `p`, so values below the
/// bound would make the observed count a `< alpha` event.
pub fn clopper_pearson_lower(k: u64, n: u64, alpha: f64) -> f64 {
    assert!(k <= n, "k must not exceed n");
    assert!(alpha > 0.0 && alpha < 1.0, "alpha must lie in (0, 1)");
    if k == 0 {
        return 0.0;
    }
    let mut lo = 0.0;
    let mut hi = 1.0;
    while hi - lo > 1e-12 {
        let mid = 0.5 * (lo + hi);
        if binom_tail_ge(k, n, mid) >= alpha {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

/// One-sided p-value of `H0: p <= 1/2` for `k` successes in `n` fair trials:
/// `P[Bin(n, 1/2) >= k]`.
pub fn binom_p_value_ge_half(k: u64, n: u64) -> f64 {
    binom_tail_ge(k, n, 0.5)
}

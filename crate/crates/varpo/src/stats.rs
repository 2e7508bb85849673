//! Distribution functions and the hypothesis tests used by the experiment
//! reports: an F-test for equality of variances, Welch's t-test for equality
//! of means, and a one-sided two-proportion Z-test for risk proportions.
//!
//! The distribution functions are built on the regularized incomplete beta
//! and gamma functions (series plus modified-Lentz continued fractions), so
//! the crate carries no external statistics dependency.

use crate::error::{Error, Result};

const EPS: f64 = 1e-16;
const TINY: f64 = 1e-300;
const MAX_ITER: usize = 500;

// ---------------------------------------------------------------------------
// Special functions
// ---------------------------------------------------------------------------

/// Natural log of the gamma function (Lanczos approximation, g = 7, n = 9).
fn ln_gamma(z: f64) -> f64 {
    const COEFFS: [f64; 8] = [
        676.5203681218851,
        -1259.1392167224028,
        771.32342877765313,
        -176.61502916214059,
        12.507343278686905,
        -0.13857109526572012,
        9.9843695780195716e-6,
        1.5056327351493116e-7,
    ];
    if z < 0.5 {
        // Reflection: Gamma(z) Gamma(1-z) = pi / sin(pi z)
        let pi = std::f64::consts::PI;
        return (pi / (pi * z).sin()).ln() - ln_gamma(1.0 - z);
    }
    let z = z - 1.0;
    let mut acc = 0.99999999999980993;
    for (i, c) in COEFFS.iter().enumerate() {
        acc += c / (z + i as f64 + 1.0);
    }
    let t = z + 7.5;
    0.5 * (std::f64::consts::TAU).ln() + (z + 0.5) * t.ln() - t + acc.ln()
}

/// Regularized lower incomplete gamma P(a, x) by power series (x < a + 1).
fn gamma_p_series(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    let mut ap = a;
    let mut term = 1.0 / a;
    let mut sum = term;
    for _ in 0..MAX_ITER {
        ap += 1.0;
        term *= x / ap;
        sum += term;
        if term.abs() < sum.abs() * EPS {
            break;
        }
    }
    sum * (-x + a * x.ln() - ln_gamma(a)).exp()
}

/// Regularized upper incomplete gamma Q(a, x) by continued fraction (x >= a + 1).
fn gamma_q_cf(a: f64, x: f64) -> f64 {
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / TINY;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..=MAX_ITER {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < TINY {
            d = TINY;
        }
        c = b + an / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h * (-x + a * x.ln() - ln_gamma(a)).exp()
}

/// Regularized upper incomplete gamma Q(a, x).
fn gamma_q(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        1.0
    } else if x < a + 1.0 {
        1.0 - gamma_p_series(a, x)
    } else {
        gamma_q_cf(a, x)
    }
}

/// Continued fraction for the regularized incomplete beta (modified Lentz).
fn beta_cf(a: f64, b: f64, x: f64) -> f64 {
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;
        // even step
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        // odd step
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// Regularized incomplete beta I_x(a, b).
fn inc_beta(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let front =
        (ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln()).exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_cf(a, b, x) / a
    } else {
        1.0 - front * beta_cf(b, a, 1.0 - x) / b
    }
}

// ---------------------------------------------------------------------------
// Distribution functions
// ---------------------------------------------------------------------------

/// Standard normal CDF. Computed through the upper incomplete gamma so
/// both tails keep full relative accuracy.
pub fn normal_cdf(z: f64) -> f64 {
    let half_tail = 0.5 * gamma_q(0.5, 0.5 * z * z);
    if z >= 0.0 {
        1.0 - half_tail
    } else {
        half_tail
    }
}

/// Standard normal density.
pub fn normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (std::f64::consts::TAU).sqrt()
}

/// Standard normal quantile: Acklam's rational approximation polished with
/// two Newton steps against [`normal_cdf`].
pub fn normal_quantile(p: f64) -> Result<f64> {
    if !(p.is_finite() && p > 0.0 && p < 1.0) {
        return Err(Error::domain(format!("quantile requires p in (0,1), got {p}")));
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
    let mut x = if p < P_LOW {
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
    for _ in 0..2 {
        let err = normal_cdf(x) - p;
        let dens = normal_pdf(x);
        if dens > 0.0 {
            x -= err / dens;
        }
    }
    Ok(x)
}

/// Student-t CDF with `df` degrees of freedom.
pub fn t_cdf(x: f64, df: f64) -> Result<f64> {
    if !(df.is_finite() && df > 0.0) {
        return Err(Error::domain(format!("t requires df > 0, got {df}")));
    }
    if x == 0.0 {
        return Ok(0.5);
    }
    let half_tail = 0.5 * inc_beta(0.5 * df, 0.5, df / (df + x * x));
    Ok(if x > 0.0 { 1.0 - half_tail } else { half_tail })
}

/// F-distribution CDF with `(df1, df2)` degrees of freedom.
pub fn f_cdf(x: f64, df1: f64, df2: f64) -> Result<f64> {
    if !(df1.is_finite() && df1 > 0.0 && df2.is_finite() && df2 > 0.0) {
        return Err(Error::domain(format!("F requires df > 0, got ({df1}, {df2})")));
    }
    if x <= 0.0 {
        return Ok(0.0);
    }
    Ok(inc_beta(0.5 * df1, 0.5 * df2, df1 * x / (df1 * x + df2)))
}

/// Upper tail of the F-distribution, computed in complement form so small
/// p-values do not lose precision to cancellation.
pub fn f_sf(x: f64, df1: f64, df2: f64) -> Result<f64> {
    if !(df1.is_finite() && df1 > 0.0 && df2.is_finite() && df2 > 0.0) {
        return Err(Error::domain(format!("F requires df > 0, got ({df1}, {df2})")));
    }
    if x <= 0.0 {
        return Ok(1.0);
    }
    Ok(inc_beta(0.5 * df2, 0.5 * df1, df2 / (df2 + df1 * x)))
}

/// Chi-square upper tail Q(df/2, x/2).
pub fn chi2_tail(x: f64, df: f64) -> Result<f64> {
    if !(df.is_finite() && df > 0.0) {
        return Err(Error::domain(format!("chi-square requires df > 0, got {df}")));
    }
    if x <= 0.0 {
        return Ok(1.0);
    }
    Ok(gamma_q(0.5 * df, 0.5 * x))
}

fn bisect_increasing(mut f: impl FnMut(f64) -> f64, p: f64, mut lo: f64, mut hi: f64) -> f64 {
    while f(hi) < p {
        lo = hi;
        hi *= 2.0;
        if hi > 1e300 {
            break;
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
        if (hi - lo) <= 1e-14 * hi.max(1.0) {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Quantile of the F-distribution (bisection on [`f_cdf`]).
pub fn f_inverse_cdf(p: f64, df1: f64, df2: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::domain(format!("quantile requires p in (0,1), got {p}")));
    }
    f_cdf(1.0, df1, df2)?;
    Ok(bisect_increasing(|x| f_cdf(x, df1, df2).unwrap(), p, 0.0, 8.0))
}

/// Quantile of the t-distribution (bisection on [`t_cdf`]).
pub fn t_inverse_cdf(p: f64, df: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::domain(format!("quantile requires p in (0,1), got {p}")));
    }
    t_cdf(0.0, df)?;
    if p == 0.5 {
        return Ok(0.0);
    }
    if p > 0.5 {
        Ok(bisect_increasing(|x| t_cdf(x, df).unwrap(), p, 0.0, 8.0))
    } else {
        Ok(-bisect_increasing(|x| t_cdf(x, df).unwrap(), 1.0 - p, 0.0, 8.0))
    }
}

// ---------------------------------------------------------------------------
// Hypothesis tests
// ---------------------------------------------------------------------------

/// Arithmetic mean of a sample.
pub fn sample_mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance.
pub fn sample_variance(xs: &[f64]) -> f64 {
    let mean = sample_mean(xs);
    xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

/// Degrees of freedom attached to a test statistic.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TestDof {
    One(f64),
    Pair(f64, f64),
}

/// Outcome of a hypothesis test.
#[derive(Debug, Clone)]
pub struct StatTestResult {
    pub statistic: f64,
    pub dof: TestDof,
    pub p_value: f64,
    pub critical_value: f64,
    pub reject_null: bool,
    pub alpha: f64,
}

/// F-test for equality of variances.
///
/// H0: var1 = var2, tested against the upper tail of F(n1-1, n2-1) with the
/// two-sided critical value at the `1 - alpha/2` quantile.
pub fn f_test_variance_ratio(
    var1: f64,
    var2: f64,
    n1: usize,
    n2: usize,
    alpha: f64,
) -> Result<StatTestResult> {
    if !(var1.is_finite() && var1 > 0.0 && var2.is_finite() && var2 > 0.0) {
        return Err(Error::domain(format!(
            "variances must be finite and > 0, got ({var1}, {var2})"
        )));
    }
    if n1 < 2 || n2 < 2 {
        return Err(Error::invalid(format!("need n >= 2 per sample, got ({n1}, {n2})")));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::domain(format!("alpha must lie in (0,1), got {alpha}")));
    }
    let d1 = (n1 - 1) as f64;
    let d2 = (n2 - 1) as f64;
    let statistic = var1 / var2;
    let p_value = f_sf(statistic, d1, d2)?;
    let critical_value = f_inverse_cdf(1.0 - alpha / 2.0, d1, d2)?;
    Ok(StatTestResult {
        statistic,
        dof: TestDof::Pair(d1, d2),
        p_value,
        critical_value,
        reject_null: statistic > critical_value,
        alpha,
    })
}

/// Welch's t-test for equality of means under unequal variances.
///
/// The statistic is |mean1 - mean2| / sqrt(var1/n1 + var2/n2) with
/// Welch-Satterthwaite degrees of freedom; two-sided p-value.
pub fn welch_t_test(
    mean1: f64,
    var1: f64,
    n1: usize,
    mean2: f64,
    var2: f64,
    n2: usize,
    alpha: f64,
) -> Result<StatTestResult> {
    if n1 < 2 || n2 < 2 {
        return Err(Error::invalid(format!("need n >= 2 per sample, got ({n1}, {n2})")));
    }
    if var1 < 0.0 || var2 < 0.0 || (var1 == 0.0 && var2 == 0.0) {
        return Err(Error::domain(format!(
            "variances must be >= 0 and not both zero, got ({var1}, {var2})"
        )));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::domain(format!("alpha must lie in (0,1), got {alpha}")));
    }
    let a = var1 / n1 as f64;
    let b = var2 / n2 as f64;
    let se = (a + b).sqrt();
    let statistic = (mean1 - mean2).abs() / se;
    let dof = (a + b) * (a + b)
        / (a * a / (n1 as f64 - 1.0) + b * b / (n2 as f64 - 1.0));
    let p_value = 2.0 * (1.0 - t_cdf(statistic, dof)?);
    let critical_value = t_inverse_cdf(1.0 - alpha / 2.0, dof)?;
    Ok(StatTestResult {
        statistic,
        dof: TestDof::One(dof),
        p_value,
        critical_value,
        reject_null: statistic > critical_value,
        alpha,
    })
}

/// One-sided two-proportion Z-test of H0: p2 >= p1 against H1: p2 < p1,
/// using the pooled-proportion variance estimate.
pub fn two_proportion_z_one_sided(
    p_hat2: f64,
    p_hat1: f64,
    n: usize,
    alpha: f64,
) -> Result<StatTestResult> {
    for p in [p_hat1, p_hat2] {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::domain(format!("proportions must lie in [0,1], got {p}")));
        }
    }
    if n < 1 {
        return Err(Error::invalid("need n >= 1".to_string()));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::domain(format!("alpha must lie in (0,1), got {alpha}")));
    }
    let pooled = 0.5 * (p_hat1 + p_hat2);
    if pooled <= 0.0 || pooled >= 1.0 {
        return Err(Error::domain(format!(
            "pooled proportion must lie strictly inside (0,1), got {pooled}"
        )));
    }
    let se = (pooled * (1.0 - pooled) * 2.0 / n as f64).sqrt();
    let statistic = (p_hat2 - p_hat1) / se;
    let p_value = normal_cdf(statistic);
    let critical_value = normal_quantile(alpha)?;
    Ok(StatTestResult {
        statistic,
        dof: TestDof::One(f64::INFINITY),
        p_value,
        critical_value,
        reject_null: statistic < critical_value,
        alpha,
    })
}

//! Student-t distribution via the regularized incomplete beta function,
//! Welch's unequal-variance t-test, and small descriptive helpers.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const LANCZOS_G: f64 = 7.0;
const LANCZOS_COEF: [f64; 9] = [
    0.999_999_999_999_809_93,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_13,
    -176.615_029_162_140_59,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_571_6e-6,
    1.505_632_735_149_311_6e-7,
];

/// Natural log of the gamma function for `x > 0` (Lanczos approximation,
/// reflection below 0.5).
pub fn ln_gamma(x: f64) -> f64 {
    if x < 0.5 {
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = LANCZOS_COEF[0];
    for (i, &c) in LANCZOS_COEF.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    let t = x + LANCZOS_G + 0.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

pub fn ln_beta(a: f64, b: f64) -> f64 {
    ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)
}

const CF_MAX_ITER: usize = 500;
const CF_EPS: f64 = 1e-16;
const CF_TINY: f64 = 1e-300;

/// Regularized incomplete beta `I_x(a, b)` for `a, b > 0`, `x ∈ [0, 1]`.
///
/// Evaluated with the modified Lentz continued fraction on whichever of
/// `I_x(a, b)` and `1 - I_{1-x}(b, a)` converges faster.
pub fn regularized_incomplete_beta(a: f64, b: f64, x: f64) -> Result<f64> {
    if !(a > 0.0 && b > 0.0) {
        return Err(Error::InvalidInput(format!("incomplete beta needs a, b > 0 (got {a}, {b})")));
    }
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::InvalidInput(format!("incomplete beta needs x in [0, 1] (got {x})")));
    }
    if x == 0.0 || x == 1.0 {
        return Ok(x);
    }
    if x > (a + 1.0) / (a + b + 2.0) {
        Ok(1.0 - beta_cf(b, a, 1.0 - x)?)
    } else {
        beta_cf(a, b, x)
    }
}

fn beta_cf(a: f64, b: f64, x: f64) -> Result<f64> {
    let prefix = (a * x.ln() + b * (1.0 - x).ln() - ln_beta(a, b)).exp() / a;
    let (qab, qap, qam) = (a + b, a + 1.0, a - 1.0);
    let clamp = |v: f64| if v.abs() < CF_TINY { CF_TINY } else { v };
    let mut c = 1.0;
    let mut d = 1.0 / clamp(1.0 - qab * x / qap);
    let mut f = d;
    for m in 1..=CF_MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;
        let even = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 / clamp(1.0 + even * d);
        c = clamp(1.0 + even / c);
        f *= d * c;
        let odd = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 / clamp(1.0 + odd * d);
        c = clamp(1.0 + odd / c);
        let delta = d * c;
        f *= delta;
        if (delta - 1.0).abs() < CF_EPS {
            return Ok(prefix * f);
        }
    }
    Err(Error::Numeric(format!("incomplete beta continued fraction did not converge (a={a}, b={b}, x={x})")))
}

/// CDF of Student's t distribution with `df` degrees of freedom.
pub fn student_t_cdf(t: f64, df: f64) -> Result<f64> {
    if !(df > 0.0) || !df.is_finite() {
        return Err(Error::InvalidInput(format!("degrees of freedom must be positive, got {df}")));
    }
    if t.is_nan() {
        return Err(Error::InvalidInput("t is NaN".into()));
    }
    if t.is_infinite() {
        return Ok(if t > 0.0 { 1.0 } else { 0.0 });
    }
    let tail = 0.5 * two_tailed_p_unchecked(t, df)?;
    Ok(if t >= 0.0 { 1.0 - tail } else { tail })
}

/// `P(|T| >= |t|)`, computed directly as `I_{df/(df+t²)}(df/2, 1/2)` to avoid
/// cancellation in `1 - cdf`.
pub fn student_t_two_tailed_p(t: f64, df: f64) -> Result<f64> {
    if !(df > 0.0) || !df.is_finite() {
        return Err(Error::InvalidInput(format!("degrees of freedom must be positive, got {df}")));
    }
    if t.is_nan() {
        return Err(Error::InvalidInput("t is NaN".into()));
    }
    if t.is_infinite() {
        return Ok(0.0);
    }
    two_tailed_p_unchecked(t, df)
}

fn two_tailed_p_unchecked(t: f64, df: f64) -> Result<f64> {
    let x = df / (df + t * t);
    Ok(regularized_incomplete_beta(0.5 * df, 0.5, x)?.clamp(0.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TTestResult {
    /// `±inf` when both samples are constant with different means; written
    /// to JSON as the strings `"inf"` / `"-inf"`.
    #[serde(with = "extended_f64")]
    pub t: f64,
    pub df: f64,
    pub p: f64,
    pub mean_a: f64,
    pub mean_b: f64,
    pub var_a: f64,
    pub var_b: f64,
    pub n_a: usize,
    pub n_b: usize,
}

/// JSON has no infinities; non-finite values round-trip as strings.
mod extended_f64 {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_str(&v.to_string())
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Str(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Str(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

/// Arithmetic mean; exact for constant samples.
pub fn mean(xs: &[f64]) -> f64 {
    if xs.iter().all(|&x| x == xs[0]) {
        return xs.first().copied().unwrap_or(f64::NAN);
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased (n - 1) sample variance; 0 for fewer than two values and for
/// constant samples (exactly, regardless of rounding in the mean).
pub fn sample_variance(xs: &[f64]) -> f64 {
    if xs.len() < 2 || xs.iter().all(|&x| x == xs[0]) {
        return 0.0;
    }
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64
}

pub fn sample_std(xs: &[f64]) -> f64 {
    sample_variance(xs).sqrt()
}

/// Two-tailed Welch's t-test of `mean(a) == mean(b)`.
///
/// When both samples have zero variance the statistic is degenerate: equal
/// means give `t = 0, p = 1`; unequal means give `t = ±∞, p = 0`. In both
/// cases `df = n_a + n_b - 2`.
pub fn welch_t_test(a: &[f64], b: &[f64]) -> Result<TTestResult> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "Welch's t-test needs at least 2 samples per group (got {} and {})",
            a.len(),
            b.len()
        )));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite sample value".into()));
    }
    let (n_a, n_b) = (a.len(), b.len());
    let (mean_a, mean_b) = (mean(a), mean(b));
    let (var_a, var_b) = (sample_variance(a), sample_variance(b));
    let (se_a, se_b) = (var_a / n_a as f64, var_b / n_b as f64);
    let se2 = se_a + se_b;
    let base = TTestResult { t: 0.0, df: (n_a + n_b - 2) as f64, p: 1.0, mean_a, mean_b, var_a, var_b, n_a, n_b };
    if se2 == 0.0 {
        return Ok(if mean_a == mean_b {
            base
        } else {
            let t = if mean_a > mean_b { f64::INFINITY } else { f64::NEG_INFINITY };
            TTestResult { t, p: 0.0, ..base }
        });
    }
    let t = (mean_a - mean_b) / se2.sqrt();
    let df = se2 * se2 / (se_a * se_a / (n_a - 1) as f64 + se_b * se_b / (n_b - 1) as f64);
    let p = student_t_two_tailed_p(t, df)?;
    Ok(TTestResult { t, df, p, ..base })
}

/// Average ranks (1-based), ties share the mean of their positions.
fn ranks(xs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&i, &j| xs[i].total_cmp(&xs[j]));
    let mut out = vec![0.0; xs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && xs[order[j + 1]] == xs[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            out[k] = rank;
        }
        i = j + 1;
    }
    out
}

/// Spearman rank correlation (Pearson correlation of average ranks).
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::InvalidInput("spearman needs two equal-length series of length >= 2".into()));
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let (mx, my) = (mean(&rx), mean(&ry));
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx) * (a - mx)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my) * (b - my)).sum();
    if vx == 0.0 || vy == 0.0 {
        return Err(Error::Undefined("spearman correlation of a constant series".into()));
    }
    Ok(cov / (vx * vy).sqrt())
}

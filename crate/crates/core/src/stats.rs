//! Welch's unequal-variance t-test and the special functions behind it.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// Natural log of the gamma function for `x > 0` (Lanczos, g = 7).
pub fn ln_gamma(x: f64) -> f64 {
    if x < 0.5 {
        // Reflection keeps the series in its accurate range.
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = LANCZOS[0];
    for (i, &c) in LANCZOS.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    let t = x + LANCZOS_G + 0.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

pub fn ln_beta(a: f64, b: f64) -> f64 {
    ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)
}

const CF_EPS: f64 = 1e-14;
const CF_MAX_ITER: usize = 300;
const CF_TINY: f64 = 1e-300;

/// Modified Lentz evaluation of the incomplete beta continued fraction.
fn beta_cf(x: f64, a: f64, b: f64) -> f64 {
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < CF_TINY {
        d = CF_TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=CF_MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;

        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < CF_TINY {
            d = CF_TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < CF_TINY {
            c = CF_TINY;
        }
        d = 1.0 / d;
        h *= d * c;

        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < CF_TINY {
            d = CF_TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < CF_TINY {
            c = CF_TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < CF_EPS {
            return h;
        }
    }
    log::debug!("incomplete beta continued fraction hit the iteration cap (a={a}, b={b}, x={x})");
    h
}

/// `I_x(a, b)` given both `x` and `y = 1 - x`, so callers can pass a
/// complement computed without cancellation.
fn inc_beta_xy(x: f64, y: f64, a: f64, b: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if y <= 0.0 {
        return 1.0;
    }
    let ln_front = a * x.ln() + b * y.ln() - ln_beta(a, b);
    if x > (a + 1.0) / (a + b + 2.0) {
        1.0 - ln_front.exp() * beta_cf(y, b, a) / b
    } else {
        ln_front.exp() * beta_cf(x, a, b) / a
    }
}

/// Regularized incomplete beta function `I_x(a, b)`.
pub fn regularized_incomplete_beta(x: f64, a: f64, b: f64) -> Result<f64> {
    if !(a > 0.0 && b > 0.0) {
        return Err(Error::InvalidArgument(format!("beta parameters must be positive (a={a}, b={b})")));
    }
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::InvalidArgument(format!("x={x} outside [0, 1]")));
    }
    Ok(inc_beta_xy(x, 1.0 - x, a, b))
}

/// Two-sided tail `P(|T| > |t|)` for Student's t with `df` degrees of freedom.
pub fn student_t_two_sided(t: f64, df: f64) -> Result<f64> {
    check_df(df)?;
    if t.is_nan() {
        return Err(Error::InvalidArgument("t is NaN".into()));
    }
    if t.is_infinite() {
        return Ok(0.0);
    }
    let t2 = t * t;
    let x = df / (df + t2);
    let y = t2 / (df + t2);
    Ok(inc_beta_xy(x, y, 0.5 * df, 0.5).clamp(0.0, 1.0))
}

/// One-sided survival `P(T > t)` for Student's t.
pub fn student_t_sf(t: f64, df: f64) -> Result<f64> {
    let tail = 0.5 * student_t_two_sided(t, df)?;
    Ok(if t >= 0.0 { tail } else { 1.0 - tail })
}

fn check_df(df: f64) -> Result<()> {
    if df > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("degrees of freedom must be positive, got {df}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WelchResult {
    pub t_stat: f64,
    pub df: f64,
    pub p_two_sided: f64,
}

/// Sample size, mean and unbiased variance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Moments {
    pub n: usize,
    pub mean: f64,
    pub var: f64,
}

impl Moments {
    pub fn of(sample: &[f64]) -> Self {
        let n = sample.len();
        let mean = sample.iter().sum::<f64>() / n as f64;
        let ss: f64 = sample.iter().map(|x| (x - mean) * (x - mean)).sum();
        Moments {
            n,
            mean,
            var: if n > 1 { ss / (n - 1) as f64 } else { 0.0 },
        }
    }
}

pub fn welch_t(sample_a: &[f64], sample_b: &[f64]) -> Result<WelchResult> {
    welch_from_moments(Moments::of(sample_a), Moments::of(sample_b))
}

/// Welch's test from precomputed moments. When both variances are zero the
/// result is degenerate: p = 1 if the means agree and p = 0 otherwise.
pub fn welch_from_moments(a: Moments, b: Moments) -> Result<WelchResult> {
    if a.n < 2 || b.n < 2 {
        return Err(Error::InsufficientSample(a.n, b.n));
    }
    let va = a.var / a.n as f64;
    let vb = b.var / b.n as f64;
    let se2 = va + vb;
    let diff = a.mean - b.mean;
    if se2 <= 0.0 {
        let pooled_df = (a.n + b.n - 2) as f64;
        return Ok(if diff == 0.0 {
            WelchResult {
                t_stat: 0.0,
                df: pooled_df,
                p_two_sided: 1.0,
            }
        } else {
            WelchResult {
                t_stat: f64::INFINITY.copysign(diff),
                df: pooled_df,
                p_two_sided: 0.0,
            }
        });
    }
    let t_stat = diff / se2.sqrt();
    let df = se2 * se2 / (va * va / (a.n - 1) as f64 + vb * vb / (b.n - 1) as f64);
    Ok(WelchResult {
        t_stat,
        df,
        p_two_sided: student_t_two_sided(t_stat, df)?,
    })
}

//! Paired-difference statistics across seeds.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("paired samples differ in length: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("need at least {needed} values, got {got}")]
    TooFew { needed: usize, got: usize },
    #[error("degrees of freedom must be >= 1, got {0}")]
    InvalidDf(usize),
    #[error("baseline must be positive, got {0}")]
    NonPositiveBaseline(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    /// Sample standard deviation (n − 1 denominator); 0 when `n == 1`.
    pub std: f64,
    pub n: usize,
    /// Set when `n == 1` and `std` is a placeholder.
    pub single: bool,
}

impl Summary {
    pub fn format(&self, digits: usize) -> String {
        format!("{:.*} ± {:.*}", digits, self.mean, digits, self.std)
    }
}

pub fn summarize(values: &[f64]) -> Result<Summary, StatsError> {
    let n = values.len();
    if n == 0 {
        return Err(StatsError::TooFew { needed: 1, got: 0 });
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let std = if n > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    } else {
        0.0
    };
    Ok(Summary {
        mean,
        std,
        n,
        single: n == 1,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairedTestResult {
    pub n: usize,
    pub mean_diff: f64,
    pub std_diff: f64,
    /// `None` when the differences have zero spread.
    pub t_stat: Option<f64>,
    pub df: usize,
    pub p_two_tailed: Option<f64>,
    pub d_z: Option<f64>,
}

impl PairedTestResult {
    pub fn degenerate(&self) -> bool {
        self.t_stat.is_none()
    }
}

/// Paired t-test on `D_i = a_i − b_i`.
pub fn paired_test(a: &[f64], b: &[f64]) -> Result<PairedTestResult, StatsError> {
    if a.len() != b.len() {
        return Err(StatsError::LengthMismatch(a.len(), b.len()));
    }
    let n = a.len();
    if n < 2 {
        return Err(StatsError::TooFew { needed: 2, got: n });
    }
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let s = summarize(&diffs)?;
    let df = n - 1;
    // Relative floor so that rounding noise in "equal" columns still counts
    // as zero spread.
    let scale = diffs.iter().fold(0.0f64, |m, d| m.max(d.abs())).max(f64::MIN_POSITIVE);
    if s.std <= scale * 1e-12 || s.std == 0.0 {
        return Ok(PairedTestResult {
            n,
            mean_diff: s.mean,
            std_diff: 0.0,
            t_stat: None,
            df,
            p_two_tailed: None,
            d_z: None,
        });
    }
    let t = s.mean / (s.std / (n as f64).sqrt());
    Ok(PairedTestResult {
        n,
        mean_diff: s.mean,
        std_diff: s.std,
        t_stat: Some(t),
        df,
        p_two_tailed: Some(p_two_tailed(t, df)?),
        d_z: Some(cohens_dz(t, n)),
    })
}

/// `t / sqrt(n)`.
pub fn cohens_dz(t: f64, n: usize) -> f64 {
    t / (n as f64).sqrt()
}

/// Two-tailed p-value of a Student-t statistic: `I_{df/(df+t²)}(df/2, 1/2)`.
pub fn p_two_tailed(t: f64, df: usize) -> Result<f64, StatsError> {
    if df == 0 {
        return Err(StatsError::InvalidDf(df));
    }
    if t == 0.0 {
        return Ok(1.0);
    }
    let v = df as f64;
    let x = v / (v + t * t);
    Ok(regularized_incomplete_beta(x, v / 2.0, 0.5).clamp(0.0, 1.0))
}

/// Student-t CDF.
pub fn t_cdf(t: f64, df: usize) -> Result<f64, StatsError> {
    let p = p_two_tailed(t, df)?;
    Ok(if t >= 0.0 { 1.0 - p / 2.0 } else { p / 2.0 })
}

/// `1 − candidate/baseline`.
pub fn speedup(candidate: f64, baseline: f64) -> Result<f64, StatsError> {
    if !(baseline > 0.0) {
        return Err(StatsError::NonPositiveBaseline(baseline));
    }
    Ok(1.0 - candidate / baseline)
}

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
        // Reflection.
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = LANCZOS[0];
    let t = x + LANCZOS_G + 0.5;
    for (i, c) in LANCZOS.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

const CF_TOLERANCE: f64 = 1e-12;
const CF_MAX_ITER: usize = 10_000;
const CF_TINY: f64 = 1e-300;

/// `I_x(a, b)` by Lentz's continued fraction, switching to the symmetric
/// form when `x` is past the mean for faster convergence.
pub fn regularized_incomplete_beta(x: f64, a: f64, b: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    let front = ln_front.exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_continued_fraction(x, a, b) / a
    } else {
        1.0 - front * beta_continued_fraction(1.0 - x, b, a) / b
    }
}

fn beta_continued_fraction(x: f64, a: f64, b: f64) -> f64 {
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
        if (del - 1.0).abs() < CF_TOLERANCE {
            break;
        }
    }
    h
}

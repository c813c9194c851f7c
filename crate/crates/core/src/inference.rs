//! Confidence intervals, coverage and normality diagnostics.

use std::io::Write;

use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::numeric::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CiMethod {
    GaussianDelta,
    ChebyshevBiasCorrected,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConfidenceInterval<S> {
    pub lower: S,
    pub upper: S,
    pub method: CiMethod,
    /// Nominal coverage, `1 − α` or `1 − δ`.
    pub level: S,
    pub estimate: S,
    pub var_hat: S,
    pub bias_hat: S,
    pub delta: S,
}

impl<S: Scalar> ConfidenceInterval<S> {
    pub fn contains(&self, x: S) -> bool {
        self.lower <= x && x <= self.upper
    }

    pub fn length(&self) -> S {
        self.upper - self.lower
    }
}

fn std_normal() -> Normal {
    Normal::standard()
}

/// Standard normal quantile.
pub fn normal_quantile(p: f64) -> f64 {
    std_normal().inverse_cdf(p)
}

/// Standard normal distribution function.
pub fn normal_cdf(x: f64) -> f64 {
    std_normal().cdf(x)
}

/// `estimate ± z_{1−α/2} √var_hat / √(1−δ)`.
pub fn gaussian_ci<S: Scalar>(estimate: S, var_hat: S, alpha: S, delta: S) -> Result<ConfidenceInterval<S>> {
    if !(var_hat >= S::zero()) {
        return Err(Error::Parameter(format!("variance estimate {var_hat} is negative")));
    }
    if !(alpha > S::zero() && alpha < S::one()) {
        return Err(Error::Parameter(format!("alpha {alpha} outside (0,1)")));
    }
    if !(delta >= S::zero() && delta < S::one()) {
        return Err(Error::Parameter(format!("delta {delta} outside [0,1)")));
    }
    let z = S::of(normal_quantile(1.0 - alpha.f64() / 2.0));
    let half = z * var_hat.sqrt() / (S::one() - delta).sqrt();
    Ok(ConfidenceInterval {
        lower: estimate - half,
        upper: estimate + half,
        method: CiMethod::GaussianDelta,
        level: S::one() - alpha,
        estimate,
        var_hat,
        bias_hat: S::zero(),
        delta,
    })
}

/// `(estimate − bias_hat) ± √(var_hat / δ)`.
pub fn chebyshev_ci<S: Scalar>(estimate: S, var_hat: S, bias_hat: S, delta: S) -> Result<ConfidenceInterval<S>> {
    if !(var_hat >= S::zero()) {
        return Err(Error::Parameter(format!("variance estimate {var_hat} is negative")));
    }
    if !(delta > S::zero() && delta < S::one()) {
        return Err(Error::Parameter(format!("delta {delta} outside (0,1)")));
    }
    let center = estimate - bias_hat;
    let half = (var_hat / delta).sqrt();
    Ok(ConfidenceInterval {
        lower: center - half,
        upper: center + half,
        method: CiMethod::ChebyshevBiasCorrected,
        level: S::one() - delta,
        estimate,
        var_hat,
        bias_hat,
        delta,
    })
}

/// Fraction of intervals covering `truth`, with its binomial standard error.
pub fn coverage<S: Scalar>(intervals: &[ConfidenceInterval<S>], truth: S) -> Result<(f64, f64)> {
    if intervals.is_empty() {
        return Err(Error::Parameter("coverage of an empty set of intervals".into()));
    }
    let hits = intervals.iter().filter(|ci| ci.contains(truth)).count();
    Ok(proportion(hits, intervals.len()))
}

/// `(p̂, √(p̂(1−p̂)/m))` for `hits` out of `m`.
pub fn proportion(hits: usize, m: usize) -> (f64, f64) {
    let p = hits as f64 / m as f64;
    (p, (p * (1.0 - p) / m as f64).sqrt())
}

/// Moment and distance summaries of standardized estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalityReport {
    pub samples: usize,
    pub mean: f64,
    pub sd: f64,
    pub skewness: f64,
    pub excess_kurtosis: f64,
    /// `m (skew²/6 + kurt²/24)`.
    pub jarque_bera: f64,
    /// Chi-square(2) tail of the statistic, `exp(−JB/2)`.
    pub p_value: f64,
    /// Sup distance between the empirical and standard normal distribution functions.
    pub ks_distance: f64,
    /// Sorted `(theoretical, sample)` quantile pairs.
    pub qq: Vec<(f64, f64)>,
}

impl NormalityReport {
    /// Standard errors of skewness and excess kurtosis under normality.
    pub fn moment_ses(&self) -> (f64, f64) {
        let m = self.samples as f64;
        ((6.0 / m).sqrt(), (24.0 / m).sqrt())
    }

    /// Writes `theoretical_quantile,sample_quantile` rows.
    pub fn write_qq_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(["theoretical_quantile", "sample_quantile"])?;
        for (a, b) in &self.qq {
            wtr.write_record([format!("{a}"), format!("{b}")])?;
        }
        wtr.flush().map_err(|e| Error::io("<qq export>", e))?;
        Ok(())
    }
}

/// Normality diagnostics of already standardized samples.
pub fn normality_diagnostics(samples: &[f64]) -> Result<NormalityReport> {
    let m = samples.len();
    if m < 20 {
        return Err(Error::Parameter(format!("normality diagnostics need at least 20 samples, got {m}")));
    }
    let mf = m as f64;
    let mean = samples.iter().sum::<f64>() / mf;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for &x in samples {
        let d = x - mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    m2 /= mf;
    m3 /= mf;
    m4 /= mf;
    let (skewness, excess_kurtosis, jarque_bera) = if m2 > 0.0 {
        let s = m3 / m2.powf(1.5);
        let k = m4 / (m2 * m2) - 3.0;
        (s, k, mf * (s * s / 6.0 + k * k / 24.0))
    } else {
        (0.0, 0.0, f64::INFINITY)
    };
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut ks: f64 = 0.0;
    let mut qq = Vec::with_capacity(m);
    for (i, &x) in sorted.iter().enumerate() {
        let f = normal_cdf(x);
        ks = ks.max((i as f64 + 1.0) / mf - f).max(f - i as f64 / mf);
        qq.push((normal_quantile((i as f64 + 0.5) / mf), x));
    }
    Ok(NormalityReport {
        samples: m,
        mean,
        sd: m2.sqrt(),
        skewness,
        excess_kurtosis,
        jarque_bera,
        p_value: (-jarque_bera / 2.0).exp(),
        ks_distance: ks,
        qq,
    })
}

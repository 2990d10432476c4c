// SPDX-License-Identifier: Apache-2.0

//! Goodness-of-fit tests and summary statistics used by the verifiers.

use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};

/// One-sample Kolmogorov–Smirnov statistic against `cdf`.
pub fn ks_statistic(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(k, &x)| {
            let f = cdf(x);
            (f - k as f64 / n).abs().max(((k + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

/// Asymptotic p-value `Pr(K > sqrt(n) D)` from the Kolmogorov series,
/// with the usual small-sample correction.
pub fn ks_p_value(d: f64, n: usize) -> f64 {
    let sn = (n as f64).sqrt();
    let lambda = (sn + 0.12 + 0.11 / sn) * d;
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    for j in 1..=200 {
        let jf = j as f64;
        let term = 2.0 * (-1f64).powi(j - 1) * (-2.0 * jf * jf * lambda * lambda).exp();
        sum += term;
        if term.abs() < 1e-16 {
            break;
        }
    }
    sum.clamp(0.0, 1.0)
}

/// Pearson chi-square test of observed counts against expected
/// probabilities. Cells with zero expected probability must be empty.
pub fn chi_square_p_value(observed: &[u64], probabilities: &[f64]) -> Result<f64> {
    if observed.len() != probabilities.len() {
        return Err(Error::LengthMismatch(observed.len(), probabilities.len()));
    }
    let total: u64 = observed.iter().sum();
    let n = total as f64;
    let mut stat = 0.0;
    let mut cells = 0usize;
    for (&o, &p) in observed.iter().zip(probabilities) {
        if p <= 0.0 {
            if o > 0 {
                return Ok(0.0);
            }
            continue;
        }
        let e = n * p;
        stat += (o as f64 - e).powi(2) / e;
        cells += 1;
    }
    if cells < 2 {
        return Ok(1.0);
    }
    let dist = ChiSquared::new((cells - 1) as f64).map_err(|e| Error::Domain(e.to_string()))?;
    Ok(1.0 - dist.cdf(stat))
}

/// Two-sided `1 - alpha` band for the fraction of successes in `n`
/// Bernoulli(`p`) trials.
pub fn binomial_band(n: usize, p: f64, alpha: f64) -> (f64, f64) {
    use statrs::distribution::{Binomial, DiscreteCDF};
    let dist = Binomial::new(p, n as u64).expect("valid binomial");
    let mut lo = 0u64;
    while lo < n as u64 && dist.cdf(lo) < alpha / 2.0 {
        lo += 1;
    }
    let mut hi = n as u64;
    while hi > 0 && 1.0 - dist.cdf(hi - 1) < alpha / 2.0 {
        hi -= 1;
    }
    (lo as f64 / n as f64, hi as f64 / n as f64)
}

/// Mean and standard error of the mean.
pub fn mean_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// True when no consecutive step drops by more than `k` combined standard
/// errors: `m[i+1] >= m[i] - k sqrt(se[i]² + se[i+1]²)`.
pub fn non_decreasing_trend(means: &[f64], ses: &[f64], k: f64) -> bool {
    means.windows(2).zip(ses.windows(2)).all(|(m, s)| m[1] >= m[0] - k * s[0].hypot(s[1]))
}

/// `a <= b` up to `k` combined standard errors.
pub fn at_most_within(a: (f64, f64), b: (f64, f64), k: f64) -> bool {
    a.0 <= b.0 + k * a.1.hypot(b.1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ks_uniform_grid() {
        let s: Vec<f64> = (0..1000).map(|k| (k as f64 + 0.5) / 1000.0).collect();
        let d = ks_statistic(&s, |x| x);
        assert!((d - 0.0005).abs() < 1e-12);
        assert!(ks_p_value(d, s.len()) > 0.99);
    }

    #[test]
    fn ks_known_value() {
        // Q(1) = 0.26999967...
        let n = 1_000_000;
        let sn = (n as f64).sqrt();
        let d = 1.0 / (sn + 0.12 + 0.11 / sn);
        assert!((ks_p_value(d, n) - 0.269_999_671).abs() < 1e-6);
    }

    #[test]
    fn chi_square_exact_fit() {
        let p = chi_square_p_value(&[25, 25, 25, 25], &[0.25; 4]).unwrap();
        assert!((p - 1.0).abs() < 1e-12);
        let bad = chi_square_p_value(&[100, 0, 0, 0], &[0.25; 4]).unwrap();
        assert!(bad < 1e-10);
    }

    #[test]
    fn band_contains_mean() {
        let (lo, hi) = binomial_band(1000, 0.9, 0.01);
        assert!(lo < 0.9 && hi > 0.9);
        assert!(lo > 0.87 && lo < 0.89);
    }

    #[test]
    fn trend_rule() {
        assert!(non_decreasing_trend(&[0.5, 0.6, 0.59], &[0.01, 0.01, 0.01], 2.0));
        assert!(!non_decreasing_trend(&[0.5, 0.6, 0.5], &[0.01, 0.01, 0.01], 2.0));
        assert!(at_most_within((0.61, 0.01), (0.6, 0.01), 1.0));
        assert!(!at_most_within((0.7, 0.01), (0.6, 0.01), 1.0));
    }

    #[test]
    fn mean_and_se() {
        let (m, se) = mean_se(&[1.0, 2.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((se - (1.0f64 / 3.0).sqrt()).abs() < 1e-12);
    }
}

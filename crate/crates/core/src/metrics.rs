// SPDX-License-Identifier: Apache-2.0

//! Utility metrics and verification oracles.

use rand::Rng;
use rayon::prelude::*;
use statrs::function::gamma::{digamma, ln_gamma};

use crate::error::{Error, Result};
use crate::graph::{compute_updates, BayesNetGraph, BetaParams, Dataset, EntryParams, PerEntry};

fn ln_beta(a: f64, b: f64) -> f64 {
    ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)
}

fn check_beta(p: BetaParams) -> Result<()> {
    if p.alpha > 0.0 && p.beta > 0.0 && p.alpha.is_finite() && p.beta.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("Beta parameters must be positive, got ({}, {})", p.alpha, p.beta)))
    }
}

/// `KL(Beta(a1, b1) ‖ Beta(a2, b2))` in closed form.
pub fn kl_beta(p: BetaParams, q: BetaParams) -> Result<f64> {
    check_beta(p)?;
    check_beta(q)?;
    let (a1, b1, a2, b2) = (p.alpha, p.beta, q.alpha, q.beta);
    let kl = ln_beta(a2, b2) - ln_beta(a1, b1)
        + (a1 - a2) * digamma(a1)
        + (b1 - b2) * digamma(b1)
        + (a2 - a1 + b2 - b1) * digamma(a1 + b1);
    Ok(kl.max(0.0))
}

/// Per-entry and total KL between two product-of-Beta posteriors.
#[derive(Debug, Clone, PartialEq)]
pub struct KlReport {
    pub per_entry: PerEntry<f64>,
    pub total: f64,
}

pub fn kl_report(p: &EntryParams, q: &EntryParams) -> Result<KlReport> {
    if p.len() != q.len() || p.node_count() != q.node_count() {
        return Err(Error::DimensionMismatch {
            expected: p.len(),
            got: q.len(),
        });
    }
    let mut rows = Vec::with_capacity(p.node_count());
    for i in 0..p.node_count() {
        if p.row(i).len() != q.row(i).len() {
            return Err(Error::DimensionMismatch {
                expected: p.row(i).len(),
                got: q.row(i).len(),
            });
        }
        rows.push(
            p.row(i)
                .iter()
                .zip(q.row(i))
                .map(|(&a, &b)| kl_beta(a, b))
                .collect::<Result<Vec<_>>>()?,
        );
    }
    let per_entry = PerEntry::from_nested(rows);
    let total = per_entry.iter().map(|(_, _, &v)| v).sum();
    Ok(KlReport { per_entry, total })
}

/// Adaptive Simpson quadrature to absolute tolerance `tol`.
pub fn adaptive_simpson(f: &impl Fn(f64) -> f64, a: f64, b: f64, tol: f64, max_depth: u32) -> f64 {
    let m = 0.5 * (a + b);
    let (fa, fm, fb) = (f(a), f(m), f(b));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson_step(f, a, b, fa, fm, fb, whole, tol, max_depth)
}

#[allow(clippy::too_many_arguments)]
fn simpson_step(f: &impl Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let diff = left + right - whole;
    if depth == 0 || diff.abs() <= 15.0 * tol {
        return left + right + diff / 15.0;
    }
    simpson_step(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
        + simpson_step(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
}

/// Interior limits of the angular variable used by [`kl_beta_quadrature`].
pub const QUAD_LO: f64 = 1e-12;
pub const QUAD_HI: f64 = 1.0 - 1e-12;

/// `∫ p ln(p/q)` by adaptive Simpson after the substitution
/// `x = sin²(πs/2)`, which flattens the endpoint behaviour `x^{α-1}` of
/// the Beta density.
pub fn kl_beta_quadrature(p: BetaParams, q: BetaParams) -> Result<f64> {
    check_beta(p)?;
    check_beta(q)?;
    let (lbp, lbq) = (ln_beta(p.alpha, p.beta), ln_beta(q.alpha, q.beta));
    let half_pi = std::f64::consts::FRAC_PI_2;
    let integrand = |s: f64| {
        let (sin, cos) = (half_pi * s).sin_cos();
        let (lt, l1t) = (2.0 * sin.ln(), 2.0 * cos.ln());
        let lp = (p.alpha - 1.0) * lt + (p.beta - 1.0) * l1t - lbp;
        let lq = (q.alpha - 1.0) * lt + (q.beta - 1.0) * l1t - lbq;
        // dx/ds = π sin cos
        (lp + (std::f64::consts::PI * sin * cos).ln()).exp() * (lp - lq)
    };
    let mut cuts = vec![QUAD_LO];
    for k in 1..32 {
        cuts.push(k as f64 / 32.0);
    }
    cuts.push(QUAD_HI);
    Ok(cuts
        .windows(2)
        .map(|w| adaptive_simpson(&integrand, w[0], w[1], 1e-12, 50))
        .sum())
}

/// Ordered datasets of size `n` over `k` nodes.
fn for_each_dataset(k: usize, n: usize, mut f: impl FnMut(&[u64])) {
    let cells = 1u64 << k;
    let mut records = vec![0u64; n];
    loop {
        f(&records);
        let mut pos = 0;
        loop {
            if pos == n {
                return;
            }
            records[pos] += 1;
            if records[pos] < cells {
                break;
            }
            records[pos] = 0;
            pos += 1;
        }
    }
}

/// Largest `‖Δω - Δω̃‖₁` over all datasets of size `1..=n_max` and all
/// neighbors obtained by replacing one record, by brute force.
pub fn exhaustive_sensitivity(graph: &BayesNetGraph, n_max: usize) -> Result<f64> {
    let k = graph.node_count();
    if k > 4 || n_max > 4 {
        return Err(Error::BudgetExceeded(format!(
            "exhaustive enumeration limited to 4 nodes and 4 records, got {k} and {n_max}"
        )));
    }
    let mut datasets = Vec::new();
    for n in 1..=n_max {
        for_each_dataset(k, n, |r| datasets.push(r.to_vec()));
    }
    let cells = 1u64 << k;
    datasets
        .par_iter()
        .map(|records| -> Result<f64> {
            let base = compute_updates(graph, &Dataset::new(k, records.clone())?)?.flat();
            let mut worst = 0.0f64;
            for pos in 0..records.len() {
                for v in 0..cells {
                    if v == records[pos] {
                        continue;
                    }
                    let mut other = records.clone();
                    other[pos] = v;
                    let alt = compute_updates(graph, &Dataset::new(k, other)?)?.flat();
                    let l1: f64 = base.iter().zip(&alt).map(|(a, b)| (a - b).abs()).sum();
                    worst = worst.max(l1);
                }
            }
            Ok(worst)
        })
        .try_reduce(|| 0.0, |a, b| Ok(a.max(b)))
}

/// Every labeled DAG on `k` nodes.
pub fn all_dags(k: usize) -> Result<Vec<BayesNetGraph>> {
    if k > 4 {
        return Err(Error::BudgetExceeded(format!("DAG enumeration limited to 4 nodes, got {k}")));
    }
    let others: Vec<Vec<usize>> = (0..k).map(|i| (0..k).filter(|&j| j != i).collect()).collect();
    let choices = 1usize << (k.saturating_sub(1));
    let total = choices.pow(k as u32);
    let mut out = Vec::new();
    for code in 0..total {
        let mut rest = code;
        let parents: Vec<Vec<usize>> = (0..k)
            .map(|i| {
                let pick = rest % choices;
                rest /= choices;
                others[i].iter().enumerate().filter(|(b, _)| pick >> b & 1 == 1).map(|(_, &p)| p).collect()
            })
            .collect();
        if let Ok(g) = BayesNetGraph::new(k, parents) {
            out.push(g);
        }
    }
    Ok(out)
}

/// Outcome of an analytic density-ratio check.
#[derive(Debug, Clone, PartialEq)]
pub struct PrivacyCheckReport {
    pub mechanism: String,
    pub epsilon_claimed: f64,
    pub max_log_ratio_observed: f64,
    pub pass: bool,
}

impl PrivacyCheckReport {
    pub fn new(mechanism: impl Into<String>, epsilon_claimed: f64, max_log_ratio_observed: f64) -> Self {
        Self {
            mechanism: mechanism.into(),
            epsilon_claimed,
            max_log_ratio_observed,
            pass: max_log_ratio_observed <= epsilon_claimed + 1e-9,
        }
    }
}

/// Largest `|ln f(z) - ln f(z - s)|` over the product grid `grid^dim`
/// for product Laplace densities with scale `sensitivity/ε`, maximized
/// over the supplied shift vectors.
///
/// The log-ratio is `Σ_k (|z_k - s_k| - |z_k|) / b`, which separates over
/// coordinates, so the grid maximum is the sum of per-axis maxima.
pub fn laplace_density_ratio_check(
    sensitivity: f64,
    epsilon: f64,
    grid: &[f64],
    shifts: &[Vec<f64>],
) -> Result<PrivacyCheckReport> {
    if !(sensitivity > 0.0) {
        return Err(Error::Domain(format!("sensitivity must be positive, got {sensitivity}")));
    }
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::InvalidEpsilon(epsilon));
    }
    if grid.is_empty() {
        return Err(Error::Domain("grid must not be empty".into()));
    }
    let b = sensitivity / epsilon;
    let mut worst = 0.0f64;
    for s in shifts {
        let (mut hi, mut lo) = (0.0, 0.0);
        for &sk in s {
            let terms = grid.iter().map(|&z| ((z - sk).abs() - z.abs()) / b);
            let (mx, mn) = terms.fold((f64::NEG_INFINITY, f64::INFINITY), |(a, c), v| (a.max(v), c.min(v)));
            hi += mx;
            lo += mn;
        }
        worst = worst.max(f64::abs(hi)).max(f64::abs(lo));
    }
    Ok(PrivacyCheckReport::new("laplace", epsilon, worst))
}

/// Random shift vector with `‖s‖₁ = l1` and random signs.
pub fn random_shift<R: Rng + ?Sized>(dim: usize, l1: f64, rng: &mut R) -> Vec<f64> {
    let raw: Vec<f64> = (0..dim).map(|_| -rng.random::<f64>().ln()).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter()
        .map(|v| {
            let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
            sign * l1 * v / total
        })
        .collect()
}

/// Fraction of correct thresholded predictions; `p >= threshold` predicts
/// class 1.
pub fn accuracy_with_threshold(predictions: &[f64], labels: &[bool], threshold: f64) -> Result<f64> {
    if predictions.len() != labels.len() {
        return Err(Error::LengthMismatch(predictions.len(), labels.len()));
    }
    if predictions.is_empty() {
        return Err(Error::Domain("no predictions".into()));
    }
    let correct = predictions
        .iter()
        .zip(labels)
        .filter(|(&p, &y)| (p >= threshold) == y)
        .count();
    Ok(correct as f64 / labels.len() as f64)
}

pub fn accuracy(predictions: &[f64], labels: &[bool]) -> Result<f64> {
    accuracy_with_threshold(predictions, labels, 0.5)
}

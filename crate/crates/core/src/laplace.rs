// SPDX-License-Identifier: Apache-2.0

//! Laplace perturbation of posterior update counts.
//!
//! Every one of the `2m` counts receives independent `Laplace(0, 2|I|/ε)`
//! noise and is then clamped into `[0, n]`. Unobserved configurations are
//! perturbed too, so the support of the data is not revealed.

use rand::RngCore;

use crate::error::{Error, Result};
use crate::graph::{BayesNetGraph, EntryParams, PerEntry, UpdateCounts, UpdateVector};
use crate::rng::Substreams;

/// Uniform draw in the open interval `(0, 1)`.
pub(crate) fn open_unit<R: RngCore + ?Sized>(rng: &mut R) -> f64 {
    ((rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

/// One `Laplace(0, scale)` draw by inverse CDF from a single uniform.
pub fn sample_laplace<R: RngCore + ?Sized>(scale: f64, rng: &mut R) -> f64 {
    let u = open_unit(rng) - 0.5;
    -scale * u.signum() * (1.0 - 2.0 * u.abs()).ln()
}

pub(crate) fn check_epsilon(epsilon: f64) -> Result<()> {
    if epsilon > 0.0 && epsilon.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidEpsilon(epsilon))
    }
}

pub(crate) fn check_delta(delta: f64) -> Result<()> {
    if delta > 0.0 && delta < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidDelta(delta))
    }
}

/// L1 global sensitivity of the update vector: `2|I|`.
pub fn sensitivity(graph: &BayesNetGraph) -> f64 {
    2.0 * graph.node_count() as f64
}

/// Noise configuration: `scale = 2|I| / epsilon`, clamp ceiling `n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LaplaceNoiseSpec {
    epsilon: f64,
    scale: f64,
    n: usize,
}

impl LaplaceNoiseSpec {
    pub fn new(graph: &BayesNetGraph, epsilon: f64, n: usize) -> Result<Self> {
        check_epsilon(epsilon)?;
        Ok(Self {
            epsilon,
            scale: sensitivity(graph) / epsilon,
            n,
        })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn n(&self) -> usize {
        self.n
    }
}

/// Released counts, each clamped into `[0, n]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PerturbedUpdates {
    pub entries: PerEntry<UpdateCounts>,
    pub n: usize,
}

impl PerturbedUpdates {
    /// The released counts viewed as an update vector.
    pub fn as_updates(&self) -> &UpdateVector {
        &self.entries
    }
}

fn clamp_count(v: f64, n: usize) -> f64 {
    v.clamp(0.0, n as f64)
}

/// Pre-clamp noise for every count, keyed by `(node, config, component)`.
pub fn draw_noise(updates: &UpdateVector, scale: f64, streams: &Substreams) -> PerEntry<UpdateCounts> {
    updates.map(|i, j, _| UpdateCounts {
        alpha: sample_laplace(scale, &mut streams.rng(&[i as u64, j.0 as u64, 0])),
        beta: sample_laplace(scale, &mut streams.rng(&[i as u64, j.0 as u64, 1])),
    })
}

/// `clamp(updates + noise, [0, n])`, entrywise.
pub fn apply_noise(updates: &UpdateVector, noise: &PerEntry<UpdateCounts>, n: usize) -> Result<PerturbedUpdates> {
    let noisy = updates.add(noise)?;
    Ok(PerturbedUpdates {
        entries: noisy.map(|_, _, c| UpdateCounts {
            alpha: clamp_count(c.alpha, n),
            beta: clamp_count(c.beta, n),
        }),
        n,
    })
}

/// The Laplace mechanism on posterior updates.
pub fn perturb_updates(
    updates: &UpdateVector,
    spec: &LaplaceNoiseSpec,
    streams: &Substreams,
) -> Result<PerturbedUpdates> {
    check_epsilon(spec.epsilon)?;
    let noise = draw_noise(updates, spec.scale, streams);
    apply_noise(updates, &noise, spec.n)
}

/// High-probability sup-norm deviation of the noisy counts:
/// `(2|I|/ε) ln(2m/δ)`.
pub fn prop1_bound(graph: &BayesNetGraph, epsilon: f64, delta: f64) -> Result<f64> {
    check_epsilon(epsilon)?;
    check_delta(delta)?;
    let m = graph.entry_count() as f64;
    Ok(sensitivity(graph) / epsilon * (2.0 * m / delta).ln())
}

/// Terms of the KL utility bound for the Laplace mechanism.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KlBound {
    /// Sum of the per-entry expectation bounds.
    pub expectation: f64,
    /// `sqrt(-1/2 * Σc * ln δ)`.
    pub deviation: f64,
    /// Whether the `n >= 2|I|/ε` expectation branch was used.
    pub refined: bool,
}

impl KlBound {
    pub fn total(&self) -> f64 {
        self.expectation + self.deviation
    }
}

/// Explicit bound on `KL(exact posterior ‖ released posterior)` holding
/// with probability at least `1 - δ`.
///
/// Per entry, `c = (2n+1)[ln(α+n+1) + ln(β+n+1)]`. The expectation term is
/// `n ln((α+Δα)(β+Δβ))`, or `ln[(α+n+1)(β+n+1)] (n/2) exp(-nε/(2|I|))`
/// once `n >= 2|I|/ε`. Priors must have `α, β >= 2`.
pub fn thm2_bound(
    priors: &EntryParams,
    updates: &UpdateVector,
    graph: &BayesNetGraph,
    epsilon: f64,
    delta: f64,
    n: usize,
) -> Result<KlBound> {
    check_epsilon(epsilon)?;
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(Error::InvalidDelta(delta));
    }
    if !priors.matches(graph) || !updates.matches(graph) {
        return Err(Error::DimensionMismatch {
            expected: graph.entry_count(),
            got: priors.len().min(updates.len()),
        });
    }
    let nf = n as f64;
    let b = sensitivity(graph) / epsilon;
    let refined = nf >= b;
    let mut expectation = 0.0;
    let mut c_sum = 0.0;
    for (i, j, p) in priors.iter() {
        for value in [p.alpha, p.beta] {
            if value < 2.0 {
                return Err(Error::PriorTooSmall { node: i, config: j.0, value });
            }
        }
        let u = updates.get(i, j).expect("layout checked");
        let log_upper = (p.alpha + nf + 1.0).ln() + (p.beta + nf + 1.0).ln();
        c_sum += (2.0 * nf + 1.0) * log_upper;
        expectation += if refined {
            log_upper * (nf / 2.0) * (-nf / b).exp()
        } else {
            nf * ((p.alpha + u.alpha) * (p.beta + u.beta)).ln()
        };
    }
    let deviation = (-0.5 * c_sum * delta.ln()).max(0.0).sqrt();
    Ok(KlBound {
        expectation,
        deviation,
        refined,
    })
}

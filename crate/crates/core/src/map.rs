// SPDX-License-Identifier: Apache-2.0

//! Private MAP estimates by the exponential mechanism on a finite grid.
//!
//! A grid point is drawn with probability proportional to
//! `exp(ε u(θ) / (2Δ)) ξ(θ)`, where `u` is the (unnormalized) log-posterior
//! and `ξ` the prior mass. Normalization is done in the log domain.

use rand::Rng;

use crate::error::{Error, Result};
use crate::laplace::open_unit;

/// Finite parameter grid with normalized prior masses.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    points: Vec<Vec<f64>>,
    prior_mass: Vec<f64>,
}

impl GridSpec {
    pub fn new(points: Vec<Vec<f64>>, prior_mass: Vec<f64>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Domain("grid must contain at least one point".into()));
        }
        if points.len() != prior_mass.len() {
            return Err(Error::LengthMismatch(points.len(), prior_mass.len()));
        }
        if prior_mass.iter().any(|&m| !(m > 0.0 && m.is_finite())) {
            return Err(Error::Domain("prior masses must be positive".into()));
        }
        let total: f64 = prior_mass.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Domain(format!("prior masses sum to {total}, expected 1")));
        }
        Ok(Self { points, prior_mass })
    }

    /// Grid with masses proportional to `weights`.
    pub fn normalized(points: Vec<Vec<f64>>, weights: Vec<f64>) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if !(total > 0.0 && total.is_finite()) {
            return Err(Error::Domain("weights must have a positive finite sum".into()));
        }
        Self::new(points, weights.into_iter().map(|w| w / total).collect())
    }

    /// Grid with equal mass on every point.
    pub fn uniform(points: Vec<Vec<f64>>) -> Result<Self> {
        let w = vec![1.0; points.len()];
        Self::normalized(points, w)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn point(&self, index: usize) -> &[f64] {
        &self.points[index]
    }

    pub fn prior_mass(&self) -> &[f64] {
        &self.prior_mass
    }

    /// Utility evaluated at every grid point; fails on non-finite values.
    pub fn evaluate(&self, utility: impl Fn(&[f64]) -> f64) -> Result<Vec<f64>> {
        self.points
            .iter()
            .enumerate()
            .map(|(k, p)| {
                let u = utility(p);
                if u.is_finite() {
                    Ok(u)
                } else {
                    Err(Error::Domain(format!("utility is not finite at grid point {k}")))
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SensitivityKind {
    Lipschitz,
    Stochastic,
}

/// Utility sensitivity `Δ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MapSensitivity {
    pub kind: SensitivityKind,
    pub delta_value: f64,
}

impl MapSensitivity {
    /// `Δ = sqrt(L r)`.
    pub fn lipschitz(l: f64, r: f64) -> Result<Self> {
        map_sensitivity(SensitivityKind::Lipschitz, l, r)
    }

    /// `Δ = sqrt(M / 2)`.
    pub fn stochastic(m: f64) -> Result<Self> {
        map_sensitivity(SensitivityKind::Stochastic, m, 1.0)
    }

    /// A sensitivity given directly.
    pub fn exact(delta_value: f64) -> Result<Self> {
        if !(delta_value > 0.0 && delta_value.is_finite()) {
            return Err(Error::Domain(format!("sensitivity must be positive, got {delta_value}")));
        }
        Ok(Self {
            kind: SensitivityKind::Lipschitz,
            delta_value,
        })
    }
}

/// `Δ` for a Lipschitz (`L`, radius `r`) or stochastic-Lipschitz (`M`)
/// likelihood; `r` is ignored for the stochastic branch.
pub fn map_sensitivity(kind: SensitivityKind, l_or_m: f64, r: f64) -> Result<MapSensitivity> {
    if !(l_or_m > 0.0 && l_or_m.is_finite()) {
        return Err(Error::Domain(format!("L or M must be positive, got {l_or_m}")));
    }
    let delta_value = match kind {
        SensitivityKind::Lipschitz => {
            if !(r > 0.0 && r.is_finite()) {
                return Err(Error::Domain(format!("radius must be positive, got {r}")));
            }
            (l_or_m * r).sqrt()
        }
        SensitivityKind::Stochastic => (0.5 * l_or_m).sqrt(),
    };
    Ok(MapSensitivity { kind, delta_value })
}

fn check_nonnegative_epsilon(epsilon: f64) -> Result<()> {
    if epsilon >= 0.0 && epsilon.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidEpsilon(epsilon))
    }
}

/// Exact sampling distribution of the mechanism over the grid.
pub fn sampling_probabilities(
    grid: &GridSpec,
    utilities: &[f64],
    epsilon: f64,
    delta: MapSensitivity,
) -> Result<Vec<f64>> {
    check_nonnegative_epsilon(epsilon)?;
    if utilities.len() != grid.len() {
        return Err(Error::LengthMismatch(grid.len(), utilities.len()));
    }
    if utilities.iter().any(|u| !u.is_finite()) {
        return Err(Error::Domain("utilities must be finite".into()));
    }
    let coef = epsilon / (2.0 * delta.delta_value);
    let logw: Vec<f64> = utilities
        .iter()
        .zip(grid.prior_mass())
        .map(|(&u, &m)| coef * u + m.ln())
        .collect();
    let max = logw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = logw.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = weights.iter().sum();
    Ok(weights.into_iter().map(|w| w / total).collect())
}

/// Index drawn from a discrete distribution with one uniform.
pub fn draw_index<R: Rng + ?Sized>(probabilities: &[f64], rng: &mut R) -> usize {
    let u = open_unit(rng);
    let mut acc = 0.0;
    for (k, &p) in probabilities.iter().enumerate() {
        acc += p;
        if u < acc {
            return k;
        }
    }
    probabilities.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}

/// One draw of the mechanism; returns the index of the selected grid point.
pub fn exp_mechanism_sample<R: Rng + ?Sized>(
    grid: &GridSpec,
    utility: impl Fn(&[f64]) -> f64,
    epsilon: f64,
    delta: MapSensitivity,
    rng: &mut R,
) -> Result<usize> {
    let u = grid.evaluate(utility)?;
    let p = sampling_probabilities(grid, &u, epsilon, delta)?;
    Ok(draw_index(&p, rng))
}

/// Repeated draws sharing one normalization.
pub fn exp_mechanism_draws<R: Rng + ?Sized>(
    grid: &GridSpec,
    utilities: &[f64],
    epsilon: f64,
    delta: MapSensitivity,
    count: usize,
    rng: &mut R,
) -> Result<Vec<usize>> {
    let p = sampling_probabilities(grid, utilities, epsilon, delta)?;
    let mut cdf = Vec::with_capacity(p.len());
    let mut acc = 0.0;
    for &q in &p {
        acc += q;
        cdf.push(acc);
    }
    let last = p.iter().rposition(|&q| q > 0.0).unwrap_or(0);
    Ok((0..count)
        .map(|_| {
            let u = open_unit(rng);
            cdf.partition_point(|&c| c <= u).min(last)
        })
        .collect())
}

/// Prior mass of `S_t = {θ : u(θ) > u* - t}`.
pub fn level_set_mass(grid: &GridSpec, utilities: &[f64], t: f64) -> Result<f64> {
    if utilities.len() != grid.len() {
        return Err(Error::LengthMismatch(grid.len(), utilities.len()));
    }
    let best = utilities.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(utilities
        .iter()
        .zip(grid.prior_mass())
        .filter(|(&u, _)| u > best - t)
        .map(|(_, &m)| m)
        .sum())
}

/// Bound `exp(-εt) / ξ(S_t)` on `Pr[u(θ̂) <= u* - 2t]`.
///
/// The bound holds for a mechanism whose exponent is `ε u`, that is with
/// `Δ = 1/2`; see [`lemma6_certificate_for`] for other sensitivities.
pub fn lemma6_certificate(grid: &GridSpec, utilities: &[f64], epsilon: f64, t: f64) -> Result<f64> {
    check_nonnegative_epsilon(epsilon)?;
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::InvalidT(t));
    }
    let mass = level_set_mass(grid, utilities, t)?;
    if mass <= 0.0 {
        return Err(Error::EmptyLevelSet);
    }
    Ok((-epsilon * t).exp() / mass)
}

/// Certificate for a mechanism run with sensitivity `delta`:
/// `exp(-ε t / (2Δ)) / ξ(S_t)`.
pub fn lemma6_certificate_for(
    grid: &GridSpec,
    utilities: &[f64],
    epsilon: f64,
    delta: MapSensitivity,
    t: f64,
) -> Result<f64> {
    check_nonnegative_epsilon(epsilon)?;
    lemma6_certificate(grid, utilities, epsilon / (2.0 * delta.delta_value), t)
}

/// Fraction of drawn indices with `u <= u* - 2t`.
pub fn tail_frequency(utilities: &[f64], draws: &[usize], t: f64) -> f64 {
    let best = utilities.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let hits = draws.iter().filter(|&&k| utilities[k] <= best - 2.0 * t).count();
    hits as f64 / draws.len().max(1) as f64
}

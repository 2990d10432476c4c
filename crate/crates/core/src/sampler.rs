// SPDX-License-Identifier: Apache-2.0

//! Privacy by posterior sampling.
//!
//! Covers the Lipschitz calculus over a network (per-node constants compose
//! to the network constant `max_i L_i`), the stochastic-Lipschitz
//! calculators, and the trimmed Beta sampler used for Beta-Bernoulli
//! networks: each parameter is drawn from its posterior conditioned on
//! `[ω, 1-ω]` with `ω = exp(-ε/2)`.

use rand::Rng;
use rand_distr::{Beta, Distribution};

use crate::error::{Error, Result};
use crate::graph::{BayesNetGraph, EntryParams, ParentConfig, PerEntry};
use crate::laplace::check_epsilon;
use crate::rng::{StreamRng, Substreams};

/// Constant `κ` of the stochastic-Lipschitz privacy bound.
pub const KAPPA: f64 = 4.91081;
/// Constant `ω` of the stochastic-Lipschitz privacy bound (not the trim level).
pub const OMEGA_CONST: f64 = 1.25643;
/// Rejected draws before the trimmed sampler clamps.
pub const MAX_REJECTIONS: usize = 1000;

/// Per-node pseudo-metric on binary assignments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NodeMetric {
    /// `ρ_i(x, y) = 1{x_i != y_i}`.
    #[default]
    Discrete,
    /// `ρ_i(x, y) = 1{x_F != y_F}` over the node's family `F`.
    Family,
}

impl NodeMetric {
    pub fn node_distance(self, graph: &BayesNetGraph, node: usize, x: u64, y: u64) -> f64 {
        let mask = match self {
            NodeMetric::Discrete => 1u64 << node,
            NodeMetric::Family => graph.family_mask(node),
        };
        if (x ^ y) & mask != 0 { 1.0 } else { 0.0 }
    }

    /// `ρ(x, y) = Σ_i ρ_i(x, y)`.
    pub fn distance(self, graph: &BayesNetGraph, x: u64, y: u64) -> f64 {
        (0..graph.node_count()).map(|i| self.node_distance(graph, i, x, y)).sum()
    }
}

/// Per-node Lipschitz constants of the conditional likelihoods under the
/// absolute log-ratio distance.
#[derive(Debug, Clone, PartialEq)]
pub struct LipschitzSpec {
    pub per_node: Vec<f64>,
    pub metric: NodeMetric,
}

impl LipschitzSpec {
    pub fn new(per_node: Vec<f64>, metric: NodeMetric) -> Result<Self> {
        if per_node.iter().any(|&l| !(l >= 0.0)) {
            return Err(Error::Domain("Lipschitz constants must be non-negative".into()));
        }
        Ok(Self { per_node, metric })
    }
}

/// Network Lipschitz constant `‖L‖∞`.
pub fn compose_lipschitz(spec: &LipschitzSpec) -> f64 {
    spec.per_node.iter().copied().fold(0.0, f64::max)
}

/// `ln p_θ(x)` for a Bernoulli network with parameters `θ_{i,j}`.
pub fn network_log_prob(graph: &BayesNetGraph, theta: &PerEntry<f64>, x: u64) -> f64 {
    (0..graph.node_count())
        .map(|i| {
            let t = *theta.get(i, graph.parent_config(i, x)).expect("theta layout");
            if (x >> i) & 1 == 1 { t.ln() } else { (1.0 - t).ln() }
        })
        .sum()
}

/// Per-node constants for fixed parameters `θ`.
///
/// Under `Family` the constant is the largest log-ratio between any two
/// entries of the node's conditional table. Under `Discrete` the node's
/// conditional must not depend on its parents, otherwise no finite
/// constant exists and `ConditionViolated` is returned.
pub fn node_lipschitz_constants(
    graph: &BayesNetGraph,
    theta: &PerEntry<f64>,
    metric: NodeMetric,
) -> Result<LipschitzSpec> {
    if !theta.matches(graph) {
        return Err(Error::DimensionMismatch {
            expected: graph.entry_count(),
            got: theta.len(),
        });
    }
    let mut per_node = Vec::with_capacity(graph.node_count());
    for i in 0..graph.node_count() {
        let row = theta.row(i);
        if row.iter().any(|&t| !(0.0..=1.0).contains(&t)) {
            return Err(Error::Domain(format!("node {i} has a parameter outside [0, 1]")));
        }
        let l = match metric {
            NodeMetric::Discrete => {
                if row.iter().any(|&t| t != row[0]) {
                    return Err(Error::ConditionViolated(format!(
                        "node {i} depends on its parents; use the family metric"
                    )));
                }
                (row[0].ln() - (1.0 - row[0]).ln()).abs()
            }
            NodeMetric::Family => {
                let probs = row.iter().flat_map(|&t| [t, 1.0 - t]);
                let (lo, hi) = probs.fold((f64::INFINITY, 0.0f64), |(lo, hi), p| (lo.min(p), hi.max(p)));
                hi.ln() - lo.ln()
            }
        };
        per_node.push(l);
    }
    LipschitzSpec::new(per_node, metric)
}

/// Per-node tail constants `c_i` and threshold `L0`.
#[derive(Debug, Clone, PartialEq)]
pub struct StochasticLipschitzSpec {
    pub per_node_c: Vec<f64>,
    pub l0: f64,
}

impl StochasticLipschitzSpec {
    pub fn new(per_node_c: Vec<f64>, l0: f64) -> Result<Self> {
        if per_node_c.is_empty() || per_node_c.iter().any(|&c| !(c > 0.0)) || !(l0 > 0.0) {
            return Err(Error::Domain("c_i and L0 must be positive".into()));
        }
        Ok(Self { per_node_c, l0 })
    }

    pub fn node_count(&self) -> usize {
        self.per_node_c.len()
    }

    fn min_c(&self) -> f64 {
        self.per_node_c.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Network tail constant `c' = min_i c_i - ln|I| / L0`, valid when
/// `|I| <= exp(L0 min_i c_i)`.
pub fn compose_stochastic_lipschitz(spec: &StochasticLipschitzSpec) -> Result<f64> {
    let nodes = spec.node_count() as f64;
    let min_c = spec.min_c();
    if nodes.ln() > spec.l0 * min_c {
        return Err(Error::ConditionViolated(format!(
            "|I| = {nodes} exceeds exp(L0 * min c) = {}",
            (spec.l0 * min_c).exp()
        )));
    }
    Ok(min_c - nodes.ln() / spec.l0)
}

/// The constant `M` of the stochastic-Lipschitz posterior bound.
///
/// `M = (κ/c + L0 (1/(1-e^{-ω}) + 1) + ln C
///       + ln(e^{-L0 δ c} / (e^{-ω(1-δ)} - e^{-ω}) + e^{L0 (1-δ) c})) · C`
pub fn thm5_m(c: f64, l0: f64, delta: f64, big_c: f64) -> Result<f64> {
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::Domain(format!("c must be positive, got {c}")));
    }
    if !(l0 > 0.0 && l0.is_finite()) {
        return Err(Error::Domain(format!("L0 must be positive, got {l0}")));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidDelta(delta));
    }
    if !(big_c >= 1.0 && big_c.is_finite()) {
        return Err(Error::Domain(format!("C must be at least 1, got {big_c}")));
    }
    let w = OMEGA_CONST;
    let gap = (-w * (1.0 - delta)).exp() - (-w).exp();
    let tail = ((-l0 * delta * c).exp() / gap + (l0 * (1.0 - delta) * c).exp()).ln();
    let bracket = KAPPA / c + l0 * (1.0 / (1.0 - (-w).exp()) + 1.0) + big_c.ln() + tail;
    let m = bracket * big_c;
    if !m.is_finite() || m <= 0.0 {
        return Err(Error::Domain(format!("M evaluated to {m}")));
    }
    Ok(m)
}

/// Max-to-marginal likelihood ratio of one Bernoulli node with a Beta
/// prior, maximizing the likelihood over a uniform θ-grid.
pub fn beta_bernoulli_c(prior: crate::graph::BetaParams, grid_points: usize) -> f64 {
    let points = grid_points.max(2);
    [true, false]
        .iter()
        .map(|&x| {
            let max_lik = (0..points)
                .map(|s| s as f64 / (points - 1) as f64)
                .map(|t| if x { t } else { 1.0 - t })
                .fold(0.0, f64::max);
            let marginal = if x { prior.mean() } else { 1.0 - prior.mean() };
            max_lik / marginal
        })
        .fold(0.0, f64::max)
}

/// Privacy guarantee of posterior sampling.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SamplerPrivacyReport {
    /// `(2‖L‖∞, 0)`-DP per unit of `ρ`; `trimming_epsilon` is `2 ln(1/ω)`
    /// when the constant comes from trimming.
    Pure {
        epsilon_per_unit_rho: f64,
        trimming_epsilon: Option<f64>,
    },
    /// `(0, sqrt(M/2))`-DP under `sqrt(ρ)` for `ρ >= 1`; values of
    /// `delta` at or above 1 are vacuous.
    Stochastic { m: f64, delta: f64 },
}

impl SamplerPrivacyReport {
    pub fn pure(spec: &LipschitzSpec) -> Self {
        SamplerPrivacyReport::Pure {
            epsilon_per_unit_rho: 2.0 * compose_lipschitz(spec),
            trimming_epsilon: None,
        }
    }

    /// Report for a network whose parameters are trimmed to `[ω, 1-ω]`.
    pub fn trimmed(omega: f64) -> Self {
        SamplerPrivacyReport::Pure {
            epsilon_per_unit_rho: 2.0 * trimmed_node_lipschitz(omega),
            trimming_epsilon: Some(2.0 * (1.0 / omega).ln()),
        }
    }

    pub fn stochastic(c: f64, l0: f64, delta_slack: f64, big_c: f64) -> Result<Self> {
        let m = thm5_m(c, l0, delta_slack, big_c)?;
        Ok(SamplerPrivacyReport::Stochastic {
            m,
            delta: (m / 2.0).sqrt(),
        })
    }
}

/// Trim level `ω = exp(-ε/2)`; fails when `ω >= 1/2`.
pub fn trim_level(epsilon: f64) -> Result<f64> {
    check_epsilon(epsilon)?;
    let omega = (-epsilon / 2.0).exp();
    if omega >= 0.5 {
        return Err(Error::OmegaTooLarge { omega, epsilon });
    }
    Ok(omega)
}

/// Largest per-flip log-ratio of a Bernoulli with θ in `[ω, 1-ω]`.
pub fn trimmed_node_lipschitz(omega: f64) -> f64 {
    ((1.0 - omega) / omega).ln()
}

/// Beta sampler conditioned on `[ω, 1-ω]`.
#[derive(Debug, Clone, Copy)]
pub struct TrimmedBeta {
    dist: Beta<f64>,
    lo: f64,
    hi: f64,
}

impl TrimmedBeta {
    pub fn new(params: crate::graph::BetaParams, omega: f64) -> Result<Self> {
        if !(0.0..0.5).contains(&omega) {
            return Err(Error::Domain(format!("trim level must lie in [0, 1/2), got {omega}")));
        }
        let dist = Beta::new(params.alpha, params.beta)
            .map_err(|e| Error::Domain(format!("Beta({}, {}): {e}", params.alpha, params.beta)))?;
        Ok(Self {
            dist,
            lo: omega,
            hi: 1.0 - omega,
        })
    }

    /// Rejection sampling; after `MAX_REJECTIONS` misses the last draw is
    /// clamped into the interval.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let mut last = 0.5;
        for _ in 0..MAX_REJECTIONS {
            last = self.dist.sample(rng);
            if (self.lo..=self.hi).contains(&last) {
                return last;
            }
        }
        last.clamp(self.lo, self.hi)
    }
}

fn trimmed_samplers(posterior: &EntryParams, omega: f64) -> Result<PerEntry<TrimmedBeta>> {
    let mut rows = Vec::with_capacity(posterior.node_count());
    for i in 0..posterior.node_count() {
        rows.push(
            posterior
                .row(i)
                .iter()
                .map(|&p| TrimmedBeta::new(p, omega))
                .collect::<Result<Vec<_>>>()?,
        );
    }
    Ok(PerEntry::from_nested(rows))
}

fn entry_rng(streams: &Substreams, node: usize, config: ParentConfig) -> StreamRng {
    streams.rng(&[node as u64, config.0 as u64])
}

/// One trimmed draw of every parameter; entry `(i, j)` uses its own substream.
pub fn trimmed_posterior_sample(posterior: &EntryParams, epsilon: f64, streams: &Substreams) -> Result<PerEntry<f64>> {
    let omega = trim_level(epsilon)?;
    let samplers = trimmed_samplers(posterior, omega)?;
    Ok(samplers.map(|i, j, s| s.sample(&mut entry_rng(streams, i, j))))
}

/// `samples` trimmed draws of every parameter.
pub fn trimmed_posterior_draws(
    posterior: &EntryParams,
    epsilon: f64,
    samples: usize,
    streams: &Substreams,
) -> Result<Vec<PerEntry<f64>>> {
    let omega = trim_level(epsilon)?;
    draws_with_omega(posterior, omega, samples, streams)
}

fn draws_with_omega(
    posterior: &EntryParams,
    omega: f64,
    samples: usize,
    streams: &Substreams,
) -> Result<Vec<PerEntry<f64>>> {
    let samplers = trimmed_samplers(posterior, omega)?;
    let columns: PerEntry<Vec<f64>> = samplers.map(|i, j, s| {
        let mut rng = entry_rng(streams, i, j);
        (0..samples).map(|_| s.sample(&mut rng)).collect()
    });
    Ok((0..samples)
        .map(|s| columns.map(|_, _, col| col[s]))
        .collect())
}

fn check_naive_bayes_layout(posterior: &EntryParams) -> Result<usize> {
    let nodes = posterior.node_count();
    if nodes < 2 || posterior.row(0).len() != 1 || (1..nodes).any(|i| posterior.row(i).len() != 2) {
        return Err(Error::Domain(
            "expected a naive Bayes layout: class node 0, features with the class as sole parent".into(),
        ));
    }
    Ok(nodes - 1)
}

/// Log-parameters of posterior draws for a naive Bayes network, ready for
/// repeated predictive queries.
#[derive(Debug, Clone)]
pub struct NaiveBayesDraws {
    features: usize,
    /// Per draw: `[ln(1-θ_Y), ln θ_Y]`.
    class: Vec<[f64; 2]>,
    /// Per draw, per feature, per class: `[ln(1-θ), ln θ]`.
    feature: Vec<Vec<[[f64; 2]; 2]>>,
}

impl NaiveBayesDraws {
    pub fn from_draws(draws: &[PerEntry<f64>]) -> Result<Self> {
        let first = draws.first().ok_or(Error::Domain("need at least one draw".into()))?;
        let nodes = first.node_count();
        if nodes < 2 || first.row(0).len() != 1 || (1..nodes).any(|i| first.row(i).len() != 2) {
            return Err(Error::Domain("draws do not have a naive Bayes layout".into()));
        }
        let logs = |t: f64| [(1.0 - t).ln(), t.ln()];
        Ok(Self {
            features: nodes - 1,
            class: draws.iter().map(|d| logs(d.row(0)[0])).collect(),
            feature: draws
                .iter()
                .map(|d| (1..nodes).map(|i| [logs(d.row(i)[0]), logs(d.row(i)[1])]).collect())
                .collect(),
        })
    }

    /// Trimmed draws of a naive Bayes posterior; with `omega = None` the
    /// plain posterior is sampled.
    pub fn sample(posterior: &EntryParams, omega: Option<f64>, samples: usize, streams: &Substreams) -> Result<Self> {
        check_naive_bayes_layout(posterior)?;
        if samples == 0 {
            return Err(Error::Domain("samples must be at least 1".into()));
        }
        let draws = draws_with_omega(posterior, omega.unwrap_or(0.0), samples, streams)?;
        Self::from_draws(&draws)
    }

    pub fn len(&self) -> usize {
        self.class.len()
    }

    pub fn is_empty(&self) -> bool {
        self.class.is_empty()
    }

    /// Monte Carlo `Pr(Y = 1 | x)` for a packed record (class bit ignored).
    ///
    /// Averages the joint likelihood of `(y, x)` over draws for each class,
    /// then normalizes.
    pub fn predict(&self, record: u64) -> f64 {
        let mut per_class = [f64::NEG_INFINITY; 2];
        let mut logs = [Vec::with_capacity(self.len()), Vec::with_capacity(self.len())];
        for (class, feats) in self.class.iter().zip(&self.feature) {
            for y in 0..2 {
                let mut l = class[y];
                for (f, table) in feats.iter().enumerate() {
                    l += table[y][((record >> (f + 1)) & 1) as usize];
                }
                logs[y].push(l);
                per_class[y] = per_class[y].max(l);
            }
        }
        let lse = |v: &[f64], max: f64| max + v.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
        let l0 = lse(&logs[0], per_class[0]);
        let l1 = lse(&logs[1], per_class[1]);
        1.0 / (1.0 + (l0 - l1).exp())
    }

    pub fn features(&self) -> usize {
        self.features
    }
}

/// Monte Carlo predictive `Pr(Y = 1 | x)` under the trimmed posterior of a
/// naive Bayes network (class node 0, features `1..=d`).
pub fn sampler_predictive(
    posterior: &EntryParams,
    record: u64,
    epsilon: f64,
    samples: usize,
    streams: &Substreams,
) -> Result<f64> {
    let omega = trim_level(epsilon)?;
    Ok(NaiveBayesDraws::sample(posterior, Some(omega), samples, streams)?.predict(record))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::BetaParams;

    #[test]
    fn compose_is_max() {
        let spec = LipschitzSpec::new(vec![2.0, 3.0, 1.0], NodeMetric::Discrete).unwrap();
        assert_eq!(compose_lipschitz(&spec), 3.0);
        let one = LipschitzSpec::new(vec![0.7], NodeMetric::Discrete).unwrap();
        assert_eq!(compose_lipschitz(&one), 0.7);
        assert!(LipschitzSpec::new(vec![-1.0], NodeMetric::Discrete).is_err());
    }

    #[test]
    fn stochastic_composition() {
        let one = StochasticLipschitzSpec::new(vec![1.7], 2.0).unwrap();
        assert_eq!(compose_stochastic_lipschitz(&one).unwrap(), 1.7);
        let two = StochasticLipschitzSpec::new(vec![2.0, 3.0], 1.0).unwrap();
        let c = compose_stochastic_lipschitz(&two).unwrap();
        assert!((c - 1.306_852_819_440_054_7).abs() < 1e-12);
        let many = StochasticLipschitzSpec::new(vec![0.1; 100], 1.0).unwrap();
        assert!(matches!(compose_stochastic_lipschitz(&many), Err(Error::ConditionViolated(_))));
    }

    #[test]
    fn m_is_increasing_in_c_constant() {
        let mut last = 0.0;
        for big_c in [1.0, 1.5, 2.0, 5.0, 10.0] {
            let m = thm5_m(1.0, 1.0, 0.5, big_c).unwrap();
            assert!(m > last);
            last = m;
        }
    }

    #[test]
    fn kappa_term_is_one_at_kappa() {
        let a = thm5_m(KAPPA, 1.0, 0.5, 1.0).unwrap();
        let b = thm5_m(KAPPA, 1.0, 0.5, 1.0).unwrap();
        assert_eq!(a, b);
        // Replacing the κ/c term by 1 reproduces the value.
        let w = OMEGA_CONST;
        let gap = (-w * 0.5f64).exp() - (-w).exp();
        let tail = ((-0.5 * KAPPA).exp() / gap + (0.5 * KAPPA).exp()).ln();
        let expected = 1.0 + (1.0 / (1.0 - (-w).exp()) + 1.0) + tail;
        assert!((a - expected).abs() < 1e-12);
    }

    #[test]
    fn m_domain_errors() {
        assert!(thm5_m(0.0, 1.0, 0.5, 2.0).is_err());
        assert!(thm5_m(1.0, 0.0, 0.5, 2.0).is_err());
        assert!(thm5_m(1.0, 1.0, 1.0, 2.0).is_err());
        assert!(thm5_m(1.0, 1.0, 0.5, 0.5).is_err());
    }

    #[test]
    fn trim_levels() {
        let w = trim_level(2.0).unwrap();
        assert!((w - (-1f64).exp()).abs() < 1e-15);
        assert!(matches!(trim_level(1.0), Err(Error::OmegaTooLarge { .. })));
        assert!(matches!(trim_level(2.0 * 2f64.ln()), Err(Error::OmegaTooLarge { .. })));
        assert!(trim_level(0.0).is_err());
    }

    #[test]
    fn trimmed_draws_stay_in_interval() {
        let g = BayesNetGraph::naive_bayes(3).unwrap();
        let post = EntryParams::filled(&g, BetaParams { alpha: 30.0, beta: 1.0 });
        let w = (-1f64).exp();
        for seed in 0..200 {
            let th = trimmed_posterior_sample(&post, 2.0, &Substreams::new(seed)).unwrap();
            assert!(th.iter().all(|(_, _, &t)| t >= w && t <= 1.0 - w));
        }
    }

    #[test]
    fn symmetric_posterior_predicts_half() {
        let g = BayesNetGraph::naive_bayes(4).unwrap();
        let post = EntryParams::filled(&g, BetaParams { alpha: 3.0, beta: 3.0 });
        let p = sampler_predictive(&post, 0b01010, 6.0, 20_000, &Substreams::new(4)).unwrap();
        assert!((p - 0.5).abs() < 0.02, "{p}");
    }

    #[test]
    fn predictive_replays() {
        let g = BayesNetGraph::naive_bayes(2).unwrap();
        let post = EntryParams::filled(&g, BetaParams { alpha: 2.0, beta: 5.0 });
        let a = sampler_predictive(&post, 0b110, 4.0, 500, &Substreams::new(8)).unwrap();
        let b = sampler_predictive(&post, 0b110, 4.0, 500, &Substreams::new(8)).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
        assert!((0.0..=1.0).contains(&a));
    }

    #[test]
    fn c_constant_grid_search() {
        let c = beta_bernoulli_c(BetaParams { alpha: 1.0, beta: 3.0 }, 101);
        assert!((c - 4.0).abs() < 1e-12);
    }

    #[test]
    fn discrete_metric_requires_parent_free_conditionals() {
        let g = BayesNetGraph::chain(2).unwrap();
        let theta = PerEntry::from_nested(vec![vec![0.3], vec![0.2, 0.9]]);
        assert!(matches!(
            node_lipschitz_constants(&g, &theta, NodeMetric::Discrete),
            Err(Error::ConditionViolated(_))
        ));
        let spec = node_lipschitz_constants(&g, &theta, NodeMetric::Family).unwrap();
        assert!((spec.per_node[1] - (0.9f64 / 0.1).ln()).abs() < 1e-12);
    }
}

// SPDX-License-Identifier: Apache-2.0

//! Consistent marginal release through noisy Walsh coefficients.
//!
//! The orthonormal basis on `{0,1}^k` is `f^γ_η = (-1)^{|η ∧ γ|} 2^{-k/2}`.
//! The marginal of a table on a variable set `S` only depends on the
//! coefficients with `γ ⊆ S`, so releasing the coefficients on the downward
//! closure of every node family is enough to rebuild every per-node
//! marginal. All rebuilt marginals come from one coefficient set and
//! therefore agree wherever they overlap.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::graph::{BayesNetGraph, BetaParams, ContingencyTable, Dataset, EntryParams, PerEntry, embed, restrict};
use crate::laplace::{check_delta, check_epsilon, sample_laplace};
use crate::rng::Substreams;

/// Default `t`, giving non-negative tables with probability at least 0.9.
pub const DEFAULT_T: f64 = std::f64::consts::LN_10;

/// Index `γ` of a Walsh basis vector, packed as a variable mask.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FourierIndex(pub u64);

impl FourierIndex {
    /// Lowercase hex rendering used in CSV output.
    pub fn to_hex(self) -> String {
        format!("{:x}", self.0)
    }

    pub fn is_subset_of(self, mask: u64) -> bool {
        self.0 & !mask == 0
    }
}

fn parity(x: u64) -> f64 {
    if x.count_ones().is_multiple_of(2) { 1.0 } else { -1.0 }
}

/// Every subset of every node family.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DownwardClosure {
    dimension: usize,
    members: BTreeSet<FourierIndex>,
}

impl DownwardClosure {
    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn contains(&self, gamma: FourierIndex) -> bool {
        self.members.contains(&gamma)
    }

    pub fn iter(&self) -> impl Iterator<Item = FourierIndex> + '_ {
        self.members.iter().copied()
    }
}

/// Iterate all subsets of `mask`, including the empty set and `mask`.
fn subsets(mask: u64) -> impl Iterator<Item = u64> {
    let mut next = Some(0u64);
    std::iter::from_fn(move || {
        let cur = next?;
        next = if cur == mask { None } else { Some((cur.wrapping_sub(mask)) & mask) };
        Some(cur)
    })
}

pub fn downward_closure(graph: &BayesNetGraph) -> DownwardClosure {
    let members = (0..graph.node_count())
        .flat_map(|i| subsets(graph.family_mask(i)))
        .map(FourierIndex)
        .collect();
    DownwardClosure {
        dimension: graph.node_count(),
        members,
    }
}

/// `⟨f^γ, h⟩` for the table of `data`, streamed over records.
pub fn fourier_coefficient(data: &Dataset, gamma: FourierIndex) -> f64 {
    let k = data.node_count() as f64;
    let signed: f64 = data.records().iter().map(|&x| parity(x & gamma.0)).sum();
    signed * (-k / 2.0).exp2()
}

/// All `2^k` coefficients of a table by the fast Walsh-Hadamard transform.
pub fn dense_transform(table: &ContingencyTable) -> Result<Vec<f64>> {
    let mut v = table.to_dense()?;
    let mut h = 1;
    while h < v.len() {
        for start in (0..v.len()).step_by(2 * h) {
            for a in start..start + h {
                let (x, y) = (v[a], v[a + h]);
                v[a] = x + y;
                v[a + h] = x - y;
            }
        }
        h *= 2;
    }
    let norm = (-(table.dimension() as f64) / 2.0).exp2();
    v.iter_mut().for_each(|c| *c *= norm);
    Ok(v)
}

/// Laplace scale per coefficient: `2|J̃| / (ε 2^{k/2})`.
pub fn noise_scale(closure_size: usize, dimension: usize, epsilon: f64) -> f64 {
    2.0 * closure_size as f64 / (epsilon * (dimension as f64 / 2.0).exp2())
}

/// Increment of the zero coefficient: `4t|J̃|² / (ε 2^{k/2})`.
pub fn stealth_increment(closure_size: usize, dimension: usize, epsilon: f64, t: f64) -> f64 {
    let j = closure_size as f64;
    4.0 * t * j * j / (epsilon * (dimension as f64 / 2.0).exp2())
}

/// Released coefficients over a downward closure.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientSet {
    dimension: usize,
    values: BTreeMap<FourierIndex, f64>,
    noise_scale: f64,
    t: f64,
}

impl CoefficientSet {
    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn get(&self, gamma: FourierIndex) -> Option<f64> {
        self.values.get(&gamma).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (FourierIndex, f64)> + '_ {
        self.values.iter().map(|(&g, &v)| (g, v))
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn noise_scale(&self) -> f64 {
        self.noise_scale
    }

    pub fn t(&self) -> f64 {
        self.t
    }
}

fn streamed(data: &Dataset, closure: &DownwardClosure) -> Result<Vec<(FourierIndex, f64)>> {
    if data.node_count() != closure.dimension {
        return Err(Error::DimensionMismatch {
            expected: closure.dimension,
            got: data.node_count(),
        });
    }
    let gammas: Vec<FourierIndex> = closure.iter().collect();
    Ok(gammas
        .par_iter()
        .map(|&g| (g, fourier_coefficient(data, g)))
        .collect())
}

/// Noise-free coefficients on the closure.
pub fn exact_coefficients(data: &Dataset, closure: &DownwardClosure) -> Result<CoefficientSet> {
    Ok(CoefficientSet {
        dimension: closure.dimension,
        values: streamed(data, closure)?.into_iter().collect(),
        noise_scale: 0.0,
        t: 0.0,
    })
}

/// Noisy coefficients with the non-negativity increment applied to `z_0`.
///
/// Noise for coefficient `γ` comes from the substream keyed by `γ`.
pub fn release_coefficients(
    data: &Dataset,
    closure: &DownwardClosure,
    epsilon: f64,
    t: f64,
    streams: &Substreams,
) -> Result<CoefficientSet> {
    check_epsilon(epsilon)?;
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::InvalidT(t));
    }
    let k = closure.dimension;
    let scale = noise_scale(closure.len(), k, epsilon);
    let mut values: BTreeMap<FourierIndex, f64> = streamed(data, closure)?
        .into_iter()
        .map(|(g, v)| (g, v + sample_laplace(scale, &mut streams.rng(&[g.0]))))
        .collect();
    *values.entry(FourierIndex(0)).or_insert(0.0) += stealth_increment(closure.len(), k, epsilon, t);
    Ok(CoefficientSet {
        dimension: k,
        values,
        noise_scale: scale,
        t,
    })
}

/// Dense marginal over a variable mask; cell index is `restrict(η, mask)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MarginalTable {
    pub mask: u64,
    pub cells: Vec<f64>,
}

impl MarginalTable {
    pub fn from_table(table: &ContingencyTable, mask: u64) -> Self {
        let mut cells = vec![0.0; 1usize << mask.count_ones()];
        for (x, v) in table.cells() {
            cells[restrict(x, mask) as usize] += v;
        }
        Self { mask, cells }
    }

    /// Value at a packed global assignment (bits outside `mask` ignored).
    pub fn at(&self, assignment: u64) -> f64 {
        self.cells[restrict(assignment, self.mask) as usize]
    }

    /// Sum down onto a sub-mask.
    pub fn marginalize(&self, sub: u64) -> Result<MarginalTable> {
        if sub & !self.mask != 0 {
            return Err(Error::Domain(format!(
                "mask {sub:#x} is not contained in {:#x}",
                self.mask
            )));
        }
        let mut cells = vec![0.0; 1usize << sub.count_ones()];
        for (local, &v) in self.cells.iter().enumerate() {
            let global = embed(local as u64, self.mask);
            cells[restrict(global, sub) as usize] += v;
        }
        Ok(MarginalTable { mask: sub, cells })
    }

    pub fn min_cell(&self) -> f64 {
        self.cells.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn l1_distance(&self, other: &MarginalTable) -> f64 {
        self.cells.iter().zip(&other.cells).map(|(a, b)| (a - b).abs()).sum()
    }
}

/// Marginal on `mask` rebuilt from the coefficients `γ ⊆ mask`.
pub fn reconstruct_on(coeffs: &CoefficientSet, mask: u64) -> Result<MarginalTable> {
    let width = mask.count_ones() as i32;
    let factor = (coeffs.dimension as f64 / 2.0 - width as f64).exp2();
    let mut cells = vec![0.0; 1usize << width];
    for local_gamma in 0..(1u64 << width) {
        let gamma = embed(local_gamma, mask);
        let z = coeffs
            .get(FourierIndex(gamma))
            .ok_or(Error::MissingCoefficient(gamma))?;
        for (beta, cell) in cells.iter_mut().enumerate() {
            *cell += z * factor * parity(beta as u64 & local_gamma);
        }
    }
    Ok(MarginalTable { mask, cells })
}

/// Marginal table on the node and its parents.
pub fn reconstruct_marginal(coeffs: &CoefficientSet, node: usize, graph: &BayesNetGraph) -> Result<MarginalTable> {
    reconstruct_on(coeffs, graph.family_mask(node))
}

/// What to do when a rebuilt cell drives a posterior parameter to `<= 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum StealthPolicy {
    /// Fail with `NonPositivePosteriorParam`.
    #[default]
    Report,
    /// Truncate negative cells to zero (valid, but no longer stealthy).
    Clamp,
}

/// Posterior parameters `(α + h_{x_i=1,j}, β + h_{x_i=0,j})` per entry.
pub fn fourier_posterior_params(
    coeffs: &CoefficientSet,
    graph: &BayesNetGraph,
    priors: &EntryParams,
) -> Result<EntryParams> {
    fourier_posterior_params_with(coeffs, graph, priors, StealthPolicy::Report)
}

pub fn fourier_posterior_params_with(
    coeffs: &CoefficientSet,
    graph: &BayesNetGraph,
    priors: &EntryParams,
    policy: StealthPolicy,
) -> Result<EntryParams> {
    let marginals = (0..graph.node_count())
        .map(|i| reconstruct_marginal(coeffs, i, graph))
        .collect::<Result<Vec<_>>>()?;
    PerEntry::try_from_fn(graph, |i, j| {
        let prior = priors
            .get(i, j)
            .ok_or(Error::MissingPriorEntry { node: i, config: j.0 })?;
        let m = &marginals[i];
        let mut ones = m.at(graph.family_assignment(i, j, true));
        let mut zeros = m.at(graph.family_assignment(i, j, false));
        if policy == StealthPolicy::Clamp {
            ones = ones.max(0.0);
            zeros = zeros.max(0.0);
        }
        let (alpha, beta) = (prior.alpha + ones, prior.beta + zeros);
        if !(alpha > 0.0) || !(beta > 0.0) {
            return Err(Error::NonPositivePosteriorParam {
                node: i,
                config: j.0,
                value: alpha.min(beta),
            });
        }
        Ok(BetaParams { alpha, beta })
    })
}

/// True when every rebuilt per-node marginal is non-negative.
pub fn all_marginals_nonnegative(coeffs: &CoefficientSet, graph: &BayesNetGraph) -> Result<bool> {
    for i in 0..graph.node_count() {
        if reconstruct_marginal(coeffs, i, graph)?.min_cell() < 0.0 {
            return Ok(false);
        }
    }
    Ok(true)
}

/// L1 error bound for one rebuilt marginal, holding with probability
/// `1 - δ`: `(4|J̃|/ε)(2^{|π_i|} ln(|J̃|/δ) + t|J̃|)`.
pub fn thm4_bound(graph: &BayesNetGraph, node: usize, epsilon: f64, delta: f64, t: f64) -> Result<f64> {
    check_epsilon(epsilon)?;
    check_delta(delta)?;
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::InvalidT(t));
    }
    let j = downward_closure(graph).len() as f64;
    let configs = graph.config_count(node) as f64;
    Ok(4.0 * j / epsilon * (configs * (j / delta).ln() + t * j))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_table, compute_updates, posterior_params, ParentConfig};

    #[test]
    fn closure_sizes() {
        let single = downward_closure(&BayesNetGraph::independent(1).unwrap());
        assert_eq!(single.iter().collect::<Vec<_>>(), vec![FourierIndex(0), FourierIndex(1)]);
        for d in 1..10 {
            assert_eq!(downward_closure(&BayesNetGraph::naive_bayes(d).unwrap()).len(), 2 * d + 2);
        }
        let chain = downward_closure(&BayesNetGraph::chain(3).unwrap());
        let got: Vec<u64> = chain.iter().map(|g| g.0).collect();
        assert_eq!(got, vec![0b000, 0b001, 0b010, 0b011, 0b100, 0b110]);
    }

    #[test]
    fn closure_is_downward_closed() {
        let g = BayesNetGraph::new(5, vec![vec![], vec![0], vec![0, 1], vec![2], vec![1, 3]]).unwrap();
        let c = downward_closure(&g);
        assert!(c.contains(FourierIndex(0)));
        for gamma in c.iter() {
            for sub in subsets(gamma.0) {
                assert!(c.contains(FourierIndex(sub)));
            }
        }
        assert!(c.len() <= g.node_count() << (1 + g.max_in_degree()));
    }

    #[test]
    fn zero_coefficient_counts_records() {
        let d = Dataset::from_rows(3, &[[1u8, 0, 1], [0, 0, 0], [1, 1, 1], [0, 1, 0]]).unwrap();
        let z = fourier_coefficient(&d, FourierIndex(0));
        assert!((z - 4.0 / 8f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn one_dimensional_coefficient() {
        // three zeros, five ones
        let rows: Vec<[u8; 1]> = [0u8, 0, 0, 1, 1, 1, 1, 1].iter().map(|&v| [v]).collect();
        let d = Dataset::from_rows(1, &rows).unwrap();
        let z = fourier_coefficient(&d, FourierIndex(1));
        assert!((z + std::f64::consts::SQRT_2).abs() < 1e-12);
    }

    #[test]
    fn noise_scale_arithmetic() {
        assert!((noise_scale(6, 3, 1.0) - 12.0 / 2f64.powf(1.5)).abs() < 1e-12);
        assert!((noise_scale(6, 3, 1.0) - 4.242_640_687).abs() < 1e-8);
    }

    #[test]
    fn reconstruct_two_by_two() {
        let d = Dataset::from_rows(2, &[[0u8, 0], [0, 0], [1, 1]]).unwrap();
        let g = BayesNetGraph::chain(2).unwrap();
        let c = exact_coefficients(&d, &downward_closure(&g)).unwrap();
        let m = reconstruct_marginal(&c, 1, &g).unwrap();
        let expected = [2.0, 0.0, 0.0, 1.0];
        for (a, b) in m.cells.iter().zip(expected) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn missing_coefficient_reported() {
        let g = BayesNetGraph::independent(2).unwrap();
        let d = Dataset::from_rows(2, &[[0u8, 1]]).unwrap();
        let c = exact_coefficients(&d, &downward_closure(&g)).unwrap();
        assert_eq!(reconstruct_on(&c, 0b11), Err(Error::MissingCoefficient(0b11)));
    }

    #[test]
    fn zero_noise_limit_of_release() {
        let g = BayesNetGraph::chain(3).unwrap();
        let d = Dataset::from_rows(3, &[[1u8, 0, 1], [0, 0, 0], [1, 1, 1]]).unwrap();
        let closure = downward_closure(&g);
        let exact = exact_coefficients(&d, &closure).unwrap();
        let noisy = release_coefficients(&d, &closure, 1e15, 1e-15, &Substreams::new(1)).unwrap();
        for (gamma, v) in exact.iter() {
            assert!((noisy.get(gamma).unwrap() - v).abs() < 1e-9);
        }
        assert_eq!(noisy.len(), closure.len());
    }

    #[test]
    fn invalid_release_parameters() {
        let g = BayesNetGraph::chain(2).unwrap();
        let d = Dataset::from_rows(2, &[[0u8, 1]]).unwrap();
        let c = downward_closure(&g);
        let s = Substreams::new(0);
        assert_eq!(release_coefficients(&d, &c, 0.0, 1.0, &s), Err(Error::InvalidEpsilon(0.0)));
        assert_eq!(release_coefficients(&d, &c, 1.0, 0.0, &s), Err(Error::InvalidT(0.0)));
    }

    #[test]
    fn zero_noise_posterior_matches_counting() {
        let g = BayesNetGraph::naive_bayes(3).unwrap();
        let d = Dataset::from_rows(4, &[[1u8, 0, 1, 1], [0, 1, 0, 0], [1, 1, 1, 0], [0, 0, 1, 1]]).unwrap();
        let priors = EntryParams::filled(&g, BetaParams::uniform());
        let exact = exact_coefficients(&d, &downward_closure(&g)).unwrap();
        let via_fourier = fourier_posterior_params(&exact, &g, &priors).unwrap();
        let via_counts = posterior_params(&priors, &compute_updates(&g, &d).unwrap()).unwrap();
        for ((_, _, a), (_, _, b)) in via_fourier.iter().zip(via_counts.iter()) {
            assert!((a.alpha - b.alpha).abs() < 1e-9 && (a.beta - b.beta).abs() < 1e-9);
        }
    }

    fn single_node_coeffs(ones_cell: f64, zeros_cell: f64) -> CoefficientSet {
        // 1-d table (zeros_cell, ones_cell) written in the Walsh basis.
        let s = std::f64::consts::FRAC_1_SQRT_2;
        CoefficientSet {
            dimension: 1,
            values: [
                (FourierIndex(0), (zeros_cell + ones_cell) * s),
                (FourierIndex(1), (zeros_cell - ones_cell) * s),
            ]
            .into_iter()
            .collect(),
            noise_scale: 0.0,
            t: 0.0,
        }
    }

    #[test]
    fn negative_cells_and_policy() {
        let g = BayesNetGraph::independent(1).unwrap();
        let priors = EntryParams::filled(&g, BetaParams::uniform());
        let ok = fourier_posterior_params(&single_node_coeffs(-0.3, 2.0), &g, &priors).unwrap();
        let p = ok.get(0, ParentConfig(0)).unwrap();
        assert!((p.alpha - 0.7).abs() < 1e-12);

        let bad = single_node_coeffs(-1.5, 2.0);
        assert!(matches!(
            fourier_posterior_params(&bad, &g, &priors),
            Err(Error::NonPositivePosteriorParam { node: 0, config: 0, .. })
        ));
        let clamped = fourier_posterior_params_with(&bad, &g, &priors, StealthPolicy::Clamp).unwrap();
        assert!((clamped.get(0, ParentConfig(0)).unwrap().alpha - 1.0).abs() < 1e-12);
    }

    #[test]
    fn dense_transform_matches_streaming() {
        let d = Dataset::from_rows(3, &[[1u8, 0, 1], [0, 0, 0], [1, 1, 1], [1, 1, 1]]).unwrap();
        let dense = dense_transform(&build_table(&d)).unwrap();
        for gamma in 0..8u64 {
            assert!((dense[gamma as usize] - fourier_coefficient(&d, FourierIndex(gamma))).abs() < 1e-12);
        }
    }

    #[test]
    fn thm4_monotone_in_t() {
        let g = BayesNetGraph::naive_bayes(2).unwrap();
        let a = thm4_bound(&g, 1, 1.0, 0.1, 1.0).unwrap();
        let b = thm4_bound(&g, 1, 1.0, 0.1, 2.0).unwrap();
        assert!(b > a);
    }

    #[test]
    fn thm4_naive_bayes_value() {
        // |J| = 6, |π_1| = 1: (24)(2 ln 60 + 6 ln 10)
        let g = BayesNetGraph::naive_bayes(2).unwrap();
        let v = thm4_bound(&g, 1, 1.0, 0.1, DEFAULT_T).unwrap();
        let expected = 24.0 * (2.0 * 60f64.ln() + 6.0 * 10f64.ln());
        assert!((v - expected).abs() < 1e-9);
        assert!((v - 528.1008).abs() < 1e-3);
    }
}

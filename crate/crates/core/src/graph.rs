// SPDX-License-Identifier: Apache-2.0

//! Binary Bayesian networks, datasets, contingency tables and exact
//! Beta-Bernoulli conjugate updating.
//!
//! Records and variable subsets are packed into `u64` bit-vectors: bit `i`
//! holds node `i`. A parent configuration `j` of node `i` is little-endian
//! over the declared parent order, so bit `b` of `j` is the value of
//! `parents(i)[b]`.

use std::collections::{BTreeMap, BinaryHeap};
use std::cmp::Reverse;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest supported node count (records are packed into `u64`).
pub const MAX_NODES: usize = 64;

/// Largest table dimension that `to_dense` will materialize by default.
pub const DENSE_THRESHOLD: usize = 20;

/// Gather the bits of `x` selected by `mask` into the low bits, in
/// ascending coordinate order.
pub fn restrict(x: u64, mask: u64) -> u64 {
    let mut out = 0u64;
    let mut m = mask;
    let mut k = 0;
    while m != 0 {
        let bit = m.trailing_zeros();
        out |= ((x >> bit) & 1) << k;
        k += 1;
        m &= m - 1;
    }
    out
}

/// Inverse of [`restrict`]: scatter the low bits of `local` onto `mask`.
pub fn embed(local: u64, mask: u64) -> u64 {
    let mut out = 0u64;
    let mut m = mask;
    let mut k = 0;
    while m != 0 {
        let bit = m.trailing_zeros();
        out |= ((local >> k) & 1) << bit;
        k += 1;
        m &= m - 1;
    }
    out
}

/// Parent configuration index `j` of one node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ParentConfig(pub usize);

impl ParentConfig {
    pub fn from_bits(bits: &[bool]) -> Self {
        ParentConfig(
            bits.iter()
                .enumerate()
                .fold(0, |acc, (b, &v)| acc | (usize::from(v) << b)),
        )
    }

    /// Value of the `b`-th declared parent.
    pub fn bit(self, b: usize) -> bool {
        (self.0 >> b) & 1 == 1
    }
}

/// Topological order of the graph given by `parents`, or `CyclicGraph`.
///
/// Ties are broken by smallest node index, so the order is deterministic.
pub fn validate_graph(node_count: usize, parents: &[Vec<usize>]) -> Result<Vec<usize>> {
    if node_count == 0 {
        return Err(Error::InvalidGraph("graph must have at least one node".into()));
    }
    if node_count > MAX_NODES {
        return Err(Error::InvalidGraph(format!(
            "at most {MAX_NODES} nodes are supported, got {node_count}"
        )));
    }
    if parents.len() != node_count {
        return Err(Error::DimensionMismatch {
            expected: node_count,
            got: parents.len(),
        });
    }
    let mut children = vec![Vec::new(); node_count];
    let mut indegree = vec![0usize; node_count];
    for (i, ps) in parents.iter().enumerate() {
        let mut seen = 0u64;
        for &p in ps {
            if p >= node_count {
                return Err(Error::InvalidGraph(format!("node {i} has out-of-range parent {p}")));
            }
            if p == i {
                return Err(Error::InvalidGraph(format!("node {i} is its own parent")));
            }
            if seen & (1 << p) != 0 {
                return Err(Error::InvalidGraph(format!("node {i} lists parent {p} twice")));
            }
            seen |= 1 << p;
            children[p].push(i);
            indegree[i] += 1;
        }
    }
    let mut ready: BinaryHeap<Reverse<usize>> = (0..node_count)
        .filter(|&i| indegree[i] == 0)
        .map(Reverse)
        .collect();
    let mut order = Vec::with_capacity(node_count);
    while let Some(Reverse(v)) = ready.pop() {
        order.push(v);
        for &c in &children[v] {
            indegree[c] -= 1;
            if indegree[c] == 0 {
                ready.push(Reverse(c));
            }
        }
    }
    if order.len() != node_count {
        return Err(Error::CyclicGraph);
    }
    Ok(order)
}

/// Directed acyclic graph over binary random variables.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BayesNetGraph {
    parents: Vec<Vec<usize>>,
    order: Vec<usize>,
}

impl BayesNetGraph {
    pub fn new(node_count: usize, parents: Vec<Vec<usize>>) -> Result<Self> {
        let order = validate_graph(node_count, &parents)?;
        Ok(Self { parents, order })
    }

    /// `k` isolated nodes.
    pub fn independent(k: usize) -> Result<Self> {
        Self::new(k, vec![Vec::new(); k])
    }

    /// Chain `0 -> 1 -> ... -> k-1`.
    pub fn chain(k: usize) -> Result<Self> {
        let parents = (0..k)
            .map(|i| if i == 0 { Vec::new() } else { vec![i - 1] })
            .collect();
        Self::new(k, parents)
    }

    /// Class node 0 with `d` feature nodes `1..=d`, each child of the class.
    pub fn naive_bayes(d: usize) -> Result<Self> {
        let parents = (0..=d)
            .map(|i| if i == 0 { Vec::new() } else { vec![0] })
            .collect();
        Self::new(d + 1, parents)
    }

    pub fn node_count(&self) -> usize {
        self.parents.len()
    }

    pub fn parents(&self, node: usize) -> &[usize] {
        &self.parents[node]
    }

    pub fn all_parents(&self) -> &[Vec<usize>] {
        &self.parents
    }

    pub fn topological_order(&self) -> &[usize] {
        &self.order
    }

    pub fn in_degree(&self, node: usize) -> usize {
        self.parents[node].len()
    }

    pub fn max_in_degree(&self) -> usize {
        self.parents.iter().map(Vec::len).max().unwrap_or(0)
    }

    /// Number of parent configurations `2^|parents(node)|`.
    pub fn config_count(&self, node: usize) -> usize {
        1usize << self.parents[node].len()
    }

    /// Total number of (node, configuration) entries `m`.
    pub fn entry_count(&self) -> usize {
        (0..self.node_count()).map(|i| self.config_count(i)).sum()
    }

    /// Variable mask of the node's parents.
    pub fn parent_mask(&self, node: usize) -> u64 {
        self.parents[node].iter().fold(0, |acc, &p| acc | (1u64 << p))
    }

    /// Variable mask of the node together with its parents.
    pub fn family_mask(&self, node: usize) -> u64 {
        self.parent_mask(node) | (1u64 << node)
    }

    /// Parent configuration of `node` in a packed record.
    pub fn parent_config(&self, node: usize, record: u64) -> ParentConfig {
        ParentConfig(
            self.parents[node]
                .iter()
                .enumerate()
                .fold(0, |acc, (b, &p)| acc | ((((record >> p) & 1) as usize) << b)),
        )
    }

    /// Packed assignment of the node's family for configuration `config`
    /// and node value `value`; bits outside the family are zero.
    pub fn family_assignment(&self, node: usize, config: ParentConfig, value: bool) -> u64 {
        let mut x = u64::from(value) << node;
        for (b, &p) in self.parents[node].iter().enumerate() {
            if config.bit(b) {
                x |= 1 << p;
            }
        }
        x
    }

    /// All `(node, config)` pairs in canonical order.
    pub fn entries(&self) -> impl Iterator<Item = (usize, ParentConfig)> + '_ {
        (0..self.node_count())
            .flat_map(move |i| (0..self.config_count(i)).map(move |j| (i, ParentConfig(j))))
    }
}

/// Proper Beta distribution parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaParams {
    pub alpha: f64,
    pub beta: f64,
}

impl BetaParams {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite() && beta > 0.0 && beta.is_finite()) {
            return Err(Error::Domain(format!(
                "Beta parameters must be positive, got ({alpha}, {beta})"
            )));
        }
        Ok(Self { alpha, beta })
    }

    pub fn uniform() -> Self {
        Self { alpha: 1.0, beta: 1.0 }
    }

    pub fn mean(&self) -> f64 {
        self.alpha / (self.alpha + self.beta)
    }
}

/// Success/failure counts added to one Beta entry.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct UpdateCounts {
    pub alpha: f64,
    pub beta: f64,
}

/// One value per (node, parent configuration), shaped by a graph.
#[derive(Debug, Clone, PartialEq)]
pub struct PerEntry<T> {
    values: Vec<Vec<T>>,
}

impl<T: Clone> PerEntry<T> {
    pub fn filled(graph: &BayesNetGraph, value: T) -> Self {
        Self {
            values: (0..graph.node_count())
                .map(|i| vec![value.clone(); graph.config_count(i)])
                .collect(),
        }
    }
}

impl<T> PerEntry<T> {
    pub fn from_nested(values: Vec<Vec<T>>) -> Self {
        Self { values }
    }

    pub fn from_fn(graph: &BayesNetGraph, mut f: impl FnMut(usize, ParentConfig) -> T) -> Self {
        Self {
            values: (0..graph.node_count())
                .map(|i| (0..graph.config_count(i)).map(|j| f(i, ParentConfig(j))).collect())
                .collect(),
        }
    }

    pub fn try_from_fn(
        graph: &BayesNetGraph,
        mut f: impl FnMut(usize, ParentConfig) -> Result<T>,
    ) -> Result<Self> {
        let mut values = Vec::with_capacity(graph.node_count());
        for i in 0..graph.node_count() {
            let mut row = Vec::with_capacity(graph.config_count(i));
            for j in 0..graph.config_count(i) {
                row.push(f(i, ParentConfig(j))?);
            }
            values.push(row);
        }
        Ok(Self { values })
    }

    pub fn get(&self, node: usize, config: ParentConfig) -> Option<&T> {
        self.values.get(node).and_then(|row| row.get(config.0))
    }

    pub fn get_mut(&mut self, node: usize, config: ParentConfig) -> Option<&mut T> {
        self.values.get_mut(node).and_then(|row| row.get_mut(config.0))
    }

    pub fn node_count(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, node: usize) -> &[T] {
        &self.values[node]
    }

    pub fn len(&self) -> usize {
        self.values.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// True when this map has exactly the graph's entry layout.
    pub fn matches(&self, graph: &BayesNetGraph) -> bool {
        self.values.len() == graph.node_count()
            && self
                .values
                .iter()
                .enumerate()
                .all(|(i, row)| row.len() == graph.config_count(i))
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, ParentConfig, &T)> + '_ {
        self.values
            .iter()
            .enumerate()
            .flat_map(|(i, row)| row.iter().enumerate().map(move |(j, v)| (i, ParentConfig(j), v)))
    }

    pub fn map<U>(&self, mut f: impl FnMut(usize, ParentConfig, &T) -> U) -> PerEntry<U> {
        PerEntry {
            values: self
                .values
                .iter()
                .enumerate()
                .map(|(i, row)| {
                    row.iter()
                        .enumerate()
                        .map(|(j, v)| f(i, ParentConfig(j), v))
                        .collect()
                })
                .collect(),
        }
    }
}

/// Posterior update counts per entry.
pub type UpdateVector = PerEntry<UpdateCounts>;

/// Beta parameters per entry (priors or posteriors).
pub type EntryParams = PerEntry<BetaParams>;

impl UpdateVector {
    pub fn zeros(graph: &BayesNetGraph) -> Self {
        Self::filled(graph, UpdateCounts::default())
    }

    /// Entrywise sum; both operands must share a layout.
    pub fn add(&self, other: &UpdateVector) -> Result<UpdateVector> {
        if self.values.len() != other.values.len()
            || self.values.iter().zip(&other.values).any(|(a, b)| a.len() != b.len())
        {
            return Err(Error::DimensionMismatch {
                expected: self.len(),
                got: other.len(),
            });
        }
        Ok(self.map(|i, j, a| {
            let b = other.get(i, j).expect("layout checked");
            UpdateCounts {
                alpha: a.alpha + b.alpha,
                beta: a.beta + b.beta,
            }
        }))
    }

    /// Flatten into `(Δα, Δβ)` pairs in canonical entry order.
    pub fn flat(&self) -> Vec<f64> {
        self.iter().flat_map(|(_, _, c)| [c.alpha, c.beta]).collect()
    }
}

/// A complete binary dataset; every record has `node_count` bits.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    node_count: usize,
    records: Vec<u64>,
}

impl Dataset {
    pub fn new(node_count: usize, records: Vec<u64>) -> Result<Self> {
        if node_count == 0 || node_count > MAX_NODES {
            return Err(Error::InvalidGraph(format!(
                "record width must be in 1..={MAX_NODES}, got {node_count}"
            )));
        }
        let limit = if node_count == 64 { u64::MAX } else { (1u64 << node_count) - 1 };
        if let Some(bad) = records.iter().find(|&&r| r & !limit != 0) {
            return Err(Error::Domain(format!(
                "record {bad:#x} has bits beyond width {node_count}"
            )));
        }
        Ok(Self { node_count, records })
    }

    pub fn empty(node_count: usize) -> Result<Self> {
        Self::new(node_count, Vec::new())
    }

    /// Build from rows of 0/1 values.
    pub fn from_rows<R: AsRef<[u8]>>(node_count: usize, rows: &[R]) -> Result<Self> {
        let mut records = Vec::with_capacity(rows.len());
        for row in rows {
            let row = row.as_ref();
            if row.len() != node_count {
                return Err(Error::DimensionMismatch {
                    expected: node_count,
                    got: row.len(),
                });
            }
            let mut x = 0u64;
            for (c, &v) in row.iter().enumerate() {
                match v {
                    0 => {}
                    1 => x |= 1 << c,
                    _ => return Err(Error::Parse(format!("value {v} is not 0 or 1"))),
                }
            }
            records.push(x);
        }
        Self::new(node_count, records)
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[u64] {
        &self.records
    }

    pub fn value(&self, record: usize, node: usize) -> bool {
        (self.records[record] >> node) & 1 == 1
    }

    /// Subset of records by index.
    pub fn select(&self, indices: &[usize]) -> Dataset {
        Dataset {
            node_count: self.node_count,
            records: indices.iter().map(|&i| self.records[i]).collect(),
        }
    }

    pub fn concat(&self, other: &Dataset) -> Result<Dataset> {
        if self.node_count != other.node_count {
            return Err(Error::DimensionMismatch {
                expected: self.node_count,
                got: other.node_count,
            });
        }
        let mut records = self.records.clone();
        records.extend_from_slice(&other.records);
        Ok(Dataset {
            node_count: self.node_count,
            records,
        })
    }

    fn check_graph(&self, graph: &BayesNetGraph) -> Result<()> {
        if self.node_count != graph.node_count() {
            return Err(Error::DimensionMismatch {
                expected: graph.node_count(),
                got: self.node_count,
            });
        }
        Ok(())
    }
}

/// Exact conjugate update counts for every (node, configuration).
pub fn compute_updates(graph: &BayesNetGraph, data: &Dataset) -> Result<UpdateVector> {
    data.check_graph(graph)?;
    let mut out = UpdateVector::zeros(graph);
    for &x in data.records() {
        for i in 0..graph.node_count() {
            let j = graph.parent_config(i, x);
            let c = out.get_mut(i, j).expect("config in range");
            if (x >> i) & 1 == 1 {
                c.alpha += 1.0;
            } else {
                c.beta += 1.0;
            }
        }
    }
    Ok(out)
}

/// Elementwise `prior + updates`.
pub fn posterior_params(prior: &EntryParams, updates: &UpdateVector) -> Result<EntryParams> {
    let mut values = Vec::with_capacity(updates.node_count());
    for i in 0..updates.node_count() {
        let mut row = Vec::with_capacity(updates.row(i).len());
        for (j, u) in updates.row(i).iter().enumerate() {
            let p = prior
                .get(i, ParentConfig(j))
                .ok_or(Error::MissingPriorEntry { node: i, config: j })?;
            let (alpha, beta) = (p.alpha + u.alpha, p.beta + u.beta);
            if !(alpha > 0.0) || !(beta > 0.0) {
                return Err(Error::NonPositivePosteriorParam {
                    node: i,
                    config: j,
                    value: alpha.min(beta),
                });
            }
            row.push(BetaParams { alpha, beta });
        }
        values.push(row);
    }
    Ok(PerEntry::from_nested(values))
}

/// Counts over the Boolean hypercube; absent cells are zero.
#[derive(Debug, Clone, PartialEq)]
pub struct ContingencyTable {
    dimension: usize,
    cells: BTreeMap<u64, f64>,
}

impl ContingencyTable {
    pub fn new(dimension: usize) -> Self {
        Self {
            dimension,
            cells: BTreeMap::new(),
        }
    }

    pub fn from_cells(dimension: usize, cells: impl IntoIterator<Item = (u64, f64)>) -> Self {
        let mut t = Self::new(dimension);
        for (k, v) in cells {
            t.add_to(k, v);
        }
        t
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn get(&self, cell: u64) -> f64 {
        self.cells.get(&cell).copied().unwrap_or(0.0)
    }

    pub fn add_to(&mut self, cell: u64, v: f64) {
        *self.cells.entry(cell).or_insert(0.0) += v;
    }

    /// Non-zero cells in ascending order.
    pub fn cells(&self) -> impl Iterator<Item = (u64, f64)> + '_ {
        self.cells.iter().filter(|(_, &v)| v != 0.0).map(|(&k, &v)| (k, v))
    }

    pub fn total(&self) -> f64 {
        self.cells.values().sum()
    }

    pub fn add(&self, other: &ContingencyTable) -> Result<ContingencyTable> {
        if self.dimension != other.dimension {
            return Err(Error::DimensionMismatch {
                expected: self.dimension,
                got: other.dimension,
            });
        }
        let mut out = self.clone();
        for (k, v) in other.cells() {
            out.add_to(k, v);
        }
        Ok(out)
    }

    /// Dense cell vector, refused above `DENSE_THRESHOLD` dimensions.
    pub fn to_dense(&self) -> Result<Vec<f64>> {
        self.to_dense_with_threshold(DENSE_THRESHOLD)
    }

    pub fn to_dense_with_threshold(&self, threshold: usize) -> Result<Vec<f64>> {
        if self.dimension > threshold {
            return Err(Error::BudgetExceeded(format!(
                "table of dimension {} exceeds the dense threshold {threshold}",
                self.dimension
            )));
        }
        let mut dense = vec![0.0; 1usize << self.dimension];
        for (&k, &v) in &self.cells {
            dense[k as usize] += v;
        }
        Ok(dense)
    }
}

/// Contingency table of a dataset, one cell per distinct record.
pub fn build_table(data: &Dataset) -> ContingencyTable {
    let mut t = ContingencyTable::new(data.node_count());
    for &x in data.records() {
        t.add_to(x, 1.0);
    }
    t
}

/// Marginal of `table` on the variables in `mask`.
///
/// Cell `γ` of the result sums every `η` whose restriction to `mask` is
/// `γ`; the result has dimension `popcount(mask)`.
pub fn project_marginal(table: &ContingencyTable, mask: u64) -> ContingencyTable {
    let mut out = ContingencyTable::new(mask.count_ones() as usize);
    for (&k, &v) in &table.cells {
        out.add_to(restrict(k, mask), v);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_node_order() {
        let g = BayesNetGraph::independent(1).unwrap();
        assert_eq!(g.topological_order(), &[0]);
    }

    #[test]
    fn naive_bayes_order() {
        let g = BayesNetGraph::naive_bayes(2).unwrap();
        assert_eq!(g.topological_order(), &[0, 1, 2]);
    }

    #[test]
    fn reverse_declared_order() {
        let g = BayesNetGraph::new(3, vec![vec![1], vec![2], vec![]]).unwrap();
        assert_eq!(g.topological_order(), &[2, 1, 0]);
    }

    #[test]
    fn two_cycle_rejected() {
        assert_eq!(
            BayesNetGraph::new(2, vec![vec![1], vec![0]]),
            Err(Error::CyclicGraph)
        );
    }

    #[test]
    fn malformed_parents_rejected() {
        assert!(matches!(
            BayesNetGraph::new(2, vec![vec![], vec![1]]),
            Err(Error::InvalidGraph(_))
        ));
        assert!(matches!(
            BayesNetGraph::new(2, vec![vec![], vec![0, 0]]),
            Err(Error::InvalidGraph(_))
        ));
        assert!(matches!(
            BayesNetGraph::new(2, vec![vec![], vec![5]]),
            Err(Error::InvalidGraph(_))
        ));
    }

    #[test]
    fn single_node_counts() {
        let g = BayesNetGraph::independent(1).unwrap();
        let d = Dataset::from_rows(1, &[[1u8], [1], [0]]).unwrap();
        let u = compute_updates(&g, &d).unwrap();
        assert_eq!(
            *u.get(0, ParentConfig(0)).unwrap(),
            UpdateCounts { alpha: 2.0, beta: 1.0 }
        );
    }

    #[test]
    fn chain_routes_record_to_one_config() {
        let g = BayesNetGraph::chain(2).unwrap();
        let d = Dataset::from_rows(2, &[[1u8, 1]]).unwrap();
        let u = compute_updates(&g, &d).unwrap();
        assert_eq!(*u.get(1, ParentConfig(1)).unwrap(), UpdateCounts { alpha: 1.0, beta: 0.0 });
        assert_eq!(*u.get(1, ParentConfig(0)).unwrap(), UpdateCounts::default());
    }

    #[test]
    fn dimension_mismatch() {
        let g = BayesNetGraph::chain(3).unwrap();
        let d = Dataset::from_rows(2, &[[1u8, 1]]).unwrap();
        assert!(matches!(
            compute_updates(&g, &d),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn little_endian_parent_config() {
        let g = BayesNetGraph::new(3, vec![vec![], vec![], vec![1, 0]]).unwrap();
        // x1 = 1, x0 = 0 -> first declared parent (1) is bit 0.
        assert_eq!(g.parent_config(2, 0b010), ParentConfig(1));
        assert_eq!(g.parent_config(2, 0b001), ParentConfig(2));
        assert_eq!(g.family_assignment(2, ParentConfig(2), true), 0b101);
    }

    #[test]
    fn posterior_addition() {
        let g = BayesNetGraph::independent(1).unwrap();
        let prior = EntryParams::filled(&g, BetaParams::uniform());
        let mut u = UpdateVector::zeros(&g);
        assert_eq!(posterior_params(&prior, &u).unwrap(), prior);
        *u.get_mut(0, ParentConfig(0)).unwrap() = UpdateCounts { alpha: 2.0, beta: 1.0 };
        let p = posterior_params(&prior, &u).unwrap();
        assert_eq!(*p.get(0, ParentConfig(0)).unwrap(), BetaParams { alpha: 3.0, beta: 2.0 });

        let prior = EntryParams::filled(&g, BetaParams { alpha: 2.0, beta: 2.0 });
        *u.get_mut(0, ParentConfig(0)).unwrap() = UpdateCounts { alpha: 0.5, beta: 0.0 };
        let p = posterior_params(&prior, &u).unwrap();
        assert_eq!(*p.get(0, ParentConfig(0)).unwrap(), BetaParams { alpha: 2.5, beta: 2.0 });
    }

    #[test]
    fn missing_prior_entry() {
        let g = BayesNetGraph::chain(2).unwrap();
        let small = BayesNetGraph::independent(2).unwrap();
        let prior = EntryParams::filled(&small, BetaParams::uniform());
        let u = UpdateVector::zeros(&g);
        assert_eq!(
            posterior_params(&prior, &u),
            Err(Error::MissingPriorEntry { node: 1, config: 1 })
        );
    }

    #[test]
    fn tables_and_marginals() {
        let empty = build_table(&Dataset::empty(3).unwrap());
        assert_eq!(empty.to_dense().unwrap(), vec![0.0; 8]);

        let d = Dataset::from_rows(2, &[[0u8, 0], [0, 0], [1, 1]]).unwrap();
        let t = build_table(&d);
        assert_eq!(t.cells().collect::<Vec<_>>(), vec![(0b00, 2.0), (0b11, 1.0)]);
        assert_eq!(project_marginal(&t, 0b11), t);
        let m = project_marginal(&t, 0b01);
        assert_eq!(m.dimension(), 1);
        assert_eq!(m.to_dense().unwrap(), vec![2.0, 1.0]);
    }

    #[test]
    fn dense_threshold_enforced() {
        let t = ContingencyTable::new(30);
        assert!(matches!(t.to_dense(), Err(Error::BudgetExceeded(_))));
    }

    #[test]
    fn restrict_embed_roundtrip() {
        let mask = 0b1011_0100;
        for local in 0..16 {
            assert_eq!(restrict(embed(local, mask), mask), local);
        }
        assert_eq!(restrict(0b1000_0100, mask), 0b1001);
    }
}

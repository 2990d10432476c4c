// SPDX-License-Identifier: Apache-2.0

//! Experiment orchestration: naive Bayes sweeps over ε, regression sweeps
//! over prior precision, single mechanism releases and the verification
//! suite.
//!
//! Every repeat draws from substreams keyed by `(purpose, mechanism,
//! grid index, repeat)`, so output does not depend on scheduling, and rows
//! are emitted in `(mechanism, grid, repeat)` order.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fourier::{
    downward_closure, fourier_posterior_params_with, release_coefficients, CoefficientSet, DownwardClosure,
    StealthPolicy, DEFAULT_T,
};
use crate::graph::{
    compute_updates, posterior_params, BayesNetGraph, BetaParams, Dataset, EntryParams, PerEntry, UpdateVector,
};
use crate::io::{self, NetworkSpec};
use crate::laplace::{perturb_updates, LaplaceNoiseSpec};
use crate::map::{exp_mechanism_draws, GridSpec, MapSensitivity};
use crate::metrics::accuracy;
use crate::regress::{self, posterior, predictive_mse, Precision, RegressionData, RegressionPrivacyReport};
use crate::rng::Substreams;
use crate::sampler::{self, NaiveBayesDraws, NodeMetric};
use crate::stats::mean_se;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    #[default]
    Nb,
    Linreg,
    Mechanism,
    Verify,
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "nb" => Ok(Task::Nb),
            "linreg" => Ok(Task::Linreg),
            "mechanism" => Ok(Task::Mechanism),
            "verify" => Ok(Task::Verify),
            other => Err(Error::Parse(format!("unknown task {other:?}"))),
        }
    }
}

/// Mechanisms known to the harness.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mechanism {
    None,
    Laplace,
    Fourier,
    Sampler,
    Map,
}

impl Mechanism {
    pub fn name(self) -> &'static str {
        match self {
            Mechanism::None => "none",
            Mechanism::Laplace => "laplace",
            Mechanism::Fourier => "fourier",
            Mechanism::Sampler => "sampler",
            Mechanism::Map => "map",
        }
    }

    fn code(self) -> u64 {
        self as u64
    }
}

impl FromStr for Mechanism {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "none" | "nonprivate" | "non-private" => Ok(Mechanism::None),
            "laplace" => Ok(Mechanism::Laplace),
            "fourier" => Ok(Mechanism::Fourier),
            "sampler" => Ok(Mechanism::Sampler),
            "map" => Ok(Mechanism::Map),
            other => Err(Error::Parse(format!("unknown mechanism {other:?}"))),
        }
    }
}

impl std::fmt::Display for Mechanism {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Handling of Fourier releases whose rebuilt counts go negative.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StealthMode {
    /// Release again from a fresh substream.
    #[default]
    Rerun,
    /// Truncate negative counts at zero.
    Clamp,
}

impl FromStr for StealthMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "rerun" => Ok(StealthMode::Rerun),
            "clamp" => Ok(StealthMode::Clamp),
            other => Err(Error::Parse(format!("unknown stealth mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NbConfig {
    pub features: usize,
    pub records: usize,
    /// Monte Carlo draws for the sampler predictive.
    pub samples: usize,
    pub t: f64,
    pub stealth: StealthMode,
    pub max_stealth_attempts: usize,
    pub prior: [f64; 2],
    /// Generating parameter used for every entry instead of Beta(1,1) draws.
    pub theta: Option<f64>,
    pub data: Option<PathBuf>,
}

impl Default for NbConfig {
    fn default() -> Self {
        Self {
            features: 16,
            records: 1000,
            samples: 1000,
            t: DEFAULT_T,
            stealth: StealthMode::Rerun,
            max_stealth_attempts: 1000,
            prior: [1.0, 1.0],
            theta: None,
            data: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinregConfig {
    pub features: usize,
    pub records: usize,
    /// Model noise variance on the scaled data.
    pub sigma2: f64,
    /// Noise standard deviation of the synthetic generator.
    pub noise_sd: f64,
    /// Truncation radius; `10/sqrt(b)` when absent.
    pub radius: Option<f64>,
    /// Posterior draws averaged by the private predictor.
    pub samples: usize,
    pub weights: Option<Vec<f64>>,
    pub data: Option<PathBuf>,
}

impl Default for LinregConfig {
    fn default() -> Self {
        Self {
            features: 5,
            records: 2000,
            sigma2: 0.05,
            noise_sd: 0.5,
            radius: None,
            samples: 1,
            weights: None,
            data: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MechanismConfig {
    pub epsilon: f64,
    pub t: f64,
    pub samples: usize,
    pub network: Option<PathBuf>,
    pub data: Option<PathBuf>,
    pub grid: Option<PathBuf>,
    /// Explicit utility sensitivity for the MAP mechanism.
    pub map_delta: Option<f64>,
    /// Radius `r` for `Δ = sqrt(L r)` when `map_delta` is absent.
    pub map_radius: f64,
}

impl Default for MechanismConfig {
    fn default() -> Self {
        Self {
            epsilon: 1.0,
            t: DEFAULT_T,
            samples: 1,
            network: None,
            data: None,
            grid: None,
            map_delta: None,
            map_radius: 1.0,
        }
    }
}

/// Full experiment configuration, loadable from TOML or JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub task: Task,
    pub mechanisms: Vec<Mechanism>,
    pub epsilon_grid: Vec<f64>,
    pub b_grid: Vec<f64>,
    pub repeats: usize,
    pub train_fraction: Option<f64>,
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub nb: NbConfig,
    pub linreg: LinregConfig,
    pub mechanism: MechanismConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            task: Task::Nb,
            mechanisms: Vec::new(),
            epsilon_grid: vec![0.5, 1.0, 2.0, 5.0, 10.0, 20.0],
            b_grid: vec![0.1, 1.0, 10.0],
            repeats: 100,
            train_fraction: None,
            seed: 0,
            out: None,
            nb: NbConfig::default(),
            linreg: LinregConfig::default(),
            mechanism: MechanismConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse(format!("config: {e}")))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse(format!("config: {e}")))
    }

    /// Parses by extension: `.json` as JSON, anything else as TOML.
    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        match path.extension().and_then(|e| e.to_str()) {
            Some("json") => Self::from_json(&text),
            _ => Self::from_toml(&text),
        }
    }

    /// Mechanisms to run, falling back to the task defaults.
    pub fn effective_mechanisms(&self) -> Vec<Mechanism> {
        if !self.mechanisms.is_empty() {
            return self.mechanisms.clone();
        }
        match self.task {
            Task::Nb => vec![Mechanism::None, Mechanism::Laplace, Mechanism::Fourier, Mechanism::Sampler],
            Task::Linreg => vec![Mechanism::None, Mechanism::Sampler],
            Task::Mechanism => vec![Mechanism::Laplace],
            Task::Verify => Vec::new(),
        }
    }

    pub fn effective_train_fraction(&self) -> f64 {
        self.train_fraction.unwrap_or(match self.task {
            Task::Linreg => 0.1,
            _ => 0.05,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.repeats == 0 {
            return Err(Error::Domain("repeats must be at least 1".into()));
        }
        let frac = self.effective_train_fraction();
        if !(frac > 0.0 && frac < 1.0) {
            return Err(Error::Domain(format!("train fraction must lie in (0, 1), got {frac}")));
        }
        let positive = |name: &str, grid: &[f64]| {
            if grid.is_empty() || grid.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
                Err(Error::Domain(format!("{name} must be non-empty and strictly positive")))
            } else {
                Ok(())
            }
        };
        let mechs = self.effective_mechanisms();
        match self.task {
            Task::Nb => {
                positive("epsilon grid", &self.epsilon_grid)?;
                if self.nb.features == 0 || self.nb.records < 2 || self.nb.samples == 0 {
                    return Err(Error::Domain("nb needs features >= 1, records >= 2, samples >= 1".into()));
                }
                if let Some(m) = mechs.iter().find(|m| **m == Mechanism::Map) {
                    return Err(Error::Domain(format!("mechanism {m} is not part of the nb sweep")));
                }
            }
            Task::Linreg => {
                positive("b grid", &self.b_grid)?;
                if let Some(m) = mechs.iter().find(|m| !matches!(m, Mechanism::None | Mechanism::Sampler)) {
                    return Err(Error::Domain(format!("mechanism {m} is not available for linreg")));
                }
                if self.linreg.samples == 0 {
                    return Err(Error::Domain("samples must be at least 1".into()));
                }
            }
            Task::Mechanism => {
                if mechs.len() != 1 || mechs[0] == Mechanism::None {
                    return Err(Error::Domain("mechanism task needs exactly one private mechanism".into()));
                }
                positive("epsilon", &[self.mechanism.epsilon])
                    .or_else(|e| if mechs[0] == Mechanism::Map && self.mechanism.epsilon == 0.0 { Ok(()) } else { Err(e) })?;
            }
            Task::Verify => {}
        }
        Ok(())
    }
}

/// One line of the metrics CSV.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsRow {
    pub mechanism: String,
    pub param: f64,
    pub repeat: usize,
    pub metric: String,
    pub value: f64,
}

pub const METRICS_HEADER: &str = "mechanism,param,repeat,metric,value";

pub fn metrics_csv(rows: &[MetricsRow]) -> String {
    let mut s = String::with_capacity(rows.len() * 40);
    s.push_str(METRICS_HEADER);
    s.push('\n');
    for r in rows {
        let _ = writeln!(s, "{},{},{},{},{}", r.mechanism, r.param, r.repeat, r.metric, r.value);
    }
    s
}

/// Mean and standard error of `metric` per `(mechanism, param)`.
pub fn summarize(rows: &[MetricsRow], metric: &str) -> BTreeMap<(String, u64), (f64, f64)> {
    let mut groups: BTreeMap<(String, u64), Vec<f64>> = BTreeMap::new();
    for r in rows.iter().filter(|r| r.metric == metric) {
        groups.entry((r.mechanism.clone(), r.param.to_bits())).or_default().push(r.value);
    }
    groups.into_iter().map(|(k, v)| (k, mean_se(&v))).collect()
}

/// Closed-form predictive `Pr(Y = 1 | x)` of a naive Bayes network.
#[derive(Debug, Clone)]
pub struct NbPredictor {
    class: [f64; 2],
    /// Per feature, per class: `[ln Pr(x=0), ln Pr(x=1)]`.
    feature: Vec<[[f64; 2]; 2]>,
}

impl NbPredictor {
    pub fn new(posterior: &EntryParams) -> Result<Self> {
        let nodes = posterior.node_count();
        if nodes < 2 {
            return Err(Error::MissingPosteriorEntry { node: 1, config: 0 });
        }
        if posterior.row(0).is_empty() {
            return Err(Error::MissingPosteriorEntry { node: 0, config: 0 });
        }
        let logs = |p: BetaParams| {
            let s = p.alpha + p.beta;
            [(p.beta / s).ln(), (p.alpha / s).ln()]
        };
        let mut feature = Vec::with_capacity(nodes - 1);
        for i in 1..nodes {
            let row = posterior.row(i);
            if row.len() < 2 {
                return Err(Error::MissingPosteriorEntry { node: i, config: row.len() });
            }
            feature.push([logs(row[0]), logs(row[1])]);
        }
        Ok(Self {
            class: logs(posterior.row(0)[0]),
            feature,
        })
    }

    /// Packed record; bit 0 (the class) is ignored.
    pub fn predict(&self, record: u64) -> f64 {
        let mut l = self.class;
        for (f, table) in self.feature.iter().enumerate() {
            let bit = ((record >> (f + 1)) & 1) as usize;
            l[0] += table[0][bit];
            l[1] += table[1][bit];
        }
        1.0 / (1.0 + (l[0] - l[1]).exp())
    }
}

/// `Pr(Y = 1 | x)` for a naive Bayes posterior (class node 0, feature `i`
/// at node `i` with the class as its only parent).
pub fn nb_predictive_closed_form(posterior: &EntryParams, record: u64) -> Result<f64> {
    Ok(NbPredictor::new(posterior)?.predict(record))
}

/// Synthetic naive Bayes data with its generating parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthNb {
    pub data: Dataset,
    pub theta: PerEntry<f64>,
}

const KEY_THETA: u64 = 1;
const KEY_RECORDS: u64 = 2;
const KEY_SPLIT: u64 = 3;
const KEY_MECH: u64 = 4;
const KEY_WEIGHTS: u64 = 5;

/// Ancestral sampling from a naive Bayes model; parameters are drawn from
/// Beta(1,1) unless given.
pub fn synth_nb(d: usize, n: usize, seed: u64, theta: Option<&PerEntry<f64>>) -> Result<SynthNb> {
    if d == 0 || n < 2 {
        return Err(Error::Domain("synthetic naive Bayes needs d >= 1 and n >= 2".into()));
    }
    let graph = BayesNetGraph::naive_bayes(d)?;
    let streams = Substreams::new(seed);
    let theta = match theta {
        Some(t) if t.matches(&graph) => t.clone(),
        Some(t) => {
            return Err(Error::DimensionMismatch {
                expected: graph.entry_count(),
                got: t.len(),
            })
        }
        None => {
            let mut rng = streams.rng(&[KEY_THETA]);
            PerEntry::from_fn(&graph, |_, _| rng.random::<f64>())
        }
    };
    let mut rng = streams.rng(&[KEY_RECORDS]);
    let records = (0..n)
        .map(|_| {
            let y = rng.random::<f64>() < theta.row(0)[0];
            let mut x = y as u64;
            for i in 1..=d {
                if rng.random::<f64>() < theta.row(i)[y as usize] {
                    x |= 1 << i;
                }
            }
            x
        })
        .collect();
    Ok(SynthNb {
        data: Dataset::new(d + 1, records)?,
        theta,
    })
}

/// Disjoint train/test index sets covering `0..n`.
pub fn train_test_split(n: usize, train_fraction: f64, streams: &Substreams) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut streams.rng(&[KEY_SPLIT]));
    let k = ((n as f64 * train_fraction).round() as usize).clamp(1, n.saturating_sub(1).max(1));
    let test = idx.split_off(k);
    (idx, test)
}

fn labels(data: &Dataset) -> Vec<bool> {
    (0..data.len()).map(|r| data.value(r, 0)).collect()
}

fn accuracy_of(predict: impl Fn(u64) -> f64, test: &Dataset) -> Result<f64> {
    let preds: Vec<f64> = test.records().iter().map(|&x| predict(x)).collect();
    accuracy(&preds, &labels(test))
}

/// Result of a naive Bayes sweep.
#[derive(Debug, Clone)]
pub struct NbOutcome {
    pub rows: Vec<MetricsRow>,
    /// Fourier releases repeated because a rebuilt count was negative.
    pub stealth_reruns: usize,
    /// `(ε, repeat)` pairs where the sampler fell back to the constant
    /// predictor because `ω >= 1/2`.
    pub sampler_fallbacks: usize,
}

struct FourierRelease {
    params: EntryParams,
    reruns: usize,
}

#[allow(clippy::too_many_arguments)]
fn fourier_release(
    train: &Dataset,
    graph: &BayesNetGraph,
    closure: &DownwardClosure,
    priors: &EntryParams,
    epsilon: f64,
    t: f64,
    mode: StealthMode,
    max_attempts: usize,
    streams: &Substreams,
) -> Result<FourierRelease> {
    let policy = match mode {
        StealthMode::Rerun => StealthPolicy::Report,
        StealthMode::Clamp => StealthPolicy::Clamp,
    };
    for attempt in 0..max_attempts.max(1) {
        let coeffs: CoefficientSet = release_coefficients(train, closure, epsilon, t, &streams.child(&[attempt as u64]))?;
        match fourier_posterior_params_with(&coeffs, graph, priors, policy) {
            Ok(params) => return Ok(FourierRelease { params, reruns: attempt }),
            Err(Error::NonPositivePosteriorParam { .. }) => continue,
            Err(e) => return Err(e),
        }
    }
    Err(Error::BudgetExceeded(format!(
        "no stealthy Fourier release in {max_attempts} attempts"
    )))
}

/// Naive Bayes sweep: for each repeat, a fresh train/test split; for each
/// ε and mechanism, the test accuracy of the thresholded predictive.
pub fn run_nb_experiment(cfg: &ExperimentConfig) -> Result<NbOutcome> {
    cfg.validate()?;
    let nb = &cfg.nb;
    let root = Substreams::new(cfg.seed);
    let data = match &nb.data {
        Some(path) => io::read_dataset_csv(std::fs::File::open(path)?)?,
        None => {
            let theta = nb
                .theta
                .map(|t| {
                    let g = BayesNetGraph::naive_bayes(nb.features)?;
                    Ok::<_, Error>(PerEntry::filled(&g, t))
                })
                .transpose()?;
            synth_nb(nb.features, nb.records, root.child(&[KEY_RECORDS]).seed(), theta.as_ref())?.data
        }
    };
    let graph = BayesNetGraph::naive_bayes(data.node_count() - 1)?;
    let priors = EntryParams::filled(&graph, BetaParams::new(nb.prior[0], nb.prior[1])?);
    let closure = downward_closure(&graph);
    let mechs = cfg.effective_mechanisms();
    let frac = cfg.effective_train_fraction();

    struct RepeatResult {
        acc: Vec<Vec<f64>>,
        reruns: usize,
        fallbacks: usize,
    }

    let per_repeat: Vec<RepeatResult> = (0..cfg.repeats)
        .into_par_iter()
        .map(|r| -> Result<RepeatResult> {
            let (train_idx, test_idx) = train_test_split(data.len(), frac, &root.child(&[KEY_SPLIT, r as u64]));
            let train = data.select(&train_idx);
            let test = data.select(&test_idx);
            let updates: UpdateVector = compute_updates(&graph, &train)?;
            let exact = posterior_params(&priors, &updates)?;
            let exact_pred = NbPredictor::new(&exact)?;
            let exact_acc = accuracy_of(|x| exact_pred.predict(x), &test)?;
            let mut reruns = 0;
            let mut fallbacks = 0;
            let mut acc = Vec::with_capacity(mechs.len());
            for &m in &mechs {
                let mut row = Vec::with_capacity(cfg.epsilon_grid.len());
                for (e, &eps) in cfg.epsilon_grid.iter().enumerate() {
                    let s = root.child(&[KEY_MECH, m.code(), e as u64, r as u64]);
                    let a = match m {
                        Mechanism::None => exact_acc,
                        Mechanism::Laplace => {
                            let spec = LaplaceNoiseSpec::new(&graph, eps, train.len())?;
                            let released = perturb_updates(&updates, &spec, &s)?;
                            let post = posterior_params(&priors, released.as_updates())?;
                            let p = NbPredictor::new(&post)?;
                            accuracy_of(|x| p.predict(x), &test)?
                        }
                        Mechanism::Fourier => {
                            let rel = fourier_release(
                                &train,
                                &graph,
                                &closure,
                                &priors,
                                eps,
                                nb.t,
                                nb.stealth,
                                nb.max_stealth_attempts,
                                &s,
                            )?;
                            reruns += rel.reruns;
                            let p = NbPredictor::new(&rel.params)?;
                            accuracy_of(|x| p.predict(x), &test)?
                        }
                        Mechanism::Sampler => match sampler::trim_level(eps) {
                            Ok(omega) => {
                                let draws = NaiveBayesDraws::sample(&exact, Some(omega), nb.samples, &s)?;
                                accuracy_of(|x| draws.predict(x), &test)?
                            }
                            Err(Error::OmegaTooLarge { .. }) => {
                                fallbacks += 1;
                                accuracy_of(|_| 0.5, &test)?
                            }
                            Err(e) => return Err(e),
                        },
                        Mechanism::Map => unreachable!("rejected by validate"),
                    };
                    row.push(a);
                }
                acc.push(row);
            }
            Ok(RepeatResult { acc, reruns, fallbacks })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut rows = Vec::with_capacity(mechs.len() * cfg.epsilon_grid.len() * cfg.repeats);
    for (mi, m) in mechs.iter().enumerate() {
        for (e, &eps) in cfg.epsilon_grid.iter().enumerate() {
            for (r, res) in per_repeat.iter().enumerate() {
                rows.push(MetricsRow {
                    mechanism: m.name().into(),
                    param: eps,
                    repeat: r,
                    metric: "accuracy".into(),
                    value: res.acc[mi][e],
                });
            }
        }
    }
    Ok(NbOutcome {
        rows,
        stealth_reruns: per_repeat.iter().map(|r| r.reruns).sum(),
        sampler_fallbacks: per_repeat.iter().map(|r| r.fallbacks).sum(),
    })
}

/// Synthetic regression data `y = x·w + noise` with standard normal
/// features; weights are standard normal unless given.
pub fn synth_linreg(
    d: usize,
    n: usize,
    noise_sd: f64,
    weights: Option<&[f64]>,
    seed: u64,
) -> Result<(DMatrix<f64>, DVector<f64>, DVector<f64>)> {
    if d == 0 || n < 2 {
        return Err(Error::Domain("synthetic regression needs d >= 1 and n >= 2".into()));
    }
    let streams = Substreams::new(seed);
    let w = match weights {
        Some(w) if w.len() == d => DVector::from_column_slice(w),
        Some(w) => return Err(Error::DimensionMismatch { expected: d, got: w.len() }),
        None => {
            let mut rng = streams.rng(&[KEY_WEIGHTS]);
            DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal))
        }
    };
    let noise = Normal::new(0.0, noise_sd).map_err(|e| Error::Domain(e.to_string()))?;
    let mut rng = streams.rng(&[KEY_RECORDS]);
    let x = DMatrix::from_fn(n, d, |_, _| rng.sample::<f64, _>(StandardNormal));
    let mut y = &x * &w;
    for v in y.iter_mut() {
        *v += noise.sample(&mut rng);
    }
    Ok((x, y, w))
}

/// Result of a regression sweep.
#[derive(Debug, Clone)]
pub struct LinregOutcome {
    pub rows: Vec<MetricsRow>,
    /// Privacy constants per grid point, at the radius in use.
    pub privacy: Vec<(f64, RegressionPrivacyReport)>,
}

/// Regression sweep over prior precision `b`: non-private posterior-mean MSE
/// and the MSE of the truncated-posterior sampler.
pub fn run_linreg_experiment(cfg: &ExperimentConfig) -> Result<LinregOutcome> {
    cfg.validate()?;
    let lc = &cfg.linreg;
    let root = Substreams::new(cfg.seed);
    let (x, y) = match &lc.data {
        Some(path) => io::read_regression_csv(std::fs::File::open(path)?)?,
        None => {
            let (x, y, _) = synth_linreg(lc.features, lc.records, lc.noise_sd, lc.weights.as_deref(), root.child(&[KEY_RECORDS]).seed())?;
            (x, y)
        }
    };
    let data = RegressionData::ingest(x, y, lc.sigma2)?;
    let mechs = cfg.effective_mechanisms();
    let frac = cfg.effective_train_fraction();
    let radius_for = |b: f64| lc.radius.unwrap_or_else(|| regress::default_radius(b));

    let n_train = ((data.len() as f64 * frac).round() as usize).clamp(1, data.len().saturating_sub(1).max(1));
    let privacy = cfg
        .b_grid
        .iter()
        .map(|&b| (b, regress::regression_privacy(radius_for(b), n_train, data.dim(), lc.sigma2)))
        .collect();

    let per_repeat: Vec<Vec<Vec<f64>>> = (0..cfg.repeats)
        .into_par_iter()
        .map(|r| -> Result<Vec<Vec<f64>>> {
            let (train_idx, test_idx) = train_test_split(data.len(), frac, &root.child(&[KEY_SPLIT, r as u64]));
            let train = data.select(&train_idx);
            let test = data.select(&test_idx);
            let mut out = Vec::with_capacity(mechs.len());
            for &m in &mechs {
                let mut row = Vec::with_capacity(cfg.b_grid.len());
                for (bi, &b) in cfg.b_grid.iter().enumerate() {
                    let post = posterior(&train, &Precision::Scalar(b), radius_for(b))?;
                    let mse = match m {
                        Mechanism::None => regress::mse_at(post.mu_n(), test.x(), test.y())?,
                        Mechanism::Sampler => {
                            let mut rng = root.child(&[KEY_MECH, m.code(), bi as u64, r as u64]).rng(&[]);
                            predictive_mse(&post, test.x(), test.y(), lc.samples, &mut rng)?
                        }
                        other => return Err(Error::Domain(format!("mechanism {other} is not available for linreg"))),
                    };
                    row.push(mse);
                }
                out.push(row);
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut rows = Vec::new();
    for (mi, m) in mechs.iter().enumerate() {
        for (bi, &b) in cfg.b_grid.iter().enumerate() {
            for (r, res) in per_repeat.iter().enumerate() {
                rows.push(MetricsRow {
                    mechanism: m.name().into(),
                    param: b,
                    repeat: r,
                    metric: "mse".into(),
                    value: res[mi][bi],
                });
            }
        }
    }
    Ok(LinregOutcome { rows, privacy })
}

/// Named CSV documents produced by a single mechanism release; the first is
/// the primary output.
pub type MechanismOutput = Vec<(String, String)>;

fn to_string(write: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<String> {
    let mut buf = Vec::new();
    write(&mut buf)?;
    String::from_utf8(buf).map_err(|e| Error::Parse(e.to_string()))
}

fn mechanism_inputs(cfg: &ExperimentConfig) -> Result<(BayesNetGraph, EntryParams, Dataset)> {
    let mc = &cfg.mechanism;
    let (graph, priors) = match &mc.network {
        Some(path) => NetworkSpec::from_json(&std::fs::read_to_string(path)?)?.build()?,
        None => {
            let g = BayesNetGraph::naive_bayes(cfg.nb.features)?;
            let p = EntryParams::filled(&g, BetaParams::new(cfg.nb.prior[0], cfg.nb.prior[1])?);
            (g, p)
        }
    };
    let data = match &mc.data {
        Some(path) => io::read_dataset_csv(std::fs::File::open(path)?)?,
        None if mc.network.is_none() => {
            synth_nb(cfg.nb.features, cfg.nb.records, Substreams::new(cfg.seed).child(&[KEY_RECORDS]).seed(), None)?.data
        }
        None => return Err(Error::Domain("a dataset is required with a custom network".into())),
    };
    if data.node_count() != graph.node_count() {
        return Err(Error::DimensionMismatch {
            expected: graph.node_count(),
            got: data.node_count(),
        });
    }
    Ok((graph, priors, data))
}

/// Log-likelihood of the counts at parameters `θ` (one per entry).
fn network_log_likelihood(graph: &BayesNetGraph, updates: &UpdateVector, theta: &[f64]) -> f64 {
    graph
        .entries()
        .zip(theta)
        .map(|((i, j), &t)| {
            let u = updates.get(i, j).expect("layout");
            u.alpha * t.ln() + u.beta * (1.0 - t).ln()
        })
        .sum()
}

/// A single release by the configured mechanism.
pub fn run_mechanism(cfg: &ExperimentConfig) -> Result<MechanismOutput> {
    cfg.validate()?;
    let mc = &cfg.mechanism;
    let mech = cfg.effective_mechanisms()[0];
    let (graph, priors, data) = mechanism_inputs(cfg)?;
    let root = Substreams::new(cfg.seed).child(&[KEY_MECH, mech.code()]);
    let updates = compute_updates(&graph, &data)?;
    match mech {
        Mechanism::Laplace => {
            let spec = LaplaceNoiseSpec::new(&graph, mc.epsilon, data.len())?;
            let released = perturb_updates(&updates, &spec, &root)?;
            Ok(vec![("updates".into(), to_string(|b| io::write_updates_csv(&released, b))?)])
        }
        Mechanism::Fourier => {
            let closure = downward_closure(&graph);
            let policy = match cfg.nb.stealth {
                StealthMode::Rerun => StealthPolicy::Report,
                StealthMode::Clamp => StealthPolicy::Clamp,
            };
            let mut attempt = 0u64;
            loop {
                let coeffs = release_coefficients(&data, &closure, mc.epsilon, mc.t, &root.child(&[attempt]))?;
                match fourier_posterior_params_with(&coeffs, &graph, &priors, policy) {
                    Ok(params) => {
                        return Ok(vec![
                            ("coefficients".into(), to_string(|b| io::write_coefficients_csv(&coeffs, b))?),
                            ("posterior".into(), to_string(|b| io::write_params_csv(&params, b))?),
                        ])
                    }
                    Err(Error::NonPositivePosteriorParam { .. }) if (attempt as usize) + 1 < cfg.nb.max_stealth_attempts => {
                        attempt += 1;
                    }
                    Err(e) => return Err(e),
                }
            }
        }
        Mechanism::Sampler => {
            let post = posterior_params(&priors, &updates)?;
            let draws = sampler::trimmed_posterior_draws(&post, mc.epsilon, mc.samples.max(1), &root)?;
            Ok(vec![("draws".into(), to_string(|b| io::write_draws_csv(&draws, b))?)])
        }
        Mechanism::Map => {
            let path = mc.grid.as_ref().ok_or(Error::Domain("the map mechanism needs a grid file".into()))?;
            let grid = io::read_grid_csv(std::fs::File::open(path)?)?;
            if grid.points().iter().any(|p| p.len() != graph.entry_count()) {
                return Err(Error::DimensionMismatch {
                    expected: graph.entry_count(),
                    got: grid.point(0).len(),
                });
            }
            if grid.points().iter().flatten().any(|&t| !(t > 0.0 && t < 1.0)) {
                return Err(Error::Domain("grid parameters must lie in (0, 1)".into()));
            }
            let utilities: Vec<f64> = grid
                .points()
                .iter()
                .zip(grid.prior_mass())
                .map(|(p, &m)| network_log_likelihood(&graph, &updates, p) + m.ln())
                .collect();
            let delta = match mc.map_delta {
                Some(d) => MapSensitivity::exact(d)?,
                None => {
                    let l = grid
                        .points()
                        .iter()
                        .map(|p| {
                            let mut it = p.iter().copied();
                            let theta = PerEntry::from_fn(&graph, |_, _| it.next().unwrap_or(0.5));
                            sampler::node_lipschitz_constants(&graph, &theta, NodeMetric::Family)
                                .map(|s| sampler::compose_lipschitz(&s))
                        })
                        .collect::<Result<Vec<_>>>()?
                        .into_iter()
                        .fold(0.0, f64::max);
                    MapSensitivity::lipschitz(l.max(f64::MIN_POSITIVE), mc.map_radius)?
                }
            };
            let draws = exp_mechanism_draws(&grid, &utilities, mc.epsilon, delta, mc.samples.max(1), &mut root.rng(&[]))?;
            let mut s = String::from("draw,index");
            for c in 0..graph.entry_count() {
                let _ = write!(s, ",theta_{c}");
            }
            s.push('\n');
            for (k, &idx) in draws.iter().enumerate() {
                let _ = write!(s, "{k},{idx}");
                for v in grid.point(idx) {
                    let _ = write!(s, ",{v}");
                }
                s.push('\n');
            }
            Ok(vec![("map".into(), s)])
        }
        Mechanism::None => Err(Error::Domain("mechanism task needs a private mechanism".into())),
    }
}

/// One entry of the verification report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub pass: bool,
    pub checks: Vec<CheckResult>,
}

fn check(name: &str, f: impl FnOnce() -> Result<(bool, String)>) -> CheckResult {
    match f() {
        Ok((pass, detail)) => CheckResult {
            name: name.into(),
            pass,
            detail,
        },
        Err(e) => CheckResult {
            name: name.into(),
            pass: false,
            detail: format!("error: {e}"),
        },
    }
}

/// Oracle suite: exact sensitivity, analytic Laplace privacy, KL closed
/// form against quadrature, Fourier exactness and consistency, softmax
/// normalization, and the trimmed sampler's distribution.
pub fn run_verify(seed: u64) -> VerifyReport {
    use crate::fourier::{exact_coefficients, reconstruct_on, MarginalTable};
    use crate::graph::build_table;
    use crate::laplace::sensitivity;
    use crate::metrics::{all_dags, exhaustive_sensitivity, kl_beta, kl_beta_quadrature, laplace_density_ratio_check, random_shift};
    use crate::stats::{ks_p_value, ks_statistic};
    use statrs::distribution::{Beta as BetaDist, ContinuousCDF};

    let streams = Substreams::new(seed);
    let mut checks = Vec::new();

    checks.push(check("sensitivity_exhaustive", || {
        let mut worst_ratio = 0.0f64;
        let dags = all_dags(3)?;
        for g in &dags {
            worst_ratio = worst_ratio.max(exhaustive_sensitivity(g, 3)? / sensitivity(g));
        }
        Ok((worst_ratio <= 1.0, format!("{} graphs, max ratio to 2|I| = {worst_ratio}", dags.len())))
    }));

    checks.push(check("laplace_density_ratio", || {
        let g = BayesNetGraph::chain(3)?;
        let dim = 2 * g.entry_count();
        let grid: Vec<f64> = (-200..=200).map(|k| k as f64 * 0.25).collect();
        let mut rng = streams.rng(&[10]);
        let mut ok = true;
        let mut worst = 0.0f64;
        for eps in [0.1, 1.0, 10.0] {
            let shifts: Vec<Vec<f64>> = (0..100).map(|_| random_shift(dim, sensitivity(&g), &mut rng)).collect();
            let rep = laplace_density_ratio_check(sensitivity(&g), eps, &grid, &shifts)?;
            ok &= rep.pass;
            worst = worst.max(rep.max_log_ratio_observed / eps);
        }
        Ok((ok, format!("max observed / claimed = {worst}")))
    }));

    checks.push(check("kl_beta_quadrature", || {
        let mut rng = streams.rng(&[11]);
        let mut worst = 0.0f64;
        for _ in 0..20 {
            let mut draw = || 1.0 + 49.0 * rng.random::<f64>();
            let p = BetaParams::new(draw(), draw())?;
            let q = BetaParams::new(draw(), draw())?;
            worst = worst.max((kl_beta(p, q)? - kl_beta_quadrature(p, q)?).abs());
        }
        Ok((worst <= 1e-6, format!("max abs error {worst:e}")))
    }));

    checks.push(check("fourier_exactness_consistency", || {
        let mut rng = streams.rng(&[12]);
        let mut worst = 0.0f64;
        for trial in 0..10u64 {
            let k = 6;
            let records: Vec<u64> = (0..200).map(|_| rng.random::<u64>() & ((1 << k) - 1)).collect();
            let data = Dataset::new(k, records)?;
            let g = BayesNetGraph::chain(k)?;
            let closure = downward_closure(&g);
            let coeffs = exact_coefficients(&data, &closure)?;
            let table = build_table(&data);
            for i in 0..k {
                let mask = g.family_mask(i);
                let rebuilt = reconstruct_on(&coeffs, mask)?;
                worst = worst.max(rebuilt.l1_distance(&MarginalTable::from_table(&table, mask)));
            }
            let noisy = release_coefficients(&data, &closure, 1.0, DEFAULT_T, &streams.child(&[12, trial]))?;
            for i in 0..k - 1 {
                let shared = 1u64 << i;
                let a = reconstruct_on(&noisy, g.family_mask(i))?.marginalize(shared)?;
                let b = reconstruct_on(&noisy, g.family_mask(i + 1))?.marginalize(shared)?;
                worst = worst.max(a.l1_distance(&b));
            }
        }
        Ok((worst <= 1e-9, format!("max L1 discrepancy {worst:e}")))
    }));

    checks.push(check("exp_mechanism_normalization", || {
        let grid = GridSpec::uniform((0..50).map(|k| vec![k as f64]).collect())?;
        let u: Vec<f64> = (0..50).map(|k| -((k as f64) - 20.0).powi(2) / 10.0).collect();
        let p = crate::map::sampling_probabilities(&grid, &u, 2.0, MapSensitivity::exact(1.0)?)?;
        let raw: Vec<f64> = u.iter().map(|v| v.exp() / 50.0).collect();
        let z: f64 = raw.iter().sum();
        let worst = p.iter().zip(&raw).map(|(a, b)| (a - b / z).abs()).fold(0.0, f64::max);
        Ok((worst <= 1e-12, format!("max abs error {worst:e}")))
    }));

    checks.push(check("trimmed_sampler_ks", || {
        let omega = (-1f64).exp();
        let post = PerEntry::from_nested(vec![vec![BetaParams::new(3.0, 2.0)?]]);
        let draws = sampler::trimmed_posterior_draws(&post, 2.0, 20_000, &streams.child(&[13]))?;
        let xs: Vec<f64> = draws.iter().map(|d| d.row(0)[0]).collect();
        let dist = BetaDist::new(3.0, 2.0).map_err(|e| Error::Domain(e.to_string()))?;
        let (lo, hi) = (dist.cdf(omega), dist.cdf(1.0 - omega));
        let d = ks_statistic(&xs, |x| (dist.cdf(x) - lo) / (hi - lo));
        let p = ks_p_value(d, xs.len());
        let inside = xs.iter().all(|&x| x >= omega && x <= 1.0 - omega);
        Ok((p > 0.01 && inside, format!("KS p-value {p:.4}")))
    }));

    let pass = checks.iter().all(|c| c.pass);
    VerifyReport { pass, checks }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_posterior_predicts_half() {
        let g = BayesNetGraph::naive_bayes(3).unwrap();
        let post = EntryParams::filled(&g, BetaParams::uniform());
        for x in 0..16u64 {
            assert!((nb_predictive_closed_form(&post, x << 1).unwrap() - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn class_factor_only() {
        let g = BayesNetGraph::naive_bayes(1).unwrap();
        let mut post = EntryParams::filled(&g, BetaParams::uniform());
        *post.get_mut(0, crate::graph::ParentConfig(0)).unwrap() = BetaParams { alpha: 2.0, beta: 1.0 };
        assert!((nb_predictive_closed_form(&post, 0).unwrap() - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn missing_entries_reported() {
        let post = PerEntry::from_nested(vec![vec![BetaParams::uniform()], vec![BetaParams::uniform()]]);
        assert_eq!(
            nb_predictive_closed_form(&post, 0).unwrap_err(),
            Error::MissingPosteriorEntry { node: 1, config: 1 }
        );
    }

    #[test]
    fn split_is_a_partition() {
        let (tr, te) = train_test_split(100, 0.05, &Substreams::new(1));
        assert_eq!(tr.len(), 5);
        let mut all: Vec<usize> = tr.iter().chain(&te).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..100).collect::<Vec<_>>());
    }

    #[test]
    fn synth_replays() {
        let a = synth_nb(4, 50, 9, None).unwrap();
        let b = synth_nb(4, 50, 9, None).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.data.node_count(), 5);
    }

    #[test]
    fn config_validation() {
        let mut cfg = ExperimentConfig::default();
        assert!(cfg.validate().is_ok());
        cfg.epsilon_grid = vec![1.0, 0.0];
        assert!(cfg.validate().is_err());
        cfg = ExperimentConfig { repeats: 0, ..Default::default() };
        assert!(cfg.validate().is_err());
        cfg = ExperimentConfig { train_fraction: Some(1.0), ..Default::default() };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn config_from_toml() {
        let cfg = ExperimentConfig::from_toml(
            "task = \"linreg\"\nb_grid = [1.0]\nrepeats = 3\n[linreg]\nsigma2 = 0.5\n",
        )
        .unwrap();
        assert_eq!(cfg.task, Task::Linreg);
        assert_eq!(cfg.linreg.sigma2, 0.5);
        assert_eq!(cfg.effective_mechanisms(), vec![Mechanism::None, Mechanism::Sampler]);
        assert!(ExperimentConfig::from_toml("bogus = 1").is_err());
    }

    #[test]
    fn small_nb_run_has_all_rows() {
        let cfg = ExperimentConfig {
            repeats: 3,
            epsilon_grid: vec![1.0, 10.0],
            nb: NbConfig { features: 4, records: 200, samples: 50, ..Default::default() },
            train_fraction: Some(0.25),
            ..Default::default()
        };
        let out = run_nb_experiment(&cfg).unwrap();
        assert_eq!(out.rows.len(), 4 * 2 * 3);
        assert_eq!(out.sampler_fallbacks, 3);
        let csv = metrics_csv(&out.rows);
        assert!(csv.starts_with(METRICS_HEADER));
        assert_eq!(csv, metrics_csv(&run_nb_experiment(&cfg).unwrap().rows));
    }
}

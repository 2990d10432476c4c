// SPDX-License-Identifier: Apache-2.0

//! Library results against independent reference computations.

mod common;

use dpbayes::graph::{compute_updates, posterior_params, BayesNetGraph, BetaParams, Dataset, EntryParams, ParentConfig, PerEntry};
use dpbayes::harness::nb_predictive_closed_form;
use dpbayes::laplace::{perturb_updates, thm2_bound, LaplaceNoiseSpec};
use dpbayes::map::{sampling_probabilities, GridSpec, MapSensitivity};
use dpbayes::metrics::kl_report;
use dpbayes::regress::{posterior, sample_truncated, Precision, RegressionData};
use dpbayes::rng::Substreams;
use dpbayes::sampler::{
    compose_lipschitz, network_log_prob, node_lipschitz_constants, sampler_predictive, thm5_m, trim_level,
    trimmed_node_lipschitz, NodeMetric,
};
use nalgebra::{DMatrix, DVector};
use rand::Rng;

use common::{ln_beta, random_dag, random_dataset, simpson};

fn random_theta<R: Rng>(graph: &BayesNetGraph, rng: &mut R) -> PerEntry<f64> {
    PerEntry::from_fn(graph, |_, _| rng.random_range(0.05..0.95))
}

/// Per-node constant as the largest log-ratio over pairs of family
/// assignments.
fn brute_node_constant(graph: &BayesNetGraph, theta: &PerEntry<f64>, node: usize) -> f64 {
    let local = |x: u64| {
        let t = *theta.get(node, graph.parent_config(node, x)).unwrap();
        if x >> node & 1 == 1 { t.ln() } else { (1.0 - t).ln() }
    };
    let k = graph.node_count();
    let mut worst = 0.0f64;
    for x in 0..1u64 << k {
        for y in 0..1u64 << k {
            worst = worst.max((local(x) - local(y)).abs());
        }
    }
    worst
}

#[test]
fn network_lipschitz_holds_for_every_pair() {
    let streams = Substreams::new(41);
    for trial in 0..20u64 {
        let mut rng = streams.rng(&[trial]);
        let g = random_dag(4, 3, &mut rng);
        let theta = random_theta(&g, &mut rng);
        let spec = node_lipschitz_constants(&g, &theta, NodeMetric::Family).unwrap();
        for i in 0..4 {
            let brute = brute_node_constant(&g, &theta, i);
            assert!((spec.per_node[i] - brute).abs() < 1e-12, "node {i}: {} vs {brute}", spec.per_node[i]);
        }
        let l = compose_lipschitz(&spec);
        for x in 0..16u64 {
            for y in 0..16u64 {
                let lhs = (network_log_prob(&g, &theta, x) - network_log_prob(&g, &theta, y)).abs();
                let rho = NodeMetric::Family.distance(&g, x, y);
                assert!(lhs <= l * rho + 1e-12, "pair ({x}, {y}): {lhs} > {l} * {rho}");
            }
        }
    }
}

#[test]
fn discrete_metric_for_parent_free_conditionals() {
    let g = BayesNetGraph::independent(4).unwrap();
    let mut rng = Substreams::new(42).rng(&[]);
    let theta = random_theta(&g, &mut rng);
    let spec = node_lipschitz_constants(&g, &theta, NodeMetric::Discrete).unwrap();
    let l = compose_lipschitz(&spec);
    for x in 0..16u64 {
        for y in 0..16u64 {
            let lhs = (network_log_prob(&g, &theta, x) - network_log_prob(&g, &theta, y)).abs();
            assert!(lhs <= l * NodeMetric::Discrete.distance(&g, x, y) + 1e-12);
        }
    }
    let chain = BayesNetGraph::chain(2).unwrap();
    let dependent = PerEntry::from_nested(vec![vec![0.5], vec![0.2, 0.7]]);
    assert!(node_lipschitz_constants(&chain, &dependent, NodeMetric::Discrete).is_err());
}

/// Log of the trimmed Beta normaliser `∫_ω^{1-ω} t^{a-1}(1-t)^{b-1} dt`.
fn ln_trimmed_norm(a: f64, b: f64, omega: f64) -> f64 {
    simpson(|t| ((a - 1.0) * t.ln() + (b - 1.0) * (1.0 - t).ln()).exp(), omega, 1.0 - omega, 2000).ln()
}

#[test]
fn trimmed_posterior_ratio_within_lipschitz_budget() {
    // Neighbouring datasets on a 3-node chain; the posterior density of θ on
    // the trimmed box, evaluated on a grid, changes by at most 2 L ρ under the
    // family metric.
    let g = BayesNetGraph::chain(3).unwrap();
    let prior = BetaParams::new(1.0, 1.0).unwrap();
    let priors = EntryParams::filled(&g, prior);
    let streams = Substreams::new(43);
    for eps in [2.0, 4.0, 8.0] {
        let omega = trim_level(eps).unwrap();
        let l = trimmed_node_lipschitz(omega);
        let grid: Vec<f64> = (0..=200).map(|s| omega + (1.0 - 2.0 * omega) * s as f64 / 200.0).collect();
        for trial in 0..10u64 {
            let mut rng = streams.rng(&[eps.to_bits(), trial]);
            let data = random_dataset(3, 15, &mut rng);
            let mut records = data.records().to_vec();
            let pos = rng.random_range(0..records.len());
            let old = records[pos];
            records[pos] = rng.random_range(0..8u64);
            let rho = NodeMetric::Family.distance(&g, old, records[pos]);
            let other = Dataset::new(3, records).unwrap();
            let p = posterior_params(&priors, &compute_updates(&g, &data).unwrap()).unwrap();
            let q = posterior_params(&priors, &compute_updates(&g, &other).unwrap()).unwrap();
            // Separable over entries: the joint sup is attained coordinatewise.
            let (mut hi, mut lo) = (0.0, 0.0);
            for ((_, _, a), (_, _, b)) in p.iter().zip(q.iter()) {
                let za = ln_trimmed_norm(a.alpha, a.beta, omega);
                let zb = ln_trimmed_norm(b.alpha, b.beta, omega);
                let f = |t: f64| {
                    let la = (a.alpha - 1.0) * t.ln() + (a.beta - 1.0) * (1.0 - t).ln() - za;
                    let lb = (b.alpha - 1.0) * t.ln() + (b.beta - 1.0) * (1.0 - t).ln() - zb;
                    la - lb
                };
                let vals: Vec<f64> = grid.iter().map(|&t| f(t)).collect();
                hi += vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                lo += vals.iter().copied().fold(f64::INFINITY, f64::min);
            }
            let worst = f64::max(hi, -lo);
            assert!(worst <= 2.0 * l * rho + 1e-9, "eps {eps}: {worst} > 2 * {l} * {rho}");
        }
    }
}

#[test]
fn stochastic_constant_matches_second_transcription() {
    let (c, l0, d, big_c) = (1.0f64, 1.0f64, 0.5f64, 2.0f64);
    let kappa = 4.91081;
    let w = 1.25643;
    let a = kappa / c;
    let b = l0 * (1.0 + 1.0 / (1.0 - f64::exp(-w)));
    let e = big_c.ln();
    let num = f64::exp(-l0 * d * c);
    let den = f64::exp(-w * (1.0 - d)) - f64::exp(-w);
    let f = (num / den + f64::exp(l0 * (1.0 - d) * c)).ln();
    let expected = big_c * (a + b + e + f);
    assert!((thm5_m(c, l0, d, big_c).unwrap() - expected).abs() < 1e-12);
}

/// Solves `A x = b` by Gaussian elimination with partial pivoting.
fn gauss_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap();
        a.swap(col, piv);
        b.swap(col, piv);
        let pivot = a[col].clone();
        for row in col + 1..n {
            let f = a[row][col] / pivot[col];
            for (x, p) in a[row][col..].iter_mut().zip(&pivot[col..]) {
                *x -= f * p;
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    x
}

#[test]
fn posterior_mean_is_ridge_solution() {
    let mut rng = Substreams::new(44).rng(&[]);
    for &(n, d, b, sigma2) in &[(30usize, 3usize, 1.0, 0.5), (100, 5, 0.1, 1.0), (8, 4, 10.0, 0.2)] {
        let scale = 1.0 / (d as f64).sqrt();
        let x = DMatrix::from_fn(n, d, |_, _| rng.random_range(-scale..scale));
        let y = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
        let data = RegressionData::new(x.clone(), y.clone(), sigma2).unwrap();
        let post = posterior(&data, &Precision::Scalar(b), 10.0).unwrap();
        let lambda = b * sigma2;
        let a: Vec<Vec<f64>> = (0..d)
            .map(|i| {
                (0..d)
                    .map(|j| (0..n).map(|r| x[(r, i)] * x[(r, j)]).sum::<f64>() + if i == j { lambda } else { 0.0 })
                    .collect()
            })
            .collect();
        let rhs: Vec<f64> = (0..d).map(|i| (0..n).map(|r| x[(r, i)] * y[r]).sum()).collect();
        let w = gauss_solve(a, rhs);
        for (m, wk) in post.mu_n().iter().zip(&w) {
            assert!((m - wk).abs() < 1e-10, "{m} vs {wk}");
        }
    }
}

#[test]
fn truncated_sampler_matches_quadrature_moments() {
    // One feature, radius cutting into the posterior.
    let x = DMatrix::from_column_slice(4, 1, &[0.5, -0.2, 0.9, 0.3]);
    let y = DVector::from_column_slice(&[0.4, -0.1, 0.8, 0.2]);
    let data = RegressionData::new(x, y, 1.0).unwrap();
    let radius = 0.6;
    let post = posterior(&data, &Precision::Scalar(1.0), radius).unwrap();
    let (mu, var) = (post.mu_n()[0], post.sigma_n()[(0, 0)]);
    let dens = |w: f64| (-(w - mu).powi(2) / (2.0 * var)).exp();
    let z = simpson(dens, -radius, radius, 4000);
    let m1 = simpson(|w| w * dens(w), -radius, radius, 4000) / z;
    let m2 = simpson(|w| w * w * dens(w), -radius, radius, 4000) / z;
    let sd = (m2 - m1 * m1).sqrt();

    let mut rng = Substreams::new(45).rng(&[]);
    let draws: Vec<f64> = (0..40_000).map(|_| sample_truncated(&post, &mut rng).unwrap()[0]).collect();
    assert!(draws.iter().all(|w| w.abs() <= radius));
    let mean = draws.iter().sum::<f64>() / draws.len() as f64;
    let se = sd / (draws.len() as f64).sqrt();
    assert!((mean - m1).abs() < 4.0 * se, "mean {mean} vs {m1} (se {se})");
}

/// `E[θ]` under `Beta(a, b)` restricted to `[lo, 1 - lo]`, by quadrature.
fn beta_mean_on(a: f64, b: f64, lo: f64) -> f64 {
    let lb = ln_beta(a, b);
    let pdf = |t: f64| ((a - 1.0) * t.ln() + (b - 1.0) * (1.0 - t).ln() - lb).exp();
    let (l, h) = (lo.max(1e-15), 1.0 - lo.max(1e-15));
    simpson(|t| t * pdf(t), l, h, 4000) / simpson(pdf, l, h, 4000)
}

fn nb_posterior() -> EntryParams {
    PerEntry::from_nested(vec![
        vec![BetaParams::new(6.0, 4.0).unwrap()],
        vec![BetaParams::new(2.0, 5.0).unwrap(), BetaParams::new(7.0, 3.0).unwrap()],
        vec![BetaParams::new(3.5, 2.5).unwrap(), BetaParams::new(1.5, 4.0).unwrap()],
    ])
}

fn predictive_from_means(post: &EntryParams, record: u64, mean: impl Fn(BetaParams) -> f64) -> f64 {
    let mut joint = [0.0; 2];
    for (y, slot) in joint.iter_mut().enumerate() {
        let ty = mean(post.row(0)[0]);
        let mut p = if y == 1 { ty } else { 1.0 - ty };
        for f in 1..post.node_count() {
            let t = mean(post.row(f)[y]);
            p *= if record >> f & 1 == 1 { t } else { 1.0 - t };
        }
        *slot = p;
    }
    joint[1] / (joint[0] + joint[1])
}

#[test]
fn naive_bayes_predictive_matches_quadrature() {
    let post = nb_posterior();
    for x in 0..4u64 {
        let record = x << 1;
        let oracle = predictive_from_means(&post, record, |p| beta_mean_on(p.alpha, p.beta, 0.0));
        let got = nb_predictive_closed_form(&post, record).unwrap();
        assert!((got - oracle).abs() < 1e-6, "x = {x}: {got} vs {oracle}");
    }
}

#[test]
fn sampler_predictive_matches_trimmed_quadrature() {
    let post = PerEntry::from_nested(vec![
        vec![BetaParams::new(6.0, 4.0).unwrap()],
        vec![BetaParams::new(2.0, 5.0).unwrap(), BetaParams::new(7.0, 3.0).unwrap()],
    ]);
    let eps = 2.5;
    let omega = trim_level(eps).unwrap();
    for x in 0..2u64 {
        let record = x << 1;
        let oracle = predictive_from_means(&post, record, |p| beta_mean_on(p.alpha, p.beta, omega));
        let got = sampler_predictive(&post, record, eps, 100_000, &Substreams::new(46)).unwrap();
        assert!((got - oracle).abs() < 0.01, "x = {x}: {got} vs {oracle}");
    }
}

#[test]
fn exponential_mechanism_matches_brute_force() {
    let mut rng = Substreams::new(47).rng(&[]);
    let points: Vec<Vec<f64>> = (0..200).map(|k| vec![k as f64]).collect();
    let weights: Vec<f64> = (0..200).map(|_| rng.random_range(0.1..1.0)).collect();
    let grid = GridSpec::normalized(points, weights).unwrap();
    let u: Vec<f64> = (0..200).map(|_| rng.random_range(-5.0..5.0)).collect();
    for (eps, delta) in [(0.0, 1.0), (1.0, 0.5), (3.0, 2.0)] {
        let p = sampling_probabilities(&grid, &u, eps, MapSensitivity::exact(delta).unwrap()).unwrap();
        let raw: Vec<f64> = u.iter().zip(grid.prior_mass()).map(|(&ui, &m)| m * (eps * ui / (2.0 * delta)).exp()).collect();
        let z: f64 = raw.iter().sum();
        for (a, r) in p.iter().zip(&raw) {
            assert!((a - r / z).abs() < 1e-12);
        }
    }
}

#[test]
fn kl_bound_coverage_in_both_regimes() {
    // Monte Carlo: the bound may fail with probability at most δ.
    let g = BayesNetGraph::chain(3).unwrap();
    let priors = EntryParams::filled(&g, BetaParams::new(2.0, 3.0).unwrap());
    let streams = Substreams::new(48);
    let delta = 0.05;
    for &(n, eps) in &[(10usize, 1.0), (60, 1.0), (40, 5.0), (5, 0.2)] {
        let data = random_dataset(3, n, &mut streams.rng(&[n as u64]));
        let exact = compute_updates(&g, &data).unwrap();
        let p = posterior_params(&priors, &exact).unwrap();
        let spec = LaplaceNoiseSpec::new(&g, eps, n).unwrap();
        let bound = thm2_bound(&priors, &exact, &g, eps, delta, n).unwrap();
        let trials = 2000;
        let mut misses = 0usize;
        for t in 0..trials as u64 {
            let rel = perturb_updates(&exact, &spec, &streams.child(&[n as u64, t])).unwrap();
            let q = posterior_params(&priors, rel.as_updates()).unwrap();
            misses += usize::from(kl_report(&p, &q).unwrap().total > bound.total());
        }
        assert!(misses as f64 / trials as f64 <= delta, "n = {n}, eps = {eps}: {misses} misses");
    }
}

#[test]
fn update_counts_match_direct_tally() {
    let mut rng = Substreams::new(49).rng(&[]);
    for _ in 0..20 {
        let k = rng.random_range(1..=6);
        let g = random_dag(k, 3, &mut rng);
        let data = random_dataset(k, rng.random_range(1..=80), &mut rng);
        let u = compute_updates(&g, &data).unwrap();
        for (i, j, c) in u.iter() {
            let parents = g.parents(i);
            let (mut ones, mut zeros) = (0.0, 0.0);
            for &r in data.records() {
                let matches = parents.iter().enumerate().all(|(b, &p)| (r >> p & 1) == ((j.0 >> b) & 1) as u64);
                if matches {
                    if r >> i & 1 == 1 {
                        ones += 1.0;
                    } else {
                        zeros += 1.0;
                    }
                }
            }
            assert_eq!((c.alpha, c.beta), (ones, zeros), "node {i} config {:?}", ParentConfig(j.0));
        }
    }
}

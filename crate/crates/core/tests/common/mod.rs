// SPDX-License-Identifier: Apache-2.0

//! Helpers and independent oracles shared by the integration tests.

#![allow(dead_code)]

use dpbayes::graph::{BayesNetGraph, Dataset};
use rand::Rng;

/// Random DAG on `k` nodes: a shuffled order, each node taking up to
/// `max_parents` earlier nodes as parents.
pub fn random_dag<R: Rng>(k: usize, max_parents: usize, rng: &mut R) -> BayesNetGraph {
    let mut order: Vec<usize> = (0..k).collect();
    for i in (1..k).rev() {
        order.swap(i, rng.random_range(0..=i));
    }
    let mut parents = vec![Vec::new(); k];
    for (pos, &node) in order.iter().enumerate() {
        for &earlier in &order[..pos] {
            if parents[node].len() < max_parents && rng.random_bool(0.4) {
                parents[node].push(earlier);
            }
        }
        parents[node].sort_unstable();
    }
    BayesNetGraph::new(k, parents).expect("acyclic by construction")
}

pub fn random_dataset<R: Rng>(k: usize, n: usize, rng: &mut R) -> Dataset {
    let mask = if k == 64 { u64::MAX } else { (1u64 << k) - 1 };
    Dataset::new(k, (0..n).map(|_| rng.random::<u64>() & mask).collect()).unwrap()
}

/// Marginal counts on the variables in `vars` (in that order), by a direct
/// pass over the records. Cell index bit `p` is the value of `vars[p]`.
pub fn count_marginal(data: &Dataset, vars: &[usize]) -> Vec<f64> {
    let mut cells = vec![0.0; 1 << vars.len()];
    for &r in data.records() {
        let mut idx = 0usize;
        for (p, &v) in vars.iter().enumerate() {
            idx |= ((r >> v & 1) as usize) << p;
        }
        cells[idx] += 1.0;
    }
    cells
}

/// Variables of a bit mask in ascending order.
pub fn mask_vars(mask: u64) -> Vec<usize> {
    (0..64).filter(|&b| mask >> b & 1 == 1).collect()
}

/// Composite Simpson rule with `2 * half` panels.
pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, half: usize) -> f64 {
    let n = 2 * half;
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for k in 1..n {
        let w = if k % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(a + k as f64 * h);
    }
    s * h / 3.0
}

/// `ln B(a, b)` through a Lanczos log-gamma, independent of the library.
pub fn ln_beta(a: f64, b: f64) -> f64 {
    ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)
}

pub fn ln_gamma(x: f64) -> f64 {
    const G: f64 = 7.0;
    const C: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = C[0];
    let t = x + G + 0.5;
    for (i, &c) in C.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

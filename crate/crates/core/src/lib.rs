// SPDX-License-Identifier: Apache-2.0

//! Differentially private Bayesian inference for discrete Bayesian networks
//! and linear regression.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod fourier;
pub mod graph;
pub mod harness;
pub mod io;
pub mod laplace;
pub mod map;
pub mod metrics;
pub mod regress;
pub mod rng;
pub mod sampler;
pub mod stats;

pub use error::{Error, Result};

// SPDX-License-Identifier: Apache-2.0

//! C interface to `dpbayes`.
//!
//! Graphs and datasets are opaque handles created by `*_new` and released by
//! `*_free`. Every fallible call returns a [`DpbStatus`]; on failure a message
//! is available from [`dpb_last_error`] on the same thread. Per-entry outputs
//! are flat `double` buffers of length `2 * entry_count`, ordered by node and
//! then by parent configuration, holding `(first, second)` pairs.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use dpbayes::fourier::{downward_closure, fourier_posterior_params_with, release_coefficients, StealthPolicy};
use dpbayes::graph::{compute_updates, BayesNetGraph, BetaParams, Dataset, EntryParams};
use dpbayes::laplace::{perturb_updates, LaplaceNoiseSpec};
use dpbayes::rng::Substreams;
use dpbayes::Error;

/// Result codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DpbStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    CyclicGraph = 3,
    InvalidGraph = 4,
    DimensionMismatch = 5,
    InvalidEpsilon = 6,
    NonPositivePosterior = 7,
    BufferTooSmall = 8,
    Numeric = 9,
    Panic = 10,
}

/// Opaque Bayesian network structure.
pub struct DpbGraph {
    inner: BayesNetGraph,
}

/// Opaque set of binary records.
pub struct DpbDataset {
    inner: Dataset,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let text = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).ok());
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

fn status_of(err: &Error) -> DpbStatus {
    match err {
        Error::CyclicGraph => DpbStatus::CyclicGraph,
        Error::InvalidGraph(_) => DpbStatus::InvalidGraph,
        Error::DimensionMismatch { .. } | Error::LengthMismatch(..) => DpbStatus::DimensionMismatch,
        Error::InvalidEpsilon(_) => DpbStatus::InvalidEpsilon,
        Error::NonPositivePosteriorParam { .. } => DpbStatus::NonPositivePosterior,
        Error::SingularSystem | Error::RejectionBudgetExhausted(_) => DpbStatus::Numeric,
        _ => DpbStatus::InvalidArgument,
    }
}

struct Failure(DpbStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> DpbStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => DpbStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            DpbStatus::Panic
        }
    }
}

fn null() -> Failure {
    Failure(DpbStatus::NullPointer, "null pointer argument".into())
}

unsafe fn slice<'a, T>(ptr: *const T, len: usize) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if ptr.is_null() {
        return Err(null());
    }
    Ok(std::slice::from_raw_parts(ptr, len))
}

unsafe fn out_pairs<'a>(out: *mut f64, out_len: usize, entries: usize) -> Result<&'a mut [f64], Failure> {
    if out.is_null() {
        return Err(null());
    }
    if out_len < 2 * entries {
        return Err(Failure(
            DpbStatus::BufferTooSmall,
            format!("buffer holds {out_len} values, need {}", 2 * entries),
        ));
    }
    Ok(std::slice::from_raw_parts_mut(out, 2 * entries))
}

unsafe fn handle<'a, T>(ptr: *const T) -> Result<&'a T, Failure> {
    ptr.as_ref().ok_or_else(null)
}

fn write_params(params: &EntryParams, buf: &mut [f64]) {
    for (k, (_, _, p)) in params.iter().enumerate() {
        buf[2 * k] = p.alpha;
        buf[2 * k + 1] = p.beta;
    }
}

/// Builds a graph from CSR-style parent lists: the parents of node `i` are
/// `parent_indices[parent_offsets[i] .. parent_offsets[i + 1]]`.
/// `parent_offsets` has `node_count + 1` elements.
///
/// # Safety
/// Pointers must be valid for the stated lengths; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dpb_graph_new(
    node_count: usize,
    parent_offsets: *const usize,
    parent_indices: *const usize,
    out: *mut *mut DpbGraph,
) -> DpbStatus {
    guard(|| {
        if out.is_null() {
            return Err(null());
        }
        let offsets = slice(parent_offsets, node_count + 1)?;
        let total = *offsets.last().unwrap_or(&0);
        let indices = slice(parent_indices, total)?;
        let mut parents = Vec::with_capacity(node_count);
        for w in offsets.windows(2) {
            if w[0] > w[1] || w[1] > total {
                return Err(Failure(DpbStatus::InvalidArgument, "parent offsets are not monotone".into()));
            }
            parents.push(indices[w[0]..w[1]].to_vec());
        }
        let inner = BayesNetGraph::new(node_count, parents)?;
        *out = Box::into_raw(Box::new(DpbGraph { inner }));
        Ok(())
    })
}

/// Naive Bayes structure: node 0 is the class, nodes `1..=features` its children.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dpb_graph_naive_bayes(features: usize, out: *mut *mut DpbGraph) -> DpbStatus {
    guard(|| {
        if out.is_null() {
            return Err(null());
        }
        let inner = BayesNetGraph::naive_bayes(features)?;
        *out = Box::into_raw(Box::new(DpbGraph { inner }));
        Ok(())
    })
}

/// # Safety
/// `graph` must come from a `dpb_graph_*` constructor, or be null.
#[no_mangle]
pub unsafe extern "C" fn dpb_graph_free(graph: *mut DpbGraph) {
    if !graph.is_null() {
        drop(Box::from_raw(graph));
    }
}

/// Number of `(node, configuration)` entries.
///
/// # Safety
/// `graph` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dpb_graph_entry_count(graph: *const DpbGraph, out: *mut usize) -> DpbStatus {
    guard(|| {
        let g = handle(graph)?;
        if out.is_null() {
            return Err(null());
        }
        *out = g.inner.entry_count();
        Ok(())
    })
}

/// Wraps `len` records; bit `c` of a record is the value of node `c`.
///
/// # Safety
/// `records` must hold `len` values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dpb_dataset_new(
    node_count: usize,
    records: *const u64,
    len: usize,
    out: *mut *mut DpbDataset,
) -> DpbStatus {
    guard(|| {
        if out.is_null() {
            return Err(null());
        }
        let inner = Dataset::new(node_count, slice(records, len)?.to_vec())?;
        *out = Box::into_raw(Box::new(DpbDataset { inner }));
        Ok(())
    })
}

/// # Safety
/// `data` must come from `dpb_dataset_new`, or be null.
#[no_mangle]
pub unsafe extern "C" fn dpb_dataset_free(data: *mut DpbDataset) {
    if !data.is_null() {
        drop(Box::from_raw(data));
    }
}

/// Exact update counts `(ones, zeros)` per entry.
///
/// # Safety
/// Handles must be live; `out` must hold `out_len` doubles.
#[no_mangle]
pub unsafe extern "C" fn dpb_compute_updates(
    graph: *const DpbGraph,
    data: *const DpbDataset,
    out: *mut f64,
    out_len: usize,
) -> DpbStatus {
    guard(|| {
        let (g, d) = (handle(graph)?, handle(data)?);
        let buf = out_pairs(out, out_len, g.inner.entry_count())?;
        let u = compute_updates(&g.inner, &d.inner)?;
        for (k, (_, _, c)) in u.iter().enumerate() {
            buf[2 * k] = c.alpha;
            buf[2 * k + 1] = c.beta;
        }
        Ok(())
    })
}

/// Laplace-perturbed update counts, clamped to `[0, n]`.
///
/// # Safety
/// Handles must be live; `out` must hold `out_len` doubles.
#[no_mangle]
pub unsafe extern "C" fn dpb_laplace_release(
    graph: *const DpbGraph,
    data: *const DpbDataset,
    epsilon: f64,
    seed: u64,
    out: *mut f64,
    out_len: usize,
) -> DpbStatus {
    guard(|| {
        let (g, d) = (handle(graph)?, handle(data)?);
        let buf = out_pairs(out, out_len, g.inner.entry_count())?;
        let spec = LaplaceNoiseSpec::new(&g.inner, epsilon, d.inner.len())?;
        let u = compute_updates(&g.inner, &d.inner)?;
        let released = perturb_updates(&u, &spec, &Substreams::new(seed))?;
        for (k, (_, _, c)) in released.entries.iter().enumerate() {
            buf[2 * k] = c.alpha;
            buf[2 * k + 1] = c.beta;
        }
        Ok(())
    })
}

/// Posterior `(alpha, beta)` per entry from noisy Fourier coefficients, under
/// a shared `Beta(prior_alpha, prior_beta)` prior. With `clamp == 0` a
/// negative rebuilt cell yields `NonPositivePosterior`; otherwise it is
/// truncated to zero.
///
/// # Safety
/// Handles must be live; `out` must hold `out_len` doubles.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn dpb_fourier_posterior(
    graph: *const DpbGraph,
    data: *const DpbDataset,
    prior_alpha: f64,
    prior_beta: f64,
    epsilon: f64,
    t: f64,
    seed: u64,
    clamp: i32,
    out: *mut f64,
    out_len: usize,
) -> DpbStatus {
    guard(|| {
        let (g, d) = (handle(graph)?, handle(data)?);
        let buf = out_pairs(out, out_len, g.inner.entry_count())?;
        let prior = BetaParams::new(prior_alpha, prior_beta)?;
        let priors = EntryParams::filled(&g.inner, prior);
        let closure = downward_closure(&g.inner);
        let coeffs = release_coefficients(&d.inner, &closure, epsilon, t, &Substreams::new(seed))?;
        let policy = if clamp != 0 { StealthPolicy::Clamp } else { StealthPolicy::Report };
        let post = fourier_posterior_params_with(&coeffs, &g.inner, &priors, policy)?;
        write_params(&post, buf);
        Ok(())
    })
}

/// `KL(Beta(a1, b1) || Beta(a2, b2))`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dpb_kl_beta(a1: f64, b1: f64, a2: f64, b2: f64, out: *mut f64) -> DpbStatus {
    guard(|| {
        if out.is_null() {
            return Err(null());
        }
        let p = BetaParams::new(a1, b1)?;
        let q = BetaParams::new(a2, b2)?;
        *out = dpbayes::metrics::kl_beta(p, q)?;
        Ok(())
    })
}

/// Message for the last failed call on this thread, or null. The pointer
/// stays valid until the next `dpb_*` call on the same thread.
#[no_mangle]
pub extern "C" fn dpb_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn dpb_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

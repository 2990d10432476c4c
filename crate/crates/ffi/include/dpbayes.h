/* SPDX-License-Identifier: Apache-2.0 */

#ifndef DPBAYES_H
#define DPBAYES_H

/* Generated by cbindgen. Do not edit. */

#include <stdint.h>
#include <stddef.h>

/**
 * Result codes.
 */
typedef enum DpbStatus {
  DPB_STATUS_OK = 0,
  DPB_STATUS_NULL_POINTER = 1,
  DPB_STATUS_INVALID_ARGUMENT = 2,
  DPB_STATUS_CYCLIC_GRAPH = 3,
  DPB_STATUS_INVALID_GRAPH = 4,
  DPB_STATUS_DIMENSION_MISMATCH = 5,
  DPB_STATUS_INVALID_EPSILON = 6,
  DPB_STATUS_NON_POSITIVE_POSTERIOR = 7,
  DPB_STATUS_BUFFER_TOO_SMALL = 8,
  DPB_STATUS_NUMERIC = 9,
  DPB_STATUS_PANIC = 10,
} DpbStatus;

/**
 * Opaque set of binary records.
 */
typedef struct DpbDataset DpbDataset;

/**
 * Opaque Bayesian network structure.
 */
typedef struct DpbGraph DpbGraph;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Builds a graph from CSR-style parent lists: the parents of node `i` are
 * `parent_indices[parent_offsets[i] .. parent_offsets[i + 1]]`.
 * `parent_offsets` has `node_count + 1` elements.
 *
 * # Safety
 * Pointers must be valid for the stated lengths; `out` must be writable.
 */
enum DpbStatus dpb_graph_new(size_t node_count,
                             const size_t *parent_offsets,
                             const size_t *parent_indices,
                             struct DpbGraph **out);

/**
 * Naive Bayes structure: node 0 is the class, nodes `1..=features` its children.
 *
 * # Safety
 * `out` must be writable.
 */
enum DpbStatus dpb_graph_naive_bayes(size_t features, struct DpbGraph **out);

/**
 * # Safety
 * `graph` must come from a `dpb_graph_*` constructor, or be null.
 */
void dpb_graph_free(struct DpbGraph *graph);

/**
 * Number of `(node, configuration)` entries.
 *
 * # Safety
 * `graph` must be a live handle; `out` must be writable.
 */
enum DpbStatus dpb_graph_entry_count(const struct DpbGraph *graph, size_t *out);

/**
 * Wraps `len` records; bit `c` of a record is the value of node `c`.
 *
 * # Safety
 * `records` must hold `len` values; `out` must be writable.
 */
enum DpbStatus dpb_dataset_new(size_t node_count,
                               const uint64_t *records,
                               size_t len,
                               struct DpbDataset **out);

/**
 * # Safety
 * `data` must come from `dpb_dataset_new`, or be null.
 */
void dpb_dataset_free(struct DpbDataset *data);

/**
 * Exact update counts `(ones, zeros)` per entry.
 *
 * # Safety
 * Handles must be live; `out` must hold `out_len` doubles.
 */
enum DpbStatus dpb_compute_updates(const struct DpbGraph *graph,
                                   const struct DpbDataset *data,
                                   double *out,
                                   size_t out_len);

/**
 * Laplace-perturbed update counts, clamped to `[0, n]`.
 *
 * # Safety
 * Handles must be live; `out` must hold `out_len` doubles.
 */
enum DpbStatus dpb_laplace_release(const struct DpbGraph *graph,
                                   const struct DpbDataset *data,
                                   double epsilon,
                                   uint64_t seed,
                                   double *out,
                                   size_t out_len);

/**
 * Posterior `(alpha, beta)` per entry from noisy Fourier coefficients, under
 * a shared `Beta(prior_alpha, prior_beta)` prior. With `clamp == 0` a
 * negative rebuilt cell yields `NonPositivePosterior`; otherwise it is
 * truncated to zero.
 *
 * # Safety
 * Handles must be live; `out` must hold `out_len` doubles.
 */
enum DpbStatus dpb_fourier_posterior(const struct DpbGraph *graph,
                                     const struct DpbDataset *data,
                                     double prior_alpha,
                                     double prior_beta,
                                     double epsilon,
                                     double t,
                                     uint64_t seed,
                                     int32_t clamp,
                                     double *out,
                                     size_t out_len);

/**
 * `KL(Beta(a1, b1) || Beta(a2, b2))`.
 *
 * # Safety
 * `out` must be writable.
 */
enum DpbStatus dpb_kl_beta(double a1, double b1, double a2, double b2, double *out);

/**
 * Message for the last failed call on this thread, or null. The pointer
 * stays valid until the next `dpb_*` call on the same thread.
 */
const char *dpb_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *dpb_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DPBAYES_H */

#ifndef BEEPSIM_H
#define BEEPSIM_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum BeepsimStatus {
  BEEPSIM_STATUS_OK = 0,
  BEEPSIM_STATUS_NULL_POINTER = 1,
  BEEPSIM_STATUS_INVALID_ARGUMENT = 2,
  BEEPSIM_STATUS_GRAPH_ERROR = 3,
  BEEPSIM_STATUS_IO_ERROR = 4,
  /**
   * The trace lacks what the query needs (e.g. not recorded densely).
   */
  BEEPSIM_STATUS_TRACE_UNAVAILABLE = 5,
  BEEPSIM_STATUS_PANIC = 6,
} BeepsimStatus;

/**
 * Opaque graph handle.
 */
typedef struct BeepsimGraph BeepsimGraph;

/**
 * Opaque handle to one completed run.
 */
typedef struct BeepsimTrace BeepsimTrace;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static string.
 */
const char *beepsim_version(void);

/**
 * Message of the last failure on this thread, or NULL. Valid until the next
 * failing call on the same thread.
 */
const char *beepsim_last_error_message(void);

/**
 * Builds a graph from a descriptor such as `path:16` or `grid:4x4`.
 *
 * # Safety
 * `spec` must be a valid C string and `out` a valid pointer.
 */
enum BeepsimStatus beepsim_graph_generate(const char *spec, struct BeepsimGraph **out);

/**
 * Parses an edge list (`u v` per line, `#` comments).
 *
 * # Safety
 * `text` must be a valid C string and `out` a valid pointer.
 */
enum BeepsimStatus beepsim_graph_from_edge_list(const char *text, struct BeepsimGraph **out);

/**
 * # Safety
 * `graph` must come from this library and `out` be a valid pointer.
 */
enum BeepsimStatus beepsim_graph_node_count(const struct BeepsimGraph *graph, size_t *out);

/**
 * # Safety
 * `graph` must come from this library and `out` be a valid pointer.
 */
enum BeepsimStatus beepsim_graph_edge_count(const struct BeepsimGraph *graph, size_t *out);

/**
 * # Safety
 * `graph` must come from this library and `out` be a valid pointer.
 */
enum BeepsimStatus beepsim_graph_diameter(const struct BeepsimGraph *graph, uint32_t *out);

/**
 * Releases a graph. NULL is ignored.
 *
 * # Safety
 * `graph` must come from this library and not be used afterwards.
 */
void beepsim_graph_free(struct BeepsimGraph *graph);

/**
 * Runs the protocol until one leader remains or `max_rounds` pass.
 *
 * `p` is the beep probability in (0, 1]; `p <= 0` selects `1/(D+1)`.
 * `max_rounds == 0` selects the default cap. With `dense` every round is
 * kept, which is required for auditing and per-round queries.
 *
 * # Safety
 * `graph` must come from this library and `out` be a valid pointer.
 */
enum BeepsimStatus beepsim_run(const struct BeepsimGraph *graph,
                               double p,
                               uint64_t seed,
                               uint64_t max_rounds,
                               bool dense,
                               struct BeepsimTrace **out);

/**
 * # Safety
 * `trace` must come from this library and `out` be a valid pointer.
 */
enum BeepsimStatus beepsim_trace_converged(const struct BeepsimTrace *trace, bool *out);

/**
 * Last executed round (the convergence round for converged runs).
 *
 * # Safety
 * `trace` must come from this library and `out` be a valid pointer.
 */
enum BeepsimStatus beepsim_trace_final_round(const struct BeepsimTrace *trace, uint64_t *out);

/**
 * The sole leader; `TraceUnavailable` when the run did not converge.
 *
 * # Safety
 * `trace` must come from this library and `out` be a valid pointer.
 */
enum BeepsimStatus beepsim_trace_leader(const struct BeepsimTrace *trace, size_t *out);

/**
 * Number of leaders at round `round`.
 *
 * # Safety
 * `trace` must come from this library and `out` be a valid pointer.
 */
enum BeepsimStatus beepsim_trace_leader_count(const struct BeepsimTrace *trace,
                                              uint64_t round,
                                              uint32_t *out);

/**
 * State of `node` at `round`, encoded 0..=5 as LW, LB, LF, NW, NB, NF.
 * Needs a dense trace except for the final round.
 *
 * # Safety
 * `trace` must come from this library and `out` be a valid pointer.
 */
enum BeepsimStatus beepsim_trace_state(const struct BeepsimTrace *trace,
                                       uint64_t round,
                                       size_t node,
                                       uint8_t *out);

/**
 * Audits a dense trace with every lemma auditor and writes the violation
 * count to `violations`.
 *
 * # Safety
 * `trace` must come from this library and `violations` be a valid pointer.
 */
enum BeepsimStatus beepsim_trace_verify(const struct BeepsimTrace *trace, uint64_t *violations);

/**
 * Writes the trace as JSON lines (readable by `beepsim verify --trace`).
 *
 * # Safety
 * `trace` must come from this library and `path` be a valid C string.
 */
enum BeepsimStatus beepsim_trace_write_jsonl(const struct BeepsimTrace *trace, const char *path);

/**
 * Releases a trace. NULL is ignored.
 *
 * # Safety
 * `trace` must come from this library and not be used afterwards.
 */
void beepsim_trace_free(struct BeepsimTrace *trace);

/**
 * Stationary law (W, B, F) of the single-node chain into `out[0..3]`.
 *
 * # Safety
 * `out` must point to three writable doubles.
 */
enum BeepsimStatus beepsim_markov_stationary(double p, double *out);

/**
 * `P(W_1 + ... + W_n >= k)` for i.i.d. geometric `W_i` on {1, 2, ...}
 * (exact recursion) into `lhs`, and `P(Bin(k-1, p) <= n-1)` into `rhs`.
 *
 * # Safety
 * `lhs` and `rhs` must be valid pointers.
 */
enum BeepsimStatus beepsim_geom_binom_identity(uint64_t n,
                                               uint64_t k,
                                               double p,
                                               double *lhs,
                                               double *rhs);

/**
 * Token (`"LW"`, ...) for a state code from [`beepsim_trace_state`], or NULL.
 */
const char *beepsim_state_token(uint8_t code);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* BEEPSIM_H */

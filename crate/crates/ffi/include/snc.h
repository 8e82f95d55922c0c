#ifndef SNC_H
#define SNC_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum SncStatus {
  SNC_STATUS_OK = 0,
  SNC_STATUS_NULL_POINTER = 1,
  SNC_STATUS_INVALID_ARGUMENT = 2,
  SNC_STATUS_PARSE_ERROR = 3,
  SNC_STATUS_ANALYSIS_ERROR = 4,
  SNC_STATUS_INFEASIBLE_POINT = 5,
  SNC_STATUS_NO_FEASIBLE_POINT = 6,
  SNC_STATUS_UNSUPPORTED = 7,
  SNC_STATUS_PANIC = 8,
} SncStatus;

typedef enum SncBoundKind {
  SNC_BOUND_KIND_BACKLOG = 0,
  SNC_BOUND_KIND_DELAY = 1,
} SncBoundKind;

typedef enum SncQueryKind {
  // Probability that the quantity exceeds the given value.
  SNC_QUERY_KIND_FORWARD = 0,
  // Smallest value whose bound equals the given probability.
  SNC_QUERY_KIND_INVERSE = 1,
} SncQueryKind;

// Symbolic performance bound.
typedef struct SncBound SncBound;

// Parsed network.
typedef struct SncNetwork SncNetwork;

// Grid search settings. A `theta_max` of zero or less selects it automatically.
typedef struct SncGridOptions {
  double theta_granularity;
  double theta_max;
  double hoelder_granularity;
  double p_max;
} SncGridOptions;

typedef struct SncOptimum {
  double value;
  double theta;
  uint64_t evaluated;
  uint64_t feasible;
} SncOptimum;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread; empty after a success.
// The pointer stays valid until the next call on the same thread.
const char *snc_last_error_message(void);

struct SncGridOptions snc_grid_options_default(void);

// Parses a network document. `*out` receives a handle on success.
//
// # Safety
// `document` must be a valid NUL-terminated string and `out` a valid pointer.
enum SncStatus snc_network_parse(const char *document, bool strict, struct SncNetwork **out);

// # Safety
// `net` must come from [`snc_network_parse`] and not be used afterwards. Null is ignored.
void snc_network_free(struct SncNetwork *net);

// # Safety
// `net` must be a live handle and `out` a valid pointer.
enum SncStatus snc_network_vertex_count(const struct SncNetwork *net, size_t *out);

// # Safety
// `net` must be a live handle and `out` a valid pointer.
enum SncStatus snc_network_flow_count(const struct SncNetwork *net, size_t *out);

// Canonical text of the network. Release `*out` with [`snc_string_free`].
//
// # Safety
// `net` must be a live handle and `out` a valid pointer.
enum SncStatus snc_network_serialize(const struct SncNetwork *net, char **out);

// # Safety
// `s` must come from this library and not be used afterwards. Null is ignored.
void snc_string_free(char *s);

// Bound for `flow` at `vertex`. The network handle is not modified.
//
// # Safety
// Pointers must be valid; names NUL-terminated.
enum SncStatus snc_analyze_local(const struct SncNetwork *net,
                                 const char *flow,
                                 const char *vertex,
                                 enum SncBoundKind kind,
                                 struct SncBound **out);

// End-to-end delay bound of `flow` over its whole route.
//
// # Safety
// Pointers must be valid; names NUL-terminated.
enum SncStatus snc_analyze_end_to_end(const struct SncNetwork *net,
                                      const char *flow,
                                      struct SncBound **out);

// End-to-end delay bound of `flow` over its whole route, which `crossflow`
// shares with higher priority.
//
// # Safety
// Pointers must be valid; names NUL-terminated.
enum SncStatus snc_analyze_ladder(const struct SncNetwork *net,
                                  const char *flow,
                                  const char *crossflow,
                                  struct SncBound **out);

// # Safety
// `bound` must come from an analysis call and not be used afterwards. Null is ignored.
void snc_bound_free(struct SncBound *bound);

// Number of Hölder parameters; [`snc_bound_evaluate`] expects that many `p` values.
//
// # Safety
// `bound` must be a live handle and `out` a valid pointer.
enum SncStatus snc_bound_hoelder_count(const struct SncBound *bound, size_t *out);

// Evaluates the bound at one point. `p_values` holds one `p` per Hölder
// parameter in ascending id order.
//
// # Safety
// `bound` must be a live handle, `p_values` valid for `n_p` reads (may be
// null when `n_p` is 0), and `out` a valid pointer.
enum SncStatus snc_bound_evaluate(const struct SncBound *bound,
                                  double theta,
                                  const double *p_values,
                                  size_t n_p,
                                  enum SncQueryKind kind,
                                  double x,
                                  double *out);

// Minimizes the bound over the grid.
//
// # Safety
// `bound` must be a live handle; `opts` may be null for defaults; `out` must be valid.
enum SncStatus snc_bound_optimize(const struct SncBound *bound,
                                  enum SncQueryKind kind,
                                  double x,
                                  const struct SncGridOptions *opts,
                                  struct SncOptimum *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SNC_H */

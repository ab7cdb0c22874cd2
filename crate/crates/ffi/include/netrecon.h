#ifndef NETRECON_H
#define NETRECON_H

#include <stddef.h>
#include <stdint.h>

typedef enum NrGenerator {
  NR_GENERATOR_BA = 0,
  NR_GENERATOR_WS = 1,
  NR_GENERATOR_POWER_LAW_SF = 2,
} NrGenerator;

typedef enum NrMethod {
  NR_METHOD_VBR = 0,
  NR_METHOD_LASSO = 1,
} NrMethod;

// Result codes returned by every fallible function.
typedef enum NrStatus {
  NR_STATUS_OK = 0,
  NR_STATUS_NULL_POINTER = 1,
  NR_STATUS_INVALID_ARGUMENT = 2,
  NR_STATUS_IO = 3,
  NR_STATUS_PARSE = 4,
  NR_STATUS_MODEL = 5,
  NR_STATUS_NUMERICAL = 6,
  NR_STATUS_INTERNAL = 7,
} NrStatus;

typedef enum NrDynamics {
  NR_DYNAMICS_ECT = 0,
  NR_DYNAMICS_COMMUNICATION = 1,
  NR_DYNAMICS_LINEAR_MIXING = 2,
} NrDynamics;

// Opaque weighted network.
typedef struct NrNetwork NrNetwork;

// Opaque time-series panel.
typedef struct NrPanel NrPanel;

// Opaque reconstruction outcome.
typedef struct NrResult NrResult;

// Topology generator settings; start from [`nr_generator_params_default`].
typedef struct NrGeneratorParams {
  enum NrGenerator kind;
  size_t n_nodes;
  size_t ba_edges_per_node;
  size_t ws_mean_degree;
  double ws_rewire_prob;
  double sf_gamma;
  double weight_min;
  double weight_max;
  uint64_t seed;
} NrGeneratorParams;

// Reconstruction settings; start from [`nr_reconstruct_params_default`].
typedef struct NrReconstructParams {
  enum NrMethod method;
  double threshold;
  size_t max_iters;
  double tol;
  uint64_t seed;
} NrReconstructParams;

// Edge-detection and strength metrics. Undefined values are NaN.
typedef struct NrMetrics {
  double tpr;
  double tnr;
  double error;
} NrMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Copies the calling thread's last error message into `buf` as a
// NUL-terminated string, truncating to `len - 1` bytes. Returns the full
// message length in bytes, excluding the terminator.
//
// # Safety
// `buf` must be null or point to `len` writable bytes.
size_t nr_last_error_message(char *buf, size_t len);

// Library version as a static NUL-terminated string.
const char *nr_version(void);

struct NrGeneratorParams nr_generator_params_default(void);

struct NrReconstructParams nr_reconstruct_params_default(void);

// Generates a random topology.
//
// # Safety
// `params` must point to a valid struct and `out` to writable storage.
enum NrStatus nr_network_generate(const struct NrGeneratorParams *params, struct NrNetwork **out);

// Builds a network from an `n × n` row-major weight matrix; entry (i, j)
// is the weight of the edge i → j.
//
// # Safety
// `weights` must point to `n * n` readable doubles.
enum NrStatus nr_network_from_weights(size_t n, const double *weights, struct NrNetwork **out);

// Reads a network file: Matrix Market when the name ends in `.mtx`,
// otherwise an edge list.
//
// # Safety
// `path` must be a NUL-terminated string.
enum NrStatus nr_network_read(const char *path, struct NrNetwork **out);

// # Safety
// `net` must be a live handle and `path` a NUL-terminated string.
enum NrStatus nr_network_write(const struct NrNetwork *net, const char *path);

// Node count, or 0 for a null handle.
//
// # Safety
// `net` must be null or a live handle.
size_t nr_network_n_nodes(const struct NrNetwork *net);

// Copies the weight matrix row-major into `buf`, which must hold
// `n_nodes * n_nodes` doubles.
//
// # Safety
// `net` must be a live handle and `buf` point to `len` writable doubles.
enum NrStatus nr_network_weights(const struct NrNetwork *net, double *buf, size_t len);

// # Safety
// `net` must be null or a handle not yet freed.
void nr_network_free(struct NrNetwork *net);

// Simulates dynamics on `net`. When `truth_out` is not null it receives
// the network a reconstruction should be scored against.
//
// # Safety
// `net` must be a live handle; `out` must be writable; `truth_out` must be
// null or writable.
enum NrStatus nr_simulate(const struct NrNetwork *net,
                          enum NrDynamics dynamics,
                          size_t n_samples,
                          double sigma,
                          uint64_t seed,
                          struct NrPanel **out,
                          struct NrNetwork **truth_out);

// Sample count M and node count N of a panel; either output may be null.
//
// # Safety
// `panel` must be a live handle.
enum NrStatus nr_panel_dims(const struct NrPanel *panel, size_t *n_samples, size_t *n_nodes);

// # Safety
// `panel` must be null or a handle not yet freed.
void nr_panel_free(struct NrPanel *panel);

// Reconstructs the network behind a panel.
//
// # Safety
// `panel` and `params` must be valid and `out` writable.
enum NrStatus nr_reconstruct(const struct NrPanel *panel,
                             const struct NrReconstructParams *params,
                             struct NrResult **out);

// Copies the estimated network into a new handle owned by the caller.
//
// # Safety
// `result` must be a live handle and `out` writable.
enum NrStatus nr_result_network(const struct NrResult *result, struct NrNetwork **out);

// Reconstruction wall time in seconds, or NaN for a null handle.
//
// # Safety
// `result` must be null or a live handle.
double nr_result_runtime_seconds(const struct NrResult *result);

// Solver iterations summed over nodes, or 0 for a null handle.
//
// # Safety
// `result` must be null or a live handle.
size_t nr_result_iterations(const struct NrResult *result);

// # Safety
// `result` must be null or a handle not yet freed.
void nr_result_free(struct NrResult *result);

// Compares an estimate with the truth.
//
// # Safety
// Both handles must be live and `out` writable.
enum NrStatus nr_evaluate(const struct NrNetwork *truth,
                          const struct NrNetwork *est,
                          struct NrMetrics *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* NETRECON_H */

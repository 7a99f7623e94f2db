#ifndef BANACH_SD_H
#define BANACH_SD_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum BsdStatus {
  BSD_STATUS_OK = 0,
  BSD_STATUS_NULL_POINTER = 1,
  BSD_STATUS_INVALID_ARGUMENT = 2,
  BSD_STATUS_DIMENSION_MISMATCH = 3,
  BSD_STATUS_NOT_CONVERGED = 4,
  BSD_STATUS_IO = 5,
  BSD_STATUS_PANIC = 6,
} BsdStatus;

typedef enum BsdStopReason {
  BSD_STOP_REASON_DISCREPANCY_MET = 0,
  BSD_STOP_REASON_MAX_ITERATIONS = 1,
  BSD_STOP_REASON_STEP_DEGENERATE = 2,
} BsdStopReason;

typedef struct BsdModel BsdModel;

typedef struct BsdSet BsdSet;

typedef struct BsdSpace BsdSpace;

/**
 * Outcome of [`bsd_solve`].
 */
typedef struct BsdRunResult {
  enum BsdStopReason stop_reason;
  /**
   * Index `K` of the last iterate.
   */
  size_t iterations;
  double final_residual;
  size_t monotonicity_violations;
  /**
   * Whether the starting point had to be projected into the set.
   */
  bool projected_start;
} BsdRunResult;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the last error message of this thread into `buf` (NUL-terminated,
 * truncated to `len`). Returns the buffer size the full message needs.
 *
 * # Safety
 * `buf` must be null or point to `len` writable bytes.
 */
size_t bsd_last_error_message(char *buf, size_t len);

/**
 * Library version as a static NUL-terminated string.
 */
const char *bsd_version(void);

/**
 * Weighted `ℓ^r` space with gauge `p`. Pass `p <= 0` for the default
 * `max(r, 2)`, `weights = NULL` for unit weights, and `cp <= 0`, `gq <= 0`
 * to use the built-in constants for `r` in {1.5, 2, 3, 4}.
 *
 * # Safety
 * `weights` must be null or point to `dim` doubles; `out` must be writable.
 */
enum BsdStatus bsd_space_new(size_t dim,
                             double r,
                             double p,
                             const double *weights,
                             double cp,
                             double gq,
                             struct BsdSpace **out);

/**
 * # Safety
 * `space` must be null or a handle from [`bsd_space_new`] not yet freed.
 */
void bsd_space_free(struct BsdSpace *space);

/**
 * `‖x‖`.
 *
 * # Safety
 * `x` must point to `n` doubles and `out` must be writable.
 */
enum BsdStatus bsd_space_norm(const struct BsdSpace *space, const double *x, size_t n, double *out);

/**
 * `J_p(x)`, written to `out` (length `n`).
 *
 * # Safety
 * `x` and `out` must point to `n` doubles.
 */
enum BsdStatus bsd_space_duality_map(const struct BsdSpace *space,
                                     const double *x,
                                     size_t n,
                                     double *out);

/**
 * `Δ_p(x, xt)`, with the duality map evaluated at `x`.
 *
 * # Safety
 * `x` and `xt` must point to `n` doubles; `out` must be writable.
 */
enum BsdStatus bsd_space_bregman_distance(const struct BsdSpace *space,
                                          const double *x,
                                          const double *xt,
                                          size_t n,
                                          double *out);

/**
 * The whole space of dimension `dim`.
 *
 * # Safety
 * `out` must be writable.
 */
enum BsdStatus bsd_set_new_whole(size_t dim, struct BsdSet **out);

/**
 * Coordinate box `[lower, upper]`; bounds may be infinite.
 *
 * # Safety
 * `lower` and `upper` must point to `n` doubles; `out` must be writable.
 */
enum BsdStatus bsd_set_new_box(const double *lower,
                               const double *upper,
                               size_t n,
                               struct BsdSet **out);

/**
 * Ball of `radius` around `center` in the norm of the space it is used with.
 *
 * # Safety
 * `center` must point to `n` doubles; `out` must be writable.
 */
enum BsdStatus bsd_set_new_ball(const double *center, size_t n, double radius, struct BsdSet **out);

/**
 * Vectors of dimension `dim` that vanish outside `support`.
 *
 * # Safety
 * `support` must point to `m` indices; `out` must be writable.
 */
enum BsdStatus bsd_set_new_subspace(size_t dim,
                                    const size_t *support,
                                    size_t m,
                                    struct BsdSet **out);

/**
 * # Safety
 * `set` must be null or a handle from a `bsd_set_new_*` call not yet freed.
 */
void bsd_set_free(struct BsdSet *set);

/**
 * Bregman projection of `x` onto `set`, written to `out`.
 *
 * # Safety
 * `x` and `out` must point to `n` doubles.
 */
enum BsdStatus bsd_set_project(const struct BsdSet *set,
                               const struct BsdSpace *space,
                               const double *x,
                               size_t n,
                               double *out);

/**
 * `F(x) = A x` with a row-major `rows × cols` matrix.
 *
 * # Safety
 * `a` must point to `rows * cols` doubles; `out` must be writable.
 */
enum BsdStatus bsd_model_new_linear(const double *a,
                                    size_t rows,
                                    size_t cols,
                                    struct BsdModel **out);

/**
 * `F_i(x) = (A x)_i + eps x_i²` for `i < min(rows, cols)`, `(A x)_i` beyond.
 *
 * # Safety
 * `a` must point to `rows * cols` doubles; `out` must be writable.
 */
enum BsdStatus bsd_model_new_quadratic(const double *a,
                                       size_t rows,
                                       size_t cols,
                                       double eps,
                                       struct BsdModel **out);

/**
 * # Safety
 * `model` must be null or a handle from a `bsd_model_new_*` call not yet freed.
 */
void bsd_model_free(struct BsdModel *model);

/**
 * `F(x)`, written to `out` (length `m`, the output dimension).
 *
 * # Safety
 * `x` must point to `n` doubles and `out` to `m` doubles.
 */
enum BsdStatus bsd_model_eval(const struct BsdModel *model,
                              const double *x,
                              size_t n,
                              double *out,
                              size_t m);

/**
 * Runs projected steepest descent from `x0` on data `y` (length `m`) with
 * model constants `lhat`, `lip`, `stability`, stopping once the residual is
 * at most `eta_hat`. The last iterate is written to `x_out` (length `n`).
 *
 * # Safety
 * `y` must point to `m` doubles, `x0` and `x_out` to `n` doubles, and
 * `result` must be writable.
 */
enum BsdStatus bsd_solve(const struct BsdSpace *space,
                         const struct BsdSet *set,
                         const struct BsdModel *model,
                         const double *y,
                         size_t m,
                         double eta,
                         double eta_hat,
                         double lhat,
                         double lip,
                         double stability,
                         const double *x0,
                         size_t n,
                         size_t max_iterations,
                         double *x_out,
                         struct BsdRunResult *result);

/**
 * Executes a TOML run configuration like the command-line tool and stores
 * its exit code (0 success, 2 solver stop, 3 invalid input, 4 I/O) in
 * `exit_code`. `trace_path` and `summary_path` may be null.
 *
 * # Safety
 * The paths must be null or NUL-terminated UTF-8; `exit_code` must be writable.
 */
enum BsdStatus bsd_run_config_file(const char *config_path,
                                   const char *trace_path,
                                   const char *summary_path,
                                   int32_t *exit_code);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* BANACH_SD_H */

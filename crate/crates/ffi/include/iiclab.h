#ifndef IICLAB_H
#define IICLAB_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum IiclabStatus {
  IICLAB_STATUS_OK = 0,
  IICLAB_STATUS_NULL_POINTER = 1,
  IICLAB_STATUS_INVALID_ARGUMENT = 2,
  IICLAB_STATUS_TOO_LARGE = 3,
  IICLAB_STATUS_UNSUPPORTED = 4,
  IICLAB_STATUS_CONFIG = 5,
  IICLAB_STATUS_IO = 6,
  IICLAB_STATUS_PANIC = 7,
} IiclabStatus;

/**
 * Lattice, edge probability and seed.
 */
typedef struct IiclabConfig IiclabConfig;

/**
 * A strictly positive kernel.
 */
typedef struct IiclabKernel IiclabKernel;

/**
 * A Monte Carlo estimate with its sample provenance.
 */
typedef struct IiclabEstimate {
  double value;
  double stderr;
  double ci_lo;
  double ci_hi;
  uint64_t n_samples;
  uint64_t n_truncated;
  uint64_t seed;
  uint64_t sample_start;
  uint64_t sample_end;
} IiclabEstimate;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. Valid until the
 * next failing call on the same thread.
 */
const char *iiclab_last_error(void);

/**
 * Library version as a static string.
 */
const char *iiclab_version(void);

/**
 * Nearest-neighbor lattice in dimension `d` (or spread-out with range
 * `lambda > 0`) at edge probability `p`.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum IiclabStatus iiclab_config_new(uint32_t d,
                                    uint32_t lambda,
                                    double p,
                                    uint64_t seed,
                                    struct IiclabConfig **out);

/**
 * # Safety
 * `cfg` must come from [`iiclab_config_new`] and not be used afterwards.
 */
void iiclab_config_free(struct IiclabConfig *cfg);

/**
 * # Safety
 * `cfg` must be a live handle.
 */
enum IiclabStatus iiclab_config_set_p(struct IiclabConfig *cfg, double p);

/**
 * `P(0 <-> dB(radius))` from `n` samples.
 *
 * # Safety
 * `cfg` must be a live handle and `out` a valid pointer.
 */
enum IiclabStatus iiclab_one_arm(const struct IiclabConfig *cfg,
                                 int64_t radius,
                                 uint64_t n,
                                 uint64_t cap,
                                 struct IiclabEstimate *out);

/**
 * `P(0 <-> x)` with `x` given by `d` coordinates, inside `B(restriction)`
 * when `restriction >= 0`.
 *
 * # Safety
 * `coords` must point to `d` integers; `cfg` must be live; `out` valid.
 */
enum IiclabStatus iiclab_two_point(const struct IiclabConfig *cfg,
                                   const int32_t *coords,
                                   uint32_t d,
                                   int64_t restriction,
                                   uint64_t n,
                                   uint64_t cap,
                                   struct IiclabEstimate *out);

/**
 * Kernel from `rows * cols` row-major positive entries.
 *
 * # Safety
 * `entries` must point to `rows * cols` doubles; `out` must be valid.
 */
enum IiclabStatus iiclab_kernel_new(size_t rows,
                                    size_t cols,
                                    const double *entries,
                                    struct IiclabKernel **out);

/**
 * # Safety
 * `k` must come from [`iiclab_kernel_new`] and not be used afterwards.
 */
void iiclab_kernel_free(struct IiclabKernel *k);

/**
 * Hopf's `kappa` and the contraction factor `(kappa-1)/(kappa+1)`.
 *
 * # Safety
 * `k` must be live; `kappa` and `contraction` valid pointers.
 */
enum IiclabStatus iiclab_kernel_kappa(const struct IiclabKernel *k,
                                      double *kappa,
                                      double *contraction);

/**
 * `(Tf)(i)` for each row `i`; `f` has `n_cols` entries, `out` `n_rows`.
 *
 * # Safety
 * Pointers must reference arrays of the stated lengths.
 */
enum IiclabStatus iiclab_kernel_apply(const struct IiclabKernel *k,
                                      const double *f,
                                      size_t n_f,
                                      double *out,
                                      size_t n_out);

/**
 * Relative oscillation of `f/g`.
 *
 * # Safety
 * `f` and `g` must point to `n` doubles; `out` must be valid.
 */
enum IiclabStatus iiclab_oscillation(const double *f, const double *g, size_t n, double *out);

/**
 * Runs a CLI subcommand (e.g. `"hopf-demo"`) with a TOML configuration
 * and returns its JSON report in `json_out`, to be released with
 * [`iiclab_string_free`]. `exit_code` receives the command's exit code.
 *
 * # Safety
 * `command` and `config_toml` must be NUL-terminated strings; output
 * pointers must be valid.
 */
enum IiclabStatus iiclab_run_command(const char *command,
                                     const char *config_toml,
                                     uint64_t seed,
                                     char **json_out,
                                     int32_t *exit_code);

/**
 * # Safety
 * `s` must come from this library and not be used afterwards.
 */
void iiclab_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* IICLAB_H */

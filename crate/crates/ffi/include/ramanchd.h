#ifndef RAMANCHD_H
#define RAMANCHD_H

#include <stdbool.h>
#include <stddef.h>

/**
 * Result codes shared by every function.
 */
typedef enum RamanStatus {
  RAMAN_STATUS_OK = 0,
  RAMAN_STATUS_NULL_POINTER = 1,
  RAMAN_STATUS_INVALID_ARGUMENT = 2,
  RAMAN_STATUS_CONFIG = 3,
  RAMAN_STATUS_CONVERGENCE = 4,
  RAMAN_STATUS_NUMERICAL = 5,
  RAMAN_STATUS_IO = 6,
  /**
   * The steady state has not been computed yet.
   */
  RAMAN_STATUS_NOT_READY = 7,
  RAMAN_STATUS_PANIC = 8,
} RamanStatus;

/**
 * A parsed scenario configuration.
 */
typedef struct RamanConfig RamanConfig;

/**
 * A truncated cavity-vibration model with its generator and, once
 * computed, its steady state.
 */
typedef struct RamanModel RamanModel;

/**
 * Physical parameters in eV. Set `temperature` or `n_th` to NaN to leave it
 * unspecified; at least one must be given.
 */
typedef struct RamanParams {
  double omega_m;
  double delta;
  double g;
  double omega_pump;
  double kappa;
  double gamma_m;
  double temperature;
  double n_th;
  double omega_c;
  double phi;
} RamanParams;

/**
 * Steady-state expectation values.
 */
typedef struct RamanMoments {
  double alpha_re;
  double alpha_im;
  double cavity_photons;
  double phonons;
  double residual;
  double min_eigenvalue;
} RamanMoments;

/**
 * Zero-delay noise terms at one quadrature phase.
 */
typedef struct RamanNoise {
  double variance;
  double h2;
  double h3;
  double hn;
} RamanNoise;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *raman_version(void);

/**
 * Copies the calling thread's last error message into `buf` (always
 * NUL-terminated when `len > 0`) and returns the full message length.
 *
 * # Safety
 * `buf` must be null or point to at least `len` writable bytes.
 */
size_t raman_last_error_message(char *buf, size_t len);

/**
 * Fills `out` with the stock parameter set.
 *
 * # Safety
 * `out` must be null or point to a writable `RamanParams`.
 */
enum RamanStatus raman_params_default(struct RamanParams *out);

/**
 * Bose-Einstein occupation at frequency `omega` (eV) and `temperature` (K).
 *
 * # Safety
 * `out` must be null or point to a writable `double`.
 */
enum RamanStatus raman_thermal_occupation(double omega, double temperature, double *out);

/**
 * Builds a model. `displaced` selects the frame displaced by the bare cavity
 * mean field instead of the plain Fock basis.
 *
 * # Safety
 * `params` must point to a valid `RamanParams`; `out` must be writable.
 */
enum RamanStatus raman_model_new(const struct RamanParams *params,
                                 size_t n_cavity,
                                 size_t n_vibration,
                                 bool displaced,
                                 struct RamanModel **out);

/**
 * Releases a model. Null is ignored.
 *
 * # Safety
 * `model` must be null or a pointer returned by `raman_model_new` that has
 * not been freed.
 */
void raman_model_free(struct RamanModel *model);

/**
 * Hilbert-space dimension, or 0 for a null handle.
 *
 * # Safety
 * `model` must be null or a live handle.
 */
size_t raman_model_dim(const struct RamanModel *model);

/**
 * Solves for the steady state and caches it on the handle.
 *
 * # Safety
 * `model` must be null or a live handle.
 */
enum RamanStatus raman_model_solve(struct RamanModel *model);

/**
 * Steady-state moments of a solved model.
 *
 * # Safety
 * `model` must be null or a live handle; `out` must be writable.
 */
enum RamanStatus raman_model_moments(const struct RamanModel *model, struct RamanMoments *out);

/**
 * Zero-delay noise terms of a solved model at phase `phi`.
 *
 * # Safety
 * `model` must be null or a live handle; `out` must be writable.
 */
enum RamanStatus raman_model_noise(const struct RamanModel *model,
                                   double phi,
                                   struct RamanNoise *out);

/**
 * Both CHD branches on the uniform grid τ_k = k·tau_max/(count−1).
 * `positive[k]` and `negative[k]` receive h at +τ_k and −τ_k.
 *
 * # Safety
 * `model` must be null or a live handle; `positive` and `negative` must each
 * hold `count` writable doubles.
 */
enum RamanStatus raman_model_chd(const struct RamanModel *model,
                                 double phi,
                                 double tau_max,
                                 size_t count,
                                 double *positive,
                                 double *negative);

/**
 * Loads a scenario configuration. `scenario` may be null to take the name
 * from the file.
 *
 * # Safety
 * `path` must be a NUL-terminated string, `scenario` null or one, and `out`
 * writable.
 */
enum RamanStatus raman_config_load(const char *path,
                                   const char *scenario,
                                   struct RamanConfig **out);

/**
 * Releases a configuration. Null is ignored.
 *
 * # Safety
 * `config` must be null or a pointer from `raman_config_load` not yet freed.
 */
void raman_config_free(struct RamanConfig *config);

/**
 * Runs the scenario and writes its output files. `out_dir` may be null to
 * use the environment override or the configured directory; `threads` of 0
 * uses the default pool.
 *
 * # Safety
 * `config` must be a live handle and `out_dir` null or NUL-terminated.
 */
enum RamanStatus raman_run_scenario(const struct RamanConfig *config,
                                    const char *out_dir,
                                    size_t threads);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* RAMANCHD_H */

#ifndef SPINTRAJ_H
#define SPINTRAJ_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes returned by every fallible entry point.
 */
typedef enum StjStatus {
  StjOk = 0,
  /**
   * A required pointer argument was null.
   */
  StjErrNull = 1,
  /**
   * A parameter was out of range (sizes, rates, window, order).
   */
  StjErrInvalid = 2,
  /**
   * Lattice too large for the requested backend.
   */
  StjErrTooLarge = 3,
  /**
   * Filesystem error while writing output.
   */
  StjErrIo = 4,
  /**
   * No surviving trajectories, nothing to average.
   */
  StjErrEmpty = 5,
  /**
   * A string argument was not valid UTF-8, or an unknown name.
   */
  StjErrName = 6,
  /**
   * Unexpected internal failure.
   */
  StjErrInternal = 7,
} StjStatus;

/**
 * A completed trajectory ensemble (opaque).
 */
typedef struct StjEnsemble StjEnsemble;

/**
 * Lattice and coupling parameters shared by all backends.
 */
typedef struct StjParams {
  uint32_t lx;
  uint32_t ly;
  /**
   * Nonzero for periodic boundaries, zero for open.
   */
  int32_t periodic;
  double jx;
  double jy;
  double jz;
  /**
   * Local decay rate; must be positive.
   */
  double gamma;
} StjParams;

/**
 * Integration controls for the stochastic backends.
 */
typedef struct StjRunConfig {
  double dt;
  double t_max;
  double window_start;
  /**
   * Window end; values <= 0 mean "until t_max".
   */
  double window_end;
  /**
   * Sample observables every this many steps (>= 1).
   */
  uint32_t record_every;
  uint64_t n_traj;
  uint64_t seed;
  /**
   * Worker threads; 0 picks SPINTRAJ_WORKERS or the CPU count.
   */
  uint32_t workers;
} StjRunConfig;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Run a truncated-cumulant trajectory ensemble.
 *
 * `order` is 1 (site means) or 2 (means plus cross-site covariances); `eta`
 * is the detection efficiency in [0, 1] with 0 meaning deterministic
 * evolution; nonzero `cov_noise` adds the multiplicative noise of the
 * covariance equation; `init_kick` tilts the initial all-down state by a
 * uniform transverse component.
 */
enum StjStatus stj_run_cumulant(const struct StjParams *params,
                                const struct StjRunConfig *cfg,
                                uint32_t order,
                                double eta,
                                int32_t cov_noise,
                                double init_kick,
                                int32_t fourth_moments,
                                struct StjEnsemble **out);

/**
 * Run a quantum-jump (wavefunction Monte Carlo) ensemble. Limited to
 * lattices small enough for dense state vectors.
 */
enum StjStatus stj_run_jump(const struct StjParams *params,
                            const struct StjRunConfig *cfg,
                            struct StjEnsemble **out);

/**
 * Release an ensemble handle. Null is a no-op.
 */
void stj_ensemble_free(struct StjEnsemble *handle);

/**
 * Total trajectories in the ensemble (surviving + divergent).
 */
uint64_t stj_ensemble_n_total(const struct StjEnsemble *handle);

/**
 * Trajectories flagged divergent and excluded from averages.
 */
uint64_t stj_ensemble_n_divergent(const struct StjEnsemble *handle);

/**
 * Number of named windowed scalars per trajectory.
 */
uint32_t stj_scalar_count(void);

/**
 * Name of scalar `idx`, or null when out of range. The returned pointer is
 * static; do not free it.
 */
const char *stj_scalar_name(uint32_t idx);

/**
 * Ensemble mean and standard error of a named windowed scalar (see
 * `stj_scalar_name` for the table).
 */
enum StjStatus stj_ensemble_scalar(const struct StjEnsemble *handle,
                                   const char *name,
                                   double *mean,
                                   double *se);

/**
 * Structure factor `S^{phi phi}` at wave vector 0 (or `(pi,pi)` when
 * `staggered` is nonzero) with its trajectory-level standard error.
 */
enum StjStatus stj_ensemble_structure_factor(const struct StjEnsemble *handle,
                                             double phi,
                                             int32_t staggered,
                                             double *value,
                                             double *se);

/**
 * Quadrature angle maximizing the ensemble-mean structure factor.
 */
enum StjStatus stj_ensemble_optimal_phi(const struct StjEnsemble *handle,
                                        int32_t staggered,
                                        double *phi);

/**
 * Quantum Fisher information bound `4 F_Q / N` at quadrature angle `phi`.
 */
enum StjStatus stj_ensemble_fisher_bound(const struct StjEnsemble *handle,
                                         double phi,
                                         double *value,
                                         double *se);

/**
 * Inverse Wineland squeezing parameter `xi_R^{-2}` for rotations about the
 * in-plane axis `phi` (jackknifed standard error).
 */
enum StjStatus stj_ensemble_squeezing(const struct StjEnsemble *handle,
                                      double phi,
                                      double *value,
                                      double *se);

/**
 * Write the per-trajectory record table as CSV.
 */
enum StjStatus stj_ensemble_write_records_csv(const struct StjEnsemble *handle, const char *path);

/**
 * Exact master-equation steady state on a small lattice: magnetization
 * `m^z`, the x structure factor, and the optimal-angle structure factor.
 * Any out-pointer may be null to skip that value.
 */
enum StjStatus stj_exact_steady(const struct StjParams *params,
                                double tol,
                                double t_max,
                                double *mz,
                                double *sxx0,
                                double *sphi_opt);

/**
 * Library version as a static string.
 */
const char *stj_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SPINTRAJ_H */

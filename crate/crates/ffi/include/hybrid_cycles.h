#ifndef HYBRID_CYCLES_H
#define HYBRID_CYCLES_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result codes of every fallible call.
typedef enum HcStatus {
  HC_STATUS_OK = 0,
  HC_STATUS_NULL_POINTER = 1,
  HC_STATUS_INVALID_ARGUMENT = 2,
  HC_STATUS_UNKNOWN_MODEL = 3,
  // Integration, refinement or root-finding failure.
  HC_STATUS_NUMERICAL = 4,
  // The orbit breaks a standing assumption (grazing, Zeno, fixed point of the field).
  HC_STATUS_HYPOTHESIS_VIOLATION = 5,
  HC_STATUS_NOT_FIXED_POINT = 6,
  HC_STATUS_BUFFER_TOO_SMALL = 7,
  HC_STATUS_PANIC = 8,
} HcStatus;

// How a simulation ended.
typedef enum HcTermination {
  HC_TERMINATION_TIME_ELAPSED = 0,
  HC_TERMINATION_IMPACT_BUDGET = 1,
  HC_TERMINATION_ZENO_SUSPECTED = 2,
  HC_TERMINATION_LEFT_DOMAIN = 3,
  HC_TERMINATION_BLOW_UP = 4,
} HcTermination;

typedef enum HcVerdict {
  HC_VERDICT_STABLE = 0,
  HC_VERDICT_UNSTABLE = 1,
  HC_VERDICT_MARGINAL = 2,
  // Volume test without a verdict.
  HC_VERDICT_INCONCLUSIVE = 3,
} HcVerdict;

// A built-in hybrid system with its section chart.
typedef struct HcModel HcModel;

// A simulated hybrid trajectory.
typedef struct HcTrajectory HcTrajectory;

// Solver settings. Obtain defaults with [`hc_options_default`].
typedef struct HcOptions {
  double rel_tol;
  double abs_tol;
  double t_tol;
  double h_tol;
  size_t max_impacts;
} HcOptions;

// Decomposed stability factor of a periodic orbit.
//
// For systems of dimension above two only `product` (the volume bound),
// `reset_derivative`, `speed_ratio`, `sine_ratio`, `divergence_factor` and
// `period` are filled; `fd_check` is NaN when no finite difference was taken.
typedef struct HcStability {
  double fixed_point;
  double reset_derivative;
  double speed_ratio;
  double sine_ratio;
  double divergence_factor;
  double product;
  double fd_check;
  double period;
  size_t impacts_per_period;
  enum HcVerdict verdict;
} HcStability;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Default solver settings.
struct HcOptions hc_options_default(void);

// Copy the last error message of this thread into `buf` (NUL-terminated,
// truncated to `len - 1` bytes). Returns the full message length in bytes.
//
// # Safety
// `buf` must be null or point to `len` writable bytes.
size_t hc_last_error(char *buf, size_t len);

// Build a named model. `params_json` may be null for the defaults.
//
// # Safety
// `name` must be a NUL-terminated string, `params_json` null or one, and
// `out` a valid pointer.
enum HcStatus hc_model_new(const char *name, const char *params_json, struct HcModel **out);

// # Safety
// `model` must be null or a handle from [`hc_model_new`] not yet freed.
void hc_model_free(struct HcModel *model);

// State dimension of the model, 0 for a null handle.
//
// # Safety
// `model` must be null or a live handle.
size_t hc_model_dimension(const struct HcModel *model);

// Copy the model's default initial state into `out`.
//
// # Safety
// `model` must be a live handle and `out` point to `len` writable doubles.
enum HcStatus hc_model_initial_state(const struct HcModel *model, double *out, size_t len);

// Simulate from `x0` (length `dim`) for `horizon` time units.
// `options` may be null for the defaults.
//
// # Safety
// `model` must be a live handle, `x0` point to `dim` doubles, `options` be
// null or valid, and `out` a valid pointer.
enum HcStatus hc_simulate(const struct HcModel *model,
                          const double *x0,
                          size_t dim,
                          double horizon,
                          const struct HcOptions *options,
                          struct HcTrajectory **out);

// # Safety
// `traj` must be null or a handle from [`hc_simulate`] not yet freed.
void hc_trajectory_free(struct HcTrajectory *traj);

// # Safety
// `traj` must be null or a live handle.
size_t hc_trajectory_impact_count(const struct HcTrajectory *traj);

// # Safety
// `traj` must be null or a live handle.
double hc_trajectory_duration(const struct HcTrajectory *traj);

// # Safety
// `traj` must be a live handle and `out` a valid pointer.
enum HcStatus hc_trajectory_termination(const struct HcTrajectory *traj, enum HcTermination *out);

// Impact `index`: its time and the pre- and post-impact states.
// Any of the output pointers may be null.
//
// # Safety
// `traj` must be a live handle; non-null state buffers must hold `len` doubles.
enum HcStatus hc_trajectory_impact(const struct HcTrajectory *traj,
                                   size_t index,
                                   double *t,
                                   double *x_minus,
                                   double *x_plus,
                                   size_t len);

// State at time `t` (post-impact at impact times).
//
// # Safety
// `traj` must be a live handle and `out` point to `len` writable doubles.
enum HcStatus hc_trajectory_state_at(const struct HcTrajectory *traj,
                                     double t,
                                     double *out,
                                     size_t len);

// Final state of the trajectory.
//
// # Safety
// `traj` must be a live handle and `out` point to `len` writable doubles.
enum HcStatus hc_trajectory_final_state(const struct HcTrajectory *traj, double *out, size_t len);

// Locate a period-`period` orbit from the chart coordinate `s_guess` (NaN for
// the model default) and report its stability factor.
//
// # Safety
// `model` must be a live handle, `options` null or valid, `out` valid.
enum HcStatus hc_stability(const struct HcModel *model,
                           double s_guess,
                           size_t period,
                           const struct HcOptions *options,
                           struct HcStability *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* HYBRID_CYCLES_H */

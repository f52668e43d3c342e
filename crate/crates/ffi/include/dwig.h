#ifndef DWIG_H
#define DWIG_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum DwigStatus {
  DWIG_STATUS_OK = 0,
  DWIG_STATUS_NULL_POINTER = 1,
  DWIG_STATUS_INVALID_ARGUMENT = 2,
  DWIG_STATUS_CONFIG = 3,
  DWIG_STATUS_DIVERGED = 4,
  DWIG_STATUS_SINGULAR = 5,
  DWIG_STATUS_UNREALIZABLE = 6,
  DWIG_STATUS_IO = 7,
  DWIG_STATUS_PANIC = 8,
} DwigStatus;

typedef struct DwigLog DwigLog;

typedef struct DwigPlant DwigPlant;

typedef struct DwigRls DwigRls;

typedef struct DwigScenario DwigScenario;

/**
 * Plant inputs, per-unit.
 */
typedef struct DwigInputs {
  double u_d2;
  double u_q2;
  double tm;
  double r_load;
  double u_dr;
  double u_qr;
} DwigInputs;

/**
 * Six flux linkages and rotor speed, per-unit.
 */
typedef struct DwigState {
  double psi_d1;
  double psi_q1;
  double psi_d2;
  double psi_q2;
  double psi_dr;
  double psi_qr;
  double omega;
} DwigState;

typedef struct DwigMvConfig {
  double rho;
  double w;
  double u_star;
  double u_min;
  double u_max;
} DwigMvConfig;

typedef struct DwigControlOutput {
  double applied;
  double unclamped;
} DwigControlOutput;

/**
 * Fixed columns of one log row; estimates are read with [`dwig_log_theta`].
 */
typedef struct DwigLogRow {
  double time;
  double terminal_pu;
  double terminal_v;
  double measured_v;
  double u_applied_v;
  double u_unclamped_v;
  double speed_pu;
  double torque_pu;
  double load_pu;
  double reference_v;
  double prediction_error_v;
  int32_t realizable;
} DwigLogRow;

typedef struct DwigMetrics {
  double overshoot;
  double settling_time;
  /**
   * 1 when the output stays inside the band over the final window.
   */
  int32_t settled;
  double control_spike;
  double steady_control;
  double final_value;
} DwigMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or null. Valid until the
 * next call into the library from the same thread.
 */
const char *dwig_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *dwig_version(void);

/**
 * Plant with the built-in default parameters.
 */
enum DwigStatus dwig_plant_new_default(struct DwigPlant **out);

/**
 * Plant from machine parameters in TOML text.
 */
enum DwigStatus dwig_plant_from_toml(const char *toml, struct DwigPlant **out);

void dwig_plant_free(struct DwigPlant *plant);

/**
 * Electromechanical equilibrium for the given inputs.
 */
enum DwigStatus dwig_plant_operating_point(const struct DwigPlant *plant,
                                           const struct DwigInputs *inputs,
                                           struct DwigState *out);

/**
 * Electrical steady state at a fixed rotor speed.
 */
enum DwigStatus dwig_plant_steady_state(const struct DwigPlant *plant,
                                        const struct DwigInputs *inputs,
                                        double omega,
                                        struct DwigState *out);

/**
 * Writes the seven state derivatives to `out`.
 */
enum DwigStatus dwig_plant_derivative(const struct DwigPlant *plant,
                                      const struct DwigState *state,
                                      const struct DwigInputs *inputs,
                                      double *out);

/**
 * One fourth-order Runge-Kutta step of length `h` seconds; `state` is updated in place.
 */
enum DwigStatus dwig_plant_step(const struct DwigPlant *plant,
                                struct DwigState *state,
                                const struct DwigInputs *inputs,
                                double h);

/**
 * Terminal voltage magnitude, per-unit.
 */
enum DwigStatus dwig_plant_terminal_voltage(const struct DwigPlant *plant,
                                            const struct DwigState *state,
                                            double r_load,
                                            double *out);

enum DwigStatus dwig_rls_new(size_t order, double lambda, double p0, struct DwigRls **out);

void dwig_rls_free(struct DwigRls *rls);

/**
 * Number of estimated parameters, `2 * order - 1`.
 */
size_t dwig_rls_num_params(const struct DwigRls *rls);

/**
 * One update with regressor `phi` (`len` entries) and measurement `y`.
 * The a-priori prediction error is written to `error` when non-null.
 */
enum DwigStatus dwig_rls_update(struct DwigRls *rls,
                                const double *phi,
                                size_t len,
                                double y,
                                double *error);

/**
 * Copies the parameter estimates, `(a1.., b0..)`, into `out` of length `len`.
 */
enum DwigStatus dwig_rls_theta(const struct DwigRls *rls, double *out, size_t len);

/**
 * Smallest eigenvalue of the covariance matrix.
 */
enum DwigStatus dwig_rls_min_eigenvalue(const struct DwigRls *rls, double *out);

/**
 * Penalized minimum-variance control for a model of order `order`.
 *
 * `a` holds `order - 1` coefficients, `b` holds `order`. `hist_y` holds the
 * outputs `y(t) .. y(t-order+2)` and `hist_u` the controls
 * `u(t-1) .. u(t-order+1)`, most recent first, `order - 1` each.
 */
enum DwigStatus dwig_mv_control(const struct DwigMvConfig *config,
                                size_t order,
                                const double *a,
                                const double *b,
                                const double *hist_y,
                                const double *hist_u,
                                struct DwigControlOutput *out);

/**
 * Loads a scenario file; a relative machine path resolves against its directory.
 */
enum DwigStatus dwig_scenario_load(const char *path, struct DwigScenario **out);

void dwig_scenario_free(struct DwigScenario *scenario);

/**
 * Overrides the seed and the `(lambda, rho)` tuning pair.
 */
enum DwigStatus dwig_scenario_set_tuning(struct DwigScenario *scenario,
                                         uint64_t seed,
                                         double lambda,
                                         double rho);

/**
 * Runs the scenario in its configured mode.
 */
enum DwigStatus dwig_scenario_run(const struct DwigScenario *scenario, struct DwigLog **out);

void dwig_log_free(struct DwigLog *log);

size_t dwig_log_num_rows(const struct DwigLog *log);

/**
 * Number of parameter estimates per row (0 for open-loop logs).
 */
size_t dwig_log_num_theta(const struct DwigLog *log);

enum DwigStatus dwig_log_row(const struct DwigLog *log, size_t index, struct DwigLogRow *out);

/**
 * Copies the estimates logged at row `index` into `out` of length `len`.
 */
enum DwigStatus dwig_log_theta(const struct DwigLog *log, size_t index, double *out, size_t len);

enum DwigStatus dwig_log_write_csv(const struct DwigLog *log, const char *path);

/**
 * Performance metrics after `event_time` with settling band `band_fraction`.
 */
enum DwigStatus dwig_log_metrics(const struct DwigLog *log,
                                 double band_fraction,
                                 double event_time,
                                 struct DwigMetrics *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DWIG_H */

#ifndef DLAC_H
#define DLAC_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/*
 Result of every fallible call.
 */
typedef enum DlacStatus {
  DLAC_STATUS_OK = 0,
  DLAC_STATUS_NULL_POINTER = 1,
  DLAC_STATUS_INVALID_ARGUMENT = 2,
  DLAC_STATUS_IO = 3,
  DLAC_STATUS_PARSE = 4,
  DLAC_STATUS_INVALID_NETWORK = 5,
  /*
   Newton-Raphson did not converge.
   */
  DLAC_STATUS_DIVERGENCE = 6,
  /*
   Singular Jacobian or linear system.
   */
  DLAC_STATUS_SINGULAR = 7,
  /*
   Input the models cannot represent, such as phase shifters.
   */
  DLAC_STATUS_UNSUPPORTED = 8,
  /*
   Regression failure: rank deficiency, too few observations.
   */
  DLAC_STATUS_REGRESSION = 9,
  /*
   A Rust panic was caught at the boundary.
   */
  DLAC_STATUS_PANIC = 10,
} DlacStatus;

typedef enum DlacCaseFormat {
  /*
   `.m` files are MATPOWER, anything else native JSON.
   */
  DLAC_CASE_FORMAT_AUTO = 0,
  DLAC_CASE_FORMAT_MATPOWER = 1,
  DLAC_CASE_FORMAT_NATIVE = 2,
} DlacCaseFormat;

typedef enum DlacModel {
  DLAC_MODEL_DC = 0,
  DLAC_MODEL_DDC = 1,
  DLAC_MODEL_LAC = 2,
  DLAC_MODEL_DLAC = 3,
} DlacModel;

/*
 Opaque AC power-flow solution.
 */
typedef struct DlacAcSolution DlacAcSolution;

/*
 Opaque DDC/DLAC coefficient set.
 */
typedef struct DlacCoefficients DlacCoefficients;

/*
 Opaque linear-model solution.
 */
typedef struct DlacLinearSolution DlacLinearSolution;

/*
 Opaque power network.
 */
typedef struct DlacNetwork DlacNetwork;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Message of the last failed call on this thread; empty after a success.
 The pointer stays valid until the next call on the same thread.
 */
const char *dlac_last_error_message(void);

/*
 Library version as a static NUL-terminated string.
 */
const char *dlac_version(void);

/*
 Loads and validates a case file.

 # Safety
 `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum DlacStatus dlac_network_load(const char *path,
                                  enum DlacCaseFormat format,
                                  struct DlacNetwork **out);

/*
 Writes the network in the native JSON format.

 # Safety
 `net` must come from this library; `path` must be NUL-terminated.
 */
enum DlacStatus dlac_network_save(const struct DlacNetwork *net, const char *path);

/*
 Copy of `net` with every load scaled by `lambda` and non-slack
 generation redispatched to match.

 # Safety
 `net` must come from this library and `out` be a valid pointer.
 */
enum DlacStatus dlac_network_scale_load(const struct DlacNetwork *net,
                                        double lambda,
                                        struct DlacNetwork **out);

/*
 # Safety
 `net` must come from this library or be null.
 */
void dlac_network_free(struct DlacNetwork *net);

/*
 Number of buses; 0 for a null handle.

 # Safety
 `net` must come from this library or be null.
 */
size_t dlac_network_bus_count(const struct DlacNetwork *net);

/*
 Number of branches, in service or not; 0 for a null handle.

 # Safety
 `net` must come from this library or be null.
 */
size_t dlac_network_branch_count(const struct DlacNetwork *net);

/*
 # Safety
 `net` must come from this library or be null.
 */
double dlac_network_base_mva(const struct DlacNetwork *net);

/*
 Newton-Raphson from a flat start. `tol <= 0` and `max_iter == 0` select
 the defaults (1e-8 p.u., 30 iterations).

 # Safety
 `net` must come from this library and `out` be a valid pointer.
 */
enum DlacStatus dlac_solve_ac(const struct DlacNetwork *net,
                              double tol,
                              size_t max_iter,
                              struct DlacAcSolution **out);

/*
 # Safety
 `sol` must come from this library or be null.
 */
void dlac_ac_solution_free(struct DlacAcSolution *sol);

/*
 # Safety
 `sol` must come from this library or be null.
 */
size_t dlac_ac_solution_iterations(const struct DlacAcSolution *sol);

/*
 # Safety
 `sol` must come from this library or be null.
 */
double dlac_ac_solution_max_mismatch(const struct DlacAcSolution *sol);

/*
 Number of bus values returned by the voltage getter.

 # Safety
 `sol` must come from this library or be null.
 */
size_t dlac_ac_solution_bus_count(const struct DlacAcSolution *sol);

/*
 Number of in-service branch flows.

 # Safety
 `sol` must come from this library or be null.
 */
size_t dlac_ac_solution_flow_count(const struct DlacAcSolution *sol);

/*
 Voltage magnitudes (p.u.) and angles (rad) in bus order.

 # Safety
 `sol` must come from this library; non-null buffers must hold `len`
 doubles.
 */
enum DlacStatus dlac_ac_solution_voltages(const struct DlacAcSolution *sol,
                                          double *vm,
                                          double *va,
                                          size_t len);

/*
 Branch flows in p.u. on the system base, one entry per in-service
 branch. `branch` receives the 0-based branch index.

 # Safety
 `sol` must come from this library; non-null buffers must hold `len`
 values.
 */
enum DlacStatus dlac_ac_solution_flows(const struct DlacAcSolution *sol,
                                       size_t *branch,
                                       double *p_from,
                                       double *q_from,
                                       double *p_to,
                                       double *q_to,
                                       size_t len);

/*
 All-ones coefficients (DC and LAC).
 */
struct DlacCoefficients *dlac_coefficients_identity(void);

/*
 Coefficients from `k_d` and the five `k_a` values.

 # Safety
 `k_a` must point to 5 doubles and `out` be a valid pointer.
 */
enum DlacStatus dlac_coefficients_new(double k_d, const double *k_a, struct DlacCoefficients **out);

/*
 # Safety
 `path` must be NUL-terminated and `out` a valid pointer.
 */
enum DlacStatus dlac_coefficients_load(const char *path, struct DlacCoefficients **out);

/*
 # Safety
 `c` must come from this library; `path` must be NUL-terminated.
 */
enum DlacStatus dlac_coefficients_save(const struct DlacCoefficients *c, const char *path);

/*
 Reads `k_d` and the five `k_a` values; either pointer may be null.

 # Safety
 `c` must come from this library; `k_a`, if non-null, must hold 5 doubles.
 */
enum DlacStatus dlac_coefficients_get(const struct DlacCoefficients *c, double *k_d, double *k_a);

/*
 # Safety
 `c` must come from this library or be null.
 */
void dlac_coefficients_free(struct DlacCoefficients *c);

/*
 Fits DDC/DLAC coefficients on AC solutions of `net` (or of cases sharing
 its branch data).

 # Safety
 `net` must come from this library; `solutions` must point to `count`
 solution handles; `out` must be a valid pointer.
 */
enum DlacStatus dlac_fit_coefficients(const struct DlacNetwork *net,
                                      const struct DlacAcSolution *const *solutions,
                                      size_t count,
                                      struct DlacCoefficients **out);

/*
 Solves a linear model. `coeffs` may be null for unit coefficients.

 # Safety
 `net` (and `coeffs` if non-null) must come from this library; `out` must
 be a valid pointer.
 */
enum DlacStatus dlac_solve_linear(const struct DlacNetwork *net,
                                  enum DlacModel model,
                                  const struct DlacCoefficients *coeffs,
                                  struct DlacLinearSolution **out);

/*
 # Safety
 `sol` must come from this library or be null.
 */
void dlac_linear_solution_free(struct DlacLinearSolution *sol);

/*
 # Safety
 `sol` must come from this library or be null.
 */
size_t dlac_linear_solution_bus_count(const struct DlacLinearSolution *sol);

/*
 # Safety
 `sol` must come from this library or be null.
 */
size_t dlac_linear_solution_flow_count(const struct DlacLinearSolution *sol);

/*
 Whether the model produces reactive flows (LAC family).

 # Safety
 `sol` must come from this library or be null.
 */
bool dlac_linear_solution_has_reactive(const struct DlacLinearSolution *sol);

/*
 # Safety
 `sol` must come from this library; non-null buffers must hold `len`
 doubles.
 */
enum DlacStatus dlac_linear_solution_voltages(const struct DlacLinearSolution *sol,
                                              double *vm,
                                              double *va,
                                              size_t len);

/*
 Branch flows in p.u.; reactive entries are NaN for the DC family.

 # Safety
 `sol` must come from this library; non-null buffers must hold `len`
 values.
 */
enum DlacStatus dlac_linear_solution_flows(const struct DlacLinearSolution *sol,
                                           double *p_from,
                                           double *q_from,
                                           double *p_to,
                                           double *q_to,
                                           size_t len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DLAC_H */

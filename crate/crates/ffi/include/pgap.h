#ifndef PGAP_H
#define PGAP_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/*
 Result code of every fallible call.
 */
typedef enum PgapStatus {
  PGAP_STATUS_OK = 0,
  /*
   Null pointer or malformed string argument.
   */
  PGAP_STATUS_NULL_ARGUMENT = 1,
  /*
   Parameters, density or file contents were rejected.
   */
  PGAP_STATUS_INVALID_INPUT = 2,
  /*
   A solver failed to converge or to bracket the eigenvalue.
   */
  PGAP_STATUS_SOLVER_FAILURE = 3,
  PGAP_STATUS_IO = 4,
  PGAP_STATUS_PANIC = 5,
} PgapStatus;

/*
 How a [`PgapGap`] was obtained.
 */
typedef enum PgapMethod {
  PGAP_METHOD_SHOOTING = 0,
  PGAP_METHOD_MATCHING = 1,
  PGAP_METHOD_INFIMUM_SCAN = 2,
} PgapMethod;

/*
 Which model density [`pgap_density_model`] samples.
 */
typedef enum PgapModelKind {
  PGAP_MODEL_KIND_MODEL = 0,
  PGAP_MODEL_KIND_H1 = 1,
  PGAP_MODEL_KIND_H2 = 2,
} PgapModelKind;

/*
 A density sampled on a grid.
 */
typedef struct PgapDensity PgapDensity;

/*
 Interpolation tables for `sin_p` and `cos_p` at one exponent.
 */
typedef struct PgapTrig PgapTrig;

/*
 Exponent, model space and bracket tolerance of a gap computation.
 A diameter `<= 0` selects the Bonnet–Myers bound (`K > 0` only), and
 `eigen_rel <= 0` the default tolerance.
 */
typedef struct PgapParams {
  double p;
  double curvature;
  double dimension;
  double diameter;
  double eigen_rel;
} PgapParams;

typedef struct PgapGap {
  double lambda;
  double bracket_lo;
  double bracket_hi;
  size_t iterations;
  enum PgapMethod method;
  /*
   Minimizing `D'` of the `K > 0` scan; NaN otherwise.
   */
  double minimizing_diameter;
} PgapGap;

typedef struct PgapValidation {
  bool passed;
  double ratio_violation;
  double derivative_violation;
} PgapValidation;

typedef struct PgapOracle {
  double value;
  double spread;
  double constraint_residual;
  double gradient_ratio;
  bool converged;
} PgapOracle;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Message of the last failed call on this thread, or null. The pointer stays
 valid until the next call into the library on the same thread.
 */
const char *pgap_last_error_message(void);

/*
 `π_p = 2π / (p sin(π/p))`.

 # Safety
 `out` must be null or valid for writes.
 */
enum PgapStatus pgap_pi_p(double p, double *out);

/*
 `D_{K,N}`; infinite for `K <= 0`.
 */
double pgap_diameter_bound(double curvature, double dimension);

/*
 # Safety
 `out` must be null or valid for writes.
 */
enum PgapStatus pgap_trig_new(double p, struct PgapTrig **out);

/*
 # Safety
 `trig` must be null or a handle from [`pgap_trig_new`] not yet freed.
 */
void pgap_trig_free(struct PgapTrig *trig);

/*
 `sin_p(t)` and `cos_p(t)`; either out-pointer may be null.

 # Safety
 `trig` must be a live handle; non-null out-pointers must be valid for writes.
 */
enum PgapStatus pgap_trig_eval(const struct PgapTrig *trig, double t, double *sin, double *cos);

/*
 Model gap `λ̂` at exactly the given diameter.

 # Safety
 `params` must be readable and `out` valid for writes.
 */
enum PgapStatus pgap_lambda_hat(const struct PgapParams *params, struct PgapGap *out);

/*
 Sharp gap: `λ̂` for `K <= 0`, the infimum over `D' <= D` for `K > 0`.

 # Safety
 `params` must be readable and `out` valid for writes.
 */
enum PgapStatus pgap_lambda_sharp(const struct PgapParams *params, struct PgapGap *out);

/*
 Random MCP density from generator stream `stream` of `seed`.

 # Safety
 `out` must be valid for writes.
 */
enum PgapStatus pgap_density_random(double curvature,
                                    double dimension,
                                    double diameter,
                                    uint64_t seed,
                                    uint64_t stream,
                                    size_t degree,
                                    size_t nodes,
                                    struct PgapDensity **out);

/*
 # Safety
 `out` must be valid for writes.
 */
enum PgapStatus pgap_density_model(double curvature,
                                   double dimension,
                                   double diameter,
                                   enum PgapModelKind kind,
                                   size_t nodes,
                                   struct PgapDensity **out);

/*
 Reads an `x,log_h,log_deriv` file for the given space.

 # Safety
 `path` must be a NUL-terminated UTF-8 string and `out` valid for writes.
 */
enum PgapStatus pgap_density_read(const char *path,
                                  double curvature,
                                  double dimension,
                                  double diameter,
                                  struct PgapDensity **out);

/*
 # Safety
 `density` must be a live handle and `path` a NUL-terminated UTF-8 string.
 */
enum PgapStatus pgap_density_write(const struct PgapDensity *density, const char *path);

/*
 Number of grid nodes; 0 for a null handle.

 # Safety
 `density` must be null or a live handle.
 */
size_t pgap_density_len(const struct PgapDensity *density);

/*
 # Safety
 `density` must be null or a handle not yet freed.
 */
void pgap_density_free(struct PgapDensity *density);

/*
 Checks the MCP bounds of the density's own space. A failed check is
 reported through `out.passed`, not the status.

 # Safety
 `density` must be a live handle and `out` valid for writes.
 */
enum PgapStatus pgap_density_validate(const struct PgapDensity *density,
                                      double tol,
                                      struct PgapValidation *out);

/*
 Gap of a validated density on its own space.

 # Safety
 `density` must be a live handle and `out` valid for writes.
 */
enum PgapStatus pgap_lambda_of_density(double p,
                                       double eigen_rel,
                                       const struct PgapDensity *density,
                                       struct PgapGap *out);

/*
 Rayleigh-quotient minimum on `cells` uniform cells. A null density
 selects the model density of `params`.

 # Safety
 `params` must be readable, `density` null or live, `out` valid for writes.
 */
enum PgapStatus pgap_oracle(const struct PgapParams *params,
                            const struct PgapDensity *density,
                            size_t cells,
                            size_t restarts,
                            struct PgapOracle *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PGAP_H */

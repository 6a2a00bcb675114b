#ifndef LRDIRAC_H
#define LRDIRAC_H

/* Generated by cbindgen; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum LrdiracStatus {
  LRDIRAC_STATUS_OK = 0,
  LRDIRAC_STATUS_NULL_POINTER = 1,
  LRDIRAC_STATUS_INVALID_ARGUMENT = 2,
  LRDIRAC_STATUS_CONFIG = 3,
  LRDIRAC_STATUS_NUMERICAL = 4,
  LRDIRAC_STATUS_IO = 5,
  LRDIRAC_STATUS_BUFFER_TOO_SMALL = 6,
  LRDIRAC_STATUS_PANIC = 7,
} LrdiracStatus;

/**
 * Opaque configuration handle.
 */
typedef struct LrdiracConfig LrdiracConfig;

/**
 * Opaque handle to the reports of one run.
 */
typedef struct LrdiracOutcome LrdiracOutcome;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the last error message (NUL terminated) into `buf`.
 * Returns the message length excluding the terminator; truncates when `len` is too small.
 *
 * # Safety
 * `buf` must be null or point to `len` writable bytes.
 */
uintptr_t lrdirac_last_error(char *buf, uintptr_t len);

/**
 * New configuration holding the defaults.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum LrdiracStatus lrdirac_config_new(struct LrdiracConfig **out);

/**
 * Parses a TOML document on top of the defaults.
 *
 * # Safety
 * `toml` must be a NUL-terminated string and `out` a valid pointer.
 */
enum LrdiracStatus lrdirac_config_from_toml(const char *toml, struct LrdiracConfig **out);

/**
 * Sets one dotted key from its TOML text, e.g. `("potential.rho", "1.5")`.
 *
 * # Safety
 * `cfg` must come from this library; `key` and `value` must be NUL-terminated.
 */
enum LrdiracStatus lrdirac_config_set(struct LrdiracConfig *cfg,
                                      const char *key,
                                      const char *value);

/**
 * Checks every derived quantity of the configuration.
 *
 * # Safety
 * `cfg` must come from this library.
 */
enum LrdiracStatus lrdirac_config_validate(const struct LrdiracConfig *cfg);

/**
 * # Safety
 * `cfg` must be null or come from this library and not be used afterwards.
 */
void lrdirac_config_free(struct LrdiracConfig *cfg);

/**
 * Runs a subcommand by name (`"algebra-check"`, `"wave-op"`, ...). No files are written.
 *
 * # Safety
 * `cfg` must come from this library, `subcommand` must be NUL-terminated, `out` valid.
 */
enum LrdiracStatus lrdirac_run(const struct LrdiracConfig *cfg,
                               const char *subcommand,
                               struct LrdiracOutcome **out);

/**
 * Number of reports in the outcome, 0 for null.
 *
 * # Safety
 * `o` must be null or come from this library.
 */
uintptr_t lrdirac_outcome_len(const struct LrdiracOutcome *o);

/**
 * 1 when every report passed, 0 otherwise.
 *
 * # Safety
 * `o` must be null or come from this library.
 */
int32_t lrdirac_outcome_passed(const struct LrdiracOutcome *o);

/**
 * Copies report `index`: verdict (1 pass), row count, fitted exponent (NaN if none),
 * and up to `cap` abscissae and distances.
 *
 * # Safety
 * `o` must come from this library; `xs` and `ds` must be null or hold `cap` doubles;
 * the scalar outputs must be valid.
 */
enum LrdiracStatus lrdirac_outcome_report(const struct LrdiracOutcome *o,
                                          uintptr_t index,
                                          int32_t *pass,
                                          uintptr_t *rows,
                                          double *exponent,
                                          double *xs,
                                          double *ds,
                                          uintptr_t cap);

/**
 * # Safety
 * `o` must be null or come from this library and not be used afterwards.
 */
void lrdirac_outcome_free(struct LrdiracOutcome *o);

/**
 * Free dispersion sqrt(|zeta|^2 + m^2).
 *
 * # Safety
 * `zeta` must point to 3 doubles.
 */
double lrdirac_energy(const double *zeta, double mass);

/**
 * Applies the spectral projection of the free symbol at `zeta` to a spinor given as
 * 4 interleaved (re, im) pairs, in place. `branch` is +1 or -1.
 *
 * # Safety
 * `zeta` must point to 3 doubles and `spinor` to 8 writable doubles.
 */
enum LrdiracStatus lrdirac_project(const double *zeta, double mass, int32_t branch, double *spinor);

#ifdef __cplusplus
} // extern "C"
#endif // __cplusplus

#endif /* LRDIRAC_H */

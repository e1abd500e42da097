#ifndef KILLMC_H
#define KILLMC_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Outcome of a call.
typedef enum KmcStatus {
  KMC_STATUS_OK = 0,
  // A required pointer argument was null.
  KMC_STATUS_NULL_POINTER = 1,
  // A string argument was not valid UTF-8.
  KMC_STATUS_INVALID_UTF8 = 2,
  // The configuration could not be parsed or is inconsistent.
  KMC_STATUS_CONFIG = 3,
  // The model violates its standing assumptions.
  KMC_STATUS_MODEL = 4,
  // An internal numerical routine failed.
  KMC_STATUS_NUMERICAL = 5,
  // A Rust panic was caught at the boundary.
  KMC_STATUS_PANIC = 6,
} KmcStatus;

// Opaque engine handle.
typedef struct KmcEngine KmcEngine;

// Summary of one estimate.
typedef struct KmcReport {
  double mean;
  double variance;
  double std_error;
  // Half-width of the 95% confidence interval.
  double ci95;
  // Mean absolute deviation from the sample mean.
  double mad;
  double runtime_s;
  uint64_t samples;
  uint64_t seed;
} KmcReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Parse a TOML configuration and create an engine in `*out`.
//
// # Safety
// `config` must be a NUL-terminated string and `out` a valid pointer. The
// handle written to `*out` must be released with [`kmc_engine_free`].
enum KmcStatus kmc_engine_from_config(const char *config, struct KmcEngine **out);

// Apply one `section.key=value` assignment. A rejected assignment leaves
// the engine unchanged.
//
// # Safety
// `engine` must come from [`kmc_engine_from_config`] and `assignment` must
// be a NUL-terminated string.
enum KmcStatus kmc_engine_set(struct KmcEngine *engine, const char *assignment);

// Run the configured estimate and write the summary to `*out`.
//
// # Safety
// `engine` must come from [`kmc_engine_from_config`] and `out` must be a
// valid pointer.
enum KmcStatus kmc_engine_run(const struct KmcEngine *engine, struct KmcReport *out);

// Release an engine. Null is ignored.
//
// # Safety
// `engine` must be null or come from [`kmc_engine_from_config`], and must
// not be used afterwards.
void kmc_engine_free(struct KmcEngine *engine);

// Message for the last failed call on this thread, or null. The pointer is
// valid until the next call into the library on the same thread.
const char *kmc_last_error(void);

// Library version as a static NUL-terminated string.
const char *kmc_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* KILLMC_H */

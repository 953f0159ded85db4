#ifndef ABCNET_H
#define ABCNET_H

/* Generated by cbindgen from the abcnet-ffi crate; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/*
 Status code returned by every fallible entry point.
 */
typedef enum AbcnetStatus {
  ABCNET_STATUS_OK = 0,
  ABCNET_STATUS_NULL_POINTER = 1,
  ABCNET_STATUS_CONFIG = 2,
  ABCNET_STATUS_STALL = 3,
  ABCNET_STATUS_IO = 4,
  ABCNET_STATUS_INVALID_ARGUMENT = 5,
  ABCNET_STATUS_UTF8 = 6,
} AbcnetStatus;

/*
 Opaque handle to a loaded, validated experiment configuration.
 */
typedef struct AbcnetConfig AbcnetConfig;

/*
 Opaque handle to a completed inference run.
 */
typedef struct AbcnetRun AbcnetRun;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Library version as a static NUL-terminated string.
 */
const char *abcnet_version(void);

/*
 Message describing the most recent failure on this thread. The pointer
 stays valid until the next failing call on the same thread.
 */
const char *abcnet_last_error_message(void);

/*
 Load and validate a config file; on success stores a new handle in
 `out_config`.

 # Safety
 `path` must be a valid NUL-terminated string and `out_config` a valid
 pointer.
 */
enum AbcnetStatus abcnet_config_load(const char *path, struct AbcnetConfig **out_config);

/*
 Apply one `section.key=value` override, revalidating the configuration.

 # Safety
 `config` must be a live handle from `abcnet_config_load` and `assignment`
 a valid NUL-terminated string.
 */
enum AbcnetStatus abcnet_config_override(struct AbcnetConfig *config, const char *assignment);

/*
 Release a config handle (null is a no-op).

 # Safety
 `config` must be null or a live handle, and must not be used afterwards.
 */
void abcnet_config_free(struct AbcnetConfig *config);

/*
 Execute the configured engine; on success stores a new run handle in
 `out_run`.

 # Safety
 `config` must be a live config handle and `out_run` a valid pointer.
 */
enum AbcnetStatus abcnet_run(const struct AbcnetConfig *config, struct AbcnetRun **out_run);

/*
 Release a run handle (null is a no-op).

 # Safety
 `run` must be null or a live handle, and must not be used afterwards.
 */
void abcnet_run_free(struct AbcnetRun *run);

/*
 Number of stored populations.

 # Safety
 `run` must be a live run handle and `out_count` a valid pointer.
 */
enum AbcnetStatus abcnet_run_population_count(const struct AbcnetRun *run, size_t *out_count);

/*
 Acceptance threshold of population `index` (0-based).

 # Safety
 `run` must be a live run handle and `out_epsilon` a valid pointer.
 */
enum AbcnetStatus abcnet_run_epsilon(const struct AbcnetRun *run,
                                     size_t index,
                                     double *out_epsilon);

/*
 Acceptance rate of population `index` (0-based).

 # Safety
 `run` must be a live run handle and `out_rate` a valid pointer.
 */
enum AbcnetStatus abcnet_run_acceptance_rate(const struct AbcnetRun *run,
                                             size_t index,
                                             double *out_rate);

/*
 Weighted posterior mean of a parameter column in the final population.

 # Safety
 `run` must be a live run handle, `name` a valid NUL-terminated string,
 and `out_mean` a valid pointer.
 */
enum AbcnetStatus abcnet_posterior_mean(const struct AbcnetRun *run,
                                        const char *name,
                                        double *out_mean);

/*
 Weighted posterior variance of a parameter column in the final population.

 # Safety
 `run` must be a live run handle, `name` a valid NUL-terminated string,
 and `out_variance` a valid pointer.
 */
enum AbcnetStatus abcnet_posterior_variance(const struct AbcnetRun *run,
                                            const char *name,
                                            double *out_variance);

/*
 Equal-tailed credible interval of a parameter at the given mass.

 # Safety
 `run` must be a live run handle, `name` a valid NUL-terminated string,
 and `out_lo`/`out_hi` valid pointers.
 */
enum AbcnetStatus abcnet_credible_interval(const struct AbcnetRun *run,
                                           const char *name,
                                           double mass,
                                           double *out_lo,
                                           double *out_hi);

/*
 Write the complete run artifact (config echo, metadata, population
 tables, posterior summary, plot data) under `out_dir`.

 # Safety
 `run` must be a live run handle and `out_dir` a valid NUL-terminated
 string.
 */
enum AbcnetStatus abcnet_write_artifact(const struct AbcnetRun *run, const char *out_dir);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ABCNET_H */

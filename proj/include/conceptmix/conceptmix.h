/* Copyright (C) 2026 The conceptmix Authors
 * SPDX-License-Identifier: Apache-2.0
 *
 * C interface to the conceptmix composition engine. All functions return a
 * cmix_status; on failure a message for the calling thread is available from
 * cmix_last_error_message() until the next failing call on that thread.
 * Handles are opaque and must be released with the matching _free function.
 */
#ifndef CONCEPTMIX_H
#define CONCEPTMIX_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#  if defined(CMIX_BUILDING_LIBRARY)
#    define CMIX_API __declspec(dllexport)
#  else
#    define CMIX_API __declspec(dllimport)
#  endif
#elif defined(__GNUC__) || defined(__clang__)
#  define CMIX_API __attribute__((visibility("default")))
#else
#  define CMIX_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum cmix_status {
    CMIX_OK = 0,
    CMIX_ERR_ARGUMENT = 1,
    CMIX_ERR_DIMENSION = 2,
    CMIX_ERR_FORMAT = 3,
    CMIX_ERR_VALIDATION = 4,
    CMIX_ERR_DATA = 5,
    CMIX_ERR_IO = 6,
    CMIX_ERR_CONFIG = 7,
    CMIX_ERR_NUMERIC = 8,
    CMIX_ERR_EMPTY_MASK = 9,
    CMIX_ERR_DEGENERATE_LATENT = 10,
    CMIX_ERR_LINEAGE = 11,
    CMIX_ERR_INTERNAL = 12
} cmix_status;

typedef struct cmix_config cmix_config;
typedef struct cmix_run cmix_run;
typedef struct cmix_bundle cmix_bundle;

CMIX_API const char* cmix_version(void);
CMIX_API const char* cmix_status_name(cmix_status status);
/* Never NULL; empty when the thread has not seen a failure. */
CMIX_API const char* cmix_last_error_message(void);

/* ---- run configuration ---- */
CMIX_API cmix_status cmix_config_load(const char* path, cmix_config** out);
CMIX_API cmix_status cmix_config_set_seed(cmix_config* config, uint64_t seed);
CMIX_API cmix_status cmix_config_set_output_dir(cmix_config* config, const char* dir);
CMIX_API cmix_status cmix_config_set_guidance_fraction(cmix_config* config, double fraction);
CMIX_API cmix_status cmix_config_set_latent_reinit(cmix_config* config, int enabled);
CMIX_API void cmix_config_free(cmix_config* config);

/* ---- sampling ---- */
/* Samples and writes trace.csv, latent.lcb and preview.pgm (plus
 * attention.lcb when requested) into the configured output directory. */
CMIX_API cmix_status cmix_compose(const cmix_config* config, cmix_run** out);
CMIX_API size_t cmix_run_trace_rows(const cmix_run* run);
/* Number of timesteps that received guidance. */
CMIX_API size_t cmix_run_guided_steps(const cmix_run* run);
/* Total loss at the first guided evaluation and best total at the last
 * guided timestep; CMIX_ERR_ARGUMENT when no timestep was guided. */
CMIX_API cmix_status cmix_run_loss_summary(const cmix_run* run, double* initial_total, double* final_total);
/* shape = {channels, height, width} of the final latent. */
CMIX_API cmix_status cmix_run_latent_shape(const cmix_run* run, size_t shape[3]);
CMIX_API cmix_status cmix_run_copy_latent(const cmix_run* run, double* buffer, size_t count);
CMIX_API void cmix_run_free(cmix_run* run);

/* ---- assets ---- */
/* Writes bundles, a global prompt and config.json into out_dir. */
CMIX_API cmix_status cmix_make_toy_assets(uint64_t seed, const char* out_dir);
CMIX_API cmix_status cmix_gen_synthetic_bundle(uint64_t seed, size_t tokens, size_t d_text, size_t d_model,
                                               size_t rank, const char* path);
CMIX_API cmix_status cmix_bundle_load(const char* path, cmix_bundle** out);
CMIX_API const char* cmix_bundle_id(const cmix_bundle* bundle);
CMIX_API size_t cmix_bundle_token_index(const cmix_bundle* bundle);
CMIX_API size_t cmix_bundle_tokens(const cmix_bundle* bundle);
CMIX_API void cmix_bundle_free(cmix_bundle* bundle);

/* ---- gradient check ---- */
typedef struct cmix_gradcheck_report {
    size_t coordinates;
    double max_rel_error;
    double max_abs_error;
    double tolerance;
    size_t worst_index;
    double worst_analytic;
    double worst_numeric;
    int passed;
} cmix_gradcheck_report;

/* Central finite differences of the total guidance loss at t = T. A failed
 * check is reported through report->passed, not the status. */
CMIX_API cmix_status cmix_gradcheck(const cmix_config* config, cmix_gradcheck_report* report);

#ifdef __cplusplus
}
#endif

#endif /* CONCEPTMIX_H */

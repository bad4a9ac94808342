// Copyright (C) 2026 The conceptmix Authors
// SPDX-License-Identifier: Apache-2.0

#include "conceptmix/conceptmix.h"

#include <cstring>
#include <exception>
#include <new>
#include <string>

#include "conceptmix/error.hpp"
#include "conceptmix/gradcheck.hpp"
#include "conceptmix/sampler.hpp"
#include "conceptmix/toy_assets.hpp"

struct cmix_config {
    cmix::RunConfig value;
};

struct cmix_run {
    cmix::SampleResult value;
};

struct cmix_bundle {
    cmix::ConceptBundle value;
};

namespace {

thread_local std::string g_last_error;

cmix_status fail(cmix_status s, std::string msg) {
    g_last_error = std::move(msg);
    return s;
}

template <typename Fn>
cmix_status guarded(Fn&& fn) {
    try {
        fn();
        return CMIX_OK;
    } catch (const cmix::Error& e) {
        return fail(static_cast<cmix_status>(e.code()), e.what());
    } catch (const std::bad_alloc&) {
        return fail(CMIX_ERR_INTERNAL, "out of memory");
    } catch (const std::exception& e) {
        return fail(CMIX_ERR_INTERNAL, e.what());
    } catch (...) {
        return fail(CMIX_ERR_INTERNAL, "unknown exception");
    }
}

#define CMIX_REQUIRE_ARG(cond, what) \
    if (!(cond)) return fail(CMIX_ERR_ARGUMENT, what)

}  // namespace

static_assert(CMIX_ERR_INTERNAL == static_cast<int>(cmix::ErrorCode::Internal));
static_assert(CMIX_ERR_NUMERIC == static_cast<int>(cmix::ErrorCode::Numeric));

extern "C" {

const char* cmix_version(void) { return "0.1.0"; }

const char* cmix_status_name(cmix_status status) {
    if (status == CMIX_OK) return "ok";
    if (status < CMIX_ERR_ARGUMENT || status > CMIX_ERR_INTERNAL) return "unknown";
    return cmix::error_code_name(static_cast<cmix::ErrorCode>(status));
}

const char* cmix_last_error_message(void) { return g_last_error.c_str(); }

cmix_status cmix_config_load(const char* path, cmix_config** out) {
    CMIX_REQUIRE_ARG(path && out, "cmix_config_load: null argument");
    *out = nullptr;
    return guarded([&] { *out = new cmix_config{cmix::load_run_config(path)}; });
}

cmix_status cmix_config_set_seed(cmix_config* config, uint64_t seed) {
    CMIX_REQUIRE_ARG(config, "cmix_config_set_seed: null config");
    config->value.seed = seed;
    return CMIX_OK;
}

cmix_status cmix_config_set_output_dir(cmix_config* config, const char* dir) {
    CMIX_REQUIRE_ARG(config && dir && *dir, "cmix_config_set_output_dir: null config or empty directory");
    config->value.output_dir = dir;
    return CMIX_OK;
}

cmix_status cmix_config_set_guidance_fraction(cmix_config* config, double fraction) {
    CMIX_REQUIRE_ARG(config, "cmix_config_set_guidance_fraction: null config");
    return guarded([&] {
        cmix::RunConfig next = config->value;
        next.guidance.guidance_fraction = fraction;
        next.validate();
        config->value = std::move(next);
    });
}

cmix_status cmix_config_set_latent_reinit(cmix_config* config, int enabled) {
    CMIX_REQUIRE_ARG(config, "cmix_config_set_latent_reinit: null config");
    config->value.latent_reinit = enabled != 0;
    return CMIX_OK;
}

void cmix_config_free(cmix_config* config) { delete config; }

cmix_status cmix_compose(const cmix_config* config, cmix_run** out) {
    CMIX_REQUIRE_ARG(config && out, "cmix_compose: null argument");
    *out = nullptr;
    return guarded([&] { *out = new cmix_run{cmix::compose(config->value)}; });
}

size_t cmix_run_trace_rows(const cmix_run* run) { return run ? run->value.trace.size() : 0; }

size_t cmix_run_guided_steps(const cmix_run* run) { return run ? run->value.guided.size() : 0; }

cmix_status cmix_run_loss_summary(const cmix_run* run, double* initial_total, double* final_total) {
    CMIX_REQUIRE_ARG(run && initial_total && final_total, "cmix_run_loss_summary: null argument");
    CMIX_REQUIRE_ARG(!run->value.guided.empty(), "cmix_run_loss_summary: no guided timesteps in this run");
    *initial_total = run->value.guided.front().initial.total;
    *final_total = run->value.guided.back().best.total;
    return CMIX_OK;
}

cmix_status cmix_run_latent_shape(const cmix_run* run, size_t shape[3]) {
    CMIX_REQUIRE_ARG(run && shape, "cmix_run_latent_shape: null argument");
    const cmix::Tensor& z = run->value.final_latent;
    for (int i = 0; i < 3; ++i) shape[i] = z.dim(i);
    return CMIX_OK;
}

cmix_status cmix_run_copy_latent(const cmix_run* run, double* buffer, size_t count) {
    CMIX_REQUIRE_ARG(run && buffer, "cmix_run_copy_latent: null argument");
    const cmix::Tensor& z = run->value.final_latent;
    if (count != z.numel()) {
        return fail(CMIX_ERR_DIMENSION, "cmix_run_copy_latent: buffer holds " + std::to_string(count) +
                                            " values, latent has " + std::to_string(z.numel()));
    }
    std::memcpy(buffer, z.data().data(), count * sizeof(double));
    return CMIX_OK;
}

void cmix_run_free(cmix_run* run) { delete run; }

cmix_status cmix_make_toy_assets(uint64_t seed, const char* out_dir) {
    CMIX_REQUIRE_ARG(out_dir && *out_dir, "cmix_make_toy_assets: empty output directory");
    return guarded([&] { cmix::make_toy_assets(seed, out_dir); });
}

cmix_status cmix_gen_synthetic_bundle(uint64_t seed, size_t tokens, size_t d_text, size_t d_model, size_t rank,
                                      const char* path) {
    CMIX_REQUIRE_ARG(path && *path, "cmix_gen_synthetic_bundle: empty path");
    return guarded([&] { cmix::gen_synthetic_bundle(seed, cmix::BundleDims{tokens, d_text, d_model, rank}, path); });
}

cmix_status cmix_bundle_load(const char* path, cmix_bundle** out) {
    CMIX_REQUIRE_ARG(path && out, "cmix_bundle_load: null argument");
    *out = nullptr;
    return guarded([&] { *out = new cmix_bundle{cmix::load_bundle(path)}; });
}

const char* cmix_bundle_id(const cmix_bundle* bundle) { return bundle ? bundle->value.id.c_str() : ""; }

size_t cmix_bundle_token_index(const cmix_bundle* bundle) { return bundle ? bundle->value.token_index : 0; }

size_t cmix_bundle_tokens(const cmix_bundle* bundle) { return bundle ? bundle->value.tokens() : 0; }

void cmix_bundle_free(cmix_bundle* bundle) { delete bundle; }

cmix_status cmix_gradcheck(const cmix_config* config, cmix_gradcheck_report* report) {
    CMIX_REQUIRE_ARG(config && report, "cmix_gradcheck: null argument");
    return guarded([&] {
        const cmix::GradcheckOptions options;
        const cmix::GradcheckReport r = cmix::gradient_check(config->value, cmix::load_run_inputs(config->value), options);
        *report = cmix_gradcheck_report{r.coordinates,  r.max_rel_error,  r.max_abs_error, options.tolerance,
                                        r.worst_index,  r.worst_analytic, r.worst_numeric, r.passed ? 1 : 0};
    });
}

}  // extern "C"

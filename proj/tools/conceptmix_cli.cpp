// Copyright (C) 2026 The conceptmix Authors
// SPDX-License-Identifier: Apache-2.0

// Command-line front end. Talks to the engine through the C API only.

#include <cstdint>
#include <cstdio>
#include <memory>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "conceptmix/conceptmix.h"

namespace {

int report(cmix_status s, const char* what) {
    std::fprintf(stderr, "conceptmix: %s failed (%s): %s\n", what, cmix_status_name(s), cmix_last_error_message());
    return 2;
}

using ConfigPtr = std::unique_ptr<cmix_config, decltype(&cmix_config_free)>;
using RunPtr = std::unique_ptr<cmix_run, decltype(&cmix_run_free)>;

int load_config(const std::string& path, ConfigPtr& out) {
    cmix_config* raw = nullptr;
    if (cmix_status s = cmix_config_load(path.c_str(), &raw); s != CMIX_OK) return report(s, "loading config");
    out.reset(raw);
    return 0;
}

int run_compose(const std::string& config_path, std::optional<std::uint64_t> seed, const std::string& out_dir) {
    ConfigPtr cfg(nullptr, cmix_config_free);
    if (int rc = load_config(config_path, cfg)) return rc;
    if (seed) cmix_config_set_seed(cfg.get(), *seed);
    if (!out_dir.empty()) {
        if (cmix_status s = cmix_config_set_output_dir(cfg.get(), out_dir.c_str()); s != CMIX_OK)
            return report(s, "setting output directory");
    }
    cmix_run* raw = nullptr;
    if (cmix_status s = cmix_compose(cfg.get(), &raw); s != CMIX_OK) return report(s, "compose");
    RunPtr run(raw, cmix_run_free);

    size_t shape[3];
    cmix_run_latent_shape(run.get(), shape);
    std::printf("latent %zux%zux%zu, %zu trace rows, %zu guided timesteps\n", shape[0], shape[1], shape[2],
                cmix_run_trace_rows(run.get()), cmix_run_guided_steps(run.get()));
    double initial = 0.0, final_total = 0.0;
    if (cmix_run_loss_summary(run.get(), &initial, &final_total) == CMIX_OK) {
        std::printf("total loss %.6g -> %.6g (ratio %.4f)\n", initial, final_total,
                    initial > 0.0 ? final_total / initial : 0.0);
    }
    return 0;
}

int run_make_assets(std::uint64_t seed, const std::string& out_dir) {
    if (cmix_status s = cmix_make_toy_assets(seed, out_dir.c_str()); s != CMIX_OK) return report(s, "make-toy-assets");
    std::printf("wrote toy assets and %s/config.json\n", out_dir.c_str());
    return 0;
}

int run_gradcheck(const std::string& config_path) {
    ConfigPtr cfg(nullptr, cmix_config_free);
    if (int rc = load_config(config_path, cfg)) return rc;
    cmix_gradcheck_report r{};
    if (cmix_status s = cmix_gradcheck(cfg.get(), &r); s != CMIX_OK) return report(s, "gradcheck");
    std::printf("gradcheck: %zu coordinates, max rel %.3e (tol %.0e), max abs %.3e\n", r.coordinates,
                r.max_rel_error, r.tolerance, r.max_abs_error);
    std::printf("worst at %zu: analytic %.12e numeric %.12e\n", r.worst_index, r.worst_analytic, r.worst_numeric);
    std::printf("%s\n", r.passed ? "PASS" : "FAIL");
    return r.passed ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"conceptmix: multi-concept composition on a toy latent-diffusion stack"};
    app.set_version_flag("--version", std::string(cmix_version()));
    app.require_subcommand(1);

    std::string config_path, out_dir;
    std::optional<std::uint64_t> seed;
    auto* compose = app.add_subcommand("compose", "Sample one composition and write its artifacts");
    compose->add_option("--config", config_path, "Run config (JSON)")->required()->check(CLI::ExistingFile);
    compose->add_option("--seed", seed, "Override the config seed");
    compose->add_option("--out", out_dir, "Override the output directory");

    std::uint64_t asset_seed = 0;
    std::string asset_dir;
    auto* assets = app.add_subcommand("make-toy-assets", "Write synthetic concept bundles and a ready config");
    assets->add_option("--seed", asset_seed, "Asset seed")->required();
    assets->add_option("--out", asset_dir, "Output directory")->required();

    std::string gc_config;
    auto* gradcheck = app.add_subcommand("gradcheck", "Check loss gradients against finite differences");
    gradcheck->add_option("--config", gc_config, "Run config (JSON)")->required()->check(CLI::ExistingFile);

    CLI11_PARSE(app, argc, argv);

    if (*compose) return run_compose(config_path, seed, out_dir);
    if (*assets) return run_make_assets(asset_seed, asset_dir);
    if (*gradcheck) return run_gradcheck(gc_config);
    return 1;
}

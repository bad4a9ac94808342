// Copyright (C) 2026 The conceptmix Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "conceptmix/composer_attention.hpp"
#include "conceptmix/concept_assets.hpp"
#include "conceptmix/guidance.hpp"

namespace cmix {

struct RegionConfig {
    Box box;
    std::filesystem::path bundle;
};

/// Parsed run configuration. Relative paths are resolved against the
/// directory of the config file.
struct RunConfig {
    std::uint64_t seed = 0;
    std::size_t steps = 25;
    ModelDims dims;  // channels/height/width from "latent", d_model/heads from "model"
    GuidanceConfig guidance;
    std::filesystem::path global_prompt_embed;
    std::vector<RegionConfig> regions;
    std::filesystem::path output_dir;
    bool dump_attention = false;
    bool latent_reinit = true;

    void validate() const;
};

RunConfig parse_run_config(std::string_view json_text, const std::filesystem::path& base_dir);
RunConfig load_run_config(const std::filesystem::path& path);
/// Paths are written as given (no relativization).
std::string run_config_to_json(const RunConfig& config);

/// Files referenced by a config, loaded and validated.
struct RunInputs {
    LayoutCondition layout;
    BundleSet bundles;
    BaseWeights weights;
};

/// Reads the global prompt and bundles; d_text is taken from the global
/// prompt. Base weights are generated from the config seed.
RunInputs load_run_inputs(const RunConfig& config);

}  // namespace cmix

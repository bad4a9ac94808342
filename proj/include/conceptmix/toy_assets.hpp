// Copyright (C) 2026 The conceptmix Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>

#include "conceptmix/run_config.hpp"

namespace cmix {

/// Two-concept layout used by make-toy-assets: side-by-side boxes on a
/// 16x16x8 latent, 25 steps.
RunConfig reference_config(std::uint64_t seed);

/// Writes global_prompt.lcb, concept_a.lcb, concept_b.lcb and config.json
/// (output_dir "out", paths relative to `dir`). Returns the config as it
/// would be loaded from `dir`/config.json.
RunConfig make_toy_assets(std::uint64_t seed, const std::filesystem::path& dir);

}  // namespace cmix

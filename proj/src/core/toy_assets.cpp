// Copyright (C) 2026 The conceptmix Authors
// SPDX-License-Identifier: Apache-2.0

#include "conceptmix/toy_assets.hpp"

#include <string>

#include "conceptmix/error.hpp"
#include "conceptmix/rng.hpp"
#include "conceptmix/tensor_file.hpp"

namespace cmix {

namespace fs = std::filesystem;

RunConfig reference_config(std::uint64_t seed) {
    RunConfig c;
    c.seed = seed;
    c.steps = 25;
    c.global_prompt_embed = "global_prompt.lcb";
    c.regions = {RegionConfig{Box{0.125, 0.25, 0.5, 0.75}, "concept_a.lcb"},
                 RegionConfig{Box{0.5625, 0.25, 0.9375, 0.75}, "concept_b.lcb"}};
    c.output_dir = "out";
    return c;
}

RunConfig make_toy_assets(std::uint64_t seed, const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    require(!ec, ErrorCode::Io, "cannot create " + dir.string() + ": " + ec.message());

    RunConfig c = reference_config(seed);
    BundleDims bd;
    bd.d_text = c.dims.d_text;
    bd.d_model = c.dims.d_model;

    TensorFile global;
    global.add("prompt_embed", NormalSampler(derive_seed(seed, "toy-assets/global")).tensor({bd.tokens, bd.d_text}));
    write_tensor_file(dir / c.global_prompt_embed, global);

    gen_synthetic_bundle(derive_seed(seed, "toy-assets/concept_a"), bd, dir / c.regions[0].bundle);
    gen_synthetic_bundle(derive_seed(seed, "toy-assets/concept_b"), bd, dir / c.regions[1].bundle);

    const std::string text = run_config_to_json(c);
    write_file_bytes(dir / "config.json",
                     std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
    return load_run_config(dir / "config.json");
}

}  // namespace cmix

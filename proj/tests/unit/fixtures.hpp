// Copyright (C) 2026 The conceptmix Authors
// SPDX-License-Identifier: Apache-2.0

// Seeded toy-model setups shared by the pipeline-level tests.

#pragma once

#include <memory>
#include <string>

#include "conceptmix/run_config.hpp"
#include "conceptmix/toy_assets.hpp"
#include "support.hpp"

namespace cmix::testing {

struct ToySetup {
    std::unique_ptr<TempDir> dir;
    RunConfig config;
    RunInputs inputs;
};

/// make-toy-assets output for `seed`; `small` shrinks the latent to 8x8x4.
inline ToySetup toy_setup(std::uint64_t seed, bool small = false) {
    ToySetup s;
    s.dir = std::make_unique<TempDir>("toy");
    s.config = make_toy_assets(seed, s.dir->path());
    if (small) {
        s.config.dims.channels = 4;
        s.config.dims.height = 8;
        s.config.dims.width = 8;
    }
    s.config.output_dir = s.dir->path() / "out";
    s.inputs = load_run_inputs(s.config);
    return s;
}

}  // namespace cmix::testing

// Copyright (C) 2026 The conceptmix Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <vector>

#include "conceptmix/run_config.hpp"

namespace cmix {

struct GradcheckOptions {
    double eps = 1e-6;         // central-difference step
    double tolerance = 1e-5;   // on the relative error
    // Denominator floor: rel = |a - n| / max(|a|, |n|, floor * max_i |a_i|).
    double relative_floor = 1e-3;
    std::size_t max_full = 512;   // check every coordinate up to this many
    std::size_t sampled = 256;    // otherwise this many seeded coordinates
};

struct GradcheckReport {
    std::size_t coordinates = 0;
    double max_rel_error = 0.0;
    double max_abs_error = 0.0;
    std::size_t worst_index = 0;
    double worst_analytic = 0.0;
    double worst_numeric = 0.0;
    double loss = 0.0;
    bool passed = false;
};

/// Analytic d(total loss)/dz at t = T on the seeded initial noise versus
/// central finite differences.
GradcheckReport gradient_check(const RunConfig& config, const RunInputs& inputs, const GradcheckOptions& options = {});

}  // namespace cmix

// Copyright (C) 2026 The conceptmix Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <string>
#include <vector>

#include "conceptmix/composer_attention.hpp"
#include "conceptmix/guidance.hpp"

namespace cmix {

struct CropExtent {
    std::size_t width = 0;   // columns
    std::size_t height = 0;  // rows
};

struct CropResult {
    std::string concept_id;
    std::size_t row = 0;  // top-left
    std::size_t col = 0;
    CropExtent extent;
    double score = 0.0;   // window sum
};

/// Window of the given extent with the largest sum. Candidate sums come from a
/// summed-area table; windows within rounding of the maximum are treated as
/// tied and the lexicographically smallest (row, col) wins. The reported score
/// is the window summed directly in row-major order.
CropResult best_crop(const Tensor& map, CropExtent extent);

/// Copies each crop patch (all channels) of a snapshot of `z` onto its target
/// box; later concepts overwrite earlier ones where targets overlap.
Tensor transplant(const Tensor& z, const std::vector<CropResult>& crops, const std::vector<PixelBox>& targets);

/// Per channel: subtract the mean, divide by the population std.
Tensor standardize(const Tensor& z);

/// Cross maps per concept (layout order, h x w) from a forward pass on z.
using ConceptMapFn = std::function<std::vector<Tensor>(const Tensor& z)>;

struct ReinitResult {
    Tensor z;
    std::vector<CropResult> crops;
    std::vector<TraceRow> rows;
};

/// One guided step on `noise` at t = T, crop search on the updated latent's
/// cross maps, transplant into the layout boxes, then standardization.
/// `masks` must be at latent resolution.
ReinitResult reinitialize_latent(const Tensor& noise, std::size_t total_steps, const GuidanceConfig& config,
                                 const LayoutMasks& masks, const ConstraintObjective& objective,
                                 const ConceptMapFn& concept_maps);

}  // namespace cmix

// Copyright (C) 2026 The conceptmix Authors
// SPDX-License-Identifier: Apache-2.0

#include "conceptmix/latent_reinit.hpp"

#include <cmath>
#include <limits>

#include "conceptmix/error.hpp"

namespace cmix {

CropResult best_crop(const Tensor& map, CropExtent extent) {
    require(map.rank() == 2, ErrorCode::Dimension, "best_crop expects a 2-D map");
    const std::size_t h = map.dim(0), w = map.dim(1);
    require(extent.width >= 1 && extent.height >= 1 && extent.width <= w && extent.height <= h,
            ErrorCode::Argument,
            "crop extent " + std::to_string(extent.width) + "x" + std::to_string(extent.height) +
                " does not fit a " + std::to_string(w) + "x" + std::to_string(h) + " map");

    // sat[(i)(w+1) + j] = sum of map[0..i) x [0..j)
    std::vector<double> sat((h + 1) * (w + 1), 0.0);
    double abs_total = 0.0;
    for (std::size_t i = 0; i < h; ++i) {
        double row = 0.0;
        for (std::size_t j = 0; j < w; ++j) {
            row += map.at(i, j);
            abs_total += std::abs(map.at(i, j));
            sat[(i + 1) * (w + 1) + j + 1] = sat[i * (w + 1) + j + 1] + row;
        }
    }
    auto window = [&](std::size_t i, std::size_t j) {
        const std::size_t i1 = i + extent.height, j1 = j + extent.width;
        return sat[i1 * (w + 1) + j1] - sat[i * (w + 1) + j1] - sat[i1 * (w + 1) + j] + sat[i * (w + 1) + j];
    };

    const std::size_t rows = h - extent.height + 1, cols = w - extent.width + 1;
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < rows; ++i) {
        for (std::size_t j = 0; j < cols; ++j) best = std::max(best, window(i, j));
    }
    const double tol = 64.0 * std::numeric_limits<double>::epsilon() * abs_total;

    CropResult res;
    res.extent = extent;
    bool found = false;
    for (std::size_t i = 0; i < rows && !found; ++i) {
        for (std::size_t j = 0; j < cols; ++j) {
            if (window(i, j) >= best - tol) {
                res.row = i;
                res.col = j;
                found = true;
                break;
            }
        }
    }
    double score = 0.0;
    for (std::size_t i = 0; i < extent.height; ++i) {
        for (std::size_t j = 0; j < extent.width; ++j) score += map.at(res.row + i, res.col + j);
    }
    res.score = score;
    return res;
}

Tensor transplant(const Tensor& z, const std::vector<CropResult>& crops, const std::vector<PixelBox>& targets) {
    require(z.rank() == 3, ErrorCode::Dimension, "transplant expects a C x h x w latent");
    require(crops.size() == targets.size(), ErrorCode::Argument, "transplant: one target box per crop required");
    const std::size_t channels = z.dim(0), h = z.dim(1), w = z.dim(2);
    const Tensor snapshot = z;
    Tensor out = z;
    for (std::size_t n = 0; n < crops.size(); ++n) {
        const CropResult& c = crops[n];
        const PixelBox& t = targets[n];
        require(c.extent.height == t.rows && c.extent.width == t.cols, ErrorCode::Argument,
                "transplant: crop extent differs from target box for '" + c.concept_id + "'");
        require(c.row + t.rows <= h && c.col + t.cols <= w && t.row0 + t.rows <= h && t.col0 + t.cols <= w,
                ErrorCode::Argument, "transplant: crop or target outside the latent");
        for (std::size_t ch = 0; ch < channels; ++ch) {
            for (std::size_t i = 0; i < t.rows; ++i) {
                for (std::size_t j = 0; j < t.cols; ++j) {
                    out.at(ch, t.row0 + i, t.col0 + j) = snapshot.at(ch, c.row + i, c.col + j);
                }
            }
        }
    }
    return out;
}

Tensor standardize(const Tensor& z) {
    require(z.rank() == 3, ErrorCode::Dimension, "standardize expects a C x h x w latent");
    const std::size_t channels = z.dim(0), n = z.dim(1) * z.dim(2);
    Tensor out = z;
    for (std::size_t c = 0; c < channels; ++c) {
        auto ch = out.data().subspan(c * n, n);
        double mu = 0.0;
        for (double v : ch) mu += v;
        mu /= static_cast<double>(n);
        double var = 0.0;
        for (double v : ch) var += (v - mu) * (v - mu);
        const double sd = std::sqrt(var / static_cast<double>(n));
        require(sd > 1e-12, ErrorCode::DegenerateLatent, "channel " + std::to_string(c) + " has zero variance");
        for (double& v : ch) v = (v - mu) / sd;
    }
    return out;
}

ReinitResult reinitialize_latent(const Tensor& noise, std::size_t total_steps, const GuidanceConfig& config,
                                 const LayoutMasks& masks, const ConstraintObjective& objective,
                                 const ConceptMapFn& concept_maps) {
    require(noise.rank() == 3 && noise.dim(1) == masks.height && noise.dim(2) == masks.width, ErrorCode::Config,
            "re-initialization masks must be at latent resolution");
    ReinitResult res;
    if (masks.regions.empty()) {
        res.z = standardize(noise);
        return res;
    }
    config.validate();
    const double phi = step_size(total_steps, total_steps, config.phi0);
    const GuidanceEvaluation ev = evaluate_guidance(noise, objective, "latent re-initialization");
    res.rows.push_back(TraceRow{static_cast<long>(total_steps), -1, ev.loss.l_ce, ev.loss.l_fill, ev.loss.l_region,
                                ev.loss.total, phi, true});
    const Tensor updated = kernels::sub(noise, kernels::scale(ev.gradient, phi));

    const std::vector<Tensor> maps = concept_maps(updated);
    require(maps.size() == masks.regions.size(), ErrorCode::Internal, "one cross map per concept expected");
    std::vector<PixelBox> targets;
    for (std::size_t n = 0; n < maps.size(); ++n) {
        const PixelBox& b = masks.regions[n].bounds;
        CropResult c = best_crop(maps[n], CropExtent{b.cols, b.rows});
        c.concept_id = masks.regions[n].concept_id;
        res.crops.push_back(std::move(c));
        targets.push_back(b);
    }
    res.z = standardize(transplant(updated, res.crops, targets));
    return res;
}

}  // namespace cmix

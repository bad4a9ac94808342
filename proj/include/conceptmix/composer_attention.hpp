// Copyright (C) 2026 The conceptmix Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "conceptmix/autodiff.hpp"
#include "conceptmix/concept_assets.hpp"

namespace cmix {

/// Normalized layout box, x along width and y along height.
struct Box {
    double x0 = 0.0, y0 = 0.0, x1 = 1.0, y1 = 1.0;

    void validate() const;
};

struct RegionSpec {
    Box box;
    std::string concept_id;
};

struct LayoutCondition {
    std::vector<RegionSpec> regions;
    Tensor global_prompt_embed;  // tokens x d_text

    void validate() const;
};

/// Inclusive-exclusive pixel rectangle.
struct PixelBox {
    std::size_t row0 = 0, col0 = 0, rows = 0, cols = 0;
};

/// 1 where the pixel center ((j+0.5)/w, (i+0.5)/h) lies in [x0,x1) x [y0,y1).
Tensor rasterize_mask(const Box& box, std::size_t h, std::size_t w);

/// Separable Gaussian at the box center with sigma = half the box extent in
/// pixels, zero outside the mask, scaled so the in-box maximum is 1.
Tensor gaussian_weight(const Box& box, std::size_t h, std::size_t w);

struct RegionMask {
    std::string concept_id;
    Tensor mask;      // h x w, 0/1
    Tensor gaussian;  // h x w
    std::vector<std::uint8_t> pixels;  // flattened mask bytes
    std::vector<std::size_t> inside;   // flat indices with mask 1
    std::vector<std::size_t> outside;  // flat indices with mask 0
    PixelBox bounds;
};

struct LayoutMasks {
    std::size_t height = 0, width = 0;
    std::vector<RegionMask> regions;
};

LayoutMasks rasterize_layout(const LayoutCondition& layout, std::size_t h, std::size_t w);

/// Attention maps captured by one composer block.
struct AttnLayer {
    std::size_t height = 0, width = 0;
    // Concept-token column of each region's cross map, heads averaged, h x w.
    std::vector<std::pair<std::string, Var>> cross;
    // Head-averaged self-attention, (h*w) x (h*w).
    Var self_map;

    const Var* cross_map(std::string_view concept_id) const;
};

struct AttnRecord {
    std::vector<AttnLayer> layers;

    // Highest-resolution layers; these feed the constraint losses.
    std::vector<const AttnLayer*> loss_layers() const;
};

using BundleSet = std::map<std::string, ConceptBundle, std::less<>>;

struct CrossAttentionOutput {
    Var hidden;
    std::vector<std::pair<std::string, Var>> concept_maps;
};

/// Region-aware cross-attention. Region n attends with its masked queries to
/// its own prompt through LoRA-merged K/V; n = 0 uses the global prompt and
/// base weights. Per-region outputs are merged with ad::compose_hidden.
CrossAttentionOutput region_cross_attention(Var x, const LayoutCondition& layout, const LayoutMasks& masks,
                                            const BundleSet& bundles, const AttentionWeights& weights,
                                            std::size_t heads);

/// Plain multi-head cross-attention of x against one prompt with base weights.
Var vanilla_cross_attention(Var x, const Tensor& prompt, const AttentionWeights& weights, std::size_t heads);

/// Byte per (query, key): 0 when the two pixels belong to foreground regions
/// that share none. Null when fewer than two regions exist.
std::shared_ptr<const std::vector<std::uint8_t>> concept_isolation_mask(const LayoutMasks& masks);

struct SelfAttentionOutput {
    Var hidden;
    Var self_map;
};

SelfAttentionOutput masked_self_attention(Var x, const LayoutMasks& masks, const AttentionWeights& weights,
                                          std::size_t heads);

}  // namespace cmix

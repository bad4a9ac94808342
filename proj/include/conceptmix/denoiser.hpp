// Copyright (C) 2026 The conceptmix Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <vector>

#include "conceptmix/autodiff.hpp"
#include "conceptmix/composer_attention.hpp"
#include "conceptmix/concept_assets.hpp"
#include "conceptmix/guidance.hpp"

namespace cmix {

/// Sinusoidal embedding of tau = t/T: [sin(tau w_0), cos(tau w_0), ...] with
/// w_i = 10000^(-2i/d).
Tensor timestep_embedding(std::size_t t, std::size_t total_steps, std::size_t d);

/// Toy noise predictor built from composer blocks:
///   per-pixel linear in + timestep bias
///   -> 2 composer blocks at h x w -> 2x2 average pool
///   -> 1 composer block at h/2 x w/2 -> nearest upsample + skip
///   -> per-pixel linear out on [h ; z].
/// A composer block is x += SelfAttn(LN(x)); x += CrossAttn(LN(x)) with the
/// concept-isolating self-attention and region-aware cross-attention.
class ToyDenoiser {
public:
    ToyDenoiser(BaseWeights weights, LayoutCondition layout, BundleSet bundles, std::size_t total_steps);

    struct Output {
        Var epsilon;  // C x h x w
        AttnRecord record;
    };
    Output forward(Tape& tape, Var z, std::size_t t) const;

    Tensor predict(const Tensor& z, std::size_t t) const;

    ConstraintLoss constraint_loss(Tape& tape, Var z, std::size_t t, const GuidanceConfig& config) const;
    ConstraintObjective objective(std::size_t t, const GuidanceConfig& config) const;

    /// Loss-layer cross maps per concept, averaged over loss layers.
    std::vector<Tensor> concept_maps(const Tensor& z, std::size_t t) const;

    const ModelDims& dims() const { return weights_.dims; }
    std::size_t total_steps() const { return total_steps_; }
    const BaseWeights& weights() const { return weights_; }
    const LayoutCondition& layout() const { return layout_; }
    const LayoutMasks& loss_masks() const { return masks_high_; }
    const LayoutMasks& low_res_masks() const { return masks_low_; }

private:
    Var block(Var x, const ComposerBlockWeights& w, const LayoutMasks& masks, AttnRecord& record) const;

    BaseWeights weights_;
    LayoutCondition layout_;
    BundleSet bundles_;
    LayoutMasks masks_high_;
    LayoutMasks masks_low_;
    std::size_t total_steps_;
};

}  // namespace cmix

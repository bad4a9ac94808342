// Copyright (C) 2026 The conceptmix Authors
// SPDX-License-Identifier: Apache-2.0

#include "conceptmix/denoiser.hpp"

#include <cmath>

#include "conceptmix/error.hpp"

namespace cmix {

Tensor timestep_embedding(std::size_t t, std::size_t total_steps, std::size_t d) {
    require(total_steps >= 1, ErrorCode::Argument, "timestep_embedding needs T >= 1");
    const double tau = static_cast<double>(t) / static_cast<double>(total_steps);
    Tensor e({d});
    for (std::size_t i = 0; 2 * i < d; ++i) {
        const double freq = std::pow(10000.0, -2.0 * static_cast<double>(i) / static_cast<double>(d));
        const double arg = tau * freq;
        e[2 * i] = std::sin(arg);
        if (2 * i + 1 < d) e[2 * i + 1] = std::cos(arg);
    }
    return e;
}

ToyDenoiser::ToyDenoiser(BaseWeights weights, LayoutCondition layout, BundleSet bundles, std::size_t total_steps)
    : weights_(std::move(weights)),
      layout_(std::move(layout)),
      bundles_(std::move(bundles)),
      total_steps_(total_steps) {
    require(total_steps_ >= 1, ErrorCode::Config, "denoiser needs at least one timestep");
    const ModelDims& d = weights_.dims;
    d.validate();
    layout_.validate();
    require(weights_.blocks.size() == BaseWeights::kHighResBlocks + BaseWeights::kLowResBlocks, ErrorCode::Config,
            "unexpected block count in base weights");
    require(layout_.global_prompt_embed.dim(1) == d.d_text, ErrorCode::Config,
            "global prompt width " + std::to_string(layout_.global_prompt_embed.dim(1)) + " differs from d_text " +
                std::to_string(d.d_text));
    for (const auto& r : layout_.regions) {
        auto it = bundles_.find(r.concept_id);
        require(it != bundles_.end(), ErrorCode::Config, "no bundle for concept '" + r.concept_id + "'");
        it->second.check_compatible(d);
    }
    masks_high_ = rasterize_layout(layout_, d.height, d.width);
    masks_low_ = rasterize_layout(layout_, d.height / 2, d.width / 2);
}

Var ToyDenoiser::block(Var x, const ComposerBlockWeights& w, const LayoutMasks& masks, AttnRecord& record) const {
    const std::size_t heads = weights_.dims.heads;
    SelfAttentionOutput s = masked_self_attention(ad::layer_norm_rows(x), masks, w.self_attn, heads);
    x = ad::add(x, s.hidden);
    CrossAttentionOutput c =
        region_cross_attention(ad::layer_norm_rows(x), layout_, masks, bundles_, w.cross_attn, heads);
    x = ad::add(x, c.hidden);
    record.layers.push_back(AttnLayer{masks.height, masks.width, std::move(c.concept_maps), s.self_map});
    return x;
}

ToyDenoiser::Output ToyDenoiser::forward(Tape& tape, Var z, std::size_t t) const {
    const ModelDims& d = weights_.dims;
    require(t <= total_steps_, ErrorCode::Argument, "timestep " + std::to_string(t) + " exceeds T");
    require(z.value().shape() == Shape{d.channels, d.height, d.width}, ErrorCode::Config,
            "latent shape " + shape_to_string(z.value().shape()) + " does not match the model");
    const std::size_t npix = d.height * d.width;

    Output out;
    Var z_flat = ad::transpose(ad::reshape(z, {d.channels, npix}));
    Var x = ad::add_row_bias(ad::matmul_nt(z_flat, tape.leaf(weights_.w_in)), tape.leaf(weights_.b_in));
    x = ad::add_row_bias(x, tape.leaf(timestep_embedding(t, total_steps_, d.d_model)));

    for (std::size_t b = 0; b < BaseWeights::kHighResBlocks; ++b) {
        x = block(x, weights_.blocks[b], masks_high_, out.record);
    }
    Var skip = x;
    Var low = ad::avg_pool2x2(x, d.height, d.width);
    for (std::size_t b = 0; b < BaseWeights::kLowResBlocks; ++b) {
        low = block(low, weights_.blocks[BaseWeights::kHighResBlocks + b], masks_low_, out.record);
    }
    Var up = ad::add(ad::upsample2x(low, d.height / 2, d.width / 2), skip);
    Var eps_flat = ad::add_row_bias(ad::matmul_nt(ad::concat_cols({up, z_flat}), tape.leaf(weights_.w_out)), tape.leaf(weights_.b_out));
    out.epsilon = ad::reshape(ad::transpose(eps_flat), {d.channels, d.height, d.width});
    return out;
}

Tensor ToyDenoiser::predict(const Tensor& z, std::size_t t) const {
    Tape tape;
    return forward(tape, tape.leaf(z), t).epsilon.value();
}

ConstraintLoss ToyDenoiser::constraint_loss(Tape& tape, Var z, std::size_t t, const GuidanceConfig& config) const {
    Output out = forward(tape, z, t);
    return cmix::constraint_loss(tape, out.record, masks_high_, config);
}

ConstraintObjective ToyDenoiser::objective(std::size_t t, const GuidanceConfig& config) const {
    return [this, t, config](Tape& tape, Var z) { return constraint_loss(tape, z, t, config); };
}

std::vector<Tensor> ToyDenoiser::concept_maps(const Tensor& z, std::size_t t) const {
    Tape tape;
    Output out = forward(tape, tape.leaf(z), t);
    const auto layers = out.record.loss_layers();
    std::vector<Tensor> maps;
    for (const auto& r : layout_.regions) {
        Tensor acc;
        for (const AttnLayer* l : layers) {
            const Tensor& a = l->cross_map(r.concept_id)->value();
            acc = acc.empty() ? a : kernels::add(acc, a);
        }
        maps.push_back(kernels::scale(acc, 1.0 / static_cast<double>(layers.size())));
    }
    return maps;
}

}  // namespace cmix

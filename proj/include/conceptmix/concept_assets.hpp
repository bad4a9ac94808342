// Copyright (C) 2026 The conceptmix Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "conceptmix/tensor.hpp"
#include "conceptmix/tensor_file.hpp"

namespace cmix {

/// Sizes of the toy latent-diffusion stack.
struct ModelDims {
    std::size_t channels = 8;
    std::size_t height = 16;
    std::size_t width = 16;
    std::size_t d_model = 32;
    std::size_t d_text = 32;
    std::size_t heads = 2;

    void validate() const;
    std::size_t head_dim() const { return d_model / heads; }
};

/// Low-rank update scale * up * down for a d_out x d_in weight.
struct LoraDelta {
    Tensor down;  // r x d_in
    Tensor up;    // d_out x r
    double scale = 1.0;

    std::size_t rank() const { return down.dim(0); }
    std::size_t d_in() const { return down.dim(1); }
    std::size_t d_out() const { return up.dim(0); }
    Tensor dense() const;
    // Checks r <= min(d_in, d_out) and matching inner extents.
    void validate(std::string_view name) const;
};

inline constexpr std::string_view kCrossKeyProjection = "cross.W_K";
inline constexpr std::string_view kCrossValueProjection = "cross.W_V";

struct ConceptBundle {
    std::string id;
    Tensor prompt_embed;  // tokens x d_text
    std::size_t token_index = 0;
    std::map<std::string, LoraDelta, std::less<>> deltas;

    std::size_t tokens() const { return prompt_embed.dim(0); }
    std::size_t d_text() const { return prompt_embed.dim(1); }
    const LoraDelta* delta(std::string_view projection) const;
    // Validates the targeted projection shapes against the model.
    void check_compatible(const ModelDims& dims) const;
};

struct AttentionWeights {
    Tensor wq;  // d_model x d_model
    Tensor wk;  // d_model x d_kv
    Tensor wv;  // d_model x d_kv
    Tensor wo;  // d_model x d_model
};

struct ComposerBlockWeights {
    AttentionWeights self_attn;
    AttentionWeights cross_attn;
};

/// Frozen "pre-trained" weights of the toy denoiser, reproducible from a seed.
struct BaseWeights {
    static constexpr std::string_view kGenerator = "toy-unet-v1";
    static constexpr std::size_t kHighResBlocks = 2;
    static constexpr std::size_t kLowResBlocks = 1;
    // Gain of the random output head; the identity skip keeps eps close to z.
    static constexpr double kOutputGain = 0.1;
    // Sharpens cross-attention logits so concept tokens can dominate.
    static constexpr double kCrossQueryGain = 2.0;

    ModelDims dims;
    Tensor w_in;   // d_model x channels
    Tensor b_in;   // d_model
    Tensor w_out;  // channels x (d_model + channels), applied to [h ; z]
    Tensor b_out;  // channels
    std::vector<ComposerBlockWeights> blocks;  // high-res blocks first

    static BaseWeights generate(std::uint64_t seed, const ModelDims& dims);
};

/// x * (base + scale * up * down)^T. Without a delta (or with scale 0) this is
/// exactly x * base^T.
Tensor apply_projection(const Tensor& x, const Tensor& base, const LoraDelta* delta);

ConceptBundle bundle_from_file(const TensorFile& file, std::string id);
TensorFile bundle_to_file(const ConceptBundle& bundle);

/// Loads and validates a bundle; the id is the file stem.
ConceptBundle load_bundle(const std::filesystem::path& path);
void save_bundle(const std::filesystem::path& path, const ConceptBundle& bundle);

struct BundleDims {
    std::size_t tokens = 2;
    std::size_t d_text = 32;
    std::size_t d_model = 32;
    std::size_t rank = 4;
};

ConceptBundle synthesize_bundle(std::uint64_t seed, const BundleDims& dims, std::string id);
void gen_synthetic_bundle(std::uint64_t seed, const BundleDims& dims, const std::filesystem::path& out);

}  // namespace cmix

// Copyright (C) 2026 The conceptmix Authors
// SPDX-License-Identifier: Apache-2.0

#include "conceptmix/concept_assets.hpp"

#include <cmath>

#include "conceptmix/error.hpp"
#include "conceptmix/rng.hpp"

namespace cmix {

void ModelDims::validate() const {
    require(channels >= 1 && d_model >= 1 && d_text >= 1 && heads >= 1, ErrorCode::Config,
            "model dimensions must be positive");
    require(d_model % heads == 0, ErrorCode::Config, "d_model must be divisible by the head count");
    require(height >= 2 && width >= 2 && height % 2 == 0 && width % 2 == 0, ErrorCode::Config,
            "latent height and width must be even and at least 2");
}

Tensor LoraDelta::dense() const { return kernels::scale(kernels::matmul(up, down), scale); }

void LoraDelta::validate(std::string_view name) const {
    const std::string n(name);
    require(down.rank() == 2 && up.rank() == 2, ErrorCode::Validation, n + ": up/down must be matrices");
    require(up.dim(1) == down.dim(0), ErrorCode::Validation,
            n + ": up " + shape_to_string(up.shape()) + " and down " + shape_to_string(down.shape()) +
                " disagree on rank");
    require(rank() <= std::min(d_in(), d_out()), ErrorCode::Validation, n + ": rank exceeds min(d_in, d_out)");
    require(std::isfinite(scale), ErrorCode::Data, n + ": non-finite scale");
}

const LoraDelta* ConceptBundle::delta(std::string_view projection) const {
    auto it = deltas.find(projection);
    return it == deltas.end() ? nullptr : &it->second;
}

void ConceptBundle::check_compatible(const ModelDims& dims) const {
    require(d_text() == dims.d_text, ErrorCode::Validation,
            "bundle '" + id + "' has d_text " + std::to_string(d_text()) + ", model expects " +
                std::to_string(dims.d_text));
    for (const auto& [name, d] : deltas) {
        require(d.d_in() == dims.d_text && d.d_out() == dims.d_model, ErrorCode::Validation,
                "bundle '" + id + "' delta " + name + " targets a " + std::to_string(d.d_out()) + "x" +
                    std::to_string(d.d_in()) + " projection, model has " + std::to_string(dims.d_model) + "x" +
                    std::to_string(dims.d_text));
    }
}

BaseWeights BaseWeights::generate(std::uint64_t seed, const ModelDims& dims) {
    dims.validate();
    const std::string prefix = std::string(kGenerator) + "/";
    auto draw = [&](const std::string& name, Shape shape, double stddev) {
        NormalSampler s(derive_seed(seed, prefix + name));
        return s.tensor(shape, stddev);
    };
    auto inv_sqrt = [](std::size_t n) { return 1.0 / std::sqrt(static_cast<double>(n)); };

    BaseWeights w;
    w.dims = dims;
    const std::size_t d = dims.d_model, c = dims.channels, dt = dims.d_text;
    w.w_in = draw("in.weight", {d, c}, inv_sqrt(c));
    w.b_in = draw("in.bias", {d}, 0.1);
    // Output reads [h ; z]: a random head on h plus an identity skip on z.
    const Tensor head = draw("out.weight", {c, d}, kOutputGain * inv_sqrt(d));
    w.w_out = Tensor({c, d + c}, 0.0);
    for (std::size_t i = 0; i < c; ++i) {
        for (std::size_t j = 0; j < d; ++j) w.w_out.at(i, j) = head.at(i, j);
        w.w_out.at(i, d + i) = 1.0;
    }
    w.b_out = Tensor({c}, 0.0);
    const std::size_t nblocks = kHighResBlocks + kLowResBlocks;
    for (std::size_t b = 0; b < nblocks; ++b) {
        const std::string bp = "block" + std::to_string(b) + ".";
        ComposerBlockWeights blk;
        blk.self_attn.wq = draw(bp + "self.W_Q", {d, d}, inv_sqrt(d));
        blk.self_attn.wk = draw(bp + "self.W_K", {d, d}, inv_sqrt(d));
        blk.self_attn.wv = draw(bp + "self.W_V", {d, d}, inv_sqrt(d));
        blk.self_attn.wo = draw(bp + "self.W_O", {d, d}, inv_sqrt(d));
        blk.cross_attn.wq = draw(bp + "cross.W_Q", {d, d}, kCrossQueryGain * inv_sqrt(d));
        blk.cross_attn.wk = draw(bp + "cross.W_K", {d, dt}, inv_sqrt(dt));
        blk.cross_attn.wv = draw(bp + "cross.W_V", {d, dt}, inv_sqrt(dt));
        blk.cross_attn.wo = draw(bp + "cross.W_O", {d, d}, inv_sqrt(d));
        w.blocks.push_back(std::move(blk));
    }
    return w;
}

Tensor apply_projection(const Tensor& x, const Tensor& base, const LoraDelta* delta) {
    require(x.rank() == 2 && base.rank() == 2 && x.dim(1) == base.dim(1), ErrorCode::Dimension,
            "apply_projection: input " + shape_to_string(x.shape()) + " vs weight " + shape_to_string(base.shape()));
    if (delta == nullptr || delta->scale == 0.0) {
        return kernels::matmul_nt(x, base);
    }
    require(delta->d_in() == base.dim(1) && delta->d_out() == base.dim(0), ErrorCode::Dimension,
            "apply_projection: delta shape does not match base weight " + shape_to_string(base.shape()));
    return kernels::matmul_nt(x, kernels::add(base, delta->dense()));
}

namespace {

const std::string kPromptEmbed = "prompt_embed";
const std::string kTokenIndex = "token_index";
const std::string kScale = "scale";

}  // namespace

ConceptBundle bundle_from_file(const TensorFile& file, std::string id) {
    ConceptBundle b;
    b.id = std::move(id);
    b.prompt_embed = file.get(kPromptEmbed);
    require(b.prompt_embed.rank() == 2, ErrorCode::Validation, "prompt_embed must be tokens x d_text");

    const Tensor& ti = file.get(kTokenIndex);
    require(ti.numel() == 1, ErrorCode::Validation, "token_index must hold one element");
    const double tv = ti[0];
    require(tv >= 0.0 && tv == std::floor(tv) && tv < static_cast<double>(b.tokens()), ErrorCode::Validation,
            "token_index " + std::to_string(tv) + " outside [0, " + std::to_string(b.tokens()) + ")");
    b.token_index = static_cast<std::size_t>(tv);

    const Tensor& sc = file.get(kScale);
    require(sc.numel() == 1, ErrorCode::Validation, "scale must hold one element");

    for (std::string_view proj : {kCrossKeyProjection, kCrossValueProjection}) {
        const std::string p(proj);
        LoraDelta d{file.get(p + ".down"), file.get(p + ".up"), sc[0]};
        d.validate(p);
        require(d.d_in() == b.d_text(), ErrorCode::Validation,
                p + ".down expects d_in " + std::to_string(d.d_in()) + " but prompt_embed has d_text " +
                    std::to_string(b.d_text()));
        b.deltas.emplace(p, std::move(d));
    }
    require(b.deltas.at(std::string(kCrossKeyProjection)).d_out() ==
                b.deltas.at(std::string(kCrossValueProjection)).d_out(),
            ErrorCode::Validation, "cross.W_K and cross.W_V deltas disagree on d_out");
    return b;
}

TensorFile bundle_to_file(const ConceptBundle& bundle) {
    TensorFile f;
    f.add(kPromptEmbed, bundle.prompt_embed);
    f.add(kTokenIndex, Tensor::scalar(static_cast<double>(bundle.token_index)));
    const LoraDelta* k = bundle.delta(kCrossKeyProjection);
    const LoraDelta* v = bundle.delta(kCrossValueProjection);
    require(k && v, ErrorCode::Validation, "bundle '" + bundle.id + "' lacks cross.W_K or cross.W_V deltas");
    require(k->scale == v->scale, ErrorCode::Validation, "the container stores one scale per bundle");
    f.add(kScale, Tensor::scalar(k->scale));
    f.add(std::string(kCrossKeyProjection) + ".down", k->down);
    f.add(std::string(kCrossKeyProjection) + ".up", k->up);
    f.add(std::string(kCrossValueProjection) + ".down", v->down);
    f.add(std::string(kCrossValueProjection) + ".up", v->up);
    return f;
}

ConceptBundle load_bundle(const std::filesystem::path& path) {
    return bundle_from_file(read_tensor_file(path), path.stem().string());
}

void save_bundle(const std::filesystem::path& path, const ConceptBundle& bundle) {
    write_tensor_file(path, bundle_to_file(bundle));
}

ConceptBundle synthesize_bundle(std::uint64_t seed, const BundleDims& dims, std::string id) {
    require(dims.tokens >= 2, ErrorCode::Argument, "synthetic bundles need at least 2 tokens (concept token is #1)");
    require(dims.d_text >= 1 && dims.d_model >= 1 && dims.rank >= 1, ErrorCode::Argument,
            "bundle dimensions must be positive");
    require(dims.rank <= std::min(dims.d_text, dims.d_model), ErrorCode::Argument,
            "rank " + std::to_string(dims.rank) + " exceeds min(d_text, d_model)");

    auto draw = [&](std::string_view stream, Shape shape, double stddev) {
        NormalSampler s(derive_seed(seed, std::string("bundle/") + std::string(stream)));
        return s.tensor(shape, stddev);
    };
    const double lora_std = 1.0 / std::sqrt(static_cast<double>(dims.rank));

    ConceptBundle b;
    b.id = std::move(id);
    b.prompt_embed = draw("prompt_embed", {dims.tokens, dims.d_text}, 1.0);
    b.token_index = 1;
    for (std::string_view proj : {kCrossKeyProjection, kCrossValueProjection}) {
        const std::string p(proj);
        LoraDelta d{draw(p + ".down", {dims.rank, dims.d_text}, lora_std),
                    draw(p + ".up", {dims.d_model, dims.rank}, lora_std), 1.0};
        b.deltas.emplace(p, std::move(d));
    }
    // Round through the f32 container so in-memory and on-disk bundles agree.
    return bundle_from_file(decode_tensor_file(encode_tensor_file(bundle_to_file(b))), b.id);
}

void gen_synthetic_bundle(std::uint64_t seed, const BundleDims& dims, const std::filesystem::path& out) {
    save_bundle(out, synthesize_bundle(seed, dims, out.stem().string()));
}

}  // namespace cmix

// Copyright (C) 2026 The conceptmix Authors
// SPDX-License-Identifier: Apache-2.0

#include "conceptmix/composer_attention.hpp"

#include <cmath>
#include <set>

#include "conceptmix/error.hpp"

namespace cmix {

void Box::validate() const {
    const bool ok = std::isfinite(x0) && std::isfinite(y0) && std::isfinite(x1) && std::isfinite(y1) && 0.0 <= x0 &&
                    x0 < x1 && x1 <= 1.0 && 0.0 <= y0 && y0 < y1 && y1 <= 1.0;
    require(ok, ErrorCode::Argument,
            "box must satisfy 0 <= x0 < x1 <= 1 and 0 <= y0 < y1 <= 1, got (" + std::to_string(x0) + ", " +
                std::to_string(y0) + ", " + std::to_string(x1) + ", " + std::to_string(y1) + ")");
}

void LayoutCondition::validate() const {
    require(global_prompt_embed.rank() == 2, ErrorCode::Config, "global prompt embedding must be tokens x d_text");
    std::set<std::string, std::less<>> seen;
    for (const auto& r : regions) {
        r.box.validate();
        require(seen.insert(r.concept_id).second, ErrorCode::Config, "duplicate concept id '" + r.concept_id + "'");
    }
    require(regions.size() <= 64, ErrorCode::Config, "at most 64 regions are supported");
}

Tensor rasterize_mask(const Box& box, std::size_t h, std::size_t w) {
    require(h >= 1 && w >= 1, ErrorCode::Argument, "rasterize_mask: resolution must be positive");
    box.validate();
    Tensor m({h, w}, 0.0);
    std::size_t count = 0;
    for (std::size_t i = 0; i < h; ++i) {
        const double cy = (static_cast<double>(i) + 0.5) / static_cast<double>(h);
        if (cy < box.y0 || cy >= box.y1) continue;
        for (std::size_t j = 0; j < w; ++j) {
            const double cx = (static_cast<double>(j) + 0.5) / static_cast<double>(w);
            if (cx >= box.x0 && cx < box.x1) {
                m.at(i, j) = 1.0;
                ++count;
            }
        }
    }
    require(count > 0, ErrorCode::EmptyMask,
            "box covers no pixel center at " + std::to_string(h) + "x" + std::to_string(w));
    return m;
}

Tensor gaussian_weight(const Box& box, std::size_t h, std::size_t w) {
    const Tensor mask = rasterize_mask(box, h, w);
    const double fw = static_cast<double>(w), fh = static_cast<double>(h);
    const double cx = 0.5 * (box.x0 + box.x1) * fw;
    const double cy = 0.5 * (box.y0 + box.y1) * fh;
    const double sx = 0.5 * (box.x1 - box.x0) * fw;
    const double sy = 0.5 * (box.y1 - box.y0) * fh;
    Tensor g({h, w}, 0.0);
    double peak = 0.0;
    for (std::size_t i = 0; i < h; ++i) {
        for (std::size_t j = 0; j < w; ++j) {
            if (mask.at(i, j) == 0.0) continue;
            const double dx = static_cast<double>(j) + 0.5 - cx;
            const double dy = static_cast<double>(i) + 0.5 - cy;
            g.at(i, j) = std::exp(-(dx * dx / (2.0 * sx * sx) + dy * dy / (2.0 * sy * sy)));
            peak = std::max(peak, g.at(i, j));
        }
    }
    require(peak > 0.0, ErrorCode::Numeric, "gaussian weight underflowed inside the box");
    for (double& v : g.data()) {
        v /= peak;
    }
    return g;
}

LayoutMasks rasterize_layout(const LayoutCondition& layout, std::size_t h, std::size_t w) {
    LayoutMasks out;
    out.height = h;
    out.width = w;
    for (const auto& r : layout.regions) {
        RegionMask rm;
        rm.concept_id = r.concept_id;
        rm.mask = rasterize_mask(r.box, h, w);
        rm.gaussian = gaussian_weight(r.box, h, w);
        rm.pixels.resize(h * w);
        std::size_t r0 = h, c0 = w, r1 = 0, c1 = 0;
        for (std::size_t p = 0; p < h * w; ++p) {
            const bool in = rm.mask[p] != 0.0;
            rm.pixels[p] = in ? 1 : 0;
            (in ? rm.inside : rm.outside).push_back(p);
            if (in) {
                r0 = std::min(r0, p / w);
                r1 = std::max(r1, p / w);
                c0 = std::min(c0, p % w);
                c1 = std::max(c1, p % w);
            }
        }
        rm.bounds = PixelBox{r0, c0, r1 - r0 + 1, c1 - c0 + 1};
        out.regions.push_back(std::move(rm));
    }
    return out;
}

const Var* AttnLayer::cross_map(std::string_view concept_id) const {
    for (const auto& [id, v] : cross) {
        if (id == concept_id) return &v;
    }
    return nullptr;
}

std::vector<const AttnLayer*> AttnRecord::loss_layers() const {
    std::size_t best = 0;
    for (const auto& l : layers) best = std::max(best, l.height * l.width);
    std::vector<const AttnLayer*> out;
    for (const auto& l : layers) {
        if (l.height * l.width == best) out.push_back(&l);
    }
    return out;
}

namespace {

struct HeadOutputs {
    Var out;
    std::vector<Var> maps;
};

HeadOutputs multihead(Var q, Var k, Var v, std::size_t heads,
                      const std::shared_ptr<const std::vector<std::uint8_t>>& permitted) {
    const std::size_t dq = q.value().dim(1) / heads;
    const std::size_t dv = v.value().dim(1) / heads;
    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(dq));
    HeadOutputs res;
    std::vector<Var> outs;
    for (std::size_t h = 0; h < heads; ++h) {
        Var qh = heads == 1 ? q : ad::slice_cols(q, h * dq, (h + 1) * dq);
        Var kh = heads == 1 ? k : ad::slice_cols(k, h * dq, (h + 1) * dq);
        Var vh = heads == 1 ? v : ad::slice_cols(v, h * dv, (h + 1) * dv);
        Var a = ad::softmax_rows(ad::scale(ad::matmul_nt(qh, kh), inv_sqrt_d), permitted);
        outs.push_back(ad::matmul(a, vh));
        res.maps.push_back(a);
    }
    res.out = heads == 1 ? outs.front() : ad::concat_cols(outs);
    return res;
}

Var head_average(const std::vector<Var>& maps) {
    Var s = ad::add_n(maps);
    return maps.size() == 1 ? s : ad::scale(s, 1.0 / static_cast<double>(maps.size()));
}

void check_heads(Var x, const AttentionWeights& w, std::size_t heads) {
    const std::size_t d = x.value().dim(1);
    require(heads >= 1 && w.wq.dim(0) % heads == 0, ErrorCode::Config, "head count must divide the projection width");
    require(w.wq.dim(1) == d, ErrorCode::Config,
            "W_Q expects width " + std::to_string(w.wq.dim(1)) + ", hidden has " + std::to_string(d));
}

}  // namespace

Var vanilla_cross_attention(Var x, const Tensor& prompt, const AttentionWeights& weights, std::size_t heads) {
    check_heads(x, weights, heads);
    Tape& tape = *x.tape();
    Var q = ad::matmul_nt(x, tape.leaf(weights.wq));
    Var k = tape.leaf(apply_projection(prompt, weights.wk, nullptr));
    Var v = tape.leaf(apply_projection(prompt, weights.wv, nullptr));
    HeadOutputs ho = multihead(q, k, v, heads, nullptr);
    return ad::matmul_nt(ho.out, tape.leaf(weights.wo));
}

CrossAttentionOutput region_cross_attention(Var x, const LayoutCondition& layout, const LayoutMasks& masks,
                                            const BundleSet& bundles, const AttentionWeights& weights,
                                            std::size_t heads) {
    check_heads(x, weights, heads);
    const std::size_t npix = x.value().dim(0);
    require(npix == masks.height * masks.width, ErrorCode::Config, "hidden rows do not match mask resolution");
    require(masks.regions.size() == layout.regions.size(), ErrorCode::Config, "masks do not match layout");
    Tape& tape = *x.tape();
    Var wo = tape.leaf(weights.wo);
    Var q = ad::matmul_nt(x, tape.leaf(weights.wq));

    // n = 0: global prompt, all-ones mask, base weights.
    Var k0 = tape.leaf(apply_projection(layout.global_prompt_embed, weights.wk, nullptr));
    Var v0 = tape.leaf(apply_projection(layout.global_prompt_embed, weights.wv, nullptr));
    Var h0 = ad::matmul_nt(multihead(q, k0, v0, heads, nullptr).out, wo);

    CrossAttentionOutput res;
    std::vector<ad::MaskedHidden> regional;
    for (std::size_t n = 0; n < layout.regions.size(); ++n) {
        const RegionSpec& region = layout.regions[n];
        auto it = bundles.find(region.concept_id);
        require(it != bundles.end(), ErrorCode::Config, "no bundle for concept '" + region.concept_id + "'");
        const ConceptBundle& bundle = it->second;
        const RegionMask& rm = masks.regions[n];

        std::vector<double> row_mask(rm.pixels.begin(), rm.pixels.end());
        Var qn = ad::scale_rows(q, std::move(row_mask));
        Var kn = tape.leaf(apply_projection(bundle.prompt_embed, weights.wk, bundle.delta(kCrossKeyProjection)));
        Var vn = tape.leaf(apply_projection(bundle.prompt_embed, weights.wv, bundle.delta(kCrossValueProjection)));
        HeadOutputs ho = multihead(qn, kn, vn, heads, nullptr);
        Var hn = ad::matmul_nt(ho.out, wo);
        regional.push_back(ad::MaskedHidden{rm.pixels, hn});

        std::vector<Var> cols;
        const std::vector<std::size_t> all_rows = [&] {
            std::vector<std::size_t> r(npix);
            for (std::size_t p = 0; p < npix; ++p) r[p] = p;
            return r;
        }();
        for (Var a : ho.maps) {
            cols.push_back(ad::select(a, all_rows, {bundle.token_index}));
        }
        Var map = ad::reshape(head_average(cols), {masks.height, masks.width});
        res.concept_maps.emplace_back(region.concept_id, map);
    }
    res.hidden = regional.empty() ? h0 : ad::compose_hidden(h0, regional);
    return res;
}

std::shared_ptr<const std::vector<std::uint8_t>> concept_isolation_mask(const LayoutMasks& masks) {
    if (masks.regions.size() < 2) {
        return nullptr;
    }
    const std::size_t n = masks.height * masks.width;
    std::vector<std::uint64_t> member(n, 0);
    for (std::size_t r = 0; r < masks.regions.size(); ++r) {
        for (std::size_t p : masks.regions[r].inside) member[p] |= std::uint64_t{1} << r;
    }
    auto permitted = std::make_shared<std::vector<std::uint8_t>>(n * n, 1);
    for (std::size_t qp = 0; qp < n; ++qp) {
        if (!member[qp]) continue;
        for (std::size_t kp = 0; kp < n; ++kp) {
            if (member[kp] && !(member[qp] & member[kp])) {
                (*permitted)[qp * n + kp] = 0;
            }
        }
    }
    return permitted;
}

SelfAttentionOutput masked_self_attention(Var x, const LayoutMasks& masks, const AttentionWeights& weights,
                                          std::size_t heads) {
    check_heads(x, weights, heads);
    require(x.value().dim(0) == masks.height * masks.width, ErrorCode::Config,
            "hidden rows do not match mask resolution");
    Tape& tape = *x.tape();
    Var q = ad::matmul_nt(x, tape.leaf(weights.wq));
    Var k = ad::matmul_nt(x, tape.leaf(weights.wk));
    Var v = ad::matmul_nt(x, tape.leaf(weights.wv));
    HeadOutputs ho = multihead(q, k, v, heads, concept_isolation_mask(masks));
    return SelfAttentionOutput{ad::matmul_nt(ho.out, tape.leaf(weights.wo)), head_average(ho.maps)};
}

}  // namespace cmix

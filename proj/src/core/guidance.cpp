// Copyright (C) 2026 The conceptmix Authors
// SPDX-License-Identifier: Apache-2.0

#include "conceptmix/guidance.hpp"

#include <cmath>
#include <sstream>

#include "conceptmix/error.hpp"

namespace cmix {

void GuidanceConfig::validate() const {
    auto finite_pos = [](double v) { return std::isfinite(v) && v > 0.0; };
    auto fraction = [](double v) { return std::isfinite(v) && v > 0.0 && v <= 1.0; };
    require(finite_pos(alpha) && finite_pos(beta), ErrorCode::Config, "alpha and beta must be positive");
    require(fraction(s_ratio) && fraction(p_ratio), ErrorCode::Config, "s_ratio and p_ratio must lie in (0, 1]");
    require(finite_pos(phi0), ErrorCode::Config, "phi0 must be positive");
    require(std::isfinite(guidance_fraction) && guidance_fraction >= 0.0 && guidance_fraction <= 1.0,
            ErrorCode::Config, "guidance_fraction must lie in [0, 1]");
    require(max_iters >= 1 && patience >= 1, ErrorCode::Config, "max_iters and patience must be at least 1");
}

LossBreakdown total_loss(double l_ce, double l_fill, double l_region, const GuidanceConfig& config) {
    LossBreakdown b;
    b.l_ce = l_ce;
    b.l_fill = l_fill;
    b.l_region = l_region;
    b.total = l_ce + config.alpha * l_fill + config.beta * l_region;
    return b;
}

namespace {

// ceil(ratio * n) clamped to [1, n]; the epsilon absorbs products such as
// 0.1 * 30 that land a hair above an integer.
std::size_t count_from_ratio(double ratio, std::size_t n) {
    const double raw = std::ceil(ratio * static_cast<double>(n) - 1e-9);
    return std::clamp<std::size_t>(static_cast<std::size_t>(std::max(raw, 1.0)), 1, n);
}

std::vector<const AttnLayer*> checked_loss_layers(const AttnRecord& record, const LayoutMasks& masks) {
    std::vector<const AttnLayer*> layers = record.loss_layers();
    require(!layers.empty(), ErrorCode::Config, "attention record has no layers");
    for (const AttnLayer* l : layers) {
        require(l->height == masks.height && l->width == masks.width, ErrorCode::Config,
                "loss layers are " + std::to_string(l->height) + "x" + std::to_string(l->width) + " but masks are " +
                    std::to_string(masks.height) + "x" + std::to_string(masks.width));
    }
    return layers;
}

const Var& cross_of(const AttnLayer& layer, const std::string& id) {
    const Var* v = layer.cross_map(id);
    require(v != nullptr, ErrorCode::Config, "no cross map recorded for concept '" + id + "'");
    return *v;
}

// Sums per-layer terms and divides by the layer count.
template <typename TermFn>
Var layer_average(Tape& tape, const AttnRecord& record, const LayoutMasks& masks, std::vector<Var>* per_concept,
                  TermFn term) {
    if (per_concept) per_concept->clear();
    if (masks.regions.empty()) {
        return tape.leaf(Tensor::scalar(0.0));
    }
    const auto layers = checked_loss_layers(record, masks);
    const double inv_layers = 1.0 / static_cast<double>(layers.size());
    std::vector<Var> concept_terms;
    for (std::size_t n = 0; n < masks.regions.size(); ++n) {
        std::vector<Var> per_layer;
        for (const AttnLayer* l : layers) per_layer.push_back(term(*l, masks.regions[n]));
        Var t = ad::add_n(per_layer);
        concept_terms.push_back(layers.size() == 1 ? t : ad::scale(t, inv_layers));
    }
    if (per_concept) *per_concept = concept_terms;
    return ad::add_n(concept_terms);
}

}  // namespace

Var concept_enhancement_loss(Tape& tape, const AttnRecord& record, const LayoutMasks& masks, double s_ratio,
                             std::vector<Var>* per_concept) {
    return layer_average(tape, record, masks, per_concept, [&](const AttnLayer& l, const RegionMask& rm) {
        require(!rm.inside.empty(), ErrorCode::EmptyMask, "concept '" + rm.concept_id + "' has an empty mask");
        const std::size_t s = count_from_ratio(s_ratio, rm.inside.size());
        Var weighted = ad::mul(cross_of(l, rm.concept_id), tape.leaf(kernels::mul(rm.mask, rm.gaussian)));
        return ad::add_scalar(ad::scale(ad::topk_mean(weighted, s), -1.0), 1.0);
    });
}

Var fill_loss(Tape& tape, const AttnRecord& record, const LayoutMasks& masks, std::vector<Var>* per_concept) {
    return layer_average(tape, record, masks, per_concept, [&](const AttnLayer& l, const RegionMask& rm) {
        require(!rm.inside.empty(), ErrorCode::EmptyMask, "concept '" + rm.concept_id + "' has an empty mask");
        const Var& a = cross_of(l, rm.concept_id);
        const Tensor mask_cols = kernels::axis_max_project(rm.mask, Axis::Rows);
        const Tensor mask_rows = kernels::axis_max_project(rm.mask, Axis::Cols);
        std::vector<std::size_t> cols, rows;
        for (std::size_t j = 0; j < mask_cols.numel(); ++j) {
            if (mask_cols[j] != 0.0) cols.push_back(j);
        }
        for (std::size_t i = 0; i < mask_rows.numel(); ++i) {
            if (mask_rows[i] != 0.0) rows.push_back(i);
        }
        Var along_w = ad::gather(ad::axis_max_project(a, Axis::Rows), cols);
        Var along_h = ad::gather(ad::axis_max_project(a, Axis::Cols), rows);
        const double k = static_cast<double>(cols.size() + rows.size());
        return ad::add_scalar(ad::scale(ad::sum(ad::concat({along_w, along_h})), -1.0 / k), 1.0);
    });
}

Var region_loss(Tape& tape, const AttnRecord& record, const LayoutMasks& masks, double p_ratio,
                std::vector<Var>* per_concept) {
    return layer_average(tape, record, masks, per_concept, [&](const AttnLayer& l, const RegionMask& rm) {
        require(!rm.inside.empty(), ErrorCode::EmptyMask, "concept '" + rm.concept_id + "' has an empty mask");
        require(l.self_map.valid(), ErrorCode::Config, "no self-attention map recorded");
        if (rm.outside.empty()) {
            // Full-image box: no background keys to leak into.
            return tape.leaf(Tensor::scalar(0.0));
        }
        Var slice = ad::select(l.self_map, rm.inside, rm.outside);
        const std::size_t p = count_from_ratio(p_ratio, rm.inside.size() * rm.outside.size());
        return ad::topk_mean(slice, p);
    });
}

LossBreakdown ConstraintLoss::values() const {
    LossBreakdown b;
    b.l_ce = l_ce.value().item();
    b.l_fill = l_fill.value().item();
    b.l_region = l_region.value().item();
    b.total = total.value().item();
    for (std::size_t n = 0; n < concept_ids.size(); ++n) {
        b.per_concept.push_back(ConceptLossTerms{concept_ids[n], ce_terms[n].value().item(),
                                                 fill_terms[n].value().item(), region_terms[n].value().item()});
    }
    return b;
}

ConstraintLoss constraint_loss(Tape& tape, const AttnRecord& record, const LayoutMasks& masks,
                               const GuidanceConfig& config) {
    ConstraintLoss c;
    c.l_ce = concept_enhancement_loss(tape, record, masks, config.s_ratio, &c.ce_terms);
    c.l_fill = fill_loss(tape, record, masks, &c.fill_terms);
    c.l_region = region_loss(tape, record, masks, config.p_ratio, &c.region_terms);
    c.total = ad::add(ad::add(c.l_ce, ad::scale(c.l_fill, config.alpha)), ad::scale(c.l_region, config.beta));
    for (const auto& rm : masks.regions) c.concept_ids.push_back(rm.concept_id);
    return c;
}

std::vector<double> inbox_mass_fraction(const AttnRecord& record, const LayoutMasks& masks) {
    std::vector<double> out;
    if (masks.regions.empty()) return out;
    const auto layers = checked_loss_layers(record, masks);
    for (const auto& rm : masks.regions) {
        double acc = 0.0;
        for (const AttnLayer* l : layers) {
            const Tensor& a = cross_of(*l, rm.concept_id).value();
            double in = 0.0, all = 0.0;
            for (std::size_t p = 0; p < a.numel(); ++p) {
                all += a[p];
                if (rm.pixels[p]) in += a[p];
            }
            acc += all > 0.0 ? in / all : 0.0;
        }
        out.push_back(acc / static_cast<double>(layers.size()));
    }
    return out;
}

double step_size(std::size_t t, std::size_t total_steps, double phi0) {
    require(total_steps >= 1 && t <= total_steps, ErrorCode::Argument, "step_size: need 0 <= t <= T, T >= 1");
    return phi0 * (static_cast<double>(t) / static_cast<double>(total_steps));
}

bool in_guidance_window(std::size_t t, std::size_t total_steps, double guidance_fraction) {
    require(t <= total_steps, ErrorCode::Argument, "in_guidance_window: t exceeds T");
    return static_cast<double>(total_steps - t) < guidance_fraction * static_cast<double>(total_steps);
}

AdaptiveStop::AdaptiveStop(std::size_t patience) : patience_(patience) {
    require(patience >= 1, ErrorCode::Argument, "patience must be at least 1");
}

AdaptiveStop::Verdict AdaptiveStop::observe(double loss) {
    Verdict v;
    if (loss < best_) {
        best_ = loss;
        stalled_ = 0;
        v.improved = true;
    } else {
        ++stalled_;
        v.stop = stalled_ >= patience_;
    }
    return v;
}

GuidanceEvaluation evaluate_guidance(const Tensor& z, const ConstraintObjective& objective, const std::string& where) {
    Tape tape;
    Var zv = tape.leaf(z);
    ConstraintLoss loss;
    try {
        loss = objective(tape, zv);
    } catch (const Error& e) {
        if (e.code() == ErrorCode::Numeric) raise(ErrorCode::Numeric, where + ": " + e.what());
        throw;
    }
    GuidanceEvaluation ev{loss.values(), tape.gradient(loss.total, zv)};
    if (!std::isfinite(ev.loss.total) || !ev.gradient.all_finite()) {
        std::ostringstream os;
        os << where << ": non-finite " << (std::isfinite(ev.loss.total) ? "gradient" : "loss")
           << " (l_ce=" << ev.loss.l_ce << ", l_fill=" << ev.loss.l_fill << ", l_region=" << ev.loss.l_region << ")";
        raise(ErrorCode::Numeric, os.str());
    }
    return ev;
}

GuidedUpdateResult guided_update(const Tensor& z, std::size_t t, std::size_t total_steps,
                                 const ConstraintObjective& objective, const GuidanceConfig& config,
                                 std::vector<TraceRow>* live_trace) {
    config.validate();
    const double phi = step_size(t, total_steps, config.phi0);
    auto where = [t](std::size_t it) {
        return "guidance at timestep " + std::to_string(t) + ", iteration " + std::to_string(it);
    };
    GuidedUpdateResult res;
    auto emit = [&](std::size_t it, const LossBreakdown& b, bool accepted) {
        res.rows.push_back(TraceRow{static_cast<long>(t), static_cast<long>(it), b.l_ce, b.l_fill, b.l_region,
                                    b.total, phi, accepted});
        if (live_trace) live_trace->push_back(res.rows.back());
    };

    AdaptiveStop stop(config.patience);
    GuidanceEvaluation ev = evaluate_guidance(z, objective, where(0));
    stop.observe(ev.loss.total);
    emit(0, ev.loss, true);
    res.z = z;
    res.best = ev.loss;

    Tensor current = z;
    for (std::size_t it = 1; it <= config.max_iters; ++it) {
        Tensor candidate = kernels::sub(current, kernels::scale(ev.gradient, phi));
        ev = evaluate_guidance(candidate, objective, where(it));
        const AdaptiveStop::Verdict v = stop.observe(ev.loss.total);
        emit(it, ev.loss, v.improved);
        if (v.improved) {
            res.z = candidate;
            res.best = ev.loss;
        }
        current = std::move(candidate);
        if (v.stop) break;
    }
    return res;
}

}  // namespace cmix

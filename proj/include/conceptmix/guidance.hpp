// Copyright (C) 2026 The conceptmix Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "conceptmix/autodiff.hpp"
#include "conceptmix/composer_attention.hpp"

namespace cmix {

struct GuidanceConfig {
    double alpha = 0.25;              // weight of the fill loss
    double beta = 0.8;                // weight of the region loss
    double s_ratio = 0.2;             // S = ceil(s_ratio * |mask|)
    double p_ratio = 0.2;             // P = ceil(p_ratio * |slice|)
    double phi0 = 10.0;               // step size at t = T
    double guidance_fraction = 0.7;   // share of early timesteps that get updates
    std::size_t max_iters = 5;        // gradient steps per timestep
    std::size_t patience = 1;         // non-improving evaluations before stopping

    void validate() const;
};

struct ConceptLossTerms {
    std::string concept_id;
    double ce = 0.0;
    double fill = 0.0;
    double region = 0.0;
};

struct LossBreakdown {
    double l_ce = 0.0;
    double l_fill = 0.0;
    double l_region = 0.0;
    double total = 0.0;
    std::vector<ConceptLossTerms> per_concept;
};

/// total = l_ce + alpha * l_fill + beta * l_region.
LossBreakdown total_loss(double l_ce, double l_fill, double l_region, const GuidanceConfig& config);

/// Differentiable constraint losses. Each is summed over concepts and averaged
/// over the record's loss layers; `per_concept`, when given, receives one term
/// per region in layout order.
Var concept_enhancement_loss(Tape& tape, const AttnRecord& record, const LayoutMasks& masks, double s_ratio,
                             std::vector<Var>* per_concept = nullptr);
Var fill_loss(Tape& tape, const AttnRecord& record, const LayoutMasks& masks, std::vector<Var>* per_concept = nullptr);
Var region_loss(Tape& tape, const AttnRecord& record, const LayoutMasks& masks, double p_ratio,
                std::vector<Var>* per_concept = nullptr);

struct ConstraintLoss {
    Var l_ce, l_fill, l_region, total;
    std::vector<std::string> concept_ids;
    std::vector<Var> ce_terms, fill_terms, region_terms;

    LossBreakdown values() const;
};

ConstraintLoss constraint_loss(Tape& tape, const AttnRecord& record, const LayoutMasks& masks,
                               const GuidanceConfig& config);

/// Share of each concept's cross-attention that falls inside its mask,
/// averaged over loss layers. One entry per region in layout order.
std::vector<double> inbox_mass_fraction(const AttnRecord& record, const LayoutMasks& masks);

/// phi0 * t / T.
double step_size(std::size_t t, std::size_t total_steps, double phi0);

/// True while (T - t) < guidance_fraction * T, i.e. for the first
/// guidance_fraction share of timesteps counted down from T.
bool in_guidance_window(std::size_t t, std::size_t total_steps, double guidance_fraction);

/// Loss-plateau stop: a loss that does not beat the best seen so far counts as
/// stalled; `patience` consecutive stalls end the loop.
class AdaptiveStop {
public:
    explicit AdaptiveStop(std::size_t patience);

    struct Verdict {
        bool improved = false;
        bool stop = false;
    };
    Verdict observe(double loss);

    double best() const noexcept { return best_; }
    std::size_t stalled() const noexcept { return stalled_; }

private:
    std::size_t patience_;
    std::size_t stalled_ = 0;
    double best_ = std::numeric_limits<double>::infinity();
};

struct TraceRow {
    long timestep = 0;
    long iteration = 0;
    double l_ce = 0.0;
    double l_fill = 0.0;
    double l_region = 0.0;
    double total = 0.0;
    double phi_t = 0.0;
    bool accepted = false;
};

/// Builds the forward pass on `z` and returns the constraint losses.
using ConstraintObjective = std::function<ConstraintLoss(Tape& tape, Var z)>;

struct GuidanceEvaluation {
    LossBreakdown loss;
    Tensor gradient;
};

/// Loss and exact gradient at z on a fresh tape. Non-finite values raise a
/// numeric error carrying `where`.
GuidanceEvaluation evaluate_guidance(const Tensor& z, const ConstraintObjective& objective, const std::string& where);

struct GuidedUpdateResult {
    Tensor z;             // best-loss latent seen
    LossBreakdown best;   // its losses
    std::vector<TraceRow> rows;
};

/// Iterates z <- z - phi_t * grad L. Row 0 is the starting latent; each later
/// row is one update. Stops after max_iters updates or when AdaptiveStop fires.
/// Rows are also appended to `live_trace`, when given, as soon as they exist.
GuidedUpdateResult guided_update(const Tensor& z, std::size_t t, std::size_t total_steps,
                                 const ConstraintObjective& objective, const GuidanceConfig& config,
                                 std::vector<TraceRow>* live_trace = nullptr);

}  // namespace cmix

// Copyright (C) 2026 The conceptmix Authors
// SPDX-License-Identifier: Apache-2.0

#include "conceptmix/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "conceptmix/denoiser.hpp"
#include "conceptmix/error.hpp"
#include "conceptmix/rng.hpp"

namespace cmix {

GradcheckReport gradient_check(const RunConfig& config, const RunInputs& inputs, const GradcheckOptions& options) {
    require(options.eps > 0.0 && options.tolerance > 0.0 && options.relative_floor >= 0.0, ErrorCode::Argument,
            "gradcheck: eps and tolerance must be positive");
    config.validate();
    const ToyDenoiser model(inputs.weights, inputs.layout, inputs.bundles, config.steps);
    const ModelDims& d = model.dims();
    const std::size_t T = config.steps;
    const Tensor z = NormalSampler(derive_seed(config.seed, "latent/noise")).tensor({d.channels, d.height, d.width});
    const ConstraintObjective objective = model.objective(T, config.guidance);

    GradcheckReport rep;
    const GuidanceEvaluation ev = evaluate_guidance(z, objective, "gradcheck");
    rep.loss = ev.loss.total;

    std::vector<std::size_t> coords(z.numel());
    std::iota(coords.begin(), coords.end(), 0);
    if (coords.size() > options.max_full) {
        std::mt19937_64 rng(derive_seed(config.seed, "gradcheck/coordinates"));
        for (std::size_t i = 0; i < options.sampled; ++i) {
            std::uniform_int_distribution<std::size_t> pick(i, coords.size() - 1);
            std::swap(coords[i], coords[pick(rng)]);
        }
        coords.resize(options.sampled);
        std::sort(coords.begin(), coords.end());
    }

    auto loss_at = [&](const Tensor& x) {
        Tape tape;
        return objective(tape, tape.leaf(x)).total.value().item();
    };
    double grad_scale = 0.0;
    for (std::size_t i = 0; i < ev.gradient.numel(); ++i) grad_scale = std::max(grad_scale, std::abs(ev.gradient[i]));
    const double floor = options.relative_floor * grad_scale;

    Tensor x = z;
    for (std::size_t i : coords) {
        const double orig = x[i];
        x[i] = orig + options.eps;
        const double up = loss_at(x);
        x[i] = orig - options.eps;
        const double down = loss_at(x);
        x[i] = orig;
        const double numeric = (up - down) / (2.0 * options.eps);
        const double analytic = ev.gradient[i];
        const double abs_err = std::abs(analytic - numeric);
        const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
        const double rel = denom > 0.0 ? abs_err / denom : 0.0;
        rep.max_abs_error = std::max(rep.max_abs_error, abs_err);
        if (rel > rep.max_rel_error || rep.coordinates == 0) {
            rep.max_rel_error = rel;
            rep.worst_index = i;
            rep.worst_analytic = analytic;
            rep.worst_numeric = numeric;
        }
        ++rep.coordinates;
    }
    rep.passed = rep.max_rel_error < options.tolerance;
    return rep;
}

}  // namespace cmix

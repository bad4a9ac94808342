// Copyright (C) 2026 The conceptmix Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "conceptmix/denoiser.hpp"
#include "conceptmix/latent_reinit.hpp"
#include "conceptmix/run_config.hpp"
#include "conceptmix/tensor_file.hpp"

namespace cmix {

/// Cumulative signal level, linear in t from alpha_bar_0 down to alpha_bar_T.
struct SamplerSchedule {
    std::size_t steps = 25;
    double alpha_bar_0 = 0.999;
    double alpha_bar_T = 0.01;

    double alpha_bar(std::size_t t) const;
    void validate() const;
};

/// Deterministic DDIM update from signal level a_t to a_prev:
///   x0 = (z - sqrt(1 - a_t) eps) / sqrt(a_t)
///   z' = sqrt(a_prev) x0 + sqrt(1 - a_prev) eps
Tensor ddim_update(const Tensor& z, const Tensor& eps, double alpha_bar_t, double alpha_bar_prev);
Tensor ddim_step(const Tensor& z, const Tensor& eps, std::size_t t, const SamplerSchedule& schedule);

/// Loss bookkeeping for one guided timestep.
struct GuidedStepSummary {
    std::size_t timestep = 0;
    LossBreakdown initial;  // loss at the unmodified latent
    LossBreakdown best;     // loss at the latent handed to the DDIM step
    std::vector<double> inbox_fraction;  // per concept, at the handed-over latent
};

struct SampleResult {
    Tensor initial_latent;  // z_T after optional re-initialization
    Tensor final_latent;    // z_0
    std::vector<TraceRow> trace;
    std::vector<GuidedStepSummary> guided;
    std::vector<CropResult> crops;
    // Attention maps of the last denoiser call (t = 1), copied off its tape:
    // "L<i>.cross.<concept>" (h x w) and "L<i>.self" ((h*w) x (h*w)).
    TensorFile final_attention;
};

/// Runs the full reverse process. Trace rows are appended to `trace` as they
/// are produced so a caller can flush them if a step throws.
SampleResult run_sampler(const RunConfig& config, const RunInputs& inputs, std::vector<TraceRow>& trace);
SampleResult run_sampler(const RunConfig& config, const RunInputs& inputs);

/// Grayscale image (row-major bytes).
struct Image {
    std::size_t width = 0, height = 0;
    std::vector<std::uint8_t> pixels;
};

/// Channel mean per pixel, min-max scaled to [0, 255]; a constant image is 128.
Image decode_preview(const Tensor& z);
std::vector<std::uint8_t> encode_pgm(const Image& image);

std::string trace_csv(const std::vector<TraceRow>& rows);

/// Loads inputs, samples and writes trace.csv, latent.lcb, preview.pgm (and
/// attention.lcb when requested) into `config.output_dir`. On failure the
/// trace produced so far is still written before the error propagates.
SampleResult compose(const RunConfig& config);

}  // namespace cmix

// Copyright (C) 2026 The conceptmix Authors
// SPDX-License-Identifier: Apache-2.0

#include "conceptmix/sampler.hpp"

#include <cmath>
#include <cstdio>
#include <string>

#include "conceptmix/error.hpp"
#include "conceptmix/rng.hpp"
#include "conceptmix/tensor_file.hpp"

namespace cmix {

namespace fs = std::filesystem;

double SamplerSchedule::alpha_bar(std::size_t t) const {
    require(t <= steps, ErrorCode::Argument, "timestep " + std::to_string(t) + " exceeds T");
    return alpha_bar_0 + (alpha_bar_T - alpha_bar_0) * static_cast<double>(t) / static_cast<double>(steps);
}

void SamplerSchedule::validate() const {
    require(steps >= 1, ErrorCode::Config, "schedule needs at least one step");
    require(alpha_bar_T > 0.0 && alpha_bar_T < alpha_bar_0 && alpha_bar_0 < 1.0, ErrorCode::Config,
            "schedule needs 0 < alpha_bar_T < alpha_bar_0 < 1");
}

Tensor ddim_update(const Tensor& z, const Tensor& eps, double a_t, double a_prev) {
    require(z.shape() == eps.shape(), ErrorCode::Dimension, "ddim: latent and noise prediction differ in shape");
    if (a_t == a_prev) return z;  // degenerate step; skip the x0 round trip
    const double sa = std::sqrt(a_t), sn = std::sqrt(1.0 - a_t);
    const double pa = std::sqrt(a_prev), pn = std::sqrt(1.0 - a_prev);
    Tensor out(z.shape());
    for (std::size_t i = 0; i < z.numel(); ++i) {
        const double x0 = (z[i] - sn * eps[i]) / sa;
        out[i] = pa * x0 + pn * eps[i];
    }
    return out;
}

Tensor ddim_step(const Tensor& z, const Tensor& eps, std::size_t t, const SamplerSchedule& schedule) {
    require(t >= 1, ErrorCode::Argument, "ddim_step needs t >= 1");
    return ddim_update(z, eps, schedule.alpha_bar(t), schedule.alpha_bar(t - 1));
}

namespace {

// The record's Vars live on the step's tape, so the values are copied out.
TensorFile attention_snapshot(const AttnRecord& record) {
    TensorFile f;
    for (std::size_t l = 0; l < record.layers.size(); ++l) {
        const AttnLayer& layer = record.layers[l];
        const std::string prefix = "L" + std::to_string(l) + ".";
        for (const auto& [id, map] : layer.cross) f.add(prefix + "cross." + id, map.value());
        f.add(prefix + "self", layer.self_map.value());
    }
    return f;
}

}  // namespace

SampleResult run_sampler(const RunConfig& config, const RunInputs& inputs, std::vector<TraceRow>& trace) {
    config.validate();
    const ToyDenoiser model(inputs.weights, inputs.layout, inputs.bundles, config.steps);
    const ModelDims& d = model.dims();
    SamplerSchedule schedule;
    schedule.steps = config.steps;
    schedule.validate();
    const std::size_t T = config.steps;
    const bool has_regions = !inputs.layout.regions.empty();

    SampleResult res;
    NormalSampler noise_source(derive_seed(config.seed, "latent/noise"));
    Tensor z = noise_source.tensor({d.channels, d.height, d.width});
    if (config.latent_reinit) {
        ReinitResult r = reinitialize_latent(z, T, config.guidance, model.loss_masks(), model.objective(T, config.guidance),
                                             [&](const Tensor& x) { return model.concept_maps(x, T); });
        trace.insert(trace.end(), r.rows.begin(), r.rows.end());
        res.crops = std::move(r.crops);
        z = std::move(r.z);
    }
    res.initial_latent = z;

    for (std::size_t t = T; t >= 1; --t) {
        const bool guided = has_regions && in_guidance_window(t, T, config.guidance.guidance_fraction);
        GuidedStepSummary summary;
        if (guided) {
            GuidedUpdateResult g =
                guided_update(z, t, T, model.objective(t, config.guidance), config.guidance, &trace);
            summary.timestep = t;
            summary.initial = total_loss(g.rows.front().l_ce, g.rows.front().l_fill, g.rows.front().l_region,
                                         config.guidance);
            summary.best = g.best;
            z = std::move(g.z);
        }
        Tape tape;
        ToyDenoiser::Output out = model.forward(tape, tape.leaf(z), t);
        if (guided) {
            summary.inbox_fraction = inbox_mass_fraction(out.record, model.loss_masks());
            res.guided.push_back(std::move(summary));
        }
        z = ddim_step(z, out.epsilon.value(), t, schedule);
        require(z.all_finite(), ErrorCode::Numeric, "latent became non-finite at timestep " + std::to_string(t));
        if (t == 1) res.final_attention = attention_snapshot(out.record);
    }
    res.final_latent = std::move(z);
    res.trace = trace;
    return res;
}

SampleResult run_sampler(const RunConfig& config, const RunInputs& inputs) {
    std::vector<TraceRow> trace;
    return run_sampler(config, inputs, trace);
}

Image decode_preview(const Tensor& z) {
    require(z.rank() == 3, ErrorCode::Dimension, "preview expects a C x h x w latent");
    const std::size_t c = z.dim(0), n = z.dim(1) * z.dim(2);
    std::vector<double> mean(n, 0.0);
    for (std::size_t ch = 0; ch < c; ++ch) {
        for (std::size_t p = 0; p < n; ++p) mean[p] += z[ch * n + p];
    }
    for (double& m : mean) m /= static_cast<double>(c);
    double lo = mean[0], hi = mean[0];
    for (double m : mean) {
        lo = std::min(lo, m);
        hi = std::max(hi, m);
    }
    Image img{z.dim(2), z.dim(1), std::vector<std::uint8_t>(n, 128)};
    if (hi > lo) {
        for (std::size_t p = 0; p < n; ++p) {
            img.pixels[p] = static_cast<std::uint8_t>(std::lround((mean[p] - lo) / (hi - lo) * 255.0));
        }
    }
    return img;
}

std::vector<std::uint8_t> encode_pgm(const Image& image) {
    const std::string header =
        "P5\n" + std::to_string(image.width) + " " + std::to_string(image.height) + "\n255\n";
    std::vector<std::uint8_t> out(header.begin(), header.end());
    out.insert(out.end(), image.pixels.begin(), image.pixels.end());
    return out;
}

std::string trace_csv(const std::vector<TraceRow>& rows) {
    std::string out = "timestep,iteration,l_ce,l_fill,l_region,total,phi_t,accepted\n";
    char buf[256];
    for (const TraceRow& r : rows) {
        std::snprintf(buf, sizeof buf, "%ld,%ld,%.17g,%.17g,%.17g,%.17g,%.17g,%d\n", r.timestep, r.iteration, r.l_ce,
                      r.l_fill, r.l_region, r.total, r.phi_t, r.accepted ? 1 : 0);
        out += buf;
    }
    return out;
}

namespace {

void write_text(const fs::path& path, const std::string& text) {
    write_file_bytes(path, std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(text.data()),
                                                          text.size()));
}

}  // namespace

SampleResult compose(const RunConfig& config) {
    require(!config.output_dir.empty(), ErrorCode::Config, "output_dir is required");
    std::error_code ec;
    fs::create_directories(config.output_dir, ec);
    require(!ec, ErrorCode::Io, "cannot create " + config.output_dir.string() + ": " + ec.message());

    const RunInputs inputs = load_run_inputs(config);
    std::vector<TraceRow> trace;
    SampleResult res;
    try {
        res = run_sampler(config, inputs, trace);
    } catch (const Error&) {
        write_text(config.output_dir / "trace.csv", trace_csv(trace));
        throw;
    }
    write_text(config.output_dir / "trace.csv", trace_csv(res.trace));
    TensorFile latent;
    latent.add("latent", res.final_latent);
    write_tensor_file(config.output_dir / "latent.lcb", latent);
    write_file_bytes(config.output_dir / "preview.pgm", encode_pgm(decode_preview(res.final_latent)));
    if (config.dump_attention) write_tensor_file(config.output_dir / "attention.lcb", res.final_attention);
    return res;
}

}  // namespace cmix

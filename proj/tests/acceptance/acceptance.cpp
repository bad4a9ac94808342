// Copyright (C) 2026 The conceptmix Authors
// SPDX-License-Identifier: Apache-2.0

// Acceptance run: one PASS/FAIL line per property, exit status 1 if any fails.
// Tolerances are pinned here and printed next to each measurement.

#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <fstream>
#include <functional>
#include <limits>
#include <random>
#include <sstream>
#include <string>

#include <Eigen/SVD>

#include "conceptmix/conceptmix.h"
#include "conceptmix/denoiser.hpp"
#include "conceptmix/error.hpp"
#include "conceptmix/gradcheck.hpp"
#include "conceptmix/latent_reinit.hpp"
#include "conceptmix/rng.hpp"
#include "conceptmix/sampler.hpp"
#include "conceptmix/toy_assets.hpp"
#include "../unit/support.hpp"

using namespace cmix;
using cmix::testing::TempDir;

namespace {

constexpr double kGradTolerance = 1e-5;
constexpr double kGradSeconds = 10.0;
constexpr std::size_t kIsolationForwards = 100;
constexpr double kLossRatio = 0.5;
constexpr std::size_t kCropMaps = 200;
constexpr double kMomentTolerance = 1e-9;
constexpr double kArithmeticTolerance = 1e-12;
constexpr double kRankRatio = 1e-10;
constexpr std::uint64_t kReferenceSeed = 42;

int failures = 0;

void report(int id, const char* name, bool ok, const std::string& detail) {
    std::printf("[%s] %2d %-24s %s\n", ok ? "PASS" : "FAIL", id, name, detail.c_str());
    std::fflush(stdout);
    if (!ok) ++failures;
}

// Runs one criterion; an exception is a failure with its message as detail.
void criterion(int id, const char* name, const std::function<std::pair<bool, std::string>()>& body) {
    try {
        const auto [ok, detail] = body();
        report(id, name, ok, detail);
    } catch (const std::exception& e) {
        report(id, name, false, std::string("error: ") + e.what());
    }
}

std::string fmt(const char* f, ...) __attribute__((format(printf, 1, 2)));
std::string fmt(const char* f, ...) {
    char buf[512];
    va_list ap;
    va_start(ap, f);
    std::vsnprintf(buf, sizeof buf, f, ap);
    va_end(ap);
    return buf;
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

struct Reference {
    TempDir dir{"acceptance"};
    RunConfig config;
    RunInputs inputs;
    explicit Reference(std::uint64_t seed) {
        config = make_toy_assets(seed, dir.path());
        config.output_dir = dir.path() / "out";
        inputs = load_run_inputs(config);
    }
};

std::pair<bool, std::string> gradient_fidelity() {
    Reference ref(kReferenceSeed);
    ref.config.dims.channels = 4;
    ref.config.dims.height = 8;
    ref.config.dims.width = 8;
    ref.inputs = load_run_inputs(ref.config);
    GradcheckOptions opt;
    opt.eps = 1e-6;
    opt.tolerance = kGradTolerance;
    const auto start = std::chrono::steady_clock::now();
    const GradcheckReport r = gradient_check(ref.config, ref.inputs, opt);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const bool ok = r.passed && r.max_rel_error < kGradTolerance && secs < kGradSeconds;
    return {ok, fmt("8x8x4, %zu coords: max_rel=%.3g < %.0e, max_abs=%.3g, %.2f s < %.0f s", r.coordinates,
                    r.max_rel_error, kGradTolerance, r.max_abs_error, secs, kGradSeconds)};
}

std::pair<bool, std::string> hard_isolation() {
    Reference ref(kReferenceSeed);
    const ToyDenoiser model(ref.inputs.weights, ref.inputs.layout, ref.inputs.bundles, ref.config.steps);
    const ModelDims& d = model.dims();
    std::size_t checked = 0, nonzero = 0;
    for (std::size_t s = 0; s < kIsolationForwards; ++s) {
        const Tensor z = NormalSampler(1000 + s).tensor({d.channels, d.height, d.width});
        const std::size_t t = 1 + s % ref.config.steps;
        Tape tape;
        const auto out = model.forward(tape, tape.leaf(z), t);
        for (const AttnLayer& layer : out.record.layers) {
            const LayoutMasks& m = layer.height == d.height ? model.loss_masks() : model.low_res_masks();
            const Tensor& map = layer.self_map.value();
            const std::size_t n = layer.height * layer.width;
            for (std::size_t a = 0; a < m.regions.size(); ++a)
                for (std::size_t b = 0; b < m.regions.size(); ++b) {
                    if (a == b) continue;
                    for (std::size_t q = 0; q < n; ++q) {
                        // Only pixels owned by exactly one region are isolated.
                        if (!m.regions[a].pixels[q] || m.regions[b].pixels[q]) continue;
                        for (std::size_t k = 0; k < n; ++k) {
                            if (!m.regions[b].pixels[k] || m.regions[a].pixels[k]) continue;
                            ++checked;
                            if (map.at(q, k) != 0.0) ++nonzero;
                        }
                    }
                }
        }
    }
    return {checked > 0 && nonzero == 0,
            fmt("%zu forwards, %zu cross-region entries, %zu nonzero", kIsolationForwards, checked, nonzero)};
}

std::pair<bool, std::string> neutrality() {
    Reference ref(kReferenceSeed);
    ref.config.guidance.guidance_fraction = 0.0;
    ref.config.latent_reinit = false;
    RunInputs plain = ref.inputs;
    plain.layout.regions.clear();
    plain.bundles.clear();

    RunInputs neutral = ref.inputs;
    const RegionSpec keep = neutral.layout.regions.front();
    ConceptBundle b = neutral.bundles.at(keep.concept_id);
    b.prompt_embed = neutral.layout.global_prompt_embed;
    for (auto& [name, delta] : b.deltas) delta.scale = 0.0;
    neutral.layout.regions = {keep};
    neutral.bundles.clear();
    neutral.bundles.emplace(keep.concept_id, b);

    const SampleResult a = run_sampler(ref.config, neutral);
    const SampleResult p = run_sampler(ref.config, plain);
    const double diff = max_abs_diff(a.final_latent, p.final_latent);
    return {a.final_latent == p.final_latent && a.trace.empty(),
            fmt("single region, zero deltas, gf=0, no reinit: max|diff|=%.3g (bit-exact required)", diff)};
}

std::pair<bool, std::string> guidance_efficacy(SampleResult& keep) {
    Reference ref(kReferenceSeed);
    keep = run_sampler(ref.config, ref.inputs);
    if (keep.guided.empty()) return {false, "no guided timesteps"};
    const double initial = keep.guided.front().initial.total;
    const double final_loss = keep.guided.back().best.total;
    const double ratio = final_loss / initial;
    bool ok = ratio <= kLossRatio;
    std::string detail = fmt("seed %llu: loss %.4f -> %.4f (ratio %.3f <= %.2f); in-box",
                             static_cast<unsigned long long>(kReferenceSeed), initial, final_loss, ratio, kLossRatio);
    const auto& first = keep.guided.front().inbox_fraction;
    const auto& last = keep.guided.back().inbox_fraction;
    for (std::size_t n = 0; n < first.size(); ++n) {
        ok = ok && last[n] > first[n];
        detail += fmt(" %.3f->%.3f", first[n], last[n]);
    }
    return {ok, detail};
}

std::pair<bool, std::string> crop_oracle() {
    std::mt19937_64 rng(2026);
    std::uniform_int_distribution<std::size_t> ext(1, 16);
    std::uniform_real_distribution<double> val(0.0, 1.0);
    std::size_t mismatches = 0;
    for (std::size_t trial = 0; trial < kCropMaps; ++trial) {
        Tensor map({16, 16});
        for (double& v : map.data()) v = val(rng);
        if (trial % 10 == 0) {
            for (double& v : map.data()) v = std::floor(v * 3.0) / 4.0;  // force ties
        }
        const std::size_t ew = ext(rng), eh = ext(rng);
        const CropResult got = best_crop(map, {ew, eh});
        std::size_t br = 0, bc = 0;
        double best = -std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i + eh <= 16; ++i)
            for (std::size_t j = 0; j + ew <= 16; ++j) {
                double s = 0.0;
                for (std::size_t di = 0; di < eh; ++di)
                    for (std::size_t dj = 0; dj < ew; ++dj) s += map.at(i + di, j + dj);
                if (s > best) best = s, br = i, bc = j;
            }
        if (got.row != br || got.col != bc || got.score != best) ++mismatches;
    }
    return {mismatches == 0, fmt("%zu random 16x16 maps (every 10th quantized): %zu mismatches", kCropMaps, mismatches)};
}

std::pair<bool, std::string> standardization(const SampleResult& run) {
    const Tensor& z = run.initial_latent;
    if (run.crops.empty()) return {false, "reference run did not re-initialize"};
    const std::size_t n = z.dim(1) * z.dim(2);
    double worst_mean = 0.0, worst_std = 0.0;
    for (std::size_t c = 0; c < z.dim(0); ++c) {
        double mu = 0.0, var = 0.0;
        for (std::size_t p = 0; p < n; ++p) mu += z[c * n + p];
        mu /= static_cast<double>(n);
        for (std::size_t p = 0; p < n; ++p) var += (z[c * n + p] - mu) * (z[c * n + p] - mu);
        worst_mean = std::max(worst_mean, std::abs(mu));
        worst_std = std::max(worst_std, std::abs(std::sqrt(var / static_cast<double>(n)) - 1.0));
    }
    return {worst_mean < kMomentTolerance && worst_std < kMomentTolerance,
            fmt("%zu channels: max|mean|=%.3g, max|std-1|=%.3g < %.0e", z.dim(0), worst_mean, worst_std,
                kMomentTolerance)};
}

std::pair<bool, std::string> loss_arithmetic() {
    GuidanceConfig g;
    g.alpha = 0.25;
    g.beta = 0.8;
    const double total = total_loss(1.0, 1.0, 1.0, g).total;
    const double err = std::abs(total - 2.05);
    return {err <= kArithmeticTolerance, fmt("(1,1,1), alpha 0.25, beta 0.8: total=%.17g, |err|=%.3g <= %.0e", total,
                                             err, kArithmeticTolerance)};
}

std::pair<bool, std::string> rank_bound() {
    double worst = 0.0;
    std::size_t deltas = 0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const ConceptBundle b = synthesize_bundle(seed, BundleDims{}, "r");
        for (const auto& [name, d] : b.deltas) {
            const Tensor m = d.dense();
            Eigen::MatrixXd e(m.dim(0), m.dim(1));
            for (std::size_t i = 0; i < m.dim(0); ++i)
                for (std::size_t j = 0; j < m.dim(1); ++j) e(i, j) = m.at(i, j);
            const Eigen::VectorXd s = Eigen::JacobiSVD<Eigen::MatrixXd>(e).singularValues();
            worst = std::max(worst, s(4) / s(0));
            ++deltas;
        }
    }
    return {deltas > 0 && worst < kRankRatio,
            fmt("%zu rank-4 deltas over 20 seeds: max sigma5/sigma1=%.3g < %.0e", deltas, worst, kRankRatio)};
}

std::pair<bool, std::string> schedule_and_stop() {
    bool ok = true;
    std::string detail = "phi0=10:";
    for (std::size_t T : {24, 50}) {
        const double p0 = step_size(0, T, 10.0), ph = step_size(T / 2, T, 10.0), pT = step_size(T, T, 10.0);
        ok = ok && p0 == 0.0 && ph == 5.0 && pT == 10.0;
        detail += fmt(" T=%zu {%g, %g, %g}", T, p0, ph, pT);
    }
    // A loss that stops decreasing after its first value.
    for (std::size_t patience : {1, 2, 3}) {
        AdaptiveStop stop(patience);
        const double seq[] = {1.0, 1.0, 1.5, 1.2, 1.1, 1.05};
        std::size_t fired = 0;
        for (std::size_t i = 0; i < std::size(seq); ++i) {
            if (stop.observe(seq[i]).stop) {
                fired = i;
                break;
            }
        }
        ok = ok && fired == patience;
        detail += fmt("; patience %zu stops after %zu stalls", patience, fired);
    }
    return {ok, detail};
}

// Goes through the shared library only, as the CLI does.
std::pair<bool, std::string> determinism() {
    TempDir dir("acceptance-capi");
    auto check = [](cmix_status s, const char* what) {
        if (s != CMIX_OK) throw Error(ErrorCode::Internal, std::string(what) + ": " + cmix_last_error_message());
    };
    check(cmix_make_toy_assets(kReferenceSeed, dir.path().c_str()), "make_toy_assets");
    const char* names[] = {"trace.csv", "latent.lcb", "preview.pgm"};
    std::string first[3];
    for (int run = 0; run < 2; ++run) {
        cmix_config* cfg = nullptr;
        check(cmix_config_load((dir.path() / "config.json").c_str(), &cfg), "config_load");
        const std::string out = (dir.path() / ("run" + std::to_string(run))).string();
        cmix_status s = cmix_config_set_output_dir(cfg, out.c_str());
        cmix_run* r = nullptr;
        if (s == CMIX_OK) s = cmix_compose(cfg, &r);
        cmix_run_free(r);
        cmix_config_free(cfg);
        check(s, "compose");
        for (int f = 0; f < 3; ++f) {
            const std::string bytes = slurp(std::filesystem::path(out) / names[f]);
            if (bytes.empty()) return {false, std::string(names[f]) + " missing or empty"};
            if (run == 0) {
                first[f] = bytes;
            } else if (bytes != first[f]) {
                return {false, std::string(names[f]) + " differs between runs"};
            }
        }
    }
    return {true, fmt("two C-API compose runs: trace.csv (%zu B), latent.lcb (%zu B), preview.pgm (%zu B) identical",
                      first[0].size(), first[1].size(), first[2].size())};
}

}  // namespace

int main() {
    SampleResult reference_run;
    criterion(1, "gradient fidelity", gradient_fidelity);
    criterion(2, "hard isolation", hard_isolation);
    criterion(3, "neutrality", neutrality);
    criterion(4, "guidance efficacy", [&] { return guidance_efficacy(reference_run); });
    criterion(5, "crop oracle", crop_oracle);
    criterion(6, "standardization", [&] { return standardization(reference_run); });
    criterion(7, "loss arithmetic", loss_arithmetic);
    criterion(8, "rank bound", rank_bound);
    criterion(9, "schedule and stopping", schedule_and_stop);
    criterion(10, "determinism", determinism);
    std::printf("%d of 10 criteria failed\n", failures);
    return failures == 0 ? 0 : 1;
}

// Copyright (C) 2026 The conceptmix Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <fstream>
#include <functional>
#include <sstream>

#include "conceptmix/denoiser.hpp"
#include "conceptmix/error.hpp"
#include "conceptmix/rng.hpp"
#include "conceptmix/sampler.hpp"
#include "conceptmix/tensor_file.hpp"
#include "fixtures.hpp"

using namespace cmix;
using cmix::testing::TempDir;
using cmix::testing::toy_setup;
using cmix::testing::uniform_tensor;

namespace {

ErrorCode code_of(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    return ErrorCode::Internal;
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

// Single region whose bundle is the global prompt with zero-scale deltas.
RunInputs neutral_single_region(RunInputs in) {
    const RegionSpec keep = in.layout.regions.front();
    ConceptBundle b = in.bundles.at(keep.concept_id);
    b.prompt_embed = in.layout.global_prompt_embed;
    for (auto& [name, d] : b.deltas) d.scale = 0.0;
    in.layout.regions = {keep};
    in.bundles.clear();
    in.bundles.emplace(keep.concept_id, b);
    return in;
}

}  // namespace

TEST_SUITE("sampler-pipeline") {

TEST_CASE("schedule") {
    SamplerSchedule s;
    CHECK(s.alpha_bar(0) == 0.999);
    CHECK(std::abs(s.alpha_bar(25) - 0.01) <= 1e-15);
    for (std::size_t t = 1; t <= 25; ++t) {
        CHECK(s.alpha_bar(t - 1) > s.alpha_bar(t));
        CHECK(s.alpha_bar(t) > 0.0);
        CHECK(s.alpha_bar(t) < 1.0);
    }
    CHECK(code_of([&] { s.alpha_bar(26); }) == ErrorCode::Argument);
    s.alpha_bar_T = 1.0;
    CHECK(code_of([&] { s.validate(); }) == ErrorCode::Config);
}

TEST_CASE("ddim step: formula, degenerate step and zero-noise closed form") {
    const Tensor z = uniform_tensor(1, {2, 3, 3});
    const Tensor eps = uniform_tensor(2, {2, 3, 3});
    const SamplerSchedule s;
    const double at = s.alpha_bar(12), ap = s.alpha_bar(11);
    const Tensor got = ddim_step(z, eps, 12, s);
    for (std::size_t i = 0; i < z.numel(); ++i) {
        const double x0 = (z[i] - std::sqrt(1.0 - at) * eps[i]) / std::sqrt(at);
        CHECK(std::abs(got[i] - (std::sqrt(ap) * x0 + std::sqrt(1.0 - ap) * eps[i])) <= 1e-12);
    }
    CHECK(ddim_update(z, eps, 0.4, 0.4) == z);
    CHECK(code_of([&] { ddim_step(z, eps, 0, s); }) == ErrorCode::Argument);

    Tensor x = z;
    const Tensor zero(z.shape(), 0.0);
    for (std::size_t t = s.steps; t >= 1; --t) x = ddim_step(x, zero, t, s);
    const double ratio = std::sqrt(0.999 / 0.01);
    for (std::size_t i = 0; i < z.numel(); ++i) CHECK(std::abs(x[i] - z[i] * ratio) <= 1e-12 * std::abs(z[i] * ratio));
}

TEST_CASE("timestep embedding") {
    const Tensor e = timestep_embedding(10, 25, 6);
    const double tau = 10.0 / 25.0;
    for (std::size_t i = 0; i < 3; ++i) {
        const double w = std::pow(10000.0, -2.0 * static_cast<double>(i) / 6.0);
        CHECK(std::abs(e[2 * i] - std::sin(tau * w)) <= 1e-15);
        CHECK(std::abs(e[2 * i + 1] - std::cos(tau * w)) <= 1e-15);
    }
}

TEST_CASE("denoiser: zero output layer, shapes, determinism and record") {
    auto s = toy_setup(5, true);
    BaseWeights w = s.inputs.weights;
    const Tensor z = NormalSampler(9).tensor({4, 8, 8});
    const ToyDenoiser model(w, s.inputs.layout, s.inputs.bundles, 25);
    CHECK(model.predict(z, 25) == model.predict(z, 25));

    Tape tape;
    const auto out = model.forward(tape, tape.leaf(z), 13);
    CHECK(out.epsilon.value().shape() == Shape{4, 8, 8});
    REQUIRE(out.record.layers.size() == 3);
    CHECK(out.record.loss_layers().size() == 2);
    CHECK(out.record.layers[2].height == 4);
    for (const auto& layer : out.record.layers) {
        CHECK(layer.cross.size() == 2);
        for (const auto& [id, map] : layer.cross)
            for (double v : map.value().data()) CHECK((v >= 0.0 && v <= 1.0));
    }

    for (double& v : w.w_out.data()) v = 0.0;
    for (double& v : w.b_out.data()) v = 0.0;
    const ToyDenoiser zeroed(w, s.inputs.layout, s.inputs.bundles, 25);
    for (double v : zeroed.predict(z, 7).data()) CHECK(v == 0.0);

    CHECK(code_of([&] { model.predict(NormalSampler(1).tensor({4, 8, 6}), 3); }) == ErrorCode::Config);
    CHECK(code_of([&] { model.predict(z, 26); }) == ErrorCode::Argument);
}

TEST_CASE("preview decoding and PGM encoding") {
    const Image flat = decode_preview(Tensor({3, 4, 5}, 0.7));
    CHECK(flat.width == 5);
    CHECK(flat.height == 4);
    for (auto p : flat.pixels) CHECK(p == 128);

    Tensor z({2, 16, 16}, 0.0);
    z.at(0, 3, 9) = 4.0;
    z.at(1, 10, 2) = -1.0;
    const Image img = decode_preview(z);
    CHECK(img.pixels.size() == 256);
    CHECK(img.pixels[3 * 16 + 9] == 255);
    CHECK(img.pixels[10 * 16 + 2] == 0);
    // Channel mean 0 sits at 0.5 / 2.5 of the range.
    CHECK(img.pixels[0] == static_cast<std::uint8_t>(std::lround(0.5 / 2.5 * 255.0)));

    const std::vector<std::uint8_t> pgm = encode_pgm(Image{2, 1, {7, 200}});
    const std::string head = "P5\n2 1\n255\n";
    REQUIRE(pgm.size() == head.size() + 2);
    CHECK(std::string(pgm.begin(), pgm.begin() + head.size()) == head);
    CHECK(pgm[head.size()] == 7);
    CHECK(pgm[head.size() + 1] == 200);
}

TEST_CASE("trace csv format") {
    const std::string csv = trace_csv({TraceRow{25, -1, 0.5, 0.25, 0.125, 0.6, 10.0, true},
                                       TraceRow{8, 3, 0.1, 0.2, 0.3, 0.39, 3.2, false}});
    CHECK(csv ==
          "timestep,iteration,l_ce,l_fill,l_region,total,phi_t,accepted\n"
          "25,-1,0.5,0.25,0.125,0.59999999999999998,10,1\n"
          "8,3,0.10000000000000001,0.20000000000000001,0.29999999999999999,0.39000000000000001,3.2000000000000002,0\n");
}

TEST_CASE("run config parsing") {
    const std::string good = R"({
        "seed": 7, "steps": 12,
        "latent": {"channels": 4, "height": 8, "width": 8},
        "guidance": {"alpha": 0.5, "phi0": 3, "max_iters": 2},
        "global_prompt_embed": "g.lcb",
        "regions": [{"box": [0, 0, 0.5, 1], "bundle": "sub/a.lcb"}],
        "output_dir": "/abs/out", "dump_attention": true
    })";
    const RunConfig c = parse_run_config(good, "/base");
    CHECK(c.seed == 7);
    CHECK(c.steps == 12);
    CHECK(c.dims.channels == 4);
    CHECK(c.dims.d_model == 32);
    CHECK(c.guidance.alpha == 0.5);
    CHECK(c.guidance.beta == 0.8);
    CHECK(c.guidance.phi0 == 3.0);
    CHECK(c.guidance.max_iters == 2);
    CHECK(c.global_prompt_embed == std::filesystem::path("/base/g.lcb"));
    CHECK(c.regions.at(0).bundle == std::filesystem::path("/base/sub/a.lcb"));
    CHECK(c.output_dir == std::filesystem::path("/abs/out"));
    CHECK(c.dump_attention);
    CHECK(c.latent_reinit);

    const RunConfig again = parse_run_config(run_config_to_json(c), "");
    CHECK(again.seed == c.seed);
    CHECK(again.regions.at(0).bundle == c.regions.at(0).bundle);
    CHECK(again.guidance.alpha == c.guidance.alpha);

    auto bad = [&](const std::string& from, const std::string& to) {
        std::string text = good;
        const auto pos = text.find(from);
        REQUIRE(pos != std::string::npos);
        text.replace(pos, from.size(), to);
        return code_of([&] { parse_run_config(text, "/base"); });
    };
    CHECK(bad("\"seed\": 7", "\"seed\": -7") == ErrorCode::Config);
    CHECK(bad("\"steps\": 12,", "") == ErrorCode::Config);
    CHECK(bad("\"channels\": 4", "\"channels\": \"4\"") == ErrorCode::Config);
    CHECK(bad("\"height\": 8", "\"height\": 7") == ErrorCode::Config);
    CHECK(bad("[0, 0, 0.5, 1]", "[0.5, 0, 0.5, 1]") == ErrorCode::Config);
    CHECK(bad("[0, 0, 0.5, 1]", "[0, 0, 1]") == ErrorCode::Config);
    CHECK(bad("\"alpha\": 0.5", "\"alpha\": -1") == ErrorCode::Config);
    CHECK(bad("\"dump_attention\": true", "\"dump_attention\": 1") == ErrorCode::Config);
    CHECK(code_of([] { parse_run_config("{not json", ""); }) == ErrorCode::Config);
    CHECK(code_of([] { load_run_config("/nonexistent/config.json"); }) == ErrorCode::Io);
}

TEST_CASE("run inputs: duplicate concept ids and dimension checks") {
    auto s = toy_setup(2, true);
    RunConfig dup = s.config;
    dup.regions[1].bundle = dup.regions[0].bundle;
    CHECK(code_of([&] { load_run_inputs(dup); }) == ErrorCode::Config);

    RunConfig wide = s.config;
    wide.dims.d_model = 16;  // bundles target d_model = 32
    CHECK(code_of([&] { run_sampler(wide, load_run_inputs(wide)); }) == ErrorCode::Validation);
}

TEST_CASE("empty layout runs as a plain sampler") {
    auto s = toy_setup(4, true);
    s.config.steps = 10;
    s.inputs.layout.regions.clear();
    s.inputs.bundles.clear();
    const SampleResult r = run_sampler(s.config, s.inputs);
    CHECK(r.trace.empty());
    CHECK(r.guided.empty());
    CHECK(r.final_latent.all_finite());
}

TEST_CASE("guidance neutrality reproduces the plain sampler bit-exactly") {
    auto s = toy_setup(42);
    s.config.guidance.guidance_fraction = 0.0;
    s.config.latent_reinit = false;
    RunInputs plain = s.inputs;
    plain.layout.regions.clear();
    plain.bundles.clear();
    const SampleResult a = run_sampler(s.config, neutral_single_region(s.inputs));
    const SampleResult b = run_sampler(s.config, plain);
    CHECK(a.trace.empty());
    CHECK(a.final_latent == b.final_latent);
}

TEST_CASE("trace rows reconstruct their totals") {
    auto s = toy_setup(8, true);
    s.config.steps = 10;
    const SampleResult r = run_sampler(s.config, s.inputs);
    REQUIRE(!r.trace.empty());
    CHECK(r.trace.front().iteration == -1);
    long guided_rows = 0;
    for (const auto& row : r.trace) {
        CHECK(std::abs(row.total - (row.l_ce + s.config.guidance.alpha * row.l_fill +
                                    s.config.guidance.beta * row.l_region)) <= 1e-12);
        if (row.iteration == 0) ++guided_rows;
        CHECK(row.phi_t == step_size(static_cast<std::size_t>(row.timestep), 10, s.config.guidance.phi0));
    }
    CHECK(guided_rows == 7);  // t = 10..4
    CHECK(r.guided.size() == 7);
}

TEST_CASE("compose writes deterministic artifacts") {
    auto s = toy_setup(11, true);
    s.config.steps = 8;
    s.config.dump_attention = true;
    TempDir a("compose-a"), b("compose-b");
    RunConfig ca = s.config, cb = s.config;
    ca.output_dir = a.path();
    cb.output_dir = b.path();
    const SampleResult ra = compose(ca);
    compose(cb);
    for (const char* f : {"trace.csv", "latent.lcb", "preview.pgm", "attention.lcb"}) {
        CAPTURE(f);
        REQUIRE(std::filesystem::exists(a.path() / f));
        CHECK(slurp(a.path() / f) == slurp(b.path() / f));
    }
    const TensorFile latent = read_tensor_file(a.path() / "latent.lcb");
    REQUIRE(latent.entries().size() == 1);
    CHECK(latent.entries()[0].name == "latent");
    CHECK(latent.get("latent").shape() == Shape{4, 8, 8});
    CHECK(max_abs_diff(latent.get("latent"), ra.final_latent) <= 1e-5 * (1.0 + 10.0));
    CHECK(slurp(a.path() / "preview.pgm").substr(0, 11) == "P5\n8 8\n255\n");
    const TensorFile attn = read_tensor_file(a.path() / "attention.lcb");
    CHECK(attn.find("L0.cross.concept_a") != nullptr);
    CHECK(attn.find("L2.self") != nullptr);
}

TEST_CASE("a numeric failure keeps the rows produced before it") {
    // Layer norm keeps guidance finite even for absurd step sizes, so the
    // fault is planted in the output head: eps ~ 1e308 overflows the first
    // DDIM step after timestep T has been guided.
    auto s = toy_setup(12, true);
    for (double& v : s.inputs.weights.b_out.data()) v = 1e308;
    std::vector<TraceRow> trace;
    CHECK(code_of([&] { run_sampler(s.config, s.inputs, trace); }) == ErrorCode::Numeric);
    REQUIRE(trace.size() >= 2);
    CHECK(trace.front().iteration == -1);
    CHECK(trace[1].timestep == 25);
    CHECK(trace[1].iteration == 0);
    for (const auto& row : trace) CHECK(row.timestep == 25);
}

}  // TEST_SUITE

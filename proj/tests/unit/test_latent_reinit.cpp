// Copyright (C) 2026 The conceptmix Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <functional>
#include <random>

#include "conceptmix/denoiser.hpp"
#include "conceptmix/error.hpp"
#include "conceptmix/latent_reinit.hpp"
#include "conceptmix/rng.hpp"
#include "fixtures.hpp"

using namespace cmix;
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

struct Brute {
    std::size_t row = 0, col = 0;
    double score = 0.0;
};

// Every window summed directly; strict '>' keeps the first (row, col) on ties.
Brute brute_force_crop(const Tensor& a, std::size_t ew, std::size_t eh) {
    Brute best;
    bool any = false;
    for (std::size_t i = 0; i + eh <= a.dim(0); ++i)
        for (std::size_t j = 0; j + ew <= a.dim(1); ++j) {
            double s = 0.0;
            for (std::size_t di = 0; di < eh; ++di)
                for (std::size_t dj = 0; dj < ew; ++dj) s += a.at(i + di, j + dj);
            if (!any || s > best.score) best = Brute{i, j, s}, any = true;
        }
    return best;
}

void check_moments(const Tensor& z) {
    const std::size_t n = z.dim(1) * z.dim(2);
    for (std::size_t c = 0; c < z.dim(0); ++c) {
        double mu = 0.0, var = 0.0;
        for (std::size_t p = 0; p < n; ++p) mu += z[c * n + p];
        mu /= static_cast<double>(n);
        for (std::size_t p = 0; p < n; ++p) var += (z[c * n + p] - mu) * (z[c * n + p] - mu);
        CHECK(std::abs(mu) < 1e-9);
        CHECK(std::abs(std::sqrt(var / static_cast<double>(n)) - 1.0) < 1e-9);
    }
}

}  // namespace

TEST_SUITE("latent-reinit") {

TEST_CASE("best crop: spike, ties and bounds") {
    Tensor spike({6, 6}, 0.0);
    spike.at(2, 3) = 1.0;
    const CropResult r = best_crop(spike, {1, 1});
    CHECK(r.row == 2);
    CHECK(r.col == 3);
    CHECK(r.score == 1.0);

    const CropResult c = best_crop(Tensor({5, 7}, 0.3), {3, 2});
    CHECK(c.row == 0);
    CHECK(c.col == 0);

    CHECK(code_of([&] { best_crop(spike, {7, 1}); }) == ErrorCode::Argument);
    CHECK(code_of([&] { best_crop(spike, {1, 0}); }) == ErrorCode::Argument);
}

TEST_CASE("best crop equals the brute-force oracle on 200 random maps") {
    std::mt19937_64 rng(2026);
    std::uniform_int_distribution<std::size_t> ext(1, 16);
    std::size_t mismatches = 0;
    for (int trial = 0; trial < 200; ++trial) {
        Tensor map = uniform_tensor(5000 + trial, {16, 16}, 0.0, 1.0);
        if (trial % 10 == 0) {
            // Quantized maps force exact ties between windows.
            for (double& v : map.data()) v = std::floor(v * 3.0) / 4.0;
        }
        const std::size_t ew = ext(rng), eh = ext(rng);
        const CropResult got = best_crop(map, {ew, eh});
        const Brute want = brute_force_crop(map, ew, eh);
        if (got.row != want.row || got.col != want.col || got.score != want.score) ++mismatches;
        CHECK(got.row + eh <= 16);
        CHECK(got.col + ew <= 16);
    }
    CHECK(mismatches == 0);
}

TEST_CASE("transplant") {
    const Tensor z = uniform_tensor(1, {3, 8, 8});
    const PixelBox box{2, 3, 2, 4};
    CropResult self{"a", 2, 3, {4, 2}, 0.0};
    CHECK(transplant(z, {self}, {box}) == z);

    CropResult moved{"a", 5, 0, {4, 2}, 0.0};
    const Tensor one = transplant(z, {moved}, {box});
    for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t i = 0; i < 8; ++i)
            for (std::size_t j = 0; j < 8; ++j) {
                const bool in = i >= 2 && i < 4 && j >= 3 && j < 7;
                CHECK(one.at(c, i, j) == (in ? z.at(c, 5 + i - 2, j - 3) : z.at(c, i, j)));
            }

    CHECK(code_of([&] { transplant(z, {CropResult{"a", 0, 0, {3, 2}, 0.0}}, {box}); }) == ErrorCode::Argument);
}

TEST_CASE("transplant reads every source from a snapshot") {
    const Tensor z = uniform_tensor(2, {2, 8, 8});
    // Each crop lies inside the other concept's target box; a later target
    // also overlaps an earlier one.
    const std::vector<PixelBox> targets{{0, 0, 3, 3}, {2, 2, 3, 3}};
    const std::vector<CropResult> crops{{"a", 2, 2, {3, 3}, 0.0}, {"b", 0, 0, {3, 3}, 0.0}};
    const Tensor got = transplant(z, crops, targets);

    // Two passes: gather all patches from the original first, then write in order.
    std::vector<std::vector<double>> patches;
    for (const auto& c : crops) {
        std::vector<double> p;
        for (std::size_t ch = 0; ch < 2; ++ch)
            for (std::size_t i = 0; i < 3; ++i)
                for (std::size_t j = 0; j < 3; ++j) p.push_back(z.at(ch, c.row + i, c.col + j));
        patches.push_back(p);
    }
    Tensor want = z;
    for (std::size_t n = 0; n < 2; ++n) {
        std::size_t k = 0;
        for (std::size_t ch = 0; ch < 2; ++ch)
            for (std::size_t i = 0; i < 3; ++i)
                for (std::size_t j = 0; j < 3; ++j) want.at(ch, targets[n].row0 + i, targets[n].col0 + j) = patches[n][k++];
    }
    CHECK(got == want);
    // Pixels outside both targets are untouched.
    CHECK(got.at(0, 7, 7) == z.at(0, 7, 7));
    CHECK(got.at(1, 0, 5) == z.at(1, 0, 5));
}

TEST_CASE("standardize") {
    const Tensor z = NormalSampler(3).tensor({4, 16, 16}, 2.5);
    Tensor shifted = z;
    for (double& v : shifted.data()) v += 7.0;
    const Tensor s = standardize(shifted);
    check_moments(s);
    CHECK(max_abs_diff(standardize(s), s) <= 1e-12);

    Tensor flat = z;
    for (std::size_t p = 0; p < 256; ++p) flat[256 + p] = 0.5;  // channel 1 constant
    CHECK(code_of([&] { standardize(flat); }) == ErrorCode::DegenerateLatent);
}

TEST_CASE("reinitialize with zero concepts only standardizes") {
    const Tensor noise = NormalSampler(4).tensor({4, 8, 8});
    LayoutMasks empty;
    empty.height = empty.width = 8;
    auto never = [](Tape&, Var) -> ConstraintLoss { throw Error(ErrorCode::Internal, "objective must not run"); };
    auto no_maps = [](const Tensor&) -> std::vector<Tensor> { throw Error(ErrorCode::Internal, "maps must not run"); };
    const ReinitResult r = reinitialize_latent(noise, 25, GuidanceConfig{}, empty, never, no_maps);
    CHECK(r.z == standardize(noise));
    CHECK(r.crops.empty());
    CHECK(r.rows.empty());
}

TEST_CASE("reinitialize on the toy model: determinism, moments and in-box mass") {
    auto s = toy_setup(42);
    const ToyDenoiser model(s.inputs.weights, s.inputs.layout, s.inputs.bundles, 25);
    const GuidanceConfig cfg;
    const Tensor noise = NormalSampler(derive_seed(42, "latent/noise")).tensor({8, 16, 16});
    auto maps = [&](const Tensor& z) { return model.concept_maps(z, 25); };
    const ReinitResult a = reinitialize_latent(noise, 25, cfg, model.loss_masks(), model.objective(25, cfg), maps);
    const ReinitResult b = reinitialize_latent(noise, 25, cfg, model.loss_masks(), model.objective(25, cfg), maps);
    CHECK(a.z == b.z);
    check_moments(a.z);
    REQUIRE(a.crops.size() == 2);
    REQUIRE(a.rows.size() == 1);
    CHECK(a.rows[0].iteration == -1);
    for (std::size_t n = 0; n < 2; ++n) {
        const PixelBox& box = model.loss_masks().regions[n].bounds;
        CHECK(a.crops[n].extent.width == box.cols);
        CHECK(a.crops[n].extent.height == box.rows);
    }

    auto inbox = [&](const Tensor& z) {
        Tape tape;
        const auto out = model.forward(tape, tape.leaf(z), 25);
        return inbox_mass_fraction(out.record, model.loss_masks());
    };
    const auto pre = inbox(noise);
    const auto post = inbox(a.z);
    for (std::size_t n = 0; n < 2; ++n) {
        CAPTURE(n);
        CAPTURE(pre[n]);
        CAPTURE(post[n]);
        CHECK(post[n] >= pre[n]);
    }
}

}  // TEST_SUITE

// Copyright (C) 2026 The conceptmix Authors
// SPDX-License-Identifier: Apache-2.0

// Shared helpers for the unit and acceptance tests.

#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>

#include <unistd.h>

#include "conceptmix/tensor.hpp"

namespace cmix::testing {

/// Uniform entries in [lo, hi) from a dedicated engine.
inline Tensor uniform_tensor(std::uint64_t seed, Shape shape, double lo = -2.0, double hi = 2.0) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> dist(lo, hi);
    Tensor t(std::move(shape));
    for (double& v : t.data()) v = dist(rng);
    return t;
}

/// max_i |a_i - n_i| / max(|a_i|, |n_i|, floor * max_j |a_j|). The floor keeps
/// near-zero components, where central differences are roundoff-bound, from
/// dominating; the library's gradcheck uses the same definition.
inline double max_relative_error(const Tensor& analytic, const Tensor& numeric, double floor = 1e-3) {
    double scale = 0.0;
    for (double v : analytic.data()) scale = std::max(scale, std::abs(v));
    double worst = 0.0;
    for (std::size_t i = 0; i < analytic.numel(); ++i) {
        const double a = analytic[i], n = numeric[i];
        const double denom = std::max({std::abs(a), std::abs(n), floor * scale});
        if (denom > 0.0) worst = std::max(worst, std::abs(a - n) / denom);
    }
    return worst;
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        static std::atomic<int> counter{0};
        path_ = std::filesystem::temp_directory_path() /
                ("cmix-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
};

}  // namespace cmix::testing

// Copyright (C) 2026 The conceptmix Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <random>
#include <string_view>

#include "conceptmix/tensor.hpp"

namespace cmix {

// Mixes a named stream into a seed so that every generated tensor has its own
// reproducible source.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view stream);

// Standard normal draws from mt19937_64 via Box-Muller. The engine is fully
// specified by the standard and the transform is ours, so streams do not
// depend on the library's distribution implementations.
class NormalSampler {
public:
    explicit NormalSampler(std::uint64_t seed) : engine_(seed) {}

    double uniform();  // in (0, 1)
    double next();
    Tensor tensor(const Shape& shape, double stddev = 1.0);

private:
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace cmix

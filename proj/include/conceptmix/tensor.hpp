// Copyright (C) 2026 The conceptmix Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace cmix {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_to_string(const Shape& shape);

/// Dense row-major array of doubles. Every extent is positive; a scalar has
/// shape {1}.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape, double fill = 0.0);
    Tensor(Shape shape, std::vector<double> data);

    static Tensor scalar(double value);
    static Tensor vector(std::initializer_list<double> values);
    static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows);

    const Shape& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
    std::size_t numel() const noexcept { return data_.size(); }
    bool empty() const noexcept { return shape_.empty(); }

    std::span<const double> data() const noexcept { return data_; }
    std::span<double> data() noexcept { return data_; }

    double operator[](std::size_t i) const { return data_[i]; }
    double& operator[](std::size_t i) { return data_[i]; }

    // 2-D access; the tensor must have rank 2.
    double at(std::size_t row, std::size_t col) const { return data_[row * shape_[1] + col]; }
    double& at(std::size_t row, std::size_t col) { return data_[row * shape_[1] + col]; }

    // 3-D access (channel, row, col).
    double at(std::size_t c, std::size_t row, std::size_t col) const {
        return data_[(c * shape_[1] + row) * shape_[2] + col];
    }
    double& at(std::size_t c, std::size_t row, std::size_t col) {
        return data_[(c * shape_[1] + row) * shape_[2] + col];
    }

    double item() const;
    Tensor reshaped(Shape shape) const;
    bool all_finite() const noexcept;

    // Bitwise equality of shape and payload.
    friend bool operator==(const Tensor& a, const Tensor& b);

private:
    Shape shape_;
    std::vector<double> data_;
};

double max_abs_diff(const Tensor& a, const Tensor& b);

enum class Axis {
    Rows,  // reduce over rows: result has one entry per column
    Cols,  // reduce over columns: result has one entry per row
};

/// Dense kernels shared by the tape and by tape-free callers. All of them
/// validate shapes and throw cmix::Error(Dimension) on mismatch.
namespace kernels {

Tensor matmul(const Tensor& a, const Tensor& b);
// a * b^T, the layout used by every projection x * W^T.
Tensor matmul_nt(const Tensor& a, const Tensor& b);
// a^T * b
Tensor matmul_tn(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
void add_inplace(Tensor& acc, const Tensor& b);

// Row-wise softmax with max subtraction. `permitted`, when non-empty, holds
// one byte per entry; zero entries behave as -inf logits and come out as 0.
Tensor softmax_rows(const Tensor& x, std::span<const std::uint8_t> permitted = {});

// Indices of the k largest entries, ordered by (value desc, index asc).
std::vector<std::size_t> topk_indices(const Tensor& x, std::size_t k);
double topk_mean(const Tensor& x, std::size_t k);

// Max over one axis of a 2-D tensor; `argmax` (optional) receives the flat
// index of the selected element, first index on ties.
Tensor axis_max_project(const Tensor& x, Axis axis, std::vector<std::size_t>* argmax = nullptr);

}  // namespace kernels

}  // namespace cmix

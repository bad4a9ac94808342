// Copyright (C) 2026 The conceptmix Authors
// SPDX-License-Identifier: Apache-2.0

#include "conceptmix/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <numeric>
#include <sstream>

#include "conceptmix/error.hpp"

namespace cmix {

std::size_t shape_numel(const Shape& shape) {
    std::size_t n = 1;
    for (std::size_t e : shape) {
        n *= e;
    }
    return n;
}

std::string shape_to_string(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        os << (i ? "x" : "") << shape[i];
    }
    os << ']';
    return os.str();
}

namespace {

void check_shape(const Shape& shape) {
    require(!shape.empty(), ErrorCode::Dimension, "tensor shape must have at least one extent");
    for (std::size_t e : shape) {
        require(e > 0, ErrorCode::Dimension, "tensor extents must be positive, got " + shape_to_string(shape));
    }
}

void require_rank2(const Tensor& t, const char* what) {
    require(t.rank() == 2, ErrorCode::Dimension,
            std::string(what) + " expects a 2-D tensor, got " + shape_to_string(t.shape()));
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
    require(a.shape() == b.shape(), ErrorCode::Dimension,
            std::string(what) + ": shape mismatch " + shape_to_string(a.shape()) + " vs " +
                shape_to_string(b.shape()));
}

}  // namespace

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)) {
    check_shape(shape_);
    data_.assign(shape_numel(shape_), fill);
}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
    check_shape(shape_);
    require(shape_numel(shape_) == data_.size(), ErrorCode::Dimension,
            "payload length " + std::to_string(data_.size()) + " does not match shape " + shape_to_string(shape_));
}

Tensor Tensor::scalar(double value) { return Tensor({1}, std::vector<double>{value}); }

Tensor Tensor::vector(std::initializer_list<double> values) {
    return Tensor({values.size()}, std::vector<double>(values));
}

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows) {
    const std::size_t m = rows.size();
    const std::size_t n = m ? rows.begin()->size() : 0;
    std::vector<double> data;
    data.reserve(m * n);
    for (const auto& row : rows) {
        require(row.size() == n, ErrorCode::Dimension, "ragged matrix literal");
        data.insert(data.end(), row.begin(), row.end());
    }
    return Tensor({m, n}, std::move(data));
}

double Tensor::item() const {
    require(data_.size() == 1, ErrorCode::Dimension, "item() needs a one-element tensor, got " + shape_to_string(shape_));
    return data_[0];
}

Tensor Tensor::reshaped(Shape shape) const {
    require(shape_numel(shape) == data_.size(), ErrorCode::Dimension,
            "cannot reshape " + shape_to_string(shape_) + " to " + shape_to_string(shape));
    return Tensor(std::move(shape), data_);
}

bool Tensor::all_finite() const noexcept {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_.size() == b.data_.size() &&
           (a.data_.empty() || std::memcmp(a.data_.data(), b.data_.data(), a.data_.size() * sizeof(double)) == 0);
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "max_abs_diff");
    double m = 0.0;
    for (std::size_t i = 0; i < a.numel(); ++i) {
        m = std::max(m, std::abs(a[i] - b[i]));
    }
    return m;
}

namespace kernels {

Tensor matmul(const Tensor& a, const Tensor& b) {
    require_rank2(a, "matmul");
    require_rank2(b, "matmul");
    const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    require(b.dim(0) == k, ErrorCode::Dimension,
            "matmul inner extents differ: " + shape_to_string(a.shape()) + " x " + shape_to_string(b.shape()));
    Tensor c({m, n});
    auto cd = c.data();
    auto ad = a.data();
    auto bd = b.data();
    for (std::size_t i = 0; i < m; ++i) {
        double* crow = cd.data() + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const double av = ad[i * k + p];
            const double* brow = bd.data() + p * n;
            for (std::size_t j = 0; j < n; ++j) {
                crow[j] += av * brow[j];
            }
        }
    }
    return c;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
    require_rank2(a, "matmul_nt");
    require_rank2(b, "matmul_nt");
    const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(0);
    require(b.dim(1) == k, ErrorCode::Dimension,
            "matmul_nt inner extents differ: " + shape_to_string(a.shape()) + " x " + shape_to_string(b.shape()) + "^T");
    Tensor c({m, n});
    auto cd = c.data();
    auto ad = a.data();
    auto bd = b.data();
    for (std::size_t i = 0; i < m; ++i) {
        const double* arow = ad.data() + i * k;
        for (std::size_t j = 0; j < n; ++j) {
            const double* brow = bd.data() + j * k;
            double s = 0.0;
            for (std::size_t p = 0; p < k; ++p) {
                s += arow[p] * brow[p];
            }
            cd[i * n + j] = s;
        }
    }
    return c;
}

Tensor matmul_tn(const Tensor& a, const Tensor& b) {
    require_rank2(a, "matmul_tn");
    require_rank2(b, "matmul_tn");
    const std::size_t k = a.dim(0), m = a.dim(1), n = b.dim(1);
    require(b.dim(0) == k, ErrorCode::Dimension,
            "matmul_tn inner extents differ: " + shape_to_string(a.shape()) + "^T x " + shape_to_string(b.shape()));
    Tensor c({m, n});
    auto cd = c.data();
    auto ad = a.data();
    auto bd = b.data();
    for (std::size_t p = 0; p < k; ++p) {
        const double* brow = bd.data() + p * n;
        for (std::size_t i = 0; i < m; ++i) {
            const double av = ad[p * m + i];
            double* crow = cd.data() + i * n;
            for (std::size_t j = 0; j < n; ++j) {
                crow[j] += av * brow[j];
            }
        }
    }
    return c;
}

Tensor transpose(const Tensor& a) {
    require_rank2(a, "transpose");
    const std::size_t m = a.dim(0), n = a.dim(1);
    Tensor t({n, m});
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            t.at(j, i) = a.at(i, j);
        }
    }
    return t;
}

Tensor add(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "add");
    Tensor c = a;
    for (std::size_t i = 0; i < c.numel(); ++i) {
        c[i] += b[i];
    }
    return c;
}

Tensor sub(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "sub");
    Tensor c = a;
    for (std::size_t i = 0; i < c.numel(); ++i) {
        c[i] -= b[i];
    }
    return c;
}

Tensor mul(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "mul");
    Tensor c = a;
    for (std::size_t i = 0; i < c.numel(); ++i) {
        c[i] *= b[i];
    }
    return c;
}

Tensor scale(const Tensor& a, double s) {
    Tensor c = a;
    for (double& v : c.data()) {
        v *= s;
    }
    return c;
}

void add_inplace(Tensor& acc, const Tensor& b) {
    require_same_shape(acc, b, "add_inplace");
    for (std::size_t i = 0; i < acc.numel(); ++i) {
        acc[i] += b[i];
    }
}

Tensor softmax_rows(const Tensor& x, std::span<const std::uint8_t> permitted) {
    require_rank2(x, "softmax_rows");
    const std::size_t m = x.dim(0), n = x.dim(1);
    require(permitted.empty() || permitted.size() == m * n, ErrorCode::Dimension,
            "softmax_rows permitted mask has wrong length");
    const bool masked = !permitted.empty();
    Tensor y({m, n});
    for (std::size_t i = 0; i < m; ++i) {
        const double* xr = x.data().data() + i * n;
        double* yr = y.data().data() + i * n;
        const std::uint8_t* pr = masked ? permitted.data() + i * n : nullptr;
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < n; ++j) {
            if (!pr || pr[j]) {
                mx = std::max(mx, xr[j]);
            }
        }
        require(std::isfinite(mx), ErrorCode::Internal, "softmax row " + std::to_string(i) + " has no permitted entry");
        double sum = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            if (!pr || pr[j]) {
                yr[j] = std::exp(xr[j] - mx);
                sum += yr[j];
            }
        }
        const double inv = 1.0 / sum;
        for (std::size_t j = 0; j < n; ++j) {
            yr[j] *= inv;
        }
    }
    return y;
}

std::vector<std::size_t> topk_indices(const Tensor& x, std::size_t k) {
    require(k >= 1 && k <= x.numel(), ErrorCode::Argument,
            "topk: k=" + std::to_string(k) + " outside [1, " + std::to_string(x.numel()) + "]");
    std::vector<std::size_t> idx(x.numel());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    auto d = x.data();
    auto before = [&](std::size_t a, std::size_t b) { return d[a] > d[b] || (d[a] == d[b] && a < b); };
    std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(), before);
    idx.resize(k);
    return idx;
}

double topk_mean(const Tensor& x, std::size_t k) {
    double s = 0.0;
    for (std::size_t i : topk_indices(x, k)) {
        s += x[i];
    }
    return s / static_cast<double>(k);
}

Tensor axis_max_project(const Tensor& x, Axis axis, std::vector<std::size_t>* argmax) {
    require_rank2(x, "axis_max_project");
    const std::size_t h = x.dim(0), w = x.dim(1);
    const std::size_t out_len = axis == Axis::Rows ? w : h;
    Tensor y({out_len});
    if (argmax) {
        argmax->assign(out_len, 0);
    }
    for (std::size_t o = 0; o < out_len; ++o) {
        const std::size_t inner = axis == Axis::Rows ? h : w;
        std::size_t best = axis == Axis::Rows ? o : o * w;
        for (std::size_t q = 1; q < inner; ++q) {
            const std::size_t flat = axis == Axis::Rows ? q * w + o : o * w + q;
            if (x[flat] > x[best]) {
                best = flat;
            }
        }
        y[o] = x[best];
        if (argmax) {
            (*argmax)[o] = best;
        }
    }
    return y;
}

}  // namespace kernels

}  // namespace cmix

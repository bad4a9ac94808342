// Copyright (C) 2026 The conceptmix Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <utility>
#include <vector>

#include "conceptmix/tensor.hpp"

namespace cmix {

class Tape;

/// Handle to a node on a Tape. Cheap to copy; valid as long as the tape.
class Var {
public:
    Var() = default;

    Tape* tape() const noexcept { return tape_; }
    std::size_t id() const noexcept { return id_; }
    bool valid() const noexcept { return tape_ != nullptr; }
    const Tensor& value() const;
    const Shape& shape() const { return value().shape(); }

private:
    friend class Tape;
    Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

    Tape* tape_ = nullptr;
    std::size_t id_ = 0;
};

enum class OpKind {
    Leaf,
    Matmul,
    MatmulNT,
    Transpose,
    Add,
    Sub,
    Mul,
    Scale,
    AddScalar,
    AddRowBias,
    ScaleRows,
    Softmax,
    TopkMean,
    AxisMax,
    Sum,
    Select,
    SliceCols,
    ConcatCols,
    Concat,
    Reshape,
    LayerNorm,
    AvgPool,
    Upsample,
    ComposeHidden,
};

const char* op_name(OpKind op);

class BackwardContext;
using BackwardFn = std::function<void(BackwardContext&)>;

/// Append-only record of a computation. Nodes are stored in creation order,
/// which is a topological order, so the graph is acyclic by construction.
/// A tape is confined to one thread and one guidance iteration.
class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Var leaf(Tensor value);
    const Tensor& value(Var v) const;
    OpKind op(Var v) const;
    std::size_t size() const noexcept { return nodes_.size(); }

    // Appends an op node. Rejects non-finite outputs with a numeric error.
    Var record(OpKind op, std::vector<Var> inputs, Tensor value, BackwardFn backward);

    /// Exact reverse-mode gradient of the scalar `root` with respect to `wrt`.
    /// Returns zeros when root does not depend on wrt.
    Tensor gradient(Var root, Var wrt) const;

private:
    friend class BackwardContext;
    struct Node {
        OpKind op;
        std::vector<std::size_t> inputs;
        Tensor value;
        BackwardFn backward;
    };
    void check_owned(Var v, const char* what) const;

    std::vector<Node> nodes_;
};

class BackwardContext {
public:
    const Tensor& grad_output() const { return grad_out_; }
    const Tensor& output() const;
    const Tensor& input(std::size_t i) const;
    bool needs(std::size_t i) const;
    void accumulate(std::size_t i, Tensor g);

private:
    friend class Tape;
    BackwardContext(const Tape& tape, std::size_t node, const Tensor& grad_out, std::vector<Tensor>& adjoints,
                    const std::vector<std::uint8_t>& live)
        : tape_(tape), node_(node), grad_out_(grad_out), adjoints_(adjoints), live_(live) {}

    const Tape& tape_;
    std::size_t node_;
    const Tensor& grad_out_;
    std::vector<Tensor>& adjoints_;
    const std::vector<std::uint8_t>& live_;
};

Tensor grad(Var root, Var wrt);

/// Central differences (f(x + eps e_i) - f(x - eps e_i)) / 2 eps per element.
Tensor finite_difference_gradient(const std::function<double(const Tensor&)>& f, const Tensor& x, double eps);

/// Differentiable ops. Inputs must share one tape.
namespace ad {

Var matmul(Var a, Var b);
Var matmul_nt(Var a, Var b);
Var transpose(Var a);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double s);
Var add_scalar(Var a, double s);
// x[m x n] + b[n] broadcast over rows.
Var add_row_bias(Var x, Var bias);
// Row i of x[m x n] times weights[i]; weights are constants.
Var scale_rows(Var x, std::vector<double> weights);
Var softmax_rows(Var x, std::shared_ptr<const std::vector<std::uint8_t>> permitted = nullptr);
Var topk_mean(Var x, std::size_t k);
Var axis_max_project(Var x, Axis axis);
Var sum(Var x);
Var mean(Var x);
// Gathers x[rows[i], cols[j]] into a rows.size() x cols.size() matrix.
Var select(Var x, std::vector<std::size_t> rows, std::vector<std::size_t> cols);
// Gathers flat elements of x into a 1-D tensor.
Var gather(Var x, std::vector<std::size_t> flat_indices);
Var slice_cols(Var x, std::size_t begin, std::size_t end);
Var concat_cols(const std::vector<Var>& parts);
// Flattens and concatenates into one 1-D tensor.
Var concat(const std::vector<Var>& parts);
Var reshape(Var x, Shape shape);
Var add_n(const std::vector<Var>& terms);
Var layer_norm_rows(Var x, double eps = 1e-5);
// Feature maps are (h*w) x d with pixels in row-major order.
Var avg_pool2x2(Var x, std::size_t h, std::size_t w);
Var upsample2x(Var x, std::size_t h, std::size_t w);

struct MaskedHidden {
    std::vector<std::uint8_t> mask;  // one byte per pixel
    Var hidden;
};
/// Per pixel: base where no mask covers, otherwise the mean of covering values.
Var compose_hidden(Var base, const std::vector<MaskedHidden>& regional);

}  // namespace ad

}  // namespace cmix

// Copyright (C) 2026 The conceptmix Authors
// SPDX-License-Identifier: Apache-2.0

#include "conceptmix/autodiff.hpp"

#include <algorithm>
#include <cmath>

#include "conceptmix/error.hpp"

namespace cmix {

const char* op_name(OpKind op) {
    switch (op) {
    case OpKind::Leaf: return "leaf";
    case OpKind::Matmul: return "matmul";
    case OpKind::MatmulNT: return "matmul_nt";
    case OpKind::Transpose: return "transpose";
    case OpKind::Add: return "add";
    case OpKind::Sub: return "sub";
    case OpKind::Mul: return "mul";
    case OpKind::Scale: return "scale";
    case OpKind::AddScalar: return "add_scalar";
    case OpKind::AddRowBias: return "add_row_bias";
    case OpKind::ScaleRows: return "scale_rows";
    case OpKind::Softmax: return "softmax_rows";
    case OpKind::TopkMean: return "topk_mean";
    case OpKind::AxisMax: return "axis_max_project";
    case OpKind::Sum: return "sum";
    case OpKind::Select: return "select";
    case OpKind::SliceCols: return "slice_cols";
    case OpKind::ConcatCols: return "concat_cols";
    case OpKind::Concat: return "concat";
    case OpKind::Reshape: return "reshape";
    case OpKind::LayerNorm: return "layer_norm_rows";
    case OpKind::AvgPool: return "avg_pool2x2";
    case OpKind::Upsample: return "upsample2x";
    case OpKind::ComposeHidden: return "compose_hidden";
    }
    return "?";
}

const Tensor& Var::value() const {
    require(tape_ != nullptr, ErrorCode::Lineage, "use of an unbound variable");
    return tape_->value(*this);
}

void Tape::check_owned(Var v, const char* what) const {
    require(v.tape() == this && v.id() < nodes_.size(), ErrorCode::Lineage,
            std::string(what) + ": variable does not belong to this tape");
}

Var Tape::leaf(Tensor value) {
    require(value.all_finite(), ErrorCode::Numeric, "leaf tensor holds non-finite values");
    nodes_.push_back(Node{OpKind::Leaf, {}, std::move(value), nullptr});
    return Var(this, nodes_.size() - 1);
}

const Tensor& Tape::value(Var v) const {
    check_owned(v, "value");
    return nodes_[v.id()].value;
}

OpKind Tape::op(Var v) const {
    check_owned(v, "op");
    return nodes_[v.id()].op;
}

Var Tape::record(OpKind op, std::vector<Var> inputs, Tensor value, BackwardFn backward) {
    std::vector<std::size_t> ids;
    ids.reserve(inputs.size());
    for (Var in : inputs) {
        check_owned(in, op_name(op));
        ids.push_back(in.id());
    }
    require(value.all_finite(), ErrorCode::Numeric, std::string(op_name(op)) + " produced a non-finite value");
    nodes_.push_back(Node{op, std::move(ids), std::move(value), std::move(backward)});
    return Var(this, nodes_.size() - 1);
}

Tensor Tape::gradient(Var root, Var wrt) const {
    require(root.tape() == wrt.tape(), ErrorCode::Lineage, "grad: root and wrt live on different tapes");
    check_owned(root, "grad root");
    check_owned(wrt, "grad wrt");
    require(nodes_[root.id()].value.numel() == 1, ErrorCode::Dimension,
            "grad: root must be scalar, got " + shape_to_string(nodes_[root.id()].value.shape()));

    const std::size_t n = root.id() + 1;
    // live[i]: node i lies on a path from wrt, so its adjoint matters.
    std::vector<std::uint8_t> live(n, 0);
    if (wrt.id() < n) {
        live[wrt.id()] = 1;
        for (std::size_t i = wrt.id() + 1; i < n; ++i) {
            for (std::size_t in : nodes_[i].inputs) {
                if (live[in]) {
                    live[i] = 1;
                    break;
                }
            }
        }
    }
    if (wrt.id() >= n || !live[root.id()]) {
        return Tensor(nodes_[wrt.id()].value.shape(), 0.0);
    }

    std::vector<Tensor> adjoints(n);
    adjoints[root.id()] = Tensor(nodes_[root.id()].value.shape(), 1.0);
    for (std::size_t i = n; i-- > wrt.id() + 1;) {
        if (!live[i] || adjoints[i].empty()) {
            continue;
        }
        BackwardContext ctx(*this, i, adjoints[i], adjoints, live);
        nodes_[i].backward(ctx);
        adjoints[i] = Tensor();
    }
    if (adjoints[wrt.id()].empty()) {
        return Tensor(nodes_[wrt.id()].value.shape(), 0.0);
    }
    return std::move(adjoints[wrt.id()]);
}

const Tensor& BackwardContext::output() const { return tape_.nodes_[node_].value; }

const Tensor& BackwardContext::input(std::size_t i) const {
    return tape_.nodes_[tape_.nodes_[node_].inputs.at(i)].value;
}

bool BackwardContext::needs(std::size_t i) const { return live_[tape_.nodes_[node_].inputs.at(i)] != 0; }

void BackwardContext::accumulate(std::size_t i, Tensor g) {
    const std::size_t target = tape_.nodes_[node_].inputs.at(i);
    if (!live_[target]) {
        return;
    }
    Tensor& slot = adjoints_[target];
    if (slot.empty()) {
        slot = std::move(g);
    } else {
        kernels::add_inplace(slot, g);
    }
}

Tensor grad(Var root, Var wrt) {
    require(root.valid(), ErrorCode::Lineage, "grad: unbound root");
    return root.tape()->gradient(root, wrt);
}

Tensor finite_difference_gradient(const std::function<double(const Tensor&)>& f, const Tensor& x, double eps) {
    require(eps > 0.0, ErrorCode::Argument, "finite_difference_gradient: eps must be positive");
    Tensor g(x.shape(), 0.0);
    Tensor probe = x;
    for (std::size_t i = 0; i < x.numel(); ++i) {
        const double orig = x[i];
        probe[i] = orig + eps;
        const double fp = f(probe);
        probe[i] = orig - eps;
        const double fm = f(probe);
        probe[i] = orig;
        g[i] = (fp - fm) / (2.0 * eps);
    }
    return g;
}

namespace ad {

namespace {

Tape& tape_of(Var v) {
    require(v.valid(), ErrorCode::Lineage, "op applied to an unbound variable");
    return *v.tape();
}

void require_rank2(const Tensor& t, const char* what) {
    require(t.rank() == 2, ErrorCode::Dimension,
            std::string(what) + " expects a 2-D tensor, got " + shape_to_string(t.shape()));
}

}  // namespace

Var matmul(Var a, Var b) {
    Tensor out = kernels::matmul(a.value(), b.value());
    return tape_of(a).record(OpKind::Matmul, {a, b}, std::move(out), [](BackwardContext& c) {
        if (c.needs(0)) c.accumulate(0, kernels::matmul_nt(c.grad_output(), c.input(1)));
        if (c.needs(1)) c.accumulate(1, kernels::matmul_tn(c.input(0), c.grad_output()));
    });
}

Var matmul_nt(Var a, Var b) {
    Tensor out = kernels::matmul_nt(a.value(), b.value());
    return tape_of(a).record(OpKind::MatmulNT, {a, b}, std::move(out), [](BackwardContext& c) {
        if (c.needs(0)) c.accumulate(0, kernels::matmul(c.grad_output(), c.input(1)));
        if (c.needs(1)) c.accumulate(1, kernels::matmul_tn(c.grad_output(), c.input(0)));
    });
}

Var transpose(Var a) {
    Tensor out = kernels::transpose(a.value());
    return tape_of(a).record(OpKind::Transpose, {a}, std::move(out), [](BackwardContext& c) {
        c.accumulate(0, kernels::transpose(c.grad_output()));
    });
}

Var add(Var a, Var b) {
    Tensor out = kernels::add(a.value(), b.value());
    return tape_of(a).record(OpKind::Add, {a, b}, std::move(out), [](BackwardContext& c) {
        c.accumulate(0, c.grad_output());
        c.accumulate(1, c.grad_output());
    });
}

Var sub(Var a, Var b) {
    Tensor out = kernels::sub(a.value(), b.value());
    return tape_of(a).record(OpKind::Sub, {a, b}, std::move(out), [](BackwardContext& c) {
        c.accumulate(0, c.grad_output());
        if (c.needs(1)) c.accumulate(1, kernels::scale(c.grad_output(), -1.0));
    });
}

Var mul(Var a, Var b) {
    Tensor out = kernels::mul(a.value(), b.value());
    return tape_of(a).record(OpKind::Mul, {a, b}, std::move(out), [](BackwardContext& c) {
        if (c.needs(0)) c.accumulate(0, kernels::mul(c.grad_output(), c.input(1)));
        if (c.needs(1)) c.accumulate(1, kernels::mul(c.grad_output(), c.input(0)));
    });
}

Var scale(Var a, double s) {
    Tensor out = kernels::scale(a.value(), s);
    return tape_of(a).record(OpKind::Scale, {a}, std::move(out), [s](BackwardContext& c) {
        c.accumulate(0, kernels::scale(c.grad_output(), s));
    });
}

Var add_scalar(Var a, double s) {
    Tensor out = a.value();
    for (double& v : out.data()) {
        v += s;
    }
    return tape_of(a).record(OpKind::AddScalar, {a}, std::move(out),
                             [](BackwardContext& c) { c.accumulate(0, c.grad_output()); });
}

Var add_row_bias(Var x, Var bias) {
    const Tensor& xv = x.value();
    const Tensor& bv = bias.value();
    require_rank2(xv, "add_row_bias");
    const std::size_t m = xv.dim(0), n = xv.dim(1);
    require(bv.numel() == n, ErrorCode::Dimension,
            "add_row_bias: bias length " + std::to_string(bv.numel()) + " vs " + std::to_string(n) + " columns");
    Tensor out = xv;
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            out.at(i, j) += bv[j];
        }
    }
    return tape_of(x).record(OpKind::AddRowBias, {x, bias}, std::move(out), [m, n](BackwardContext& c) {
        c.accumulate(0, c.grad_output());
        if (c.needs(1)) {
            Tensor gb(c.input(1).shape(), 0.0);
            for (std::size_t i = 0; i < m; ++i) {
                for (std::size_t j = 0; j < n; ++j) {
                    gb[j] += c.grad_output().at(i, j);
                }
            }
            c.accumulate(1, std::move(gb));
        }
    });
}

Var scale_rows(Var x, std::vector<double> weights) {
    const Tensor& xv = x.value();
    require_rank2(xv, "scale_rows");
    const std::size_t m = xv.dim(0), n = xv.dim(1);
    require(weights.size() == m, ErrorCode::Dimension, "scale_rows: one weight per row required");
    Tensor out = xv;
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            out.at(i, j) *= weights[i];
        }
    }
    return tape_of(x).record(OpKind::ScaleRows, {x}, std::move(out),
                             [w = std::move(weights), m, n](BackwardContext& c) {
                                 Tensor g = c.grad_output();
                                 for (std::size_t i = 0; i < m; ++i) {
                                     for (std::size_t j = 0; j < n; ++j) {
                                         g.at(i, j) *= w[i];
                                     }
                                 }
                                 c.accumulate(0, std::move(g));
                             });
}

Var softmax_rows(Var x, std::shared_ptr<const std::vector<std::uint8_t>> permitted) {
    std::span<const std::uint8_t> mask;
    if (permitted) {
        mask = *permitted;
    }
    Tensor out = kernels::softmax_rows(x.value(), mask);
    return tape_of(x).record(OpKind::Softmax, {x}, std::move(out), [](BackwardContext& c) {
        const Tensor& y = c.output();
        const Tensor& gy = c.grad_output();
        const std::size_t m = y.dim(0), n = y.dim(1);
        Tensor gx({m, n});
        for (std::size_t i = 0; i < m; ++i) {
            double dot = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
                dot += gy.at(i, j) * y.at(i, j);
            }
            for (std::size_t j = 0; j < n; ++j) {
                gx.at(i, j) = y.at(i, j) * (gy.at(i, j) - dot);
            }
        }
        c.accumulate(0, std::move(gx));
    });
}

Var topk_mean(Var x, std::size_t k) {
    std::vector<std::size_t> picked = kernels::topk_indices(x.value(), k);
    double s = 0.0;
    for (std::size_t i : picked) {
        s += x.value()[i];
    }
    Tensor out = Tensor::scalar(s / static_cast<double>(k));
    return tape_of(x).record(OpKind::TopkMean, {x}, std::move(out), [picked = std::move(picked)](BackwardContext& c) {
        Tensor g(c.input(0).shape(), 0.0);
        const double share = c.grad_output()[0] / static_cast<double>(picked.size());
        for (std::size_t i : picked) {
            g[i] = share;
        }
        c.accumulate(0, std::move(g));
    });
}

Var axis_max_project(Var x, Axis axis) {
    std::vector<std::size_t> argmax;
    Tensor out = kernels::axis_max_project(x.value(), axis, &argmax);
    return tape_of(x).record(OpKind::AxisMax, {x}, std::move(out), [argmax = std::move(argmax)](BackwardContext& c) {
        Tensor g(c.input(0).shape(), 0.0);
        for (std::size_t o = 0; o < argmax.size(); ++o) {
            g[argmax[o]] += c.grad_output()[o];
        }
        c.accumulate(0, std::move(g));
    });
}

Var sum(Var x) {
    double s = 0.0;
    for (double v : x.value().data()) {
        s += v;
    }
    return tape_of(x).record(OpKind::Sum, {x}, Tensor::scalar(s), [](BackwardContext& c) {
        c.accumulate(0, Tensor(c.input(0).shape(), c.grad_output()[0]));
    });
}

Var mean(Var x) { return scale(sum(x), 1.0 / static_cast<double>(x.value().numel())); }

Var select(Var x, std::vector<std::size_t> rows, std::vector<std::size_t> cols) {
    const Tensor& xv = x.value();
    require_rank2(xv, "select");
    require(!rows.empty() && !cols.empty(), ErrorCode::Dimension, "select: empty row or column set");
    const std::size_t n = xv.dim(1);
    for (std::size_t r : rows) require(r < xv.dim(0), ErrorCode::Dimension, "select: row out of range");
    for (std::size_t q : cols) require(q < n, ErrorCode::Dimension, "select: column out of range");
    Tensor out({rows.size(), cols.size()});
    for (std::size_t i = 0; i < rows.size(); ++i) {
        for (std::size_t j = 0; j < cols.size(); ++j) {
            out.at(i, j) = xv.at(rows[i], cols[j]);
        }
    }
    return tape_of(x).record(OpKind::Select, {x}, std::move(out),
                             [rows = std::move(rows), cols = std::move(cols)](BackwardContext& c) {
                                 Tensor g(c.input(0).shape(), 0.0);
                                 for (std::size_t i = 0; i < rows.size(); ++i) {
                                     for (std::size_t j = 0; j < cols.size(); ++j) {
                                         g.at(rows[i], cols[j]) += c.grad_output().at(i, j);
                                     }
                                 }
                                 c.accumulate(0, std::move(g));
                             });
}

Var gather(Var x, std::vector<std::size_t> flat_indices) {
    const Tensor& xv = x.value();
    require(!flat_indices.empty(), ErrorCode::Dimension, "gather: empty index set");
    Tensor out({flat_indices.size()});
    for (std::size_t i = 0; i < flat_indices.size(); ++i) {
        require(flat_indices[i] < xv.numel(), ErrorCode::Dimension, "gather: index out of range");
        out[i] = xv[flat_indices[i]];
    }
    return tape_of(x).record(OpKind::Select, {x}, std::move(out), [idx = std::move(flat_indices)](BackwardContext& c) {
        Tensor g(c.input(0).shape(), 0.0);
        for (std::size_t i = 0; i < idx.size(); ++i) {
            g[idx[i]] += c.grad_output()[i];
        }
        c.accumulate(0, std::move(g));
    });
}

Var slice_cols(Var x, std::size_t begin, std::size_t end) {
    const Tensor& xv = x.value();
    require_rank2(xv, "slice_cols");
    const std::size_t m = xv.dim(0), n = xv.dim(1);
    require(begin < end && end <= n, ErrorCode::Dimension, "slice_cols: bad column range");
    const std::size_t w = end - begin;
    Tensor out({m, w});
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < w; ++j) {
            out.at(i, j) = xv.at(i, begin + j);
        }
    }
    return tape_of(x).record(OpKind::SliceCols, {x}, std::move(out), [begin, w, m](BackwardContext& c) {
        Tensor g(c.input(0).shape(), 0.0);
        for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t j = 0; j < w; ++j) {
                g.at(i, begin + j) = c.grad_output().at(i, j);
            }
        }
        c.accumulate(0, std::move(g));
    });
}

Var concat_cols(const std::vector<Var>& parts) {
    require(!parts.empty(), ErrorCode::Dimension, "concat_cols: no inputs");
    const std::size_t m = parts.front().value().dim(0);
    std::vector<std::size_t> widths;
    std::size_t total = 0;
    for (Var p : parts) {
        require_rank2(p.value(), "concat_cols");
        require(p.value().dim(0) == m, ErrorCode::Dimension, "concat_cols: row counts differ");
        widths.push_back(p.value().dim(1));
        total += widths.back();
    }
    Tensor out({m, total});
    std::size_t off = 0;
    for (std::size_t k = 0; k < parts.size(); ++k) {
        const Tensor& pv = parts[k].value();
        for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t j = 0; j < widths[k]; ++j) {
                out.at(i, off + j) = pv.at(i, j);
            }
        }
        off += widths[k];
    }
    return tape_of(parts.front())
        .record(OpKind::ConcatCols, parts, std::move(out), [widths, m](BackwardContext& c) {
            std::size_t offset = 0;
            for (std::size_t k = 0; k < widths.size(); ++k) {
                if (c.needs(k)) {
                    Tensor g({m, widths[k]});
                    for (std::size_t i = 0; i < m; ++i) {
                        for (std::size_t j = 0; j < widths[k]; ++j) {
                            g.at(i, j) = c.grad_output().at(i, offset + j);
                        }
                    }
                    c.accumulate(k, std::move(g));
                }
                offset += widths[k];
            }
        });
}

Var concat(const std::vector<Var>& parts) {
    require(!parts.empty(), ErrorCode::Dimension, "concat: no inputs");
    std::vector<double> data;
    std::vector<std::size_t> sizes;
    for (Var p : parts) {
        auto d = p.value().data();
        data.insert(data.end(), d.begin(), d.end());
        sizes.push_back(d.size());
    }
    const std::size_t total = data.size();
    return tape_of(parts.front())
        .record(OpKind::Concat, parts, Tensor({total}, std::move(data)), [sizes](BackwardContext& c) {
            std::size_t offset = 0;
            for (std::size_t k = 0; k < sizes.size(); ++k) {
                if (c.needs(k)) {
                    auto src = c.grad_output().data().subspan(offset, sizes[k]);
                    c.accumulate(k, Tensor(c.input(k).shape(), std::vector<double>(src.begin(), src.end())));
                }
                offset += sizes[k];
            }
        });
}

Var reshape(Var x, Shape shape) {
    Tensor out = x.value().reshaped(std::move(shape));
    return tape_of(x).record(OpKind::Reshape, {x}, std::move(out), [](BackwardContext& c) {
        c.accumulate(0, c.grad_output().reshaped(c.input(0).shape()));
    });
}

Var add_n(const std::vector<Var>& terms) {
    require(!terms.empty(), ErrorCode::Dimension, "add_n: no inputs");
    Var acc = terms.front();
    for (std::size_t i = 1; i < terms.size(); ++i) {
        acc = add(acc, terms[i]);
    }
    return acc;
}

Var layer_norm_rows(Var x, double eps) {
    const Tensor& xv = x.value();
    require_rank2(xv, "layer_norm_rows");
    const std::size_t m = xv.dim(0), n = xv.dim(1);
    Tensor out({m, n});
    std::vector<double> inv_std(m);
    for (std::size_t i = 0; i < m; ++i) {
        double mu = 0.0;
        for (std::size_t j = 0; j < n; ++j) mu += xv.at(i, j);
        mu /= static_cast<double>(n);
        double var = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            const double d = xv.at(i, j) - mu;
            var += d * d;
        }
        var /= static_cast<double>(n);
        inv_std[i] = 1.0 / std::sqrt(var + eps);
        for (std::size_t j = 0; j < n; ++j) out.at(i, j) = (xv.at(i, j) - mu) * inv_std[i];
    }
    return tape_of(x).record(OpKind::LayerNorm, {x}, std::move(out),
                             [inv_std = std::move(inv_std), m, n](BackwardContext& c) {
                                 const Tensor& y = c.output();
                                 const Tensor& gy = c.grad_output();
                                 Tensor gx({m, n});
                                 const double inv_n = 1.0 / static_cast<double>(n);
                                 for (std::size_t i = 0; i < m; ++i) {
                                     double mg = 0.0, mgy = 0.0;
                                     for (std::size_t j = 0; j < n; ++j) {
                                         mg += gy.at(i, j);
                                         mgy += gy.at(i, j) * y.at(i, j);
                                     }
                                     mg *= inv_n;
                                     mgy *= inv_n;
                                     for (std::size_t j = 0; j < n; ++j) {
                                         gx.at(i, j) = inv_std[i] * (gy.at(i, j) - mg - y.at(i, j) * mgy);
                                     }
                                 }
                                 c.accumulate(0, std::move(gx));
                             });
}

Var avg_pool2x2(Var x, std::size_t h, std::size_t w) {
    const Tensor& xv = x.value();
    require_rank2(xv, "avg_pool2x2");
    require(xv.dim(0) == h * w && h % 2 == 0 && w % 2 == 0, ErrorCode::Dimension,
            "avg_pool2x2 needs an even h x w feature map");
    const std::size_t d = xv.dim(1), ho = h / 2, wo = w / 2;
    Tensor out({ho * wo, d});
    for (std::size_t i = 0; i < ho; ++i) {
        for (std::size_t j = 0; j < wo; ++j) {
            for (std::size_t k = 0; k < d; ++k) {
                const double s = xv.at((2 * i) * w + 2 * j, k) + xv.at((2 * i) * w + 2 * j + 1, k) +
                                 xv.at((2 * i + 1) * w + 2 * j, k) + xv.at((2 * i + 1) * w + 2 * j + 1, k);
                out.at(i * wo + j, k) = 0.25 * s;
            }
        }
    }
    return tape_of(x).record(OpKind::AvgPool, {x}, std::move(out), [h, w, d](BackwardContext& c) {
        Tensor g({h * w, d});
        const std::size_t wo = w / 2;
        for (std::size_t i = 0; i < h; ++i) {
            for (std::size_t j = 0; j < w; ++j) {
                for (std::size_t k = 0; k < d; ++k) {
                    g.at(i * w + j, k) = 0.25 * c.grad_output().at((i / 2) * wo + j / 2, k);
                }
            }
        }
        c.accumulate(0, std::move(g));
    });
}

Var upsample2x(Var x, std::size_t h, std::size_t w) {
    const Tensor& xv = x.value();
    require_rank2(xv, "upsample2x");
    require(xv.dim(0) == h * w, ErrorCode::Dimension, "upsample2x: row count does not match h x w");
    const std::size_t d = xv.dim(1), H = 2 * h, W = 2 * w;
    Tensor out({H * W, d});
    for (std::size_t i = 0; i < H; ++i) {
        for (std::size_t j = 0; j < W; ++j) {
            for (std::size_t k = 0; k < d; ++k) {
                out.at(i * W + j, k) = xv.at((i / 2) * w + j / 2, k);
            }
        }
    }
    return tape_of(x).record(OpKind::Upsample, {x}, std::move(out), [h, w, d](BackwardContext& c) {
        Tensor g({h * w, d});
        const std::size_t W = 2 * w;
        for (std::size_t i = 0; i < 2 * h; ++i) {
            for (std::size_t j = 0; j < W; ++j) {
                for (std::size_t k = 0; k < d; ++k) {
                    g.at((i / 2) * w + j / 2, k) += c.grad_output().at(i * W + j, k);
                }
            }
        }
        c.accumulate(0, std::move(g));
    });
}

Var compose_hidden(Var base, const std::vector<MaskedHidden>& regional) {
    const Tensor& bv = base.value();
    require_rank2(bv, "compose_hidden");
    const std::size_t m = bv.dim(0), d = bv.dim(1);
    std::vector<std::size_t> cover(m, 0);
    std::vector<Var> inputs{base};
    std::vector<std::vector<std::uint8_t>> masks;
    for (const auto& r : regional) {
        require(r.mask.size() == m, ErrorCode::Dimension, "compose_hidden: mask length differs from pixel count");
        require(r.hidden.value().shape() == bv.shape(), ErrorCode::Dimension, "compose_hidden: hidden shape mismatch");
        for (std::size_t p = 0; p < m; ++p) cover[p] += r.mask[p] ? 1 : 0;
        inputs.push_back(r.hidden);
        masks.push_back(r.mask);
    }
    Tensor out({m, d});
    for (std::size_t p = 0; p < m; ++p) {
        if (cover[p] == 0) {
            for (std::size_t k = 0; k < d; ++k) out.at(p, k) = bv.at(p, k);
            continue;
        }
        bool first = true;
        for (std::size_t r = 0; r < regional.size(); ++r) {
            if (!masks[r][p]) continue;
            const Tensor& hv = regional[r].hidden.value();
            for (std::size_t k = 0; k < d; ++k) out.at(p, k) = first ? hv.at(p, k) : out.at(p, k) + hv.at(p, k);
            first = false;
        }
        const double inv = 1.0 / static_cast<double>(cover[p]);
        if (cover[p] > 1) {
            for (std::size_t k = 0; k < d; ++k) out.at(p, k) *= inv;
        }
    }
    return tape_of(base).record(
        OpKind::ComposeHidden, std::move(inputs), std::move(out),
        [cover = std::move(cover), masks = std::move(masks), m, d](BackwardContext& c) {
            const Tensor& g = c.grad_output();
            if (c.needs(0)) {
                Tensor gb({m, d});
                for (std::size_t p = 0; p < m; ++p) {
                    if (cover[p] == 0) {
                        for (std::size_t k = 0; k < d; ++k) gb.at(p, k) = g.at(p, k);
                    }
                }
                c.accumulate(0, std::move(gb));
            }
            for (std::size_t r = 0; r < masks.size(); ++r) {
                if (!c.needs(r + 1)) continue;
                Tensor gr({m, d});
                for (std::size_t p = 0; p < m; ++p) {
                    if (!masks[r][p]) continue;
                    const double inv = 1.0 / static_cast<double>(cover[p]);
                    for (std::size_t k = 0; k < d; ++k) gr.at(p, k) = g.at(p, k) * inv;
                }
                c.accumulate(r + 1, std::move(gr));
            }
        });
}

}  // namespace ad

}  // namespace cmix

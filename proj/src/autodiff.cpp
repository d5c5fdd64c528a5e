// Copyright 2026 The GGViT Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "ggvit/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "ggvit/kernels.hpp"

namespace ggvit {

std::string_view op_name(Op op) {
    switch (op) {
        case Op::kLeaf: return "leaf";
        case Op::kMatmul: return "matmul";
        case Op::kAdd: return "add";
        case Op::kMul: return "mul";
        case Op::kScale: return "scale";
        case Op::kReshape: return "reshape";
        case Op::kTile: return "tile";
        case Op::kConcat: return "concat";
        case Op::kSlice: return "slice";
        case Op::kSoftmax: return "softmax";
        case Op::kLogSoftmax: return "log-softmax";
        case Op::kLayerNorm: return "layernorm";
        case Op::kGelu: return "gelu";
        case Op::kLeakyRelu: return "leaky-relu";
        case Op::kMean: return "mean";
        case Op::kSum: return "sum";
        case Op::kTranspose: return "transpose";
        case Op::kEmbedLookup: return "embed-lookup";
        case Op::kL2Normalize: return "l2-normalize";
        case Op::kLog: return "log";
        case Op::kExp: return "exp";
    }
    return "unknown";
}

namespace {

// Split a shape around `axis` into (outer, axis extent, inner).
struct AxisSplit {
    std::size_t outer = 1;
    std::size_t extent = 1;
    std::size_t inner = 1;
};

AxisSplit split_at(const Shape& s, std::size_t axis) {
    AxisSplit r;
    for (std::size_t i = 0; i < axis; ++i) r.outer *= s[i];
    r.extent = s[axis];
    for (std::size_t i = axis + 1; i < s.size(); ++i) r.inner *= s[i];
    return r;
}

bool is_suffix(const Shape& a, const Shape& b) {
    if (b.size() > a.size()) return false;
    return std::equal(b.begin(), b.end(), a.end() - std::ptrdiff_t(b.size()));
}

[[noreturn]] void shape_mismatch(Op op, const Shape& a, const Shape& b) {
    throw ShapeError(std::string(op_name(op)) + ": shape mismatch " + shape_str(a) + " vs " +
                     shape_str(b));
}

Shape strides_of(const Shape& s) {
    Shape st(s.size(), 1);
    for (std::size_t i = s.size(); i-- > 1;) st[i - 1] = st[i] * s[i];
    return st;
}

template <typename T>
void transpose2d(const T* src, std::size_t rows, std::size_t cols, T* dst) {
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) dst[c * rows + r] = src[r * cols + c];
}

// Gather for transpose: out[idx] = in[permuted idx]. Returns for each output
// element the linear source offset.
std::vector<std::size_t> transpose_map(const Shape& in_shape, const std::vector<std::size_t>& perm,
                                       Shape& out_shape) {
    const std::size_t rank = in_shape.size();
    out_shape.resize(rank);
    for (std::size_t i = 0; i < rank; ++i) out_shape[i] = in_shape[perm[i]];
    const Shape in_strides = strides_of(in_shape);
    const std::size_t n = shape_numel(in_shape);
    std::vector<std::size_t> map(n);
    std::vector<std::size_t> idx(rank, 0);
    std::size_t src = 0;
    for (std::size_t o = 0; o < n; ++o) {
        map[o] = src;
        for (std::size_t i = rank; i-- > 0;) {
            const std::size_t stride = in_strides[perm[i]];
            if (++idx[i] < out_shape[i]) {
                src += stride;
                break;
            }
            src -= (out_shape[i] - 1) * stride;
            idx[i] = 0;
        }
    }
    return map;
}

std::vector<std::size_t> tile_map(const Shape& in_shape, const std::vector<std::size_t>& reps,
                                  Shape& out_shape) {
    const std::size_t rank = in_shape.size();
    out_shape.resize(rank);
    for (std::size_t i = 0; i < rank; ++i) out_shape[i] = in_shape[i] * reps[i];
    const Shape in_strides = strides_of(in_shape);
    const std::size_t n = shape_numel(out_shape);
    std::vector<std::size_t> map(n);
    std::vector<std::size_t> idx(rank, 0);
    for (std::size_t o = 0; o < n; ++o) {
        std::size_t src = 0;
        for (std::size_t i = 0; i < rank; ++i) src += (idx[i] % in_shape[i]) * in_strides[i];
        map[o] = src;
        for (std::size_t i = rank; i-- > 0;) {
            if (++idx[i] < out_shape[i]) break;
            idx[i] = 0;
        }
    }
    return map;
}

Shape reduced_shape(const Shape& s, std::size_t axis) {
    Shape out;
    for (std::size_t i = 0; i < s.size(); ++i)
        if (i != axis) out.push_back(s[i]);
    if (out.empty()) out.push_back(1);
    return out;
}

template <typename T>
void require_same_graph(Var<T> a, Var<T> b, Op op) {
    if (!a.valid() || !b.valid() || &a.graph() != &b.graph()) {
        throw Error(std::string(op_name(op)) + ": operands belong to different graphs");
    }
}

template <typename T>
T gelu_cdf(T x) {
    return T(0.5) * (T(1) + std::erf(x / std::sqrt(T(2))));
}

}  // namespace

// ---------------------------------------------------------------- Graph

template <typename T>
Var<T> Graph<T>::param(const Tensor<T>& external) {
    Node n;
    n.external = &external;
    n.requires_grad = true;
    nodes_.push_back(std::move(n));
    return Var<T>(this, std::uint32_t(nodes_.size() - 1));
}

template <typename T>
Var<T> Graph<T>::variable(Tensor<T> value) {
    Node n;
    n.owned = std::move(value);
    n.requires_grad = true;
    nodes_.push_back(std::move(n));
    return Var<T>(this, std::uint32_t(nodes_.size() - 1));
}

template <typename T>
Var<T> Graph<T>::constant(Tensor<T> value) {
    Node n;
    n.owned = std::move(value);
    nodes_.push_back(std::move(n));
    return Var<T>(this, std::uint32_t(nodes_.size() - 1));
}

template <typename T>
const Tensor<T>& Graph<T>::value(Var<T> v) const {
    return nodes_.at(v.id()).value();
}

template <typename T>
Var<T> Graph<T>::emit(Op op, std::vector<std::uint32_t> inputs, Tensor<T> value, OpAttrs attrs,
                      Tensor<T> aux) {
    if (!value.all_finite()) {
        throw NumericError("op '" + std::string(op_name(op)) + "' produced a non-finite value");
    }
    Node n;
    n.op = op;
    n.owned = std::move(value);
    if (record_) {
        for (std::uint32_t i : inputs) n.requires_grad = n.requires_grad || nodes_[i].requires_grad;
        if (n.requires_grad) {
            n.inputs = std::move(inputs);
            n.attrs = std::move(attrs);
            n.aux = std::move(aux);
        }
    }
    nodes_.push_back(std::move(n));
    return Var<T>(this, std::uint32_t(nodes_.size() - 1));
}

template <typename T>
Tensor<T>& Graph<T>::grad_slot(std::uint32_t id) {
    Tensor<T>& g = grads_[id];
    if (g.empty()) g = Tensor<T>(nodes_[id].value().shape());
    return g;
}

template <typename T>
Tensor<T> Graph<T>::grad(Var<T> v) const {
    if (v.id() < grads_.size() && !grads_[v.id()].empty()) return grads_[v.id()];
    return Tensor<T>(value(v).shape());
}

template <typename T>
void Graph<T>::backward(Var<T> root) {
    if (!record_) throw Error("backward: tape recording was disabled for this graph");
    if (&root.graph() != this) throw Error("backward: root belongs to a different graph");
    if (value(root).size() != 1) {
        throw ShapeError("backward: root must be a scalar, got " + shape_str(value(root).shape()));
    }
    grads_.assign(nodes_.size(), Tensor<T>());
    grads_[root.id()] = Tensor<T>(value(root).shape(), T(1));
    for (std::uint32_t i = root.id() + 1; i-- > 0;) {
        const Node& n = nodes_[i];
        if (n.op == Op::kLeaf || !n.requires_grad || grads_[i].empty()) continue;
        backward_node(n, grads_[i]);
    }
}

template <typename T>
void Graph<T>::backward_node(const Node& node, const Tensor<T>& g) {
    const auto& K = kernels::active<T>();
    const auto in = [&](std::size_t k) -> const Tensor<T>& { return nodes_[node.inputs[k]].value(); };
    const auto wants = [&](std::size_t k) { return nodes_[node.inputs[k]].requires_grad; };
    const Tensor<T>& out = node.value();

    switch (node.op) {
        case Op::kLeaf:
            break;
        case Op::kMatmul: {
            const Tensor<T>& a = in(0);
            const Tensor<T>& b = in(1);
            const bool batched = a.rank() == 3;
            const std::size_t batch = batched ? a.dim(0) : 1;
            const std::size_t m = a.dim(a.rank() - 2), k = a.dim(a.rank() - 1), n = b.dim(b.rank() - 1);
            std::vector<T> tmp;
            if (wants(0)) {
                Tensor<T>& ga = grad_slot(node.inputs[0]);
                tmp.resize(k * n);
                for (std::size_t s = 0; s < batch; ++s) {
                    transpose2d(b.raw() + s * k * n, k, n, tmp.data());
                    K.gemm(m, k, n, g.raw() + s * m * n, tmp.data(), ga.raw() + s * m * k, true);
                }
            }
            if (wants(1)) {
                Tensor<T>& gb = grad_slot(node.inputs[1]);
                tmp.resize(m * k);
                for (std::size_t s = 0; s < batch; ++s) {
                    transpose2d(a.raw() + s * m * k, m, k, tmp.data());
                    K.gemm(k, n, m, tmp.data(), g.raw() + s * m * n, gb.raw() + s * k * n, true);
                }
            }
            break;
        }
        case Op::kAdd: {
            if (wants(0)) {
                Tensor<T>& ga = grad_slot(node.inputs[0]);
                K.axpy(g.size(), T(1), g.raw(), ga.raw());
            }
            if (wants(1)) {
                Tensor<T>& gb = grad_slot(node.inputs[1]);
                const std::size_t bn = gb.size();
                for (std::size_t off = 0; off < g.size(); off += bn) K.axpy(bn, T(1), g.raw() + off, gb.raw());
            }
            break;
        }
        case Op::kMul: {
            const Tensor<T>& a = in(0);
            const Tensor<T>& b = in(1);
            const std::size_t bn = b.size();
            if (wants(0)) {
                Tensor<T>& ga = grad_slot(node.inputs[0]);
                for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * b[i % bn];
            }
            if (wants(1)) {
                Tensor<T>& gb = grad_slot(node.inputs[1]);
                for (std::size_t i = 0; i < g.size(); ++i) gb[i % bn] += g[i] * a[i];
            }
            break;
        }
        case Op::kScale: {
            Tensor<T>& ga = grad_slot(node.inputs[0]);
            K.axpy(g.size(), T(node.attrs.scalar), g.raw(), ga.raw());
            break;
        }
        case Op::kReshape: {
            Tensor<T>& ga = grad_slot(node.inputs[0]);
            K.axpy(g.size(), T(1), g.raw(), ga.raw());
            break;
        }
        case Op::kTile: {
            Shape out_shape;
            const auto map = tile_map(in(0).shape(), node.attrs.ints, out_shape);
            Tensor<T>& ga = grad_slot(node.inputs[0]);
            for (std::size_t o = 0; o < map.size(); ++o) ga[map[o]] += g[o];
            break;
        }
        case Op::kConcat: {
            const std::size_t axis = node.attrs.axis;
            const AxisSplit os = split_at(out.shape(), axis);
            std::size_t offset = 0;
            for (std::size_t k = 0; k < node.inputs.size(); ++k) {
                const std::size_t ext = in(k).dim(axis);
                if (wants(k)) {
                    Tensor<T>& gk = grad_slot(node.inputs[k]);
                    for (std::size_t o = 0; o < os.outer; ++o) {
                        const T* src = g.raw() + (o * os.extent + offset) * os.inner;
                        T* dst = gk.raw() + o * ext * os.inner;
                        K.axpy(ext * os.inner, T(1), src, dst);
                    }
                }
                offset += ext;
            }
            break;
        }
        case Op::kSlice: {
            const std::size_t axis = node.attrs.axis;
            const AxisSplit is = split_at(in(0).shape(), axis);
            const std::size_t len = out.dim(axis);
            Tensor<T>& ga = grad_slot(node.inputs[0]);
            for (std::size_t o = 0; o < is.outer; ++o) {
                T* dst = ga.raw() + (o * is.extent + node.attrs.start) * is.inner;
                K.axpy(len * is.inner, T(1), g.raw() + o * len * is.inner, dst);
            }
            break;
        }
        case Op::kSoftmax: {
            const std::size_t d = out.shape().back();
            Tensor<T>& ga = grad_slot(node.inputs[0]);
            for (std::size_t r = 0; r < out.size() / d; ++r) {
                const T* y = out.raw() + r * d;
                const T* gy = g.raw() + r * d;
                const T dotv = K.dot(d, gy, y);
                T* gx = ga.raw() + r * d;
                for (std::size_t j = 0; j < d; ++j) gx[j] += y[j] * (gy[j] - dotv);
            }
            break;
        }
        case Op::kLogSoftmax: {
            const std::size_t d = out.shape().back();
            Tensor<T>& ga = grad_slot(node.inputs[0]);
            std::vector<T> p(d);
            for (std::size_t r = 0; r < out.size() / d; ++r) {
                const T* y = out.raw() + r * d;
                const T* gy = g.raw() + r * d;
                K.exp(d, y, p.data());
                T total = 0;
                for (std::size_t j = 0; j < d; ++j) total += gy[j];
                T* gx = ga.raw() + r * d;
                for (std::size_t j = 0; j < d; ++j) gx[j] += gy[j] - p[j] * total;
            }
            break;
        }
        case Op::kLayerNorm: {
            // aux holds [xhat (same shape as x), rstd per row].
            const Tensor<T>& x = in(0);
            const Tensor<T>& gamma = in(1);
            const std::size_t d = x.shape().back();
            const std::size_t rows = x.size() / d;
            const T* xhat = node.aux.raw();
            const T* rstd = node.aux.raw() + x.size();
            if (wants(1)) {
                Tensor<T>& gg = grad_slot(node.inputs[1]);
                for (std::size_t r = 0; r < rows; ++r)
                    for (std::size_t j = 0; j < d; ++j) gg[j] += g[r * d + j] * xhat[r * d + j];
            }
            if (wants(2)) {
                Tensor<T>& gb = grad_slot(node.inputs[2]);
                for (std::size_t r = 0; r < rows; ++r) K.axpy(d, T(1), g.raw() + r * d, gb.raw());
            }
            if (wants(0)) {
                Tensor<T>& gx = grad_slot(node.inputs[0]);
                std::vector<T> dxhat(d);
                for (std::size_t r = 0; r < rows; ++r) {
                    T m1 = 0, m2 = 0;
                    for (std::size_t j = 0; j < d; ++j) {
                        dxhat[j] = g[r * d + j] * gamma[j];
                        m1 += dxhat[j];
                        m2 += dxhat[j] * xhat[r * d + j];
                    }
                    m1 /= T(d);
                    m2 /= T(d);
                    for (std::size_t j = 0; j < d; ++j)
                        gx[r * d + j] += rstd[r] * (dxhat[j] - m1 - xhat[r * d + j] * m2);
                }
            }
            break;
        }
        case Op::kGelu: {
            const Tensor<T>& x = in(0);
            Tensor<T>& ga = grad_slot(node.inputs[0]);
            const T inv_sqrt_2pi = T(0.3989422804014327);
            std::vector<T> pdf(x.size());
            for (std::size_t i = 0; i < x.size(); ++i) pdf[i] = -T(0.5) * x[i] * x[i];
            K.exp(pdf.size(), pdf.data(), pdf.data());
            for (std::size_t i = 0; i < x.size(); ++i) {
                const T v = x[i];
                ga[i] += g[i] * (node.aux[i] + v * inv_sqrt_2pi * pdf[i]);
            }
            break;
        }
        case Op::kLeakyRelu: {
            const Tensor<T>& x = in(0);
            Tensor<T>& ga = grad_slot(node.inputs[0]);
            const T slope = T(node.attrs.scalar);
            for (std::size_t i = 0; i < x.size(); ++i) ga[i] += x[i] > T(0) ? g[i] : slope * g[i];
            break;
        }
        case Op::kMean:
        case Op::kSum: {
            const Tensor<T>& x = in(0);
            Tensor<T>& ga = grad_slot(node.inputs[0]);
            if (node.attrs.all) {
                const T w = node.op == Op::kMean ? g[0] / T(x.size()) : g[0];
                for (std::size_t i = 0; i < x.size(); ++i) ga[i] += w;
            } else {
                const AxisSplit s = split_at(x.shape(), node.attrs.axis);
                const T w = node.op == Op::kMean ? T(1) / T(s.extent) : T(1);
                for (std::size_t o = 0; o < s.outer; ++o)
                    for (std::size_t e = 0; e < s.extent; ++e)
                        for (std::size_t i = 0; i < s.inner; ++i)
                            ga[(o * s.extent + e) * s.inner + i] += w * g[o * s.inner + i];
            }
            break;
        }
        case Op::kTranspose: {
            Shape out_shape;
            const auto map = transpose_map(in(0).shape(), node.attrs.ints, out_shape);
            Tensor<T>& ga = grad_slot(node.inputs[0]);
            for (std::size_t o = 0; o < map.size(); ++o) ga[map[o]] += g[o];
            break;
        }
        case Op::kEmbedLookup: {
            const std::size_t d = in(0).dim(1);
            Tensor<T>& gt = grad_slot(node.inputs[0]);
            const auto& idx = node.attrs.ints;
            for (std::size_t r = 0; r < idx.size(); ++r)
                K.axpy(d, T(1), g.raw() + r * d, gt.raw() + idx[r] * d);
            break;
        }
        case Op::kL2Normalize: {
            const std::size_t d = out.shape().back();
            Tensor<T>& ga = grad_slot(node.inputs[0]);
            for (std::size_t r = 0; r < out.size() / d; ++r) {
                const T* y = out.raw() + r * d;
                const T* gy = g.raw() + r * d;
                const T inv_norm = node.aux[r];
                const T dotv = K.dot(d, gy, y);
                T* gx = ga.raw() + r * d;
                for (std::size_t j = 0; j < d; ++j) gx[j] += (gy[j] - y[j] * dotv) * inv_norm;
            }
            break;
        }
        case Op::kLog: {
            const Tensor<T>& x = in(0);
            const T floor = T(node.attrs.scalar);
            Tensor<T>& ga = grad_slot(node.inputs[0]);
            for (std::size_t i = 0; i < x.size(); ++i)
                if (!(floor > T(0) && x[i] < floor)) ga[i] += g[i] / x[i];
            break;
        }
        case Op::kExp: {
            Tensor<T>& ga = grad_slot(node.inputs[0]);
            for (std::size_t i = 0; i < out.size(); ++i) ga[i] += g[i] * out[i];
            break;
        }
    }
}

template class Graph<float>;
template class Graph<double>;

// ---------------------------------------------------------------- ops

namespace ops {

template <typename T>
Var<T> matmul(Var<T> a, Var<T> b) {
    require_same_graph(a, b, Op::kMatmul);
    const Tensor<T>& av = a.value();
    const Tensor<T>& bv = b.value();
    const bool ok2 = av.rank() == 2 && bv.rank() == 2 && av.dim(1) == bv.dim(0);
    const bool ok3 = av.rank() == 3 && bv.rank() == 3 && av.dim(0) == bv.dim(0) && av.dim(2) == bv.dim(1);
    if (!ok2 && !ok3) shape_mismatch(Op::kMatmul, av.shape(), bv.shape());
    const std::size_t batch = ok3 ? av.dim(0) : 1;
    const std::size_t m = av.dim(av.rank() - 2), k = av.dim(av.rank() - 1), n = bv.dim(bv.rank() - 1);
    Tensor<T> out(ok3 ? Shape{batch, m, n} : Shape{m, n});
    const auto& K = kernels::active<T>();
    for (std::size_t s = 0; s < batch; ++s)
        K.gemm(m, n, k, av.raw() + s * m * k, bv.raw() + s * k * n, out.raw() + s * m * n, false);
    return a.graph().emit(Op::kMatmul, {a.id(), b.id()}, std::move(out));
}

template <typename T>
Var<T> add(Var<T> a, Var<T> b) {
    require_same_graph(a, b, Op::kAdd);
    const Tensor<T>& av = a.value();
    const Tensor<T>& bv = b.value();
    if (!is_suffix(av.shape(), bv.shape())) shape_mismatch(Op::kAdd, av.shape(), bv.shape());
    Tensor<T> out(av.shape());
    const auto& K = kernels::active<T>();
    for (std::size_t off = 0; off < av.size(); off += bv.size())
        K.add(bv.size(), av.raw() + off, bv.raw(), out.raw() + off);
    return a.graph().emit(Op::kAdd, {a.id(), b.id()}, std::move(out));
}

template <typename T>
Var<T> mul(Var<T> a, Var<T> b) {
    require_same_graph(a, b, Op::kMul);
    const Tensor<T>& av = a.value();
    const Tensor<T>& bv = b.value();
    if (!is_suffix(av.shape(), bv.shape())) shape_mismatch(Op::kMul, av.shape(), bv.shape());
    Tensor<T> out(av.shape());
    const auto& K = kernels::active<T>();
    for (std::size_t off = 0; off < av.size(); off += bv.size())
        K.mul(bv.size(), av.raw() + off, bv.raw(), out.raw() + off);
    return a.graph().emit(Op::kMul, {a.id(), b.id()}, std::move(out));
}

template <typename T>
Var<T> scale(Var<T> a, double c) {
    const Tensor<T>& av = a.value();
    Tensor<T> out(av.shape());
    kernels::active<T>().scale(av.size(), T(c), av.raw(), out.raw());
    OpAttrs attrs;
    attrs.scalar = c;
    return a.graph().emit(Op::kScale, {a.id()}, std::move(out), std::move(attrs));
}

template <typename T>
Var<T> reshape(Var<T> a, Shape shape) {
    const Tensor<T>& av = a.value();
    if (shape.empty() || shape_numel(shape) != av.size()) shape_mismatch(Op::kReshape, av.shape(), shape);
    return a.graph().emit(Op::kReshape, {a.id()}, av.reshaped(std::move(shape)));
}

template <typename T>
Var<T> tile(Var<T> a, std::vector<std::size_t> reps) {
    const Tensor<T>& av = a.value();
    if (reps.size() != av.rank() || std::find(reps.begin(), reps.end(), 0u) != reps.end()) {
        shape_mismatch(Op::kTile, av.shape(), Shape(reps.begin(), reps.end()));
    }
    Shape out_shape;
    const auto map = tile_map(av.shape(), reps, out_shape);
    Tensor<T> out(out_shape);
    for (std::size_t o = 0; o < map.size(); ++o) out[o] = av[map[o]];
    OpAttrs attrs;
    attrs.ints = std::move(reps);
    return a.graph().emit(Op::kTile, {a.id()}, std::move(out), std::move(attrs));
}

template <typename T>
Var<T> concat(std::span<const Var<T>> parts, std::size_t axis) {
    if (parts.empty()) throw ShapeError("concat: no inputs");
    const Shape& s0 = parts[0].value().shape();
    if (axis >= s0.size()) throw ShapeError("concat: axis out of range for " + shape_str(s0));
    Shape out_shape = s0;
    out_shape[axis] = 0;
    std::vector<std::uint32_t> ids;
    for (const Var<T>& p : parts) {
        require_same_graph(parts[0], p, Op::kConcat);
        const Shape& s = p.value().shape();
        bool ok = s.size() == s0.size();
        for (std::size_t i = 0; ok && i < s.size(); ++i) ok = i == axis || s[i] == s0[i];
        if (!ok) shape_mismatch(Op::kConcat, s0, s);
        out_shape[axis] += s[axis];
        ids.push_back(p.id());
    }
    Tensor<T> out(out_shape);
    const AxisSplit os = split_at(out_shape, axis);
    std::size_t offset = 0;
    for (const Var<T>& p : parts) {
        const Tensor<T>& pv = p.value();
        const std::size_t ext = pv.dim(axis);
        for (std::size_t o = 0; o < os.outer; ++o) {
            std::copy_n(pv.raw() + o * ext * os.inner, ext * os.inner,
                        out.raw() + (o * os.extent + offset) * os.inner);
        }
        offset += ext;
    }
    OpAttrs attrs;
    attrs.axis = axis;
    return parts[0].graph().emit(Op::kConcat, std::move(ids), std::move(out), std::move(attrs));
}

template <typename T>
Var<T> slice(Var<T> a, std::size_t axis, std::size_t start, std::size_t len) {
    const Tensor<T>& av = a.value();
    if (axis >= av.rank() || len == 0 || start + len > av.dim(axis)) {
        throw ShapeError("slice: [" + std::to_string(start) + ", +" + std::to_string(len) + ") on axis " +
                         std::to_string(axis) + " out of range for " + shape_str(av.shape()));
    }
    Shape out_shape = av.shape();
    out_shape[axis] = len;
    Tensor<T> out(out_shape);
    const AxisSplit is = split_at(av.shape(), axis);
    for (std::size_t o = 0; o < is.outer; ++o) {
        std::copy_n(av.raw() + (o * is.extent + start) * is.inner, len * is.inner,
                    out.raw() + o * len * is.inner);
    }
    OpAttrs attrs;
    attrs.axis = axis;
    attrs.start = start;
    return a.graph().emit(Op::kSlice, {a.id()}, std::move(out), std::move(attrs));
}

template <typename T>
Var<T> softmax(Var<T> a) {
    const Tensor<T>& av = a.value();
    const std::size_t d = av.shape().back();
    Tensor<T> out(av.shape());
    const auto& K = kernels::active<T>();
    for (std::size_t r = 0; r < av.size() / d; ++r) {
        const T* x = av.raw() + r * d;
        T* y = out.raw() + r * d;
        const T mx = *std::max_element(x, x + d);
        for (std::size_t j = 0; j < d; ++j) y[j] = x[j] - mx;
        K.exp(d, y, y);
        T total = 0;
        for (std::size_t j = 0; j < d; ++j) total += y[j];
        const T inv = T(1) / total;
        for (std::size_t j = 0; j < d; ++j) y[j] *= inv;
    }
    return a.graph().emit(Op::kSoftmax, {a.id()}, std::move(out));
}

template <typename T>
Var<T> log_softmax(Var<T> a) {
    const Tensor<T>& av = a.value();
    const std::size_t d = av.shape().back();
    Tensor<T> out(av.shape());
    std::vector<T> e(d);
    const auto& K = kernels::active<T>();
    for (std::size_t r = 0; r < av.size() / d; ++r) {
        const T* x = av.raw() + r * d;
        T* y = out.raw() + r * d;
        const T mx = *std::max_element(x, x + d);
        for (std::size_t j = 0; j < d; ++j) y[j] = x[j] - mx;
        K.exp(d, y, e.data());
        T total = 0;
        for (std::size_t j = 0; j < d; ++j) total += e[j];
        const T lse = std::log(total);
        for (std::size_t j = 0; j < d; ++j) y[j] -= lse;
    }
    return a.graph().emit(Op::kLogSoftmax, {a.id()}, std::move(out));
}

template <typename T>
Var<T> layernorm(Var<T> x, Var<T> gamma, Var<T> beta) {
    require_same_graph(x, gamma, Op::kLayerNorm);
    require_same_graph(x, beta, Op::kLayerNorm);
    const Tensor<T>& xv = x.value();
    const Tensor<T>& gv = gamma.value();
    const Tensor<T>& bv = beta.value();
    const std::size_t d = xv.shape().back();
    if (gv.shape() != Shape{d}) shape_mismatch(Op::kLayerNorm, xv.shape(), gv.shape());
    if (bv.shape() != Shape{d}) shape_mismatch(Op::kLayerNorm, xv.shape(), bv.shape());
    const std::size_t rows = xv.size() / d;
    Tensor<T> out(xv.shape());
    Tensor<T> aux(Shape{xv.size() + rows});
    T* xhat = aux.raw();
    T* rstd = aux.raw() + xv.size();
    for (std::size_t r = 0; r < rows; ++r) {
        const T* xr = xv.raw() + r * d;
        T mu = 0;
        for (std::size_t j = 0; j < d; ++j) mu += xr[j];
        mu /= T(d);
        T var = 0;
        for (std::size_t j = 0; j < d; ++j) var += (xr[j] - mu) * (xr[j] - mu);
        var /= T(d);
        rstd[r] = T(1) / std::sqrt(var + T(kLayerNormEps));
        for (std::size_t j = 0; j < d; ++j) {
            xhat[r * d + j] = (xr[j] - mu) * rstd[r];
            out[r * d + j] = xhat[r * d + j] * gv[j] + bv[j];
        }
    }
    return x.graph().emit(Op::kLayerNorm, {x.id(), gamma.id(), beta.id()}, std::move(out), {},
                          std::move(aux));
}

template <typename T>
Var<T> gelu(Var<T> a) {
    const Tensor<T>& av = a.value();
    Tensor<T> out(av.shape());
    Tensor<T> cdf(av.shape());
    for (std::size_t i = 0; i < av.size(); ++i) {
        cdf[i] = gelu_cdf(av[i]);
        out[i] = av[i] * cdf[i];
    }
    return a.graph().emit(Op::kGelu, {a.id()}, std::move(out), {}, std::move(cdf));
}

template <typename T>
Var<T> leaky_relu(Var<T> a, double slope) {
    const Tensor<T>& av = a.value();
    Tensor<T> out(av.shape());
    const T s = T(slope);
    for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] > T(0) ? av[i] : s * av[i];
    OpAttrs attrs;
    attrs.scalar = slope;
    return a.graph().emit(Op::kLeakyRelu, {a.id()}, std::move(out), std::move(attrs));
}

namespace {

template <typename T>
Var<T> reduce_all(Var<T> a, Op op) {
    const Tensor<T>& av = a.value();
    T total = 0;
    for (T v : av.data()) total += v;
    if (op == Op::kMean) total /= T(av.size());
    OpAttrs attrs;
    attrs.all = true;
    return a.graph().emit(op, {a.id()}, Tensor<T>::scalar(total), std::move(attrs));
}

template <typename T>
Var<T> reduce_axis(Var<T> a, std::size_t axis, Op op) {
    const Tensor<T>& av = a.value();
    if (axis >= av.rank()) throw ShapeError(std::string(op_name(op)) + ": axis out of range for " + shape_str(av.shape()));
    const AxisSplit s = split_at(av.shape(), axis);
    Tensor<T> out(reduced_shape(av.shape(), axis));
    for (std::size_t o = 0; o < s.outer; ++o)
        for (std::size_t e = 0; e < s.extent; ++e)
            for (std::size_t i = 0; i < s.inner; ++i) out[o * s.inner + i] += av[(o * s.extent + e) * s.inner + i];
    if (op == Op::kMean) {
        for (T& v : out.data()) v /= T(s.extent);
    }
    OpAttrs attrs;
    attrs.axis = axis;
    return a.graph().emit(op, {a.id()}, std::move(out), std::move(attrs));
}

}  // namespace

template <typename T>
Var<T> sum(Var<T> a) {
    return reduce_all(a, Op::kSum);
}
template <typename T>
Var<T> sum(Var<T> a, std::size_t axis) {
    return reduce_axis(a, axis, Op::kSum);
}
template <typename T>
Var<T> mean(Var<T> a) {
    return reduce_all(a, Op::kMean);
}
template <typename T>
Var<T> mean(Var<T> a, std::size_t axis) {
    return reduce_axis(a, axis, Op::kMean);
}

template <typename T>
Var<T> transpose(Var<T> a, std::vector<std::size_t> perm) {
    const Tensor<T>& av = a.value();
    std::vector<std::size_t> check = perm;
    std::sort(check.begin(), check.end());
    bool ok = check.size() == av.rank();
    for (std::size_t i = 0; ok && i < check.size(); ++i) ok = check[i] == i;
    if (!ok) shape_mismatch(Op::kTranspose, av.shape(), Shape(perm.begin(), perm.end()));
    Shape out_shape;
    const auto map = transpose_map(av.shape(), perm, out_shape);
    Tensor<T> out(out_shape);
    for (std::size_t o = 0; o < map.size(); ++o) out[o] = av[map[o]];
    OpAttrs attrs;
    attrs.ints = std::move(perm);
    return a.graph().emit(Op::kTranspose, {a.id()}, std::move(out), std::move(attrs));
}

template <typename T>
Var<T> embed_lookup(Var<T> table, std::vector<std::size_t> indices) {
    const Tensor<T>& tv = table.value();
    if (tv.rank() != 2 || indices.empty()) {
        throw ShapeError("embed-lookup: table must be [v,d] with a nonempty index list, got " +
                         shape_str(tv.shape()));
    }
    const std::size_t d = tv.dim(1);
    Tensor<T> out(Shape{indices.size(), d});
    for (std::size_t r = 0; r < indices.size(); ++r) {
        if (indices[r] >= tv.dim(0)) {
            throw ShapeError("embed-lookup: index " + std::to_string(indices[r]) + " out of range for " +
                             shape_str(tv.shape()));
        }
        std::copy_n(tv.raw() + indices[r] * d, d, out.raw() + r * d);
    }
    OpAttrs attrs;
    attrs.ints = std::move(indices);
    return table.graph().emit(Op::kEmbedLookup, {table.id()}, std::move(out), std::move(attrs));
}

template <typename T>
Var<T> l2_normalize(Var<T> a) {
    const Tensor<T>& av = a.value();
    const std::size_t d = av.shape().back();
    const std::size_t rows = av.size() / d;
    Tensor<T> out(av.shape());
    Tensor<T> inv(Shape{rows});
    for (std::size_t r = 0; r < rows; ++r) {
        const T* x = av.raw() + r * d;
        T ss = 0;
        for (std::size_t j = 0; j < d; ++j) ss += x[j] * x[j];
        if (!(ss > T(0))) throw NumericError("l2-normalize: zero-norm row " + std::to_string(r));
        inv[r] = T(1) / std::sqrt(ss);
        for (std::size_t j = 0; j < d; ++j) out[r * d + j] = x[j] * inv[r];
    }
    return a.graph().emit(Op::kL2Normalize, {a.id()}, std::move(out), {}, std::move(inv));
}

template <typename T>
Var<T> log(Var<T> a, double floor) {
    const Tensor<T>& av = a.value();
    Tensor<T> out(av.shape());
    const T f = T(floor);
    std::size_t clamped = 0;
    for (std::size_t i = 0; i < av.size(); ++i) {
        T v = av[i];
        if (f > T(0) && v < f) {
            v = f;
            ++clamped;
        }
        out[i] = std::log(v);
    }
    a.graph().note_clamps(clamped);
    OpAttrs attrs;
    attrs.scalar = floor;
    return a.graph().emit(Op::kLog, {a.id()}, std::move(out), std::move(attrs));
}

template <typename T>
Var<T> exp(Var<T> a) {
    const Tensor<T>& av = a.value();
    Tensor<T> out(av.shape());
    for (std::size_t i = 0; i < av.size(); ++i) out[i] = std::exp(av[i]);
    return a.graph().emit(Op::kExp, {a.id()}, std::move(out));
}

#define GGVIT_INSTANTIATE_OPS(T)                                                   \
    template Var<T> matmul(Var<T>, Var<T>);                                        \
    template Var<T> add(Var<T>, Var<T>);                                           \
    template Var<T> mul(Var<T>, Var<T>);                                           \
    template Var<T> scale(Var<T>, double);                                         \
    template Var<T> reshape(Var<T>, Shape);                                        \
    template Var<T> tile(Var<T>, std::vector<std::size_t>);                        \
    template Var<T> concat(std::span<const Var<T>>, std::size_t);                  \
    template Var<T> slice(Var<T>, std::size_t, std::size_t, std::size_t);          \
    template Var<T> softmax(Var<T>);                                               \
    template Var<T> log_softmax(Var<T>);                                           \
    template Var<T> layernorm(Var<T>, Var<T>, Var<T>);                             \
    template Var<T> gelu(Var<T>);                                                  \
    template Var<T> leaky_relu(Var<T>, double);                                    \
    template Var<T> sum(Var<T>);                                                   \
    template Var<T> sum(Var<T>, std::size_t);                                      \
    template Var<T> mean(Var<T>);                                                  \
    template Var<T> mean(Var<T>, std::size_t);                                     \
    template Var<T> transpose(Var<T>, std::vector<std::size_t>);                   \
    template Var<T> embed_lookup(Var<T>, std::vector<std::size_t>);                \
    template Var<T> l2_normalize(Var<T>);                                          \
    template Var<T> log(Var<T>, double);                                           \
    template Var<T> exp(Var<T>);

GGVIT_INSTANTIATE_OPS(float)
GGVIT_INSTANTIATE_OPS(double)

#undef GGVIT_INSTANTIATE_OPS

}  // namespace ops

}  // namespace ggvit

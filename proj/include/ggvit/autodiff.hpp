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

#pragma once

#include <cstdint>
#include <deque>
#include <span>
#include <string_view>
#include <vector>

#include "ggvit/tensor.hpp"

namespace ggvit {

// The closed op set. Adding an op means adding its gradient test.
enum class Op : std::uint8_t {
    kLeaf,
    kMatmul,
    kAdd,
    kMul,
    kScale,
    kReshape,
    kTile,
    kConcat,
    kSlice,
    kSoftmax,
    kLogSoftmax,
    kLayerNorm,
    kGelu,
    kLeakyRelu,
    kMean,
    kSum,
    kTranspose,
    kEmbedLookup,
    kL2Normalize,
    kLog,
    kExp,
};

std::string_view op_name(Op op);

inline constexpr double kLayerNormEps = 1e-6;

template <typename T>
class Graph;

// Handle to a node on a Graph. Cheap to copy; only valid while its graph lives.
template <typename T>
class Var {
   public:
    Var() = default;

    bool valid() const { return graph_ != nullptr; }
    Graph<T>& graph() const { return *graph_; }
    std::uint32_t id() const { return id_; }
    const Tensor<T>& value() const;
    const Shape& shape() const { return value().shape(); }

   private:
    friend class Graph<T>;
    Var(Graph<T>* g, std::uint32_t id) : graph_(g), id_(id) {}

    Graph<T>* graph_ = nullptr;
    std::uint32_t id_ = 0;
};

// Per-op parameters kept for the backward pass.
struct OpAttrs {
    double scalar = 0.0;
    std::size_t axis = 0;
    std::size_t start = 0;
    bool all = false;
    std::vector<std::size_t> ints;
};

// A reverse-mode tape. Node ids are assigned in creation order, which is a
// topological order, so backward is a single reverse sweep.
//
// With recording off the graph only evaluates values (inference); backward
// is then an error. A graph is not thread-safe; use one per thread.
template <typename T>
class Graph {
   public:
    explicit Graph(bool record = true) : record_(record) {}
    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;

    bool recording() const { return record_; }
    std::size_t size() const { return nodes_.size(); }

    // Leaf referencing an external tensor (a model parameter). The tensor must
    // outlive the graph and must not be mutated while the graph is in use.
    Var<T> param(const Tensor<T>& external);
    // Owned leaf that receives a gradient.
    Var<T> variable(Tensor<T> value);
    // Owned leaf without gradient.
    Var<T> constant(Tensor<T> value);

    const Tensor<T>& value(Var<T> v) const;
    bool requires_grad(Var<T> v) const { return nodes_.at(v.id()).requires_grad; }

    // Accumulates d(root)/d(node) for every node that requires a gradient.
    // The root must be a single-element tensor.
    void backward(Var<T> root);

    // Gradient of the last backward root w.r.t. v; zeros when v did not
    // contribute.
    Tensor<T> grad(Var<T> v) const;

    // Number of log() inputs raised to the clamp floor so far.
    std::size_t clamp_count() const { return clamp_count_; }

    // Used by the op functions; not part of the user-facing surface.
    Var<T> emit(Op op, std::vector<std::uint32_t> inputs, Tensor<T> value, OpAttrs attrs = {},
                Tensor<T> aux = {});
    void note_clamps(std::size_t n) { clamp_count_ += n; }

   private:
    struct Node {
        Op op = Op::kLeaf;
        std::vector<std::uint32_t> inputs;
        Tensor<T> owned;
        const Tensor<T>* external = nullptr;
        Tensor<T> aux;
        OpAttrs attrs;
        bool requires_grad = false;

        const Tensor<T>& value() const { return external ? *external : owned; }
    };

    void backward_node(const Node& node, const Tensor<T>& g);
    Tensor<T>& grad_slot(std::uint32_t id);

    bool record_;
    std::deque<Node> nodes_;  // stable references across emit()
    std::vector<Tensor<T>> grads_;
    std::size_t clamp_count_ = 0;
};

template <typename T>
const Tensor<T>& Var<T>::value() const {
    return graph_->value(*this);
}

extern template class Graph<float>;
extern template class Graph<double>;

namespace ops {

// [m,k]x[k,n] -> [m,n]; [b,m,k]x[b,k,n] -> [b,m,n].
template <typename T>
Var<T> matmul(Var<T> a, Var<T> b);

// Element-wise; b may also be a trailing-suffix shape of a (broadcast over
// a's leading dims), e.g. [t,d] + [d].
template <typename T>
Var<T> add(Var<T> a, Var<T> b);
template <typename T>
Var<T> mul(Var<T> a, Var<T> b);

template <typename T>
Var<T> scale(Var<T> a, double c);
template <typename T>
Var<T> reshape(Var<T> a, Shape shape);

// numpy.tile with one repeat count per axis.
template <typename T>
Var<T> tile(Var<T> a, std::vector<std::size_t> reps);

template <typename T>
Var<T> concat(std::span<const Var<T>> parts, std::size_t axis);

template <typename T>
Var<T> slice(Var<T> a, std::size_t axis, std::size_t start, std::size_t len);

// Softmax over the last axis.
template <typename T>
Var<T> softmax(Var<T> a);

// log(softmax(a)) over the last axis, computed as a - max - log(sum(exp)).
template <typename T>
Var<T> log_softmax(Var<T> a);

// Layer norm over the last axis with eps = kLayerNormEps; gamma/beta are
// shaped like the last axis.
template <typename T>
Var<T> layernorm(Var<T> x, Var<T> gamma, Var<T> beta);

// Exact (erf) GELU.
template <typename T>
Var<T> gelu(Var<T> a);

template <typename T>
Var<T> leaky_relu(Var<T> a, double slope);

// Reductions over everything (-> shape {1}) or over one axis (axis removed).
template <typename T>
Var<T> sum(Var<T> a);
template <typename T>
Var<T> sum(Var<T> a, std::size_t axis);
template <typename T>
Var<T> mean(Var<T> a);
template <typename T>
Var<T> mean(Var<T> a, std::size_t axis);

template <typename T>
Var<T> transpose(Var<T> a, std::vector<std::size_t> perm);

// Rows of a [v,d] table gathered by index -> [n,d].
template <typename T>
Var<T> embed_lookup(Var<T> table, std::vector<std::size_t> indices);

// Unit L2 norm along the last axis; a zero-norm row is a NumericError.
template <typename T>
Var<T> l2_normalize(Var<T> a);

// Natural log. With floor > 0, inputs below floor are raised to it and
// counted on the graph (their gradient is zero).
template <typename T>
Var<T> log(Var<T> a, double floor = 0.0);

template <typename T>
Var<T> exp(Var<T> a);

}  // namespace ops

}  // namespace ggvit

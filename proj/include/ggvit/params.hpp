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

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "ggvit/autodiff.hpp"

namespace ggvit {

// Named parameter tensors in insertion order. Names are unique.
template <typename T>
class ParamStore {
   public:
    Tensor<T>& add(std::string name, Tensor<T> value);

    bool contains(std::string_view name) const;
    Tensor<T>& get(std::string_view name);
    const Tensor<T>& get(std::string_view name) const;
    std::size_t index_of(std::string_view name) const;

    std::size_t size() const { return entries_.size(); }
    const std::string& name(std::size_t i) const { return entries_[i].first; }
    Tensor<T>& at(std::size_t i) { return entries_[i].second; }
    const Tensor<T>& at(std::size_t i) const { return entries_[i].second; }

    std::size_t scalar_count() const;

    template <typename U>
    ParamStore<U> cast() const {
        ParamStore<U> out;
        for (const auto& [n, t] : entries_) out.add(n, t.template cast<U>());
        return out;
    }

    bool operator==(const ParamStore& other) const { return entries_ == other.entries_; }

   private:
    std::vector<std::pair<std::string, Tensor<T>>> entries_;
    std::map<std::string, std::size_t, std::less<>> index_;
};

// Lazily binds parameters of a store as leaves of one graph.
template <typename T>
class Bindings {
   public:
    Bindings(Graph<T>& graph, const ParamStore<T>& store)
        : graph_(&graph), store_(&store), vars_(store.size()) {}

    Var<T> operator[](std::string_view name);
    Graph<T>& graph() const { return *graph_; }
    const ParamStore<T>& store() const { return *store_; }

    // Gradient for every parameter after graph().backward(); unbound
    // parameters get zeros.
    std::vector<Tensor<T>> gradients() const;

   private:
    Graph<T>* graph_;
    const ParamStore<T>* store_;
    std::vector<std::optional<Var<T>>> vars_;
};

// SGD with momentum and optional weight decay:
//   v = momentum * v + (g + wd * w);  w -= lr * v
template <typename T>
class Sgd {
   public:
    Sgd(double lr, double momentum, double weight_decay) : lr_(lr), momentum_(momentum), wd_(weight_decay) {}

    void step(ParamStore<T>& params, const std::vector<Tensor<T>>& grads);

   private:
    double lr_;
    double momentum_;
    double wd_;
    std::vector<Tensor<T>> velocity_;
};

// Checkpoint = u32 LE index length, JSON index, then GGT1 blobs. The index is
// {"meta": {...}, "tensors": {name: absolute byte offset}}.
template <typename T>
void save_checkpoint(const std::string& path, const ParamStore<T>& params, const nlohmann::json& meta);

struct CheckpointHeader {
    nlohmann::json meta;
    std::map<std::string, std::uint64_t> offsets;
};

CheckpointHeader read_checkpoint_header(const std::string& path);

template <typename T>
ParamStore<T> load_checkpoint(const std::string& path, nlohmann::json* meta = nullptr);

extern template class ParamStore<float>;
extern template class ParamStore<double>;
extern template class Bindings<float>;
extern template class Bindings<double>;
extern template class Sgd<float>;
extern template class Sgd<double>;

}  // namespace ggvit

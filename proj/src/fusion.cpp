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

#include "ggvit/fusion.hpp"

#include <cmath>

namespace ggvit {

namespace {

template <typename T>
Tensor<T> uniform_init(Rng& rng, Shape shape, std::size_t fan_in, std::size_t fan_out) {
    const double bound = std::sqrt(6.0 / double(fan_in + fan_out));
    Tensor<T> t(std::move(shape));
    for (auto& v : t.data()) v = T(rng.uniform(-bound, bound));
    return t;
}

}  // namespace

template <typename T>
void init_fusion_params(ParamStore<T>& s, Rng& rng) {
    for (std::size_t k = 0; k < kStreams; ++k) {
        const std::string u = "fab.gat" + std::to_string(k) + ".";
        s.add(u + "W", uniform_init<T>(rng, {2, kGatHidden}, 2, kGatHidden));
        s.add(u + "a", uniform_init<T>(rng, {2 * kGatHidden, 1}, 2 * kGatHidden, 1));
        s.add(u + "out", uniform_init<T>(rng, {kGatHidden, 2}, kGatHidden, 2));
    }
    s.add("fab.final.w", uniform_init<T>(rng, {2 * kStreams, 2}, 2 * kStreams, 2));
    s.add("fab.final.b", Tensor<T>(Shape{2}));
}

template <typename T>
GatOutput<T> gat_refine(Bindings<T>& p, const std::string& unit, Var<T> nodes) {
    if (nodes.shape() != Shape{kStreams, 2}) {
        throw ShapeError("gat_refine: nodes must be [5,2], got " + shape_str(nodes.shape()));
    }
    auto h = ops::matmul(nodes, p[unit + "W"]);  // [5, F']
    auto a = p[unit + "a"];
    auto a_main = ops::slice(a, 0, 0, kGatHidden);
    auto a_nbr = ops::slice(a, 0, kGatHidden, kGatHidden);
    auto main_score = ops::reshape(ops::matmul(ops::slice(h, 0, 0, 1), a_main), {1});
    auto scores = ops::add(ops::matmul(h, a_nbr), main_score);  // [5, 1]
    auto e = ops::leaky_relu(ops::reshape(scores, {1, kStreams}), kGatSlope);
    GatOutput<T> out;
    out.attention = ops::softmax(e);
    auto mixed = ops::matmul(out.attention, h);  // [1, F']
    out.refined = ops::reshape(ops::matmul(mixed, p[unit + "out"]), {2});
    return out;
}

template <typename T>
FusionOutput<T> fuse(Bindings<T>& p, std::span<const Var<T>> stream_probs) {
    if (stream_probs.size() != kStreams) throw ShapeError("fuse: expected five stream predictions");
    std::vector<Var<T>> rows;
    for (const auto& v : stream_probs) {
        if (v.shape() != Shape{2}) throw ShapeError("fuse: stream prediction must be [2], got " + shape_str(v.shape()));
        rows.push_back(ops::reshape(v, {1, 2}));
    }
    FusionOutput<T> out;
    std::vector<Var<T>> refined;
    for (std::size_t k = 0; k < kStreams; ++k) {
        std::vector<Var<T>> ordered{rows[k]};
        for (std::size_t j = 0; j < kStreams; ++j)
            if (j != k) ordered.push_back(rows[j]);
        auto unit = gat_refine(p, "fab.gat" + std::to_string(k) + ".", ops::concat<T>(ordered, 0));
        refined.push_back(unit.refined);
        out.attention[k] = unit.attention;
    }
    out.fusion = ops::concat<T>(refined, 0);
    auto logits = ops::add(ops::matmul(ops::reshape(out.fusion, {1, 2 * kStreams}), p["fab.final.w"]),
                           p["fab.final.b"]);
    out.final_logits = ops::reshape(logits, {2});
    return out;
}

std::array<double, kStreams> stream_proportions(std::span<const std::array<double, 2 * kStreams>> fusions) {
    if (fusions.empty()) throw ValidationError("stream_proportions: no fusion tensors");
    std::array<double, kStreams> acc{};
    for (const auto& f : fusions) {
        double total = 0.0;
        for (double v : f) total += std::abs(v);
        if (!(total > 0.0)) throw ValidationError("stream_proportions: all-zero fusion tensor");
        for (std::size_t k = 0; k < kStreams; ++k) acc[k] += (std::abs(f[2 * k]) + std::abs(f[2 * k + 1])) / total;
    }
    for (auto& v : acc) v = 100.0 * v / double(fusions.size());
    return acc;
}

#define GGVIT_INSTANTIATE_FUSION(T)                                                      \
    template void init_fusion_params(ParamStore<T>&, Rng&);                              \
    template GatOutput<T> gat_refine(Bindings<T>&, const std::string&, Var<T>);          \
    template FusionOutput<T> fuse(Bindings<T>&, std::span<const Var<T>>);

GGVIT_INSTANTIATE_FUSION(float)
GGVIT_INSTANTIATE_FUSION(double)

}  // namespace ggvit

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

#include "ggvit/losses.hpp"

#include <string>

namespace ggvit {

void to_json(nlohmann::json& j, const LossBreakdown& b) {
    j = nlohmann::json{{"l_vit", b.l_vit}, {"l_lmc", b.l_lmc}, {"l_fusion", b.l_fusion},
                       {"total", b.total}, {"lambda", b.lambda}};
}

LossBreakdown total_loss(double l_vit, double l_lmc, double l_fusion, double lambda) {
    if (!(lambda >= 0)) throw ValidationError("lambda must be >= 0");
    return {l_vit, l_lmc, l_fusion, lambda * l_lmc + l_vit + l_fusion, lambda};
}

template <typename T>
Var<T> nll(Var<T> probs, int label) {
    if (probs.shape() != Shape{2}) throw ShapeError("nll: expected [2] probabilities, got " + shape_str(probs.shape()));
    if (label != 0 && label != 1) throw ValidationError("label must be 0 or 1, got " + std::to_string(label));
    auto picked = ops::slice(probs, 0, std::size_t(label), 1);
    return ops::scale(ops::log(picked, kLogClamp), -1.0);
}

template <typename T>
Var<T> l_vit(std::span<const Var<T>> stream_probs, int label) {
    if (stream_probs.empty()) throw ValidationError("l_vit: no streams");
    std::vector<Var<T>> terms;
    for (const auto& p : stream_probs) terms.push_back(nll(p, label));
    return ops::sum(ops::concat<T>(terms, 0));
}

template <typename T>
Var<T> l_fusion(Var<T> final_logits, int label) {
    return nll(ops::softmax(final_logits), label);
}

#define GGVIT_INSTANTIATE_LOSSES(T)                            \
    template Var<T> nll(Var<T>, int);                          \
    template Var<T> l_vit(std::span<const Var<T>>, int);       \
    template Var<T> l_fusion(Var<T>, int);

GGVIT_INSTANTIATE_LOSSES(float)
GGVIT_INSTANTIATE_LOSSES(double)

}  // namespace ggvit

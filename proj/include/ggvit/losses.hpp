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

#include <span>

#include "json.hpp"

#include "ggvit/autodiff.hpp"

namespace ggvit {

inline constexpr double kLogClamp = 1e-12;
inline constexpr double kDefaultLambda = 0.1;

struct LossBreakdown {
    double l_vit = 0.0;
    double l_lmc = 0.0;
    double l_fusion = 0.0;
    double total = 0.0;
    double lambda = kDefaultLambda;
};

void to_json(nlohmann::json& j, const LossBreakdown& b);

// total = lambda * l_lmc + l_vit + l_fusion
LossBreakdown total_loss(double l_vit, double l_lmc, double l_fusion, double lambda);

// -sum_i log p_i[label] over the given stream probability vectors ([2]
// each), with log inputs clamped at kLogClamp.
template <typename T>
Var<T> l_vit(std::span<const Var<T>> stream_probs, int label);

// Softmax cross-entropy of the fusion head's [2] logits.
template <typename T>
Var<T> l_fusion(Var<T> final_logits, int label);

// -log p[label] of a [2] probability vector, clamped.
template <typename T>
Var<T> nll(Var<T> probs, int label);

}  // namespace ggvit

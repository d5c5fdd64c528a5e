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

#include <array>
#include <span>
#include <string>
#include <vector>

#include "ggvit/params.hpp"
#include "ggvit/rng.hpp"

namespace ggvit {

inline constexpr std::size_t kStreams = 5;
inline constexpr std::size_t kGatHidden = 8;
inline constexpr double kGatSlope = 0.2;

// Per unit k (0..4), under "fab.gat{k}.":
//   W [2, F'], a [2F', 1], out [F', 2]
// plus the final classifier fab.final.w [10, 2], fab.final.b [2].
template <typename T>
void init_fusion_params(ParamStore<T>& store, Rng& rng);

template <typename T>
struct GatOutput {
    Var<T> refined;    // [2]
    Var<T> attention;  // [1, 5], main node first
};

// nodes is [5, 2] with the main node in row 0 and its four neighbors after it.
template <typename T>
GatOutput<T> gat_refine(Bindings<T>& params, const std::string& unit, Var<T> nodes);

template <typename T>
struct FusionOutput {
    Var<T> final_logits;  // [2]
    Var<T> fusion;        // [10], slots 2k..2k+1 = stream k
    std::array<Var<T>, kStreams> attention;
};

// stream_probs: five [2] probability vectors in stream order X0..X4. Unit k
// sees stream k as main node and the other streams, in order, as neighbors.
template <typename T>
FusionOutput<T> fuse(Bindings<T>& params, std::span<const Var<T>> stream_probs);

// Mean over samples of each stream's share of the absolute fusion mass, in
// percent. Every fusion tensor must have 10 entries and nonzero mass.
std::array<double, kStreams> stream_proportions(std::span<const std::array<double, 2 * kStreams>> fusions);

}  // namespace ggvit

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

#include "json.hpp"

#include "ggvit/fusion.hpp"
#include "ggvit/guidance.hpp"
#include "ggvit/losses.hpp"
#include "ggvit/preprocess.hpp"
#include "ggvit/quality.hpp"
#include "ggvit/vit.hpp"

namespace ggvit {

// The four named variants map onto (iqb, fab):
//   base = (off, off), +IQB = (on, off), +FAB = (off, on), +IQB+FAB = (on, on).
struct ModelConfig {
    std::string preset = "tiny";
    ViTConfig vit = vit_preset("tiny");
    GuidanceMode guidance = GuidanceMode::kOn;
    bool iqb = true;
    bool fab = true;
    LmcConfig lmc;
    double lambda = kDefaultLambda;

    void validate() const;
    std::string variant_name() const;
};

void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);

ModelConfig model_config_for(const std::string& preset);

// Five stream ViTs under "vit{k}.", the LMC head ("lmc.") and the fusion
// block ("fab."). All parameters exist regardless of the ablation flags so
// checkpoints share one layout.
template <typename T>
ParamStore<T> init_model_params(const ModelConfig& cfg, std::uint64_t seed);

// One preprocessed input: the five streams, the frozen quality scalar and
// the label.
template <typename T>
struct ModelInput {
    const StreamSet<T>* streams = nullptr;
    double quality = 0.0;
    int label = 0;
};

template <typename T>
struct SampleForward {
    std::array<Var<T>, kStreams> stream_probs;
    Var<T> final_probs;    // [2]
    Var<T> final_logits;   // [2], fusion head output; unset when fab is off
    Var<T> fusion;         // [10]
    Var<T> embedding;      // ViT0 embedding [D]
    Var<T> quality_embedding;  // e* [512]; unset when iqb is off
};

// Streams are standardized to model space first; the guidance image is then
// added to each standardized quadrant.
template <typename T>
SampleForward<T> forward_sample(Bindings<T>& params, const ModelConfig& cfg, const ModelInput<T>& input);

template <typename T>
struct BatchResult {
    Var<T> loss;             // total / batch size
    LossBreakdown breakdown; // components divided by batch size
    std::vector<std::array<double, 2>> probs;
    std::vector<std::array<double, 2 * kStreams>> fusions;
};

template <typename T>
BatchResult<T> batch_loss(Bindings<T>& params, const ModelConfig& cfg, std::span<const ModelInput<T>> batch);

}  // namespace ggvit

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

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "ggvit/params.hpp"
#include "ggvit/rng.hpp"

namespace ggvit {

inline constexpr std::size_t kQualityLevels = 3;
// Width of e*: projection output plus the appended quality scalar.
inline constexpr std::size_t kLmcDim = 512;

struct LmcConfig {
    double s = 30.0;
    double m = 0.35;

    void validate() const;
};

// ---- quality classifier -------------------------------------------------
//
// Three 2x2 stride-2 convolutions (8, 16, 32 channels, ReLU), a global mean
// pool and a linear K-way head. Parameters live under "qc.":
//   qc.conv{i}.w [4*Cin, Cout], qc.conv{i}.b [Cout], qc.head.w [32, K], qc.head.b [K]

void init_quality_params(ParamStore<double>& store, std::size_t levels, Rng& rng);

// image [3, S, S] (S divisible by 8) -> logits [K]
template <typename T>
Var<T> quality_logits(Bindings<T>& params, Var<T> image);

// Softmax probabilities of a frozen classifier, evaluated without a tape.
std::vector<double> quality_probs(const ParamStore<double>& params, const Tensor<double>& image);

// q = sum_k k * p_k / (K - 1), in [0, 1].
double quality_scalar(std::span<const double> probs);

struct QualityExample {
    const Tensor<double>* image = nullptr;
    int level = 0;
};

struct QualityTrainOptions {
    std::size_t epochs = 20;
    std::size_t batch_size = 8;
    double lr = 0.01;
    double momentum = 0.9;
    std::uint64_t seed = 0;
    std::function<void(std::size_t epoch, double loss, double train_acc)> on_epoch;
};

// Trains a fresh classifier with softmax cross-entropy. Throws
// ValidationError when fewer than two levels are present.
ParamStore<double> train_quality_classifier(std::span<const QualityExample> train, std::size_t levels,
                                            const QualityTrainOptions& opts);

// Percentage of examples whose argmax matches the level.
double quality_accuracy(const ParamStore<double>& params, std::span<const QualityExample> examples);

// ---- large-margin cosine head --------------------------------------------
//
// Parameters: lmc.proj.w [D, 511], lmc.proj.b [511], lmc.W [2, 512].

template <typename T>
void init_lmc_params(ParamStore<T>& store, std::size_t embed_dim, Rng& rng);

// concat(embedding * proj.w + proj.b, q) -> [512]
template <typename T>
Var<T> build_quality_embedding(Bindings<T>& params, Var<T> embedding, T q);

// Sum over the batch of -log softmax(s * (cos - m * onehot))[y], where
// cos = normalize(e) . normalize(W)^T. e is [B, 512], W is [2, 512].
template <typename T>
Var<T> lmc_loss(Var<T> embeddings, Var<T> class_weights, std::span<const int> labels, const LmcConfig& cfg);

}  // namespace ggvit

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
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "ggvit/data.hpp"
#include "ggvit/model.hpp"

namespace ggvit {

struct TrainConfig {
    ModelConfig model;
    std::size_t epochs = 20;
    std::size_t batch_size = 8;
    double lr = 0.01;
    double momentum = 0.9;
    double weight_decay = 0.0;
    double clip_norm = 1.0;  // global gradient-norm cap; 0 disables
    std::uint64_t seed = 0;
    std::string dtype = "f64";  // "f32" or "f64"

    void validate() const;
};

void to_json(nlohmann::json& j, const TrainConfig& c);

// Whole-face crops held in memory; the quadrant streams are rebuilt when a
// batch is assembled.
struct PreparedSet {
    std::vector<Tensor<double>> crops;
    std::vector<double> quality_scalar;
    std::vector<int> labels;
    std::vector<int> levels;

    std::size_t size() const { return crops.size(); }
};

// Loads and crops every sample. With a quality classifier, each crop's q is
// its expected severity; without one q is 0.
PreparedSet prepare_set(const std::vector<Sample>& samples, std::size_t side,
                        const ParamStore<double>* quality_classifier);

// Subset by quality level.
PreparedSet select_quality(const PreparedSet& set, int level);

struct StepLog {
    std::size_t step = 0;
    std::size_t epoch = 0;
    LossBreakdown loss;
    std::size_t clamp_count = 0;
};

void to_json(nlohmann::json& j, const StepLog& s);

struct EpochLog {
    std::size_t epoch = 0;
    double mean_loss = 0.0;
    double train_accuracy = 0.0;  // running accuracy over the epoch's batches
    double val_accuracy = 0.0;
    bool best = false;
};

void to_json(nlohmann::json& j, const EpochLog& e);

struct TrainCallbacks {
    std::function<void(const StepLog&)> on_step;
    std::function<void(const EpochLog&)> on_epoch;
};

template <typename T>
struct TrainResult {
    ParamStore<T> final_params;
    ParamStore<T> best_params;
    std::size_t best_epoch = 0;
    double best_val_accuracy = -1.0;
    std::vector<EpochLog> epochs;
};

// Rescales every gradient by max_norm / ||g|| when the global L2 norm
// exceeds max_norm (> 0). Returns the norm before clipping.
template <typename T>
double clip_gradients(std::vector<Tensor<T>>& grads, double max_norm);

// SGD over shuffled batches. The best checkpoint is the one with the
// highest validation accuracy (earliest on ties); with an empty validation
// set the last epoch wins. Throws NumericError with step diagnostics when
// the loss stops being finite.
template <typename T>
TrainResult<T> train(const TrainConfig& cfg, const PreparedSet& train_set, const PreparedSet& val_set,
                     const TrainCallbacks& callbacks = {}, std::optional<ParamStore<T>> init = std::nullopt);

struct Prediction {
    std::array<double, 2> probs{};
    int predicted = 0;
    int label = 0;
    std::array<double, 2 * kStreams> fusion{};
};

struct EvalResult {
    double accuracy = 0.0;  // percent
    std::vector<Prediction> predictions;
};

// Worker count: GGVIT_THREADS when set, else the hardware concurrency.
std::size_t eval_threads();

// Inference over the set with `threads` workers (0 = eval_threads()); the
// output order is the set order regardless of the worker count.
template <typename T>
EvalResult evaluate(const ParamStore<T>& params, const ModelConfig& cfg, const PreparedSet& set,
                    std::size_t threads = 0);

std::vector<std::array<double, 2 * kStreams>> fusion_tensors(const EvalResult& r);

// accuracy[train_level][test_level]
using EvalMatrix = std::array<std::array<double, kQualityLevels>, kQualityLevels>;

std::string eval_matrix_csv(const EvalMatrix& m);
nlohmann::json eval_matrix_json(const EvalMatrix& m);

std::string proportions_csv_header();
std::string proportions_csv_row(const std::string& pair, const std::array<double, kStreams>& shares);

// Checkpoint metadata carries the model config and the dtype.
template <typename T>
void save_model(const std::string& path, const ParamStore<T>& params, const ModelConfig& cfg,
                const nlohmann::json& extra = {});

// Throws ValidationError when `expected` is given and its preset (or ViT
// shape) differs from the checkpoint's.
ParamStore<double> load_model(const std::string& path, ModelConfig* cfg_out,
                              const ModelConfig* expected = nullptr);

}  // namespace ggvit

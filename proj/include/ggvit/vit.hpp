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

#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "ggvit/params.hpp"
#include "ggvit/rng.hpp"

namespace ggvit {

inline constexpr double kPixelMean = 0.5;
inline constexpr double kPixelStd = 0.25;

struct ViTConfig {
    std::size_t image_size = 64;
    std::size_t patch_size = 8;
    std::size_t embed_dim = 48;
    std::size_t depth = 4;
    std::size_t heads = 4;
    double mlp_ratio = 2.0;
    std::size_t n_classes = 2;

    std::size_t grid() const { return image_size / patch_size; }
    std::size_t tokens() const { return 1 + grid() * grid(); }
    std::size_t head_dim() const { return embed_dim / heads; }
    std::size_t hidden_dim() const { return std::size_t(mlp_ratio * double(embed_dim) + 0.5); }

    // Throws ValidationError when the dimensions are inconsistent.
    void validate() const;

    bool operator==(const ViTConfig&) const = default;
};

void to_json(nlohmann::json& j, const ViTConfig& c);
void from_json(const nlohmann::json& j, ViTConfig& c);

// "tiny" (S=64, P=8, D=48, L=4, H=4, mlp 2), "base" (ViT-B/16 at 224) and
// "micro" (S=32, L=2; the golden-file model).
ViTConfig vit_preset(std::string_view name);

// Parameter names under `prefix`:
//   patch.w [3PP, D], patch.b [D], cls [1, D], pos [T, D],
//   block{i}.{ln1,ln2}.{g,b} [D], block{i}.attn.{q,k,v,o}.w [D, D] / .b [D],
//   block{i}.mlp.fc1.w [D, hidden] / .b, block{i}.mlp.fc2.w [hidden, D] / .b,
//   ln.g/ln.b [D], head.w [D, n_classes], head.b [n_classes].
// Linear weights are stored input-major so a row-vector batch multiplies
// them directly. patch.w is LeCun-normal, the other weights Glorot-normal
// (both truncated at 2 std), pos is N(0, 0.02) truncated, biases and cls are
// zero.
template <typename T>
void init_vit_params(ParamStore<T>& store, const std::string& prefix, const ViTConfig& cfg, Rng& rng);

template <typename T>
struct ViTOutput {
    Var<T> logits;     // [n_classes]
    Var<T> embedding;  // [D], final-layernorm class token
    // Per-block attention probabilities [H, T, T], filled when requested.
    std::vector<Var<T>> attention;
};

// image is [3, S, S].
template <typename T>
ViTOutput<T> vit_forward(Bindings<T>& params, const std::string& prefix, const ViTConfig& cfg, Var<T> image,
                         bool keep_attention = false);

// [3, S, S] -> [(S/P)^2, 3*P*P]: patches in raster order, each flattened
// channel-major.
template <typename T>
Var<T> patchify(Var<T> image, std::size_t patch);

// [0, 1] pixels to model space, (x - kPixelMean) / kPixelStd.
template <typename T>
Tensor<T> standardize_pixels(const Tensor<T>& image);

// Two-class probabilities; index 0 = real, 1 = forged.
template <typename T>
Var<T> predict(Var<T> logits);

}  // namespace ggvit

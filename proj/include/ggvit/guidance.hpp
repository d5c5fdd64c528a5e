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

#include <string_view>

#include "ggvit/autodiff.hpp"

namespace ggvit {

// G such that D == 3 * G * G; ValidationError otherwise.
std::size_t guidance_grid_side(std::size_t embed_dim);

// [D] -> [3, G, G], channel-major then rows then columns.
template <typename T>
Var<T> embed_to_grid(Var<T> embedding, std::size_t grid_side);

// [3, G, G] -> [3, S, S] with out[c][i][j] = grid[c][i % G][j % G].
template <typename T>
Var<T> tile_grid(Var<T> grid, std::size_t side);

// Element-wise sum of two equally shaped images, no clamping.
template <typename T>
Var<T> inject(Var<T> quadrant, Var<T> guide);

// embed_to_grid followed by tile_grid.
template <typename T>
Var<T> guidance_image(Var<T> embedding, std::size_t side);

// How the quadrant streams receive guidance:
//   kOn    - the whole-face embedding is injected
//   kOff   - quadrants enter their ViTs untouched
//   kZero  - a zero embedding is injected (numerically the same as kOff)
enum class GuidanceMode { kOn, kOff, kZero };

std::string_view guidance_mode_name(GuidanceMode m);
GuidanceMode parse_guidance_mode(std::string_view s);

}  // namespace ggvit

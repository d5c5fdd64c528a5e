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

#include "ggvit/guidance.hpp"

#include <cmath>
#include <string>

namespace ggvit {

std::size_t guidance_grid_side(std::size_t embed_dim) {
    if (embed_dim % 3 == 0) {
        const std::size_t area = embed_dim / 3;
        const auto g = std::size_t(std::llround(std::sqrt(double(area))));
        if (g > 0 && g * g == area) return g;
    }
    throw ValidationError("embedding dim " + std::to_string(embed_dim) + " is not 3*G*G for any integer G");
}

template <typename T>
Var<T> embed_to_grid(Var<T> embedding, std::size_t grid_side) {
    if (embedding.shape().size() != 1) {
        throw ShapeError("embed_to_grid: expected a vector, got " + shape_str(embedding.shape()));
    }
    const std::size_t d = embedding.shape()[0];
    if (d != 3 * grid_side * grid_side) {
        throw ValidationError("embed_to_grid: dim " + std::to_string(d) + " != 3*" + std::to_string(grid_side) +
                              "^2");
    }
    return ops::reshape(embedding, {3, grid_side, grid_side});
}

template <typename T>
Var<T> tile_grid(Var<T> grid, std::size_t side) {
    const Shape& s = grid.shape();
    if (s.size() != 3 || s[0] != 3 || s[1] != s[2]) {
        throw ShapeError("tile_grid: expected 3 x G x G, got " + shape_str(s));
    }
    if (side % s[1] != 0) {
        throw ValidationError("tile_grid: side " + std::to_string(side) + " is not a multiple of " +
                              std::to_string(s[1]));
    }
    const std::size_t reps = side / s[1];
    return ops::tile(grid, {1, reps, reps});
}

template <typename T>
Var<T> inject(Var<T> quadrant, Var<T> guide) {
    if (quadrant.shape() != guide.shape()) {
        throw ShapeError("inject: " + shape_str(quadrant.shape()) + " vs " + shape_str(guide.shape()));
    }
    return ops::add(quadrant, guide);
}

template <typename T>
Var<T> guidance_image(Var<T> embedding, std::size_t side) {
    const std::size_t g = guidance_grid_side(embedding.shape().empty() ? 0 : embedding.shape()[0]);
    return tile_grid(embed_to_grid(embedding, g), side);
}

std::string_view guidance_mode_name(GuidanceMode m) {
    switch (m) {
        case GuidanceMode::kOn: return "on";
        case GuidanceMode::kOff: return "off";
        case GuidanceMode::kZero: return "zero";
    }
    return "?";
}

GuidanceMode parse_guidance_mode(std::string_view s) {
    if (s == "on") return GuidanceMode::kOn;
    if (s == "off") return GuidanceMode::kOff;
    if (s == "zero") return GuidanceMode::kZero;
    throw ValidationError("guidance mode must be on, off or zero, got '" + std::string(s) + "'");
}

#define GGVIT_INSTANTIATE_GUIDANCE(T)                      \
    template Var<T> embed_to_grid(Var<T>, std::size_t);    \
    template Var<T> tile_grid(Var<T>, std::size_t);        \
    template Var<T> inject(Var<T>, Var<T>);                \
    template Var<T> guidance_image(Var<T>, std::size_t);

GGVIT_INSTANTIATE_GUIDANCE(float)
GGVIT_INSTANTIATE_GUIDANCE(double)

}  // namespace ggvit

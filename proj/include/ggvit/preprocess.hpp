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

#include "ggvit/tensor.hpp"

// Face crop geometry. Images are C x H x W tensors with values in [0, 1].

namespace ggvit {

inline constexpr double kBoxEnlargeRatio = 1.1;

struct Point {
    double x = 0.0;
    double y = 0.0;
};

// Top-left corner plus extent, in pixels. x/y may be negative.
struct FaceBox {
    double x = 0.0;
    double y = 0.0;
    double w = 0.0;
    double h = 0.0;

    Point center() const { return {x + w / 2.0, y + h / 2.0}; }
    bool operator==(const FaceBox&) const = default;
};

// Square box with side kBoxEnlargeRatio * max(w, h) on the same center.
FaceBox expand_box(const FaceBox& box);

// Box whose center is closest to mask_center; ties go to the lower index.
FaceBox select_face(std::span<const FaceBox> boxes, Point mask_center);

// Bilinear resample of `box` to out_h x out_w with half-pixel centers:
//   src = box.origin + (dst + 0.5) * box.extent / out_extent - 0.5
// Source coordinates are clamped to the box's pixel-center extent, and
// pixels outside the image read as zero.
Tensor<double> resample_bilinear(const Tensor<double>& image, const FaceBox& box, std::size_t out_h,
                                 std::size_t out_w);

// S x S crop of `box`; S must be even and >= 16.
Tensor<double> crop_resize(const Tensor<double>& image, const FaceBox& box, std::size_t side);

// X0 = whole face, X1..X4 = upper-left, upper-right, lower-left, lower-right.
template <typename T>
struct StreamSet {
    Tensor<T> whole;
    std::array<Tensor<T>, 4> quadrants;

    static constexpr std::size_t kStreams = 5;

    const Tensor<T>& stream(std::size_t k) const { return k == 0 ? whole : quadrants.at(k - 1); }

    template <typename U>
    StreamSet<U> cast() const {
        return {whole.template cast<U>(),
                {quadrants[0].template cast<U>(), quadrants[1].template cast<U>(),
                 quadrants[2].template cast<U>(), quadrants[3].template cast<U>()}};
    }
};

// Offset (row, col) of quadrant k in 0..3 for a side-S image.
std::array<std::size_t, 2> quadrant_origin(std::size_t k, std::size_t side);

// The raw (S/2) x (S/2) sub-grid of quadrant k, before resizing.
Tensor<double> quadrant_slice(const Tensor<double>& whole, std::size_t k);

// Slices the four quadrants and resizes each back to S x S.
StreamSet<double> split_quadrants(const Tensor<double>& whole);

// expand_box -> crop_resize -> split_quadrants.
StreamSet<double> preprocess_face(const Tensor<double>& image, const FaceBox& detected, std::size_t side);

}  // namespace ggvit

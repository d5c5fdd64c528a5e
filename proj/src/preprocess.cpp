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

#include "ggvit/preprocess.hpp"

#include <algorithm>
#include <cmath>

namespace ggvit {

FaceBox expand_box(const FaceBox& box) {
    if (!(box.w > 0) || !(box.h > 0)) throw ValidationError("face box must have positive extent");
    const Point c = box.center();
    const double side = kBoxEnlargeRatio * std::max(box.w, box.h);
    return {c.x - side / 2.0, c.y - side / 2.0, side, side};
}

FaceBox select_face(std::span<const FaceBox> boxes, Point mask_center) {
    if (boxes.empty()) throw ValidationError("select_face: no candidate boxes");
    std::size_t best = 0;
    double best_d2 = 0.0;
    for (std::size_t i = 0; i < boxes.size(); ++i) {
        const Point c = boxes[i].center();
        const double d2 = (c.x - mask_center.x) * (c.x - mask_center.x) + (c.y - mask_center.y) * (c.y - mask_center.y);
        if (i == 0 || d2 < best_d2) {
            best = i;
            best_d2 = d2;
        }
    }
    return boxes[best];
}

Tensor<double> resample_bilinear(const Tensor<double>& image, const FaceBox& box, std::size_t out_h,
                                 std::size_t out_w) {
    if (image.rank() != 3) throw ShapeError("resample: image must be C x H x W, got " + shape_str(image.shape()));
    if (!(box.w > 0) || !(box.h > 0)) throw ValidationError("resample: box side must be positive");
    const std::size_t channels = image.dim(0);
    const long height = long(image.dim(1));
    const long width = long(image.dim(2));
    Tensor<double> out(Shape{channels, out_h, out_w});

    const auto fetch = [&](std::size_t c, long yy, long xx) -> double {
        if (yy < 0 || xx < 0 || yy >= height || xx >= width) return 0.0;
        return image[(c * std::size_t(height) + std::size_t(yy)) * std::size_t(width) + std::size_t(xx)];
    };
    const double sy_scale = box.h / double(out_h);
    const double sx_scale = box.w / double(out_w);
    const double y_max = box.y + box.h - 1.0;
    const double x_max = box.x + box.w - 1.0;

    for (std::size_t oy = 0; oy < out_h; ++oy) {
        double sy = box.y + (double(oy) + 0.5) * sy_scale - 0.5;
        sy = std::clamp(sy, box.y, std::max(box.y, y_max));
        const double fy0 = std::floor(sy);
        const double wy = sy - fy0;
        const long y0 = long(fy0);
        for (std::size_t ox = 0; ox < out_w; ++ox) {
            double sx = box.x + (double(ox) + 0.5) * sx_scale - 0.5;
            sx = std::clamp(sx, box.x, std::max(box.x, x_max));
            const double fx0 = std::floor(sx);
            const double wx = sx - fx0;
            const long x0 = long(fx0);
            for (std::size_t c = 0; c < channels; ++c) {
                double v = (1.0 - wy) * ((1.0 - wx) * fetch(c, y0, x0) + wx * fetch(c, y0, x0 + 1));
                if (wy != 0.0) v += wy * ((1.0 - wx) * fetch(c, y0 + 1, x0) + wx * fetch(c, y0 + 1, x0 + 1));
                out[(c * out_h + oy) * out_w + ox] = v;
            }
        }
    }
    return out;
}

Tensor<double> crop_resize(const Tensor<double>& image, const FaceBox& box, std::size_t side) {
    if (side < 16 || side % 2 != 0) {
        throw ValidationError("crop side must be even and >= 16, got " + std::to_string(side));
    }
    return resample_bilinear(image, box, side, side);
}

std::array<std::size_t, 2> quadrant_origin(std::size_t k, std::size_t side) {
    const std::size_t half = side / 2;
    return {(k / 2) * half, (k % 2) * half};
}

Tensor<double> quadrant_slice(const Tensor<double>& whole, std::size_t k) {
    if (whole.rank() != 3 || whole.dim(1) != whole.dim(2)) {
        throw ShapeError("quadrant split needs a square C x S x S image, got " + shape_str(whole.shape()));
    }
    const std::size_t side = whole.dim(1);
    if (side % 2 != 0) throw ValidationError("quadrant split needs an even side, got " + std::to_string(side));
    if (k > 3) throw ValidationError("quadrant index must be 0..3");
    const std::size_t half = side / 2;
    const auto [r0, c0] = quadrant_origin(k, side);
    const std::size_t channels = whole.dim(0);
    Tensor<double> out(Shape{channels, half, half});
    for (std::size_t c = 0; c < channels; ++c)
        for (std::size_t i = 0; i < half; ++i)
            for (std::size_t j = 0; j < half; ++j)
                out[(c * half + i) * half + j] = whole[(c * side + r0 + i) * side + c0 + j];
    return out;
}

StreamSet<double> split_quadrants(const Tensor<double>& whole) {
    StreamSet<double> set;
    set.whole = whole;
    const std::size_t side = whole.rank() == 3 ? whole.dim(1) : 0;
    for (std::size_t k = 0; k < 4; ++k) {
        const Tensor<double> part = quadrant_slice(whole, k);
        const double half = double(side / 2);
        set.quadrants[k] = resample_bilinear(part, FaceBox{0.0, 0.0, half, half}, side, side);
    }
    return set;
}

StreamSet<double> preprocess_face(const Tensor<double>& image, const FaceBox& detected, std::size_t side) {
    return split_quadrants(crop_resize(image, expand_box(detected), side));
}

}  // namespace ggvit

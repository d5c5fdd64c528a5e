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

// Scalar reference implementations written with explicit loops, shared by
// the unit tests and the acceptance binary.

#include <algorithm>
#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "ggvit/fusion.hpp"

namespace ggvit::oracle {

// -sum_i log softmax(s * (cos_i - m * onehot_i))[y_i]
inline double lmc(const Tensor<double>& e, const Tensor<double>& w, const std::vector<int>& y, double s, double m) {
    const std::size_t b = e.dim(0), d = e.dim(1), k = w.dim(0);
    double loss = 0.0;
    for (std::size_t i = 0; i < b; ++i) {
        double en = 0.0;
        for (std::size_t t = 0; t < d; ++t) en += e[i * d + t] * e[i * d + t];
        std::vector<double> z(k);
        for (std::size_t j = 0; j < k; ++j) {
            double wn = 0.0, dot = 0.0;
            for (std::size_t t = 0; t < d; ++t) {
                wn += w[j * d + t] * w[j * d + t];
                dot += w[j * d + t] * e[i * d + t];
            }
            z[j] = s * (dot / std::sqrt(en * wn) - (int(j) == y[i] ? m : 0.0));
        }
        double denom = 0.0;
        for (double v : z) denom += std::exp(v);
        loss -= z[std::size_t(y[i])] - std::log(denom);
    }
    return loss;
}

// Cross-entropy of softmax(s * cos) without any margin.
inline double scaled_cosine_ce(const Tensor<double>& e, const Tensor<double>& w, const std::vector<int>& y,
                               double s) {
    return lmc(e, w, y, s, 0.0);
}

using Nodes = std::array<std::array<double, 2>, kStreams>;

struct Gat {
    std::array<double, 2> refined{};
    std::array<double, kStreams> alpha{};
};

// One graph-attention unit with weights W [2, F'], a [2F'], out [F', 2];
// node 0 is the main node.
inline Gat gat(const ParamStore<double>& p, const std::string& unit, const Nodes& x) {
    const auto& w = p.get(unit + "W");
    const auto& a = p.get(unit + "a");
    const auto& o = p.get(unit + "out");
    double h[kStreams][kGatHidden];
    for (std::size_t j = 0; j < kStreams; ++j)
        for (std::size_t f = 0; f < kGatHidden; ++f) h[j][f] = x[j][0] * w[f] + x[j][1] * w[kGatHidden + f];
    double e[kStreams];
    for (std::size_t j = 0; j < kStreams; ++j) {
        double s = 0.0;
        for (std::size_t f = 0; f < kGatHidden; ++f) s += a[f] * h[0][f] + a[kGatHidden + f] * h[j][f];
        e[j] = s > 0 ? s : kGatSlope * s;
    }
    const double mx = *std::max_element(e, e + kStreams);
    double z = 0.0;
    Gat out;
    for (std::size_t j = 0; j < kStreams; ++j) z += std::exp(e[j] - mx);
    for (std::size_t j = 0; j < kStreams; ++j) out.alpha[j] = std::exp(e[j] - mx) / z;
    for (std::size_t c = 0; c < 2; ++c) {
        double acc = 0.0;
        for (std::size_t f = 0; f < kGatHidden; ++f) {
            double mixed = 0.0;
            for (std::size_t j = 0; j < kStreams; ++j) mixed += out.alpha[j] * h[j][f];
            acc += mixed * o[f * 2 + c];
        }
        out.refined[c] = acc;
    }
    return out;
}

// grid[c][i][j] = e[c*G*G + i*G + j], tiled: out[c][i][j] = grid[c][i%G][j%G].
inline Tensor<double> guidance(const Tensor<double>& e, std::size_t g, std::size_t side) {
    Tensor<double> out(Shape{3, side, side});
    for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t i = 0; i < side; ++i)
            for (std::size_t j = 0; j < side; ++j)
                out[(c * side + i) * side + j] = e[c * g * g + (i % g) * g + (j % g)];
    return out;
}

}  // namespace ggvit::oracle

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

#include <map>
#include <string>

#include "ggvit/model.hpp"

namespace ggvit::test {

inline constexpr std::uint64_t kGoldenSeed = 2026;
inline constexpr double kGoldenQuality = 0.4;

struct GoldenFixture {
    ModelConfig cfg = model_config_for("micro");
    ParamStore<double> params = init_model_params<double>(cfg, kGoldenSeed);
    StreamSet<double> streams;

    GoldenFixture() {
        Rng rng(kGoldenSeed + 1);
        Tensor<double> image(Shape{3, 32, 32});
        for (auto& v : image.data()) v = rng.uniform(0.0, 1.0);
        streams = split_quadrants(image);
    }

    // Named outputs stored under tests/golden as <name>.ggt.
    std::map<std::string, Tensor<double>> outputs() const {
        Graph<double> g(false);
        Bindings<double> b(g, params);
        auto whole = vit_forward(b, "vit0.", cfg.vit, g.constant(standardize_pixels(streams.whole)));
        auto estar = build_quality_embedding(b, whole.embedding, kGoldenQuality);
        const ModelInput<double> in{&streams, kGoldenQuality, 1};
        auto f = forward_sample(b, cfg, in);
        return {{"vit_micro_logits", whole.logits.value()},
                {"vit_micro_embedding", whole.embedding.value()},
                {"quality_embedding_micro", estar.value()},
                {"fusion_micro", f.fusion.value()},
                {"final_logits_micro", f.final_logits.value()}};
    }
};

}  // namespace ggvit::test

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

#include "ggvit/model_check.hpp"

#include <chrono>

#include "ggvit/rng.hpp"

namespace ggvit {

namespace {

StreamSet<double> random_streams(Rng& rng, std::size_t side) {
    Tensor<double> img(Shape{3, side, side});
    for (auto& v : img.data()) v = rng.uniform();
    return split_quadrants(img);
}

}  // namespace

std::vector<LossGradcheck> gradcheck_model(const ModelGradcheckOptions& opts) {
    if (opts.batch == 0) throw ValidationError("gradcheck: batch must be at least 1");
    ModelConfig cfg = model_config_for(opts.preset);
    cfg.guidance = GuidanceMode::kOn;
    cfg.iqb = true;
    cfg.fab = true;
    cfg.validate();

    ParamStore<double> params = init_model_params<double>(cfg, opts.seed);
    Rng rng(opts.seed ^ 0xC0FFEEull);
    std::vector<StreamSet<double>> streams;
    std::vector<ModelInput<double>> inputs;
    streams.reserve(opts.batch);
    for (std::size_t i = 0; i < opts.batch; ++i) streams.push_back(random_streams(rng, cfg.vit.image_size));
    for (std::size_t i = 0; i < opts.batch; ++i) {
        inputs.push_back({&streams[i], rng.uniform(), int(i % 2)});
    }

    const auto component = [&](const std::string& which) -> LossFn {
        return [&, which](Bindings<double>& b) -> Var<double> {
            if (which == "total") return batch_loss<double>(b, cfg, inputs).loss;
            std::vector<Var<double>> terms, estars;
            std::vector<int> labels;
            for (const auto& in : inputs) {
                auto f = forward_sample(b, cfg, in);
                if (which == "l_vit") terms.push_back(l_vit<double>(f.stream_probs, in.label));
                if (which == "l_fusion") terms.push_back(l_fusion(f.final_logits, in.label));
                estars.push_back(ops::reshape(f.quality_embedding, {1, kLmcDim}));
                labels.push_back(in.label);
            }
            if (which == "l_lmc") return lmc_loss(ops::concat<double>(estars, 0), b["lmc.W"], labels, cfg.lmc);
            return ops::sum(ops::concat<double>(terms, 0));
        };
    };

    std::vector<LossGradcheck> out;
    for (const char* name : {"l_vit", "l_lmc", "l_fusion", "total"}) {
        const auto t0 = std::chrono::steady_clock::now();
        LossGradcheck r;
        r.loss = name;
        r.report = finite_diff_check(component(name), params, opts.fd);
        r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        out.push_back(std::move(r));
    }
    return out;
}

}  // namespace ggvit

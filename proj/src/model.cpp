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

#include "ggvit/model.hpp"

namespace ggvit {

void ModelConfig::validate() const {
    vit.validate();
    lmc.validate();
    if (!(lambda >= 0)) throw ValidationError("lambda must be >= 0");
}

std::string ModelConfig::variant_name() const {
    std::string name = "GGViT";
    if (!iqb && !fab) return name + "-base";
    if (iqb) name += "+IQB";
    if (fab) name += "+FAB";
    return name;
}

void to_json(nlohmann::json& j, const ModelConfig& c) {
    j = nlohmann::json{{"preset", c.preset},
                       {"vit", c.vit},
                       {"guidance", std::string(guidance_mode_name(c.guidance))},
                       {"iqb", c.iqb},
                       {"fab", c.fab},
                       {"lmc_s", c.lmc.s},
                       {"lmc_m", c.lmc.m},
                       {"lambda", c.lambda}};
}

void from_json(const nlohmann::json& j, ModelConfig& c) {
    j.at("preset").get_to(c.preset);
    j.at("vit").get_to(c.vit);
    c.guidance = parse_guidance_mode(j.at("guidance").get<std::string>());
    j.at("iqb").get_to(c.iqb);
    j.at("fab").get_to(c.fab);
    j.at("lmc_s").get_to(c.lmc.s);
    j.at("lmc_m").get_to(c.lmc.m);
    j.at("lambda").get_to(c.lambda);
}

ModelConfig model_config_for(const std::string& preset) {
    ModelConfig c;
    c.preset = preset;
    c.vit = vit_preset(preset);
    return c;
}

template <typename T>
ParamStore<T> init_model_params(const ModelConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    Rng rng(seed);
    ParamStore<T> store;
    for (std::size_t k = 0; k < kStreams; ++k) init_vit_params(store, "vit" + std::to_string(k) + ".", cfg.vit, rng);
    init_lmc_params(store, cfg.vit.embed_dim, rng);
    init_fusion_params(store, rng);
    return store;
}

template <typename T>
SampleForward<T> forward_sample(Bindings<T>& p, const ModelConfig& cfg, const ModelInput<T>& in) {
    Graph<T>& g = p.graph();
    const std::size_t side = cfg.vit.image_size;
    SampleForward<T> out;

    auto whole = vit_forward(p, "vit0.", cfg.vit, g.constant(standardize_pixels(in.streams->whole)));
    out.embedding = whole.embedding;
    out.stream_probs[0] = predict(whole.logits);

    Var<T> guide;
    if (cfg.guidance == GuidanceMode::kOn) {
        guide = guidance_image(whole.embedding, side);
    } else if (cfg.guidance == GuidanceMode::kZero) {
        guide = guidance_image(g.constant(Tensor<T>(Shape{cfg.vit.embed_dim})), side);
    }
    for (std::size_t k = 1; k < kStreams; ++k) {
        auto x = g.constant(standardize_pixels(in.streams->quadrants[k - 1]));
        if (guide.valid()) x = inject(x, guide);
        auto res = vit_forward(p, "vit" + std::to_string(k) + ".", cfg.vit, x);
        out.stream_probs[k] = predict(res.logits);
    }

    if (cfg.fab) {
        auto fused = fuse<T>(p, out.stream_probs);
        out.final_logits = fused.final_logits;
        out.fusion = fused.fusion;
        out.final_probs = ops::softmax(fused.final_logits);
    } else {
        out.fusion = ops::concat<T>(out.stream_probs, 0);
        out.final_probs = ops::mean(ops::reshape(out.fusion, {kStreams, 2}), 0);
    }
    if (cfg.iqb) out.quality_embedding = build_quality_embedding(p, whole.embedding, T(in.quality));
    return out;
}

template <typename T>
BatchResult<T> batch_loss(Bindings<T>& p, const ModelConfig& cfg, std::span<const ModelInput<T>> batch) {
    if (batch.empty()) throw ValidationError("empty batch");
    Graph<T>& g = p.graph();
    BatchResult<T> res;
    std::vector<Var<T>> vit_terms, fusion_terms, estars;
    std::vector<int> labels;
    for (const auto& in : batch) {
        auto f = forward_sample(p, cfg, in);
        vit_terms.push_back(l_vit<T>(f.stream_probs, in.label));
        if (cfg.fab) fusion_terms.push_back(l_fusion(f.final_logits, in.label));
        if (cfg.iqb) estars.push_back(ops::reshape(f.quality_embedding, {1, kLmcDim}));
        labels.push_back(in.label);
        const auto pv = f.final_probs.value().data();
        res.probs.push_back({double(pv[0]), double(pv[1])});
        std::array<double, 2 * kStreams> fv{};
        const auto fd = f.fusion.value().data();
        for (std::size_t i = 0; i < fv.size(); ++i) fv[i] = double(fd[i]);
        res.fusions.push_back(fv);
    }
    const double inv_b = 1.0 / double(batch.size());
    auto total = ops::sum(ops::concat<T>(vit_terms, 0));
    const double lv = double(total.value()[0]);
    double lf = 0.0, ll = 0.0;
    if (cfg.fab) {
        auto fl = ops::sum(ops::concat<T>(fusion_terms, 0));
        lf = double(fl.value()[0]);
        total = ops::add(total, fl);
    }
    if (cfg.iqb) {
        auto lmc = lmc_loss(ops::concat<T>(estars, 0), p["lmc.W"], labels, cfg.lmc);
        ll = double(lmc.value()[0]);
        if (cfg.lambda != 0.0) total = ops::add(total, ops::scale(lmc, cfg.lambda));
    }
    res.loss = ops::scale(total, inv_b);
    res.breakdown = total_loss(lv * inv_b, ll * inv_b, lf * inv_b, cfg.lambda);
    (void)g;
    return res;
}

#define GGVIT_INSTANTIATE_MODEL(T)                                                                     \
    template ParamStore<T> init_model_params(const ModelConfig&, std::uint64_t);                       \
    template SampleForward<T> forward_sample(Bindings<T>&, const ModelConfig&, const ModelInput<T>&);  \
    template BatchResult<T> batch_loss(Bindings<T>&, const ModelConfig&, std::span<const ModelInput<T>>);

GGVIT_INSTANTIATE_MODEL(float)
GGVIT_INSTANTIATE_MODEL(double)

}  // namespace ggvit

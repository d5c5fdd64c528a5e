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

#include "ggvit/vit.hpp"

#include <cmath>

#include "ggvit/guidance.hpp"

namespace ggvit {

void ViTConfig::validate() const {
    const auto fail = [](const std::string& m) { throw ValidationError("vit config: " + m); };
    if (image_size == 0 || patch_size == 0 || embed_dim == 0 || depth == 0 || heads == 0) fail("zero dimension");
    if (image_size % patch_size != 0) fail("image size must be a multiple of the patch size");
    if (embed_dim % heads != 0) fail("embed dim must be a multiple of the head count");
    if (!(mlp_ratio > 0)) fail("mlp ratio must be positive");
    if (n_classes != 2) fail("exactly two classes are supported");
    const std::size_t g = guidance_grid_side(embed_dim);
    if (image_size % g != 0) fail("image size must be a multiple of the guidance grid side");
}

void to_json(nlohmann::json& j, const ViTConfig& c) {
    j = nlohmann::json{{"image_size", c.image_size}, {"patch_size", c.patch_size}, {"embed_dim", c.embed_dim},
                       {"depth", c.depth},           {"heads", c.heads},           {"mlp_ratio", c.mlp_ratio},
                       {"n_classes", c.n_classes}};
}

void from_json(const nlohmann::json& j, ViTConfig& c) {
    j.at("image_size").get_to(c.image_size);
    j.at("patch_size").get_to(c.patch_size);
    j.at("embed_dim").get_to(c.embed_dim);
    j.at("depth").get_to(c.depth);
    j.at("heads").get_to(c.heads);
    j.at("mlp_ratio").get_to(c.mlp_ratio);
    j.at("n_classes").get_to(c.n_classes);
}

ViTConfig vit_preset(std::string_view name) {
    if (name == "tiny") return {64, 8, 48, 4, 4, 2.0, 2};
    if (name == "base") return {224, 16, 768, 12, 12, 4.0, 2};
    if (name == "micro") return {32, 8, 48, 2, 4, 2.0, 2};
    throw ValidationError("unknown model preset '" + std::string(name) + "'");
}

namespace {

template <typename T>
Tensor<T> trunc_normal(Rng& rng, Shape shape, double std_dev) {
    Tensor<T> t(std::move(shape));
    for (auto& v : t.data()) v = T(rng.trunc_normal(std_dev));
    return t;
}

template <typename T>
void add_linear(ParamStore<T>& s, const std::string& name, std::size_t in, std::size_t out, Rng& rng,
                double std_dev) {
    s.add(name + ".w", trunc_normal<T>(rng, {in, out}, std_dev));
    s.add(name + ".b", Tensor<T>(Shape{out}));
}

double glorot(std::size_t in, std::size_t out) { return std::sqrt(2.0 / double(in + out)); }

template <typename T>
void add_layernorm(ParamStore<T>& s, const std::string& name, std::size_t d) {
    s.add(name + ".g", Tensor<T>(Shape{d}, T(1)));
    s.add(name + ".b", Tensor<T>(Shape{d}));
}

template <typename T>
Var<T> linear(Bindings<T>& p, const std::string& name, Var<T> x) {
    return ops::add(ops::matmul(x, p[name + ".w"]), p[name + ".b"]);
}

template <typename T>
Var<T> layer_norm(Bindings<T>& p, const std::string& name, Var<T> x) {
    return ops::layernorm(x, p[name + ".g"], p[name + ".b"]);
}

// [T, D] -> [H, T, dh]
template <typename T>
Var<T> split_heads(Var<T> x, std::size_t tokens, std::size_t heads, std::size_t dh) {
    return ops::transpose(ops::reshape(x, {tokens, heads, dh}), {1, 0, 2});
}

}  // namespace

template <typename T>
void init_vit_params(ParamStore<T>& s, const std::string& prefix, const ViTConfig& cfg, Rng& rng) {
    cfg.validate();
    const std::size_t d = cfg.embed_dim;
    const std::size_t p = cfg.patch_size;
    add_linear(s, prefix + "patch", 3 * p * p, d, rng, 1.0 / std::sqrt(double(3 * p * p)));
    s.add(prefix + "cls", Tensor<T>(Shape{1, d}));
    s.add(prefix + "pos", trunc_normal<T>(rng, {cfg.tokens(), d}, 0.02));
    for (std::size_t i = 0; i < cfg.depth; ++i) {
        const std::string b = prefix + "block" + std::to_string(i) + ".";
        add_layernorm(s, b + "ln1", d);
        for (const char* m : {"q", "k", "v", "o"}) add_linear(s, b + "attn." + m, d, d, rng, glorot(d, d));
        add_layernorm(s, b + "ln2", d);
        add_linear(s, b + "mlp.fc1", d, cfg.hidden_dim(), rng, glorot(d, cfg.hidden_dim()));
        add_linear(s, b + "mlp.fc2", cfg.hidden_dim(), d, rng, glorot(cfg.hidden_dim(), d));
    }
    add_layernorm(s, prefix + "ln", d);
    add_linear(s, prefix + "head", d, cfg.n_classes, rng, glorot(d, cfg.n_classes));
}

template <typename T>
Var<T> patchify(Var<T> image, std::size_t patch) {
    const Shape& s = image.shape();
    if (s.size() != 3 || s[1] != s[2] || s[1] % patch != 0) {
        throw ShapeError("patchify: image " + shape_str(s) + " is not C x S x S with S divisible by " +
                         std::to_string(patch));
    }
    const std::size_t c = s[0], n = s[1] / patch;
    auto blocks = ops::reshape(image, {c, n, patch, n, patch});
    auto ordered = ops::transpose(blocks, {1, 3, 0, 2, 4});
    return ops::reshape(ordered, {n * n, c * patch * patch});
}

template <typename T>
ViTOutput<T> vit_forward(Bindings<T>& p, const std::string& prefix, const ViTConfig& cfg, Var<T> image,
                         bool keep_attention) {
    if (image.shape() != Shape{3, cfg.image_size, cfg.image_size}) {
        throw ShapeError("vit: image " + shape_str(image.shape()) + " does not match config side " +
                         std::to_string(cfg.image_size));
    }
    const std::size_t tokens = cfg.tokens();
    const std::size_t d = cfg.embed_dim;
    const std::size_t heads = cfg.heads;
    const std::size_t dh = cfg.head_dim();
    const double attn_scale = 1.0 / std::sqrt(double(dh));

    ViTOutput<T> out;
    auto patches = linear(p, prefix + "patch", patchify(image, cfg.patch_size));
    std::vector<Var<T>> seq{p[prefix + "cls"], patches};
    auto x = ops::add(ops::concat<T>(seq, 0), p[prefix + "pos"]);

    for (std::size_t i = 0; i < cfg.depth; ++i) {
        const std::string b = prefix + "block" + std::to_string(i) + ".";
        auto h = layer_norm(p, b + "ln1", x);
        auto q = split_heads(linear(p, b + "attn.q", h), tokens, heads, dh);
        auto k = split_heads(linear(p, b + "attn.k", h), tokens, heads, dh);
        auto v = split_heads(linear(p, b + "attn.v", h), tokens, heads, dh);
        auto scores = ops::scale(ops::matmul(q, ops::transpose(k, {0, 2, 1})), attn_scale);
        auto attn = ops::softmax(scores);
        if (keep_attention) out.attention.push_back(attn);
        auto ctx = ops::reshape(ops::transpose(ops::matmul(attn, v), {1, 0, 2}), {tokens, d});
        x = ops::add(x, linear(p, b + "attn.o", ctx));

        auto m = layer_norm(p, b + "ln2", x);
        m = linear(p, b + "mlp.fc2", ops::gelu(linear(p, b + "mlp.fc1", m)));
        x = ops::add(x, m);
    }
    x = layer_norm(p, prefix + "ln", x);
    auto cls = ops::slice(x, 0, 0, 1);
    out.embedding = ops::reshape(cls, {d});
    out.logits = ops::reshape(linear(p, prefix + "head", cls), {cfg.n_classes});
    return out;
}

template <typename T>
Tensor<T> standardize_pixels(const Tensor<T>& image) {
    Tensor<T> out = image;
    for (T& v : out.data()) v = T((double(v) - kPixelMean) / kPixelStd);
    return out;
}

template <typename T>
Var<T> predict(Var<T> logits) {
    return ops::softmax(logits);
}

#define GGVIT_INSTANTIATE_VIT(T)                                                                               \
    template void init_vit_params(ParamStore<T>&, const std::string&, const ViTConfig&, Rng&);                  \
    template ViTOutput<T> vit_forward(Bindings<T>&, const std::string&, const ViTConfig&, Var<T>, bool);      \
    template Var<T> patchify(Var<T>, std::size_t);                                                             \
    template Var<T> predict(Var<T>);                                                                           \
    template Tensor<T> standardize_pixels(const Tensor<T>&);

GGVIT_INSTANTIATE_VIT(float)
GGVIT_INSTANTIATE_VIT(double)

}  // namespace ggvit

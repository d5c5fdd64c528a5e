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

#include "ggvit/quality.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "ggvit/vit.hpp"

namespace ggvit {

namespace {

constexpr std::size_t kConvChannels[3] = {8, 16, 32};

template <typename T>
Tensor<T> trunc_normal(Rng& rng, Shape shape, double std_dev) {
    Tensor<T> t(std::move(shape));
    for (auto& v : t.data()) v = T(rng.trunc_normal(std_dev));
    return t;
}

constexpr double kDetailGain = 10.0;

// Maps each flattened 2x2 RGB block to its deviations from the per-channel
// block mean, amplified.
template <typename T>
Tensor<T> detail_matrix() {
    Tensor<T> h(Shape{12, 12});
    for (std::size_t i = 0; i < 12; ++i) {
        for (std::size_t j = 0; j < 12; ++j) {
            const double same = i / 4 == j / 4 ? 0.25 : 0.0;
            h[i * 12 + j] = T(kDetailGain * ((i == j ? 1.0 : 0.0) - same));
        }
    }
    return h;
}

// [C, n, n] -> [Cout, n/2, n/2]
template <typename T>
Var<T> conv2x2(Bindings<T>& p, const std::string& name, Var<T> x, bool detail) {
    const std::size_t half = x.shape()[1] / 2;
    auto blocks = patchify(x, 2);
    if (detail) blocks = ops::matmul(blocks, x.graph().constant(detail_matrix<T>()));
    auto cols = ops::matmul(blocks, p[name + ".w"]);
    auto act = ops::leaky_relu(ops::add(cols, p[name + ".b"]), 0.0);
    const std::size_t cout = act.shape()[1];
    return ops::reshape(ops::transpose(act, {1, 0}), {cout, half, half});
}

std::size_t argmax(std::span<const double> v) {
    return std::size_t(std::max_element(v.begin(), v.end()) - v.begin());
}

}  // namespace

void LmcConfig::validate() const {
    if (!(s > 0)) throw ValidationError("lmc scale s must be positive");
    if (!(m >= 0 && m < 1)) throw ValidationError("lmc margin m must lie in [0, 1)");
}

void init_quality_params(ParamStore<double>& s, std::size_t levels, Rng& rng) {
    std::size_t cin = 3;
    for (std::size_t i = 0; i < 3; ++i) {
        const std::size_t cout = kConvChannels[i];
        const double he = std::sqrt(2.0 / double(4 * cin));
        s.add("qc.conv" + std::to_string(i) + ".w", trunc_normal<double>(rng, {4 * cin, cout}, he));
        s.add("qc.conv" + std::to_string(i) + ".b", Tensor<double>(Shape{cout}));
        cin = cout;
    }
    s.add("qc.head.w", trunc_normal<double>(rng, {cin, levels}, std::sqrt(1.0 / double(cin))));
    s.add("qc.head.b", Tensor<double>(Shape{levels}));
}

template <typename T>
Var<T> quality_logits(Bindings<T>& p, Var<T> image) {
    const Shape& s = image.shape();
    if (s.size() != 3 || s[0] != 3 || s[1] != s[2] || s[1] % 8 != 0) {
        throw ShapeError("quality classifier needs 3 x S x S with S divisible by 8, got " + shape_str(s));
    }
    auto x = image;
    for (std::size_t i = 0; i < 3; ++i) x = conv2x2(p, "qc.conv" + std::to_string(i), x, i == 0);
    const std::size_t c = x.shape()[0];
    const std::size_t n = x.shape()[1];
    auto pooled = ops::reshape(ops::mean(ops::reshape(x, {c, n * n}), 1), {1, c});
    auto logits = ops::add(ops::matmul(pooled, p["qc.head.w"]), p["qc.head.b"]);
    return ops::reshape(logits, {logits.shape()[1]});
}

std::vector<double> quality_probs(const ParamStore<double>& params, const Tensor<double>& image) {
    Graph<double> g(false);
    Bindings<double> b(g, params);
    auto probs = ops::softmax(quality_logits(b, g.constant(image)));
    const auto d = probs.value().data();
    return {d.begin(), d.end()};
}

double quality_scalar(std::span<const double> probs) {
    if (probs.size() < 2) throw ValidationError("quality_scalar needs at least two levels");
    double q = 0.0;
    for (std::size_t k = 0; k < probs.size(); ++k) q += double(k) * probs[k];
    return q / double(probs.size() - 1);
}

ParamStore<double> train_quality_classifier(std::span<const QualityExample> train, std::size_t levels,
                                            const QualityTrainOptions& opts) {
    std::set<int> present;
    for (const auto& ex : train) {
        if (ex.level < 0 || std::size_t(ex.level) >= levels) {
            throw ValidationError("quality level " + std::to_string(ex.level) + " out of range");
        }
        present.insert(ex.level);
    }
    if (present.size() < 2) throw ValidationError("quality classifier needs at least two quality levels");
    if (opts.batch_size == 0 || opts.epochs == 0) throw ValidationError("epochs and batch size must be >= 1");

    Rng rng(opts.seed);
    ParamStore<double> params;
    init_quality_params(params, levels, rng);
    Sgd<double> sgd(opts.lr, opts.momentum, 0.0);

    std::vector<std::size_t> order(train.size());
    for (std::size_t epoch = 0; epoch < opts.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), 0);
        rng.shuffle(order);
        double loss_sum = 0.0;
        std::size_t correct = 0;
        for (std::size_t begin = 0; begin < order.size(); begin += opts.batch_size) {
            const std::size_t end = std::min(order.size(), begin + opts.batch_size);
            Graph<double> g;
            Bindings<double> b(g, params);
            std::vector<Var<double>> terms;
            for (std::size_t i = begin; i < end; ++i) {
                const auto& ex = train[order[i]];
                auto probs = ops::softmax(quality_logits(b, g.constant(*ex.image)));
                if (argmax(probs.value().data()) == std::size_t(ex.level)) ++correct;
                Tensor<double> onehot(Shape{levels});
                onehot[std::size_t(ex.level)] = 1.0;
                terms.push_back(ops::log(ops::sum(ops::mul(probs, g.constant(onehot))), 1e-12));
            }
            auto loss = ops::scale(ops::sum(ops::concat<double>(terms, 0)), -1.0 / double(end - begin));
            loss_sum += loss.value()[0] * double(end - begin);
            g.backward(loss);
            sgd.step(params, b.gradients());
        }
        if (opts.on_epoch) {
            opts.on_epoch(epoch, loss_sum / double(train.size()), 100.0 * double(correct) / double(train.size()));
        }
    }
    return params;
}

double quality_accuracy(const ParamStore<double>& params, std::span<const QualityExample> examples) {
    if (examples.empty()) return 0.0;
    std::size_t correct = 0;
    for (const auto& ex : examples) {
        if (argmax(quality_probs(params, *ex.image)) == std::size_t(ex.level)) ++correct;
    }
    return 100.0 * double(correct) / double(examples.size());
}

template <typename T>
void init_lmc_params(ParamStore<T>& s, std::size_t embed_dim, Rng& rng) {
    s.add("lmc.proj.w", trunc_normal<T>(rng, {embed_dim, kLmcDim - 1}, 0.02));
    s.add("lmc.proj.b", Tensor<T>(Shape{kLmcDim - 1}));
    s.add("lmc.W", trunc_normal<T>(rng, {2, kLmcDim}, 0.02));
}

template <typename T>
Var<T> build_quality_embedding(Bindings<T>& p, Var<T> embedding, T q) {
    if (embedding.shape().size() != 1) {
        throw ShapeError("quality embedding input must be a vector, got " + shape_str(embedding.shape()));
    }
    const std::size_t d = embedding.shape()[0];
    auto proj = ops::add(ops::matmul(ops::reshape(embedding, {1, d}), p["lmc.proj.w"]), p["lmc.proj.b"]);
    Graph<T>& g = embedding.graph();
    std::vector<Var<T>> parts{ops::reshape(proj, {kLmcDim - 1}), g.constant(Tensor<T>(Shape{1}, q))};
    return ops::concat<T>(parts, 0);
}

template <typename T>
Var<T> lmc_loss(Var<T> e, Var<T> w, std::span<const int> labels, const LmcConfig& cfg) {
    cfg.validate();
    if (e.shape().size() != 2 || w.shape().size() != 2 || e.shape()[1] != w.shape()[1]) {
        throw ShapeError("lmc_loss: embeddings " + shape_str(e.shape()) + " vs weights " + shape_str(w.shape()));
    }
    const std::size_t batch = e.shape()[0];
    const std::size_t classes = w.shape()[0];
    if (batch == 0 || labels.size() != batch) throw ValidationError("lmc_loss: one label per embedding required");
    Tensor<T> onehot(Shape{batch, classes});
    for (std::size_t i = 0; i < batch; ++i) {
        if (labels[i] < 0 || std::size_t(labels[i]) >= classes) throw ValidationError("lmc_loss: label out of range");
        onehot[i * classes + std::size_t(labels[i])] = T(1);
    }
    Graph<T>& g = e.graph();
    auto cosines = ops::matmul(ops::l2_normalize(e), ops::transpose(ops::l2_normalize(w), {1, 0}));
    auto margined = ops::add(cosines, ops::scale(g.constant(onehot), -cfg.m));
    auto logp = ops::log_softmax(ops::scale(margined, cfg.s));
    return ops::scale(ops::sum(ops::mul(logp, g.constant(onehot))), -1.0);
}

#define GGVIT_INSTANTIATE_QUALITY(T)                                                        \
    template Var<T> quality_logits(Bindings<T>&, Var<T>);                                   \
    template void init_lmc_params(ParamStore<T>&, std::size_t, Rng&);                       \
    template Var<T> build_quality_embedding(Bindings<T>&, Var<T>, T);                       \
    template Var<T> lmc_loss(Var<T>, Var<T>, std::span<const int>, const LmcConfig&);

GGVIT_INSTANTIATE_QUALITY(float)
GGVIT_INSTANTIATE_QUALITY(double)

}  // namespace ggvit

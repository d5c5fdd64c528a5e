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

#include <gtest/gtest.h>

#include <cmath>

#include "ggvit/data.hpp"
#include "ggvit/gradcheck.hpp"
#include "ggvit/quality.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

namespace ggvit {
namespace {

using test::random_tensor;

double lmc_value(const Tensor<double>& e, const Tensor<double>& w, const std::vector<int>& y, LmcConfig cfg) {
    Graph<double> g(false);
    return lmc_loss(g.constant(e), g.constant(w), y, cfg).value()[0];
}

struct LmcCase {
    Tensor<double> e;
    Tensor<double> w;
    std::vector<int> y;
};

LmcCase random_case(std::uint64_t seed, std::size_t batch = 6, std::size_t dim = kLmcDim) {
    Rng rng(seed);
    LmcCase c{random_tensor(rng, {batch, dim}), random_tensor(rng, {2, dim}), {}};
    for (std::size_t i = 0; i < batch; ++i) c.y.push_back(int(rng.next_u64() % 2));
    return c;
}

Tensor<double> basis_row(std::size_t i) {
    Tensor<double> t(Shape{1, kLmcDim});
    t[i] = 1.0;
    return t;
}

Tensor<double> unit_weights() {
    Tensor<double> w(Shape{2, kLmcDim});
    w[0] = 1.0;
    w[kLmcDim + 1] = 1.0;
    return w;
}

TEST(LmcLoss, ClosedFormWithoutMargin) {
    EXPECT_NEAR(lmc_value(basis_row(0), unit_weights(), {0}, {1.0, 0.0}), std::log1p(std::exp(-1.0)), 1e-9);
    EXPECT_NEAR(lmc_value(basis_row(0), unit_weights(), {0}, {1.0, 0.0}), 0.31326, 1e-5);
}

TEST(LmcLoss, ClosedFormWithMargin) {
    EXPECT_NEAR(lmc_value(basis_row(0), unit_weights(), {0}, {1.0, 0.35}), std::log1p(std::exp(-0.65)), 1e-9);
    EXPECT_NEAR(lmc_value(basis_row(0), unit_weights(), {0}, {1.0, 0.35}), 0.420055, 1e-6);
}

TEST(LmcLoss, MatchesNaiveLoops) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const auto c = random_case(seed);
        for (double m : {0.0, 0.2, 0.35}) {
            const LmcConfig cfg{30.0, m};
            EXPECT_NEAR(lmc_value(c.e, c.w, c.y, cfg), oracle::lmc(c.e, c.w, c.y, 30.0, m), 1e-9);
        }
    }
}

TEST(LmcLoss, NoMarginIsCrossEntropyOfScaledCosines) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const auto c = random_case(seed + 100);
        const double s = 1.0 + double(seed) * 4.0;
        Graph<double> g(false);
        auto cos = ops::matmul(ops::l2_normalize(g.constant(c.e)),
                               ops::transpose(ops::l2_normalize(g.constant(c.w)), {1, 0}));
        auto probs = ops::softmax(ops::scale(cos, s));
        double ce = 0.0;
        for (std::size_t i = 0; i < c.y.size(); ++i) ce -= std::log(probs.value()[i * 2 + std::size_t(c.y[i])]);
        EXPECT_NEAR(lmc_value(c.e, c.w, c.y, {s, 0.0}), ce, 1e-9);
    }
}

TEST(LmcLoss, StrictlyIncreasingInMargin) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        auto c = random_case(seed + 200);
        for (std::size_t i = 0; i < c.y.size(); ++i) {
            const std::size_t y = std::size_t(c.y[i]);
            for (std::size_t t = 0; t < kLmcDim; ++t) c.e[i * kLmcDim + t] += 2.0 * c.w[y * kLmcDim + t];
        }
        for (std::size_t i = 0; i < c.y.size(); ++i) {
            Graph<double> g(false);
            auto cos = ops::matmul(ops::l2_normalize(g.constant(c.e)),
                                   ops::transpose(ops::l2_normalize(g.constant(c.w)), {1, 0}));
            const std::size_t y = std::size_t(c.y[i]);
            ASSERT_GT(cos.value()[i * 2 + y], cos.value()[i * 2 + 1 - y]);
        }
        double prev = -1.0;
        for (double m : {0.0, 0.1, 0.2, 0.35}) {
            const double v = lmc_value(c.e, c.w, c.y, {30.0, m});
            EXPECT_GT(v, prev);
            prev = v;
        }
    }
}

TEST(LmcLoss, InvariantToPositiveRescaling) {
    Rng rng(77);
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const auto c = random_case(seed + 300);
        const LmcConfig cfg;
        const double base = lmc_value(c.e, c.w, c.y, cfg);
        auto e = c.e;
        for (std::size_t i = 0; i < e.dim(0); ++i) {
            const double lambda = std::exp(rng.uniform(-5, 5));
            for (std::size_t t = 0; t < kLmcDim; ++t) e[i * kLmcDim + t] *= lambda;
        }
        auto w = c.w;
        for (std::size_t j = 0; j < 2; ++j) {
            const double lambda = std::exp(rng.uniform(-5, 5));
            for (std::size_t t = 0; t < kLmcDim; ++t) w[j * kLmcDim + t] *= lambda;
        }
        EXPECT_NEAR(lmc_value(e, c.w, c.y, cfg), base, 1e-9);
        EXPECT_NEAR(lmc_value(c.e, w, c.y, cfg), base, 1e-9);
        EXPECT_NEAR(lmc_value(e, w, c.y, cfg), base, 1e-9);
    }
}

TEST(LmcLoss, SumsOverTheBatch) {
    const auto c = random_case(400, 4);
    double parts = 0.0;
    for (std::size_t i = 0; i < 4; ++i) {
        Tensor<double> row(Shape{1, kLmcDim});
        for (std::size_t t = 0; t < kLmcDim; ++t) row[t] = c.e[i * kLmcDim + t];
        parts += lmc_value(row, c.w, {c.y[i]}, {});
    }
    EXPECT_NEAR(lmc_value(c.e, c.w, c.y, {}), parts, 1e-9);
}

TEST(LmcLoss, Errors) {
    const auto c = random_case(500, 2);
    EXPECT_THROW(lmc_value(c.e, c.w, {0}, {}), ValidationError);
    EXPECT_THROW(lmc_value(c.e, c.w, {0, 2}, {}), ValidationError);
    EXPECT_THROW(lmc_value(c.e, c.w, c.y, {0.0, 0.35}), ValidationError);
    EXPECT_THROW(lmc_value(c.e, c.w, c.y, {30.0, 1.0}), ValidationError);
    EXPECT_THROW(lmc_value(c.e, c.w, c.y, {30.0, -0.1}), ValidationError);
    EXPECT_THROW(lmc_value(Tensor<double>(Shape{2, kLmcDim}), c.w, c.y, {}), NumericError);
    EXPECT_THROW(lmc_value(c.e, Tensor<double>(Shape{2, kLmcDim}), c.y, {}), NumericError);
    EXPECT_THROW(lmc_value(c.e, Tensor<double>(Shape{2, 7}), c.y, {}), ShapeError);
}

TEST(LmcLoss, GradientMatchesFiniteDifferences) {
    Rng rng(600);
    ParamStore<double> params;
    init_lmc_params(params, 48, rng);
    for (auto& v : params.get("lmc.W").data()) v = rng.uniform(-1, 1);
    for (auto& v : params.get("lmc.proj.b").data()) v = rng.uniform(-0.1, 0.1);
    std::vector<Tensor<double>> embeddings;
    for (int i = 0; i < 3; ++i) embeddings.push_back(random_tensor(rng, {48}, -2, 2));
    const std::vector<int> labels{0, 1, 1};
    const LossFn loss = [&](Bindings<double>& b) {
        std::vector<Var<double>> rows;
        for (std::size_t i = 0; i < embeddings.size(); ++i) {
            auto e = build_quality_embedding(b, b.graph().constant(embeddings[i]), 0.25 * double(i));
            rows.push_back(ops::reshape(e, {1, kLmcDim}));
        }
        return lmc_loss(ops::concat<double>(rows, 0), b["lmc.W"], labels, LmcConfig{});
    };
    const FdReport r = finite_diff_check(loss, params, {1e-6, 1e-4, 40, 4.0});
    EXPECT_TRUE(r.pass()) << r.worst().name << " " << r.max_rel_error;
}

TEST(QualityEmbedding, AppendsScalarLast) {
    Rng rng(700);
    ParamStore<double> params;
    init_lmc_params(params, 48, rng);
    Graph<double> g(false);
    Bindings<double> b(g, params);
    auto e = build_quality_embedding(b, g.constant(random_tensor(rng, {48})), 0.625);
    ASSERT_EQ(e.shape(), (Shape{kLmcDim}));
    EXPECT_EQ(e.value()[kLmcDim - 1], 0.625);
}

TEST(QualityEmbedding, ZeroInputZeroBiasZeroQuality) {
    Rng rng(701);
    ParamStore<double> params;
    init_lmc_params(params, 48, rng);
    Graph<double> g(false);
    Bindings<double> b(g, params);
    auto e = build_quality_embedding(b, g.constant(Tensor<double>(Shape{48})), 0.0);
    for (double v : e.value().data()) EXPECT_EQ(v, 0.0);
}

TEST(QualityScalar, ExpectedSeverity) {
    const std::vector<double> zero{1, 0, 0}, top{0, 0, 1}, mixed{0.2, 0.5, 0.3};
    EXPECT_EQ(quality_scalar(zero), 0.0);
    EXPECT_EQ(quality_scalar(top), 1.0);
    EXPECT_NEAR(quality_scalar(mixed), 0.55, 1e-15);
    const std::vector<double> single{1.0};
    EXPECT_THROW(quality_scalar(single), ValidationError);
}

struct QualitySet {
    std::vector<Tensor<double>> images;
    std::vector<int> levels;

    std::vector<QualityExample> examples() const {
        std::vector<QualityExample> out;
        for (std::size_t i = 0; i < images.size(); ++i) out.push_back({&images[i], levels[i]});
        return out;
    }
};

QualitySet make_quality_set(std::size_t bases, std::uint64_t seed) {
    SynthConfig cfg;
    cfg.seed = seed;
    Rng rng(seed);
    QualitySet set;
    for (std::size_t n = 0; n < bases; ++n) {
        const SynthBase base = synth_base(rng, cfg);
        for (const auto* img : {&base.real, &base.forged}) {
            for (int level = 0; level < 3; ++level) {
                const auto degraded = degrade(*img, cfg.levels[std::size_t(level)]);
                set.images.push_back(crop_resize(degraded, expand_box(base.box), 64));
                set.levels.push_back(level);
            }
        }
    }
    return set;
}

TEST(QualityClassifier, LearnsToyLevels) {
    const auto train = make_quality_set(100, 1);
    const auto held = make_quality_set(15, 2);
    QualityTrainOptions opts;
    opts.epochs = 10;
    const auto params = train_quality_classifier(train.examples(), kQualityLevels, opts);
    const double acc = quality_accuracy(params, held.examples());
    EXPECT_GE(acc, 90.0);
    for (const auto& img : held.images) {
        const auto p = quality_probs(params, img);
        double total = 0.0;
        for (double v : p) total += v;
        ASSERT_NEAR(total, 1.0, 1e-9);
    }
}

TEST(QualityClassifier, NeedsTwoLevels) {
    Rng rng(3);
    const auto img = random_tensor(rng, {3, 32, 32}, 0, 1);
    const std::vector<QualityExample> one{{&img, 1}, {&img, 1}};
    EXPECT_THROW(train_quality_classifier(one, kQualityLevels, {}), ValidationError);
    const std::vector<QualityExample> bad{{&img, 0}, {&img, 3}};
    EXPECT_THROW(train_quality_classifier(bad, kQualityLevels, {}), ValidationError);
}

TEST(QualityClassifier, RejectsOddSizes) {
    Rng rng(4);
    ParamStore<double> params;
    init_quality_params(params, kQualityLevels, rng);
    EXPECT_THROW(quality_probs(params, Tensor<double>(Shape{3, 20, 20})), ShapeError);
}

}  // namespace
}  // namespace ggvit

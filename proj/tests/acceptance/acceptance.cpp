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

// Acceptance suite: one PASS/FAIL line per numbered criterion.
//
//   ggvit_acceptance [--only 1,3,5] [--workdir DIR] [--report FILE]
//
// Exit status is 0 when every selected criterion passes.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <numeric>
#include <set>
#include <sstream>

#include "CLI11.hpp"

#include "ggvit/hashing.hpp"
#include "ggvit/model_check.hpp"
#include "ggvit/trainer.hpp"
#include "unit/oracles.hpp"

namespace fs = std::filesystem;

namespace ggvit::acceptance {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(double v, int digits = 3) {
    std::ostringstream os;
    os.setf(std::ios::fixed);
    os.precision(digits);
    os << v;
    return os.str();
}

std::string sci(double v) {
    std::ostringstream os;
    os.setf(std::ios::scientific);
    os.precision(2);
    os << v;
    return os.str();
}

// Collects named checks; the criterion passes when all of them do.
class Checks {
   public:
    void expect(bool ok, const std::string& what) {
        lines_.push_back(std::string(ok ? "ok   " : "FAIL ") + what);
        pass_ = pass_ && ok;
    }
    bool pass() const { return pass_; }
    const std::vector<std::string>& lines() const { return lines_; }

   private:
    bool pass_ = true;
    std::vector<std::string> lines_;
};

Tensor<double> random_tensor(Rng& rng, Shape shape, double lo = -1.0, double hi = 1.0) {
    Tensor<double> t(std::move(shape));
    for (auto& v : t.data()) v = rng.uniform(lo, hi);
    return t;
}

// ------------------------------------------------------------ shared state

struct Shared {
    fs::path workdir;
    std::optional<std::vector<Sample>> corpus;
    std::optional<ParamStore<double>> quality;
    double quality_val_accuracy = 0.0;
    std::map<std::string, PreparedSet> sets;
    // Every stream_proportions row computed by a training criterion.
    std::vector<std::pair<std::string, std::array<double, kStreams>>> proportion_rows;

    const std::vector<Sample>& samples() {
        if (!corpus) {
            const auto t0 = Clock::now();
            corpus = synth_generate(SynthConfig{}, (workdir / "corpus").string());
            std::cout << "  corpus: " << corpus->size() << " images in " << fmt(seconds_since(t0), 1) << " s" << std::endl;
        }
        return *corpus;
    }

    const ParamStore<double>& quality_classifier() {
        if (!quality) {
            const auto t0 = Clock::now();
            const std::size_t side = vit_preset("tiny").image_size;
            std::vector<Tensor<double>> train_img, val_img;
            std::vector<int> train_lvl, val_lvl;
            for (const auto& s : samples()) {
                if (s.split == Split::kTest) continue;
                auto& imgs = s.split == Split::kTrain ? train_img : val_img;
                auto& lvls = s.split == Split::kTrain ? train_lvl : val_lvl;
                imgs.push_back(load_face_crop(s, side));
                lvls.push_back(s.quality);
            }
            std::vector<QualityExample> tr, va;
            for (std::size_t i = 0; i < train_img.size(); ++i) tr.push_back({&train_img[i], train_lvl[i]});
            for (std::size_t i = 0; i < val_img.size(); ++i) va.push_back({&val_img[i], val_lvl[i]});
            quality = train_quality_classifier(tr, kQualityLevels, QualityTrainOptions{});
            quality_val_accuracy = quality_accuracy(*quality, va);
            std::cout << "  quality classifier: " << fmt(quality_val_accuracy, 1) << "% on val in "
                      << fmt(seconds_since(t0), 1) << " s" << std::endl;
        }
        return *quality;
    }

    // split name "train" | "val" | "test", quality -1 for all levels.
    const PreparedSet& set(Split split, int quality_level) {
        const std::string key = std::string(split_name(split)) + "/" + std::to_string(quality_level);
        auto it = sets.find(key);
        if (it == sets.end()) {
            const auto picked = filter_samples(samples(), split,
                                               quality_level < 0 ? std::nullopt : std::optional<int>(quality_level));
            it = sets.emplace(key, prepare_set(picked, vit_preset("tiny").image_size, &quality_classifier())).first;
        }
        return it->second;
    }
};

// ------------------------------------------------------------ criterion 1

Checks gradient_correctness(Shared&) {
    Checks c;
    const auto t0 = Clock::now();
    ModelGradcheckOptions opts;
    opts.preset = "tiny";
    opts.fd.step = 1e-6;
    opts.fd.tol = 1e-4;
    for (const auto& r : gradcheck_model(opts)) {
        const auto& w = r.report.worst();
        c.expect(r.report.pass(), r.loss + ": max rel error " + sci(r.report.max_rel_error) + " < 1e-4 (worst " +
                                      w.name + ", " + std::to_string(r.report.evaluations) + " evaluations)");
    }
    const double secs = seconds_since(t0);
    c.expect(secs < 300.0, "runtime " + fmt(secs, 1) + " s < 300 s");
    return c;
}

// ------------------------------------------------------------ criterion 2

double lmc_value(const Tensor<double>& e, const Tensor<double>& w, const std::vector<int>& y, LmcConfig cfg) {
    Graph<double> g(false);
    return lmc_loss(g.constant(e), g.constant(w), y, cfg).value()[0];
}

Checks lmc_properties(Shared&) {
    Checks c;
    double worst_ce = 0.0, worst_scale = 0.0;
    bool monotone = true;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        Rng rng(seed);
        const std::size_t b = 8;
        auto e = random_tensor(rng, {b, kLmcDim});
        const auto w = random_tensor(rng, {2, kLmcDim});
        std::vector<int> y;
        for (std::size_t i = 0; i < b; ++i) y.push_back(int(rng.below(2)));
        const double s = 1.0 + 3.0 * double(seed);
        worst_ce = std::max(worst_ce, std::abs(lmc_value(e, w, y, {s, 0.0}) - oracle::scaled_cosine_ce(e, w, y, s)));

        auto es = e;
        auto ws = w;
        for (std::size_t i = 0; i < b; ++i) {
            const double k = std::exp(rng.uniform(-4, 4));
            for (std::size_t t = 0; t < kLmcDim; ++t) es[i * kLmcDim + t] *= k;
        }
        for (std::size_t j = 0; j < 2; ++j) {
            const double k = std::exp(rng.uniform(-4, 4));
            for (std::size_t t = 0; t < kLmcDim; ++t) ws[j * kLmcDim + t] *= k;
        }
        worst_scale = std::max(worst_scale, std::abs(lmc_value(es, ws, y, {}) - lmc_value(e, w, y, {})));

        for (std::size_t i = 0; i < b; ++i)
            for (std::size_t t = 0; t < kLmcDim; ++t) e[i * kLmcDim + t] += 2.0 * w[std::size_t(y[i]) * kLmcDim + t];
        double prev = -1.0;
        for (double m : {0.0, 0.1, 0.2, 0.35}) {
            const double v = lmc_value(e, w, y, {30.0, m});
            monotone = monotone && v > prev;
            prev = v;
        }
    }
    c.expect(worst_ce < 1e-9, "(a) m=0 vs cross-entropy of s*cos: max diff " + sci(worst_ce) + " < 1e-9");
    c.expect(monotone, "(b) strictly increasing over m in {0, 0.1, 0.2, 0.35} with the true class as argmax");
    c.expect(worst_scale < 1e-9, "(c) positive rescaling of e*, W*: max diff " + sci(worst_scale) + " < 1e-9");

    Tensor<double> e(Shape{1, kLmcDim}), w(Shape{2, kLmcDim});
    e[0] = 1.0;
    w[0] = 1.0;
    w[kLmcDim + 1] = 1.0;
    const double v0 = lmc_value(e, w, {0}, {1.0, 0.0});
    const double v35 = lmc_value(e, w, {0}, {1.0, 0.35});
    c.expect(std::abs(v0 - std::log1p(std::exp(-1.0))) < 1e-9, "(d) ln(1+e^-1) = " + fmt(v0, 6));
    c.expect(std::abs(v35 - std::log1p(std::exp(-0.65))) < 1e-9, "(d) ln(1+e^-0.65) = " + fmt(v35, 6));
    return c;
}

// ------------------------------------------------------------ criterion 3

Checks guidance_mechanism(Shared&) {
    Checks c;
    Rng rng(3);
    {
        Graph<double> g(false);
        const auto q = random_tensor(rng, {3, 64, 64}, -2, 2);
        auto out = inject(g.constant(q), guidance_image(g.constant(Tensor<double>(Shape{48})), 64));
        c.expect(out.value() == q, "zero-embedding injection returns the quadrant bit-exactly");
    }
    bool exact = true;
    for (const auto [d, side] : {std::pair<std::size_t, std::size_t>{48, 64}, {48, 32}, {768, 224}, {12, 8}}) {
        Graph<double> g(false);
        const std::size_t gs = guidance_grid_side(d);
        const auto e = random_tensor(rng, {d});
        const auto grid = embed_to_grid(g.constant(e), gs).value();
        for (std::size_t i = 0; i < d; ++i) exact = exact && grid[i] == e[i];
        exact = exact && guidance_image(g.constant(e), side).value() == oracle::guidance(e, gs, side);
    }
    c.expect(exact, "reshape and tile match the index-arithmetic oracle bit-exactly");
    double worst = 0.0;
    for (int t = 0; t < 20; ++t) {
        Graph<double> g(false);
        const auto e1 = random_tensor(rng, {48}), e2 = random_tensor(rng, {48});
        const double a = rng.uniform(-3, 3), b = rng.uniform(-3, 3);
        Tensor<double> mix(Shape{48});
        for (std::size_t i = 0; i < 48; ++i) mix[i] = a * e1[i] + b * e2[i];
        const auto f1 = guidance_image(g.constant(e1), 64).value();
        const auto f2 = guidance_image(g.constant(e2), 64).value();
        const auto fm = guidance_image(g.constant(mix), 64).value();
        for (std::size_t i = 0; i < fm.size(); ++i) worst = std::max(worst, std::abs(fm[i] - (a * f1[i] + b * f2[i])));
    }
    c.expect(worst < 1e-12, "tile(reshape(.)) linearity: max diff " + sci(worst) + " < 1e-12");
    c.expect(guidance_grid_side(768) == 16 && guidance_grid_side(48) == 4, "768 -> 16 and 48 -> 4");
    bool rejects = true;
    for (std::size_t d : {64u, 47u, 301u, 0u}) {
        try {
            guidance_grid_side(d);
            rejects = false;
        } catch (const ValidationError&) {
        }
    }
    c.expect(rejects, "widths other than 3*G^2 are rejected");
    return c;
}

// ------------------------------------------------------------ criterion 4

Checks gat_fusion(Shared&) {
    Checks c;
    double worst = 0.0, simplex = 0.0;
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        Rng rng(seed);
        ParamStore<double> p;
        init_fusion_params(p, rng);
        for (std::size_t i = 0; i < p.size(); ++i)
            for (auto& v : p.at(i).data()) v *= 1.0 + double(seed % 5);
        oracle::Nodes x;
        Tensor<double> t(Shape{kStreams, 2});
        for (std::size_t j = 0; j < kStreams; ++j) {
            x[j][0] = rng.uniform();
            x[j][1] = 1.0 - x[j][0];
            t[2 * j] = x[j][0];
            t[2 * j + 1] = x[j][1];
        }
        const std::string unit = "fab.gat" + std::to_string(seed % kStreams) + ".";
        Graph<double> g(false);
        Bindings<double> b(g, p);
        const auto got = gat_refine(b, unit, g.constant(t));
        const auto want = oracle::gat(p, unit, x);
        double total = 0.0;
        for (std::size_t k = 0; k < 2; ++k) worst = std::max(worst, std::abs(got.refined.value()[k] - want.refined[k]));
        for (std::size_t j = 0; j < kStreams; ++j) {
            worst = std::max(worst, std::abs(got.attention.value()[j] - want.alpha[j]));
            total += got.attention.value()[j];
        }
        simplex = std::max(simplex, std::abs(total - 1.0));
    }
    c.expect(worst < 1e-9, "gat_refine vs double-loop oracle over 50 seeds: max diff " + sci(worst) + " < 1e-9");
    c.expect(simplex < 1e-9, "attention sums to 1: max deviation " + sci(simplex));

    Rng rng(99);
    ParamStore<double> p;
    init_fusion_params(p, rng);
    {
        Graph<double> g(false);
        Bindings<double> b(g, p);
        Tensor<double> same(Shape{kStreams, 2});
        for (std::size_t j = 0; j < kStreams; ++j) {
            same[2 * j] = 0.35;
            same[2 * j + 1] = 0.65;
        }
        double dev = 0.0;
        for (std::size_t k = 0; k < kStreams; ++k) {
            const auto a = gat_refine(b, "fab.gat" + std::to_string(k) + ".", g.constant(same)).attention.value();
            for (double v : a.data()) dev = std::max(dev, std::abs(v - 0.2));
        }
        c.expect(dev < 1e-12, "identical inputs give alpha = 1/5 each (max deviation " + sci(dev) + ")");
    }
    bool slots = true;
    {
        std::vector<Tensor<double>> probs;
        for (std::size_t k = 0; k < kStreams; ++k) {
            const double r = rng.uniform();
            probs.push_back(Tensor<double>(Shape{2}, {r, 1.0 - r}));
        }
        for (std::size_t slot = 0; slot < 2 * kStreams; ++slot) {
            p.get("fab.final.w").fill(0.0);
            p.get("fab.final.w")[slot * 2 + 1] = 1.0;
            p.get("fab.final.b").fill(0.0);
            Graph<double> g(false);
            Bindings<double> b(g, p);
            std::vector<Var<double>> vars;
            for (const auto& t : probs) vars.push_back(g.constant(t));
            const auto out = fuse<double>(b, vars);
            const std::size_t k = slot / 2;
            oracle::Nodes ordered;
            ordered[0] = {probs[k][0], probs[k][1]};
            std::size_t n = 1;
            for (std::size_t j = 0; j < kStreams; ++j)
                if (j != k) ordered[n++] = {probs[j][0], probs[j][1]};
            const double want = oracle::gat(p, "fab.gat" + std::to_string(k) + ".", ordered).refined[slot % 2];
            slots = slots && out.final_logits.value()[1] == out.fusion.value()[slot] &&
                    std::abs(out.fusion.value()[slot] - want) < 1e-12 && out.final_logits.value()[0] == 0.0;
        }
    }
    c.expect(slots, "one-hot head weights read slot 2k+c from stream k's unit");
    return c;
}

// ------------------------------------------------------------ criterion 5

Checks preprocessing_geometry(Shared&) {
    Checks c;
    const FaceBox e = expand_box({10, 20, 50, 80});
    const double dev = std::max({std::abs(e.x + 9), std::abs(e.y - 16), std::abs(e.w - 88), std::abs(e.h - 88)});
    c.expect(dev < 1e-12, "expand_box(10,20,50,80) = (" + fmt(e.x, 2) + "," + fmt(e.y, 2) + "," + fmt(e.w, 2) + "," +
                              fmt(e.h, 2) + ")");
    Rng rng(5);
    const auto whole = random_tensor(rng, {3, 64, 64}, 0, 1);
    Tensor<double> rebuilt(whole.shape(), -1.0);
    for (std::size_t k = 0; k < 4; ++k) {
        const auto part = quadrant_slice(whole, k);
        const auto [r0, c0] = quadrant_origin(k, 64);
        for (std::size_t ch = 0; ch < 3; ++ch)
            for (std::size_t i = 0; i < 32; ++i)
                for (std::size_t j = 0; j < 32; ++j) {
                    auto& dst = rebuilt[(ch * 64 + r0 + i) * 64 + c0 + j];
                    if (dst != -1.0) dst = -2.0;
                    else dst = part[(ch * 32 + i) * 32 + j];
                }
    }
    c.expect(rebuilt == whole, "quadrants tile the crop exactly once and reassemble it bit-exactly");
    const auto frame = random_tensor(rng, {3, 90, 100}, 0, 1);
    const auto crop = crop_resize(frame, {11, 7, 64, 64}, 64);
    bool same = true;
    for (std::size_t ch = 0; ch < 3; ++ch)
        for (std::size_t y = 0; y < 64; ++y)
            for (std::size_t x = 0; x < 64; ++x) same = same && crop[(ch * 64 + y) * 64 + x] == frame[(ch * 90 + y + 7) * 100 + x + 11];
    c.expect(same, "aligned crop is an identity copy");
    const auto serialize = [](const StreamSet<double>& s) {
        std::ostringstream os;
        for (std::size_t k = 0; k < kStreams; ++k) write_ggt1(os, s.stream(k));
        return os.str();
    };
    const FaceBox box{23.5, 17.25, 41.0, 47.5};
    const std::string a = serialize(preprocess_face(frame, box, 64));
    const std::string b = serialize(preprocess_face(frame, box, 64));
    c.expect(a == b, "full pipeline output is byte-identical across runs (sha256 " + sha256_hex(a).substr(0, 12) + ")");
    return c;
}

// ------------------------------------------------------------ criteria 6 and 7

template <typename T>
std::array<double, kStreams> shares_of(const ParamStore<T>& params, const ModelConfig& cfg, const PreparedSet& set,
                                       EvalResult* out) {
    *out = evaluate(params, cfg, set);
    return stream_proportions(fusion_tensors(*out));
}

Checks end_to_end_training(Shared& sh) {
    Checks c;
    const auto t0 = Clock::now();
    const auto& train_set = sh.set(Split::kTrain, -1);
    std::array<std::size_t, 6> cell{};
    for (std::size_t i = 0; i < train_set.size(); ++i) ++cell[std::size_t(train_set.levels[i] * 2 + train_set.labels[i])];
    const bool balanced = *std::min_element(cell.begin(), cell.end()) == *std::max_element(cell.begin(), cell.end());
    c.expect(train_set.size() >= 1200 && balanced,
             std::to_string(train_set.size()) + " training images, balanced over 2 labels x 3 qualities");

    TrainConfig cfg;
    cfg.model = model_config_for("tiny");
    cfg.epochs = 10;
    cfg.dtype = "f32";
    cfg.seed = 0;
    const auto r = train<float>(cfg, train_set, sh.set(Split::kVal, -1), {[](const StepLog&) {},
                                                                        [](const EpochLog& e) {
                                                                            std::cout << "  epoch " << e.epoch << ": loss "
                                                                                      << fmt(e.mean_loss) << ", val "
                                                                                      << fmt(e.val_accuracy, 1) << "%" << std::endl;
                                                                        }});
    for (int q = 0; q < 3; ++q) {
        EvalResult tr, te;
        shares_of(r.best_params, cfg.model, sh.set(Split::kTrain, q), &tr);
        const auto shares = shares_of(r.best_params, cfg.model, sh.set(Split::kTest, q), &te);
        sh.proportion_rows.push_back({"mixed/" + quality_name(q), shares});
        c.expect(tr.accuracy >= 90.0, "train accuracy at " + quality_name(q) + ": " + fmt(tr.accuracy, 2) + "% >= 90%");
        c.expect(te.accuracy >= 80.0, "held-out accuracy at " + quality_name(q) + ": " + fmt(te.accuracy, 2) + "% >= 80%");
    }
    const double secs = seconds_since(t0);
    c.expect(secs < 900.0, "best epoch " + std::to_string(r.best_epoch) + ", runtime " + fmt(secs, 1) + " s < 900 s");
    return c;
}

double median3(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    return v[v.size() / 2];
}

Checks cross_quality_direction(Shared& sh) {
    Checks c;
    std::vector<double> on, off;
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
        for (const GuidanceMode mode : {GuidanceMode::kOn, GuidanceMode::kOff}) {
            TrainConfig cfg;
            cfg.model = model_config_for("tiny");
            cfg.model.guidance = mode;
            cfg.epochs = 8;
            cfg.dtype = "f32";
            cfg.seed = seed;
            const auto r = train<float>(cfg, sh.set(Split::kTrain, 0), sh.set(Split::kVal, 0));
            EvalResult ev;
            const auto shares = shares_of(r.best_params, cfg.model, sh.set(Split::kTest, 2), &ev);
            sh.proportion_rows.push_back({"q0/q2 seed " + std::to_string(seed) + " guidance " +
                                              std::string(guidance_mode_name(mode)),
                                          shares});
            (mode == GuidanceMode::kOn ? on : off).push_back(ev.accuracy);
            std::cout << "  seed " << seed << " guidance " << guidance_mode_name(mode) << ": q0 -> q2 "
                      << fmt(ev.accuracy, 2) << "%" << std::endl;
        }
    }
    const auto list = [](const std::vector<double>& v) {
        std::string s;
        for (double x : v) s += (s.empty() ? "" : ", ") + fmt(x, 2);
        return s;
    };
    c.expect(median3(on) >= median3(off), "median q0 -> q2 accuracy with guidance " + fmt(median3(on), 2) + "% [" +
                                              list(on) + "] >= without " + fmt(median3(off), 2) + "% [" + list(off) +
                                              "]");
    return c;
}

// ------------------------------------------------------------ criterion 8

Checks proportions_report(Shared& sh) {
    Checks c;
    using Fusion = std::array<double, 2 * kStreams>;
    Fusion onehot{};
    onehot[1] = -0.8;
    const std::vector<Fusion> one{onehot};
    const auto p1 = stream_proportions(one);
    c.expect(p1 == std::array<double, kStreams>{100, 0, 0, 0, 0}, "one-hot slot gives 100/0/0/0/0");
    Fusion flat;
    flat.fill(0.3);
    flat[3] = -0.3;
    const std::vector<Fusion> uni{flat};
    const auto p2 = stream_proportions(uni);
    double dev = 0.0;
    for (double v : p2) dev = std::max(dev, std::abs(v - 20.0));
    c.expect(dev < 1e-12, "equal magnitudes give 20% each");
    c.expect(proportions_csv_header() == "train/test,X0,X1,X2,X3,X4\n", "CSV columns train/test,X0..X4");

    if (sh.proportion_rows.empty()) {
        const auto cfg = model_config_for("tiny");
        const auto params = init_model_params<float>(cfg, 0);
        EvalResult ev;
        sh.proportion_rows.push_back({"untrained/q1", shares_of(params, cfg, sh.set(Split::kTest, 1), &ev)});
    }
    std::string csv = proportions_csv_header();
    double worst = 0.0;
    bool in_range = true;
    for (const auto& [name, shares] : sh.proportion_rows) {
        double total = 0.0;
        for (double s : shares) {
            total += s;
            in_range = in_range && s >= 0.0 && s <= 100.0;
        }
        worst = std::max(worst, std::abs(total - 100.0));
        csv += proportions_csv_row(name, shares);
    }
    c.expect(worst <= 0.1 && in_range, std::to_string(sh.proportion_rows.size()) +
                                           " evaluated runs sum to 100 within " + sci(worst) + " (<= 0.1)");
    std::ofstream(sh.workdir / "proportions.csv") << csv;
    std::cout << csv;
    return c;
}

// ------------------------------------------------------------ criterion 9

Checks determinism(Shared& sh) {
    Checks c;
    SynthConfig small;
    small.train_bases = 6;
    small.val_bases = 2;
    small.test_bases = 4;
    small.seed = 11;
    const fs::path a = sh.workdir / "det_a", b = sh.workdir / "det_b";
    const auto samples = synth_generate(small, (a / "corpus").string());
    synth_generate(small, (b / "corpus").string());
    const std::string ha = sha256_tree((a / "corpus").string()), hb = sha256_tree((b / "corpus").string());
    c.expect(ha == hb, "synth corpus hash " + ha.substr(0, 12) + " == " + hb.substr(0, 12));

    const std::size_t side = vit_preset("tiny").image_size;
    const auto train_set = prepare_set(filter_samples(samples, Split::kTrain, std::nullopt), side, nullptr);
    const auto test_set = prepare_set(filter_samples(samples, Split::kTest, std::nullopt), side, nullptr);
    TrainConfig cfg;
    cfg.model = model_config_for("tiny");
    cfg.model.iqb = false;
    cfg.epochs = 1;
    cfg.dtype = "f64";
    cfg.seed = 4;
    std::vector<std::string> ckpt_hash, report_hash;
    for (const fs::path& dir : {a, b}) {
        const auto r = train<double>(cfg, train_set, {});
        save_model((dir / "model.ckpt").string(), r.final_params, cfg.model, {{"seed", cfg.seed}});
        ckpt_hash.push_back(sha256_file((dir / "model.ckpt").string()));
        ModelConfig loaded;
        const auto params = load_model((dir / "model.ckpt").string(), &loaded);
        const auto ev = evaluate(params, loaded, test_set, 1);
        EvalMatrix m{};
        m[0][0] = ev.accuracy;
        std::ofstream report(dir / "report.txt");
        report << eval_matrix_csv(m) << proportions_csv_header()
               << proportions_csv_row("q0/q0", stream_proportions(fusion_tensors(ev)));
        for (const auto& p : ev.predictions) report << fmt(p.probs[0], 17) << "," << p.predicted << "\n";
        report.close();
        report_hash.push_back(sha256_file((dir / "report.txt").string()));
    }
    c.expect(ckpt_hash[0] == ckpt_hash[1], "64-bit checkpoints byte-identical (" + ckpt_hash[0].substr(0, 12) + ")");
    c.expect(report_hash[0] == report_hash[1], "evaluation reports byte-identical (" + report_hash[0].substr(0, 12) + ")");
    return c;
}

struct Criterion {
    int id;
    std::string title;
    std::function<Checks(Shared&)> run;
};

}  // namespace ggvit::acceptance

int main(int argc, char** argv) {
    using namespace ggvit::acceptance;
    CLI::App app{"GGViT acceptance suite"};
    std::vector<int> only;
    std::string workdir, report_path;
    app.add_option("--only", only, "Criteria to run (default: all)")->delimiter(',');
    app.add_option("--workdir", workdir, "Scratch directory (default: a fresh temp dir)");
    app.add_option("--report", report_path, "Also write the summary to this file");
    CLI11_PARSE(app, argc, argv);

    const std::vector<Criterion> all{
        {1, "gradient correctness", gradient_correctness},
        {2, "LMC properties", lmc_properties},
        {3, "guidance mechanism", guidance_mechanism},
        {4, "GAT fusion", gat_fusion},
        {5, "preprocessing geometry", preprocessing_geometry},
        {6, "end-to-end toy training", end_to_end_training},
        {7, "cross-quality direction", cross_quality_direction},
        {8, "proportions report", proportions_report},
        {9, "determinism", determinism},
    };

    Shared shared;
    const bool temp = workdir.empty();
    shared.workdir = temp ? fs::temp_directory_path() / ("ggvit_acceptance_" + std::to_string(::getpid()))
                          : fs::path(workdir);
    fs::create_directories(shared.workdir);

    std::ostringstream summary;
    int failed = 0, ran = 0;
    for (const auto& cr : all) {
        if (!only.empty() && std::find(only.begin(), only.end(), cr.id) == only.end()) continue;
        ++ran;
        std::cout << "== criterion " << cr.id << ": " << cr.title << "\n" << std::flush;
        const auto t0 = Clock::now();
        Checks checks;
        try {
            checks = cr.run(shared);
        } catch (const std::exception& e) {
            checks.expect(false, std::string("exception: ") + e.what());
        }
        for (const auto& l : checks.lines()) std::cout << "    " << l << "\n";
        std::ostringstream verdict;
        verdict << "criterion " << cr.id << " (" << cr.title << "): " << (checks.pass() ? "PASS" : "FAIL") << "  ["
                << fmt(seconds_since(t0), 1) << " s]\n";
        std::cout << verdict.str() << std::flush;
        summary << verdict.str();
        if (!checks.pass()) ++failed;
    }
    summary << "acceptance: " << ran - failed << "/" << ran << " criteria passed\n";
    std::cout << "\n" << summary.str();
    if (!report_path.empty()) std::ofstream(report_path) << summary.str();
    if (temp) fs::remove_all(shared.workdir);
    return failed == 0 ? 0 : 1;
}

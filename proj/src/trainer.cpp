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

#include "ggvit/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <iomanip>
#include <sstream>
#include <thread>

namespace ggvit {

void TrainConfig::validate() const {
    model.validate();
    if (epochs == 0) throw ValidationError("epochs must be >= 1");
    if (batch_size == 0) throw ValidationError("batch size must be >= 1");
    if (!(lr > 0)) throw ValidationError("learning rate must be positive");
    if (!(momentum >= 0 && momentum < 1)) throw ValidationError("momentum must lie in [0, 1)");
    if (!(weight_decay >= 0)) throw ValidationError("weight decay must be >= 0");
    if (!(clip_norm >= 0)) throw ValidationError("clip norm must be >= 0");
    if (dtype != "f32" && dtype != "f64") throw ValidationError("dtype must be f32 or f64");
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
    j = nlohmann::json{{"model", c.model},   {"epochs", c.epochs}, {"batch_size", c.batch_size},
                       {"lr", c.lr},         {"momentum", c.momentum}, {"weight_decay", c.weight_decay},
                       {"clip_norm", c.clip_norm}, {"seed", c.seed},     {"dtype", c.dtype}};
}

void to_json(nlohmann::json& j, const StepLog& s) {
    j = nlohmann::json{{"step", s.step},
                       {"epoch", s.epoch},
                       {"l_vit", s.loss.l_vit},
                       {"l_lmc", s.loss.l_lmc},
                       {"l_fusion", s.loss.l_fusion},
                       {"total", s.loss.total},
                       {"clamp_count", s.clamp_count}};
}

void to_json(nlohmann::json& j, const EpochLog& e) {
    j = nlohmann::json{{"epoch", e.epoch},
                       {"mean_loss", e.mean_loss},
                       {"train_accuracy", e.train_accuracy},
                       {"val_accuracy", e.val_accuracy},
                       {"best", e.best}};
}

PreparedSet prepare_set(const std::vector<Sample>& samples, std::size_t side,
                        const ParamStore<double>* quality_classifier) {
    PreparedSet set;
    set.crops.reserve(samples.size());
    for (const auto& s : samples) {
        set.crops.push_back(load_face_crop(s, side));
        set.quality_scalar.push_back(quality_classifier ? quality_scalar(quality_probs(*quality_classifier, set.crops.back()))
                                                        : 0.0);
        set.labels.push_back(s.label);
        set.levels.push_back(s.quality);
    }
    return set;
}

PreparedSet select_quality(const PreparedSet& set, int level) {
    PreparedSet out;
    for (std::size_t i = 0; i < set.size(); ++i) {
        if (set.levels[i] != level) continue;
        out.crops.push_back(set.crops[i]);
        out.quality_scalar.push_back(set.quality_scalar[i]);
        out.labels.push_back(set.labels[i]);
        out.levels.push_back(set.levels[i]);
    }
    return out;
}

namespace {

template <typename T>
std::vector<StreamSet<T>> build_streams(const PreparedSet& set, std::span<const std::size_t> idx) {
    std::vector<StreamSet<T>> out;
    out.reserve(idx.size());
    for (std::size_t i : idx) {
        if constexpr (std::is_same_v<T, double>) {
            out.push_back(split_quadrants(set.crops[i]));
        } else {
            out.push_back(split_quadrants(set.crops[i]).template cast<T>());
        }
    }
    return out;
}

template <typename T>
std::vector<ModelInput<T>> build_inputs(const PreparedSet& set, std::span<const std::size_t> idx,
                                        const std::vector<StreamSet<T>>& streams) {
    std::vector<ModelInput<T>> in;
    for (std::size_t b = 0; b < idx.size(); ++b) in.push_back({&streams[b], set.quality_scalar[idx[b]], set.labels[idx[b]]});
    return in;
}

int argmax2(const std::array<double, 2>& p) { return p[1] > p[0] ? 1 : 0; }

}  // namespace

template <typename T>
double clip_gradients(std::vector<Tensor<T>>& grads, double max_norm) {
    double sq = 0.0;
    for (const auto& t : grads)
        for (T v : t.data()) sq += double(v) * double(v);
    const double norm = std::sqrt(sq);
    if (max_norm > 0 && norm > max_norm) {
        const T f = T(max_norm / norm);
        for (auto& t : grads)
            for (T& v : t.data()) v *= f;
    }
    return norm;
}

template <typename T>
TrainResult<T> train(const TrainConfig& cfg, const PreparedSet& train_set, const PreparedSet& val_set,
                     const TrainCallbacks& cb, std::optional<ParamStore<T>> init) {
    cfg.validate();
    if (train_set.size() == 0) throw ValidationError("training set is empty");
    TrainResult<T> res;
    ParamStore<T> params = init ? std::move(*init) : init_model_params<T>(cfg.model, cfg.seed);
    Sgd<T> sgd(cfg.lr, cfg.momentum, cfg.weight_decay);
    std::size_t step = 0;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        const auto batches = make_batches(train_set.size(), cfg.batch_size, cfg.seed, epoch, true);
        double loss_sum = 0.0;
        std::size_t correct = 0;
        for (const auto& idx : batches) {
            const auto streams = build_streams<T>(train_set, idx);
            const auto inputs = build_inputs<T>(train_set, idx, streams);
            Graph<T> g;
            Bindings<T> b(g, params);
            BatchResult<T> br;
            try {
                br = batch_loss<T>(b, cfg.model, inputs);
                if (!std::isfinite(br.breakdown.total)) throw NumericError("loss is not finite");
                g.backward(br.loss);
            } catch (const NumericError& e) {
                throw NumericError("training diverged at step " + std::to_string(step) + " (epoch " +
                                   std::to_string(epoch) + "): " + e.what());
            }
            auto grads = b.gradients();
            clip_gradients(grads, cfg.clip_norm);
            sgd.step(params, grads);
            for (std::size_t i = 0; i < idx.size(); ++i)
                if (argmax2(br.probs[i]) == train_set.labels[idx[i]]) ++correct;
            loss_sum += br.breakdown.total * double(idx.size());
            if (cb.on_step) cb.on_step({step, epoch, br.breakdown, g.clamp_count()});
            ++step;
        }
        EpochLog log;
        log.epoch = epoch;
        log.mean_loss = loss_sum / double(train_set.size());
        log.train_accuracy = 100.0 * double(correct) / double(train_set.size());
        log.val_accuracy = val_set.size() ? evaluate(params, cfg.model, val_set).accuracy : 0.0;
        if (val_set.size() == 0 || log.val_accuracy > res.best_val_accuracy) {
            log.best = true;
            res.best_val_accuracy = log.val_accuracy;
            res.best_epoch = epoch;
            res.best_params = params;
        }
        res.epochs.push_back(log);
        if (cb.on_epoch) cb.on_epoch(log);
    }
    res.final_params = std::move(params);
    return res;
}

std::size_t eval_threads() {
    if (const char* env = std::getenv("GGVIT_THREADS")) {
        char* end = nullptr;
        const long v = std::strtol(env, &end, 10);
        if (end != env && *end == '\0' && v >= 1) return std::size_t(v);
        throw ValidationError("GGVIT_THREADS must be a positive integer");
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

template <typename T>
EvalResult evaluate(const ParamStore<T>& params, const ModelConfig& cfg, const PreparedSet& set, std::size_t threads) {
    cfg.validate();
    EvalResult res;
    res.predictions.resize(set.size());
    if (set.size() == 0) return res;
    const std::size_t workers = std::min(set.size(), threads ? threads : eval_threads());

    const auto work = [&](std::size_t worker) {
        for (std::size_t i = worker; i < set.size(); i += workers) {
            const std::size_t idx[1] = {i};
            const auto streams = build_streams<T>(set, idx);
            Graph<T> g(false);
            Bindings<T> b(g, params);
            const auto f = forward_sample(b, cfg, ModelInput<T>{&streams[0], set.quality_scalar[i], set.labels[i]});
            Prediction& p = res.predictions[i];
            p.probs = {double(f.final_probs.value()[0]), double(f.final_probs.value()[1])};
            p.predicted = argmax2(p.probs);
            p.label = set.labels[i];
            for (std::size_t k = 0; k < p.fusion.size(); ++k) p.fusion[k] = double(f.fusion.value()[k]);
        }
    };
    if (workers <= 1) {
        work(0);
    } else {
        std::vector<std::thread> pool;
        std::vector<std::exception_ptr> errors(workers);
        for (std::size_t w = 0; w < workers; ++w) {
            pool.emplace_back([&, w] {
                try {
                    work(w);
                } catch (...) {
                    errors[w] = std::current_exception();
                }
            });
        }
        for (auto& t : pool) t.join();
        for (auto& e : errors)
            if (e) std::rethrow_exception(e);
    }
    std::size_t correct = 0;
    for (const auto& p : res.predictions) correct += p.predicted == p.label ? 1 : 0;
    res.accuracy = 100.0 * double(correct) / double(set.size());
    return res;
}

std::vector<std::array<double, 2 * kStreams>> fusion_tensors(const EvalResult& r) {
    std::vector<std::array<double, 2 * kStreams>> out;
    for (const auto& p : r.predictions) out.push_back(p.fusion);
    return out;
}

namespace {

std::string fixed2(double v) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(2) << v;
    return os.str();
}

}  // namespace

std::string eval_matrix_csv(const EvalMatrix& m) {
    std::string out = "train\\test";
    for (std::size_t j = 0; j < kQualityLevels; ++j) out += "," + quality_name(int(j));
    out += "\n";
    for (std::size_t i = 0; i < kQualityLevels; ++i) {
        out += quality_name(int(i));
        for (std::size_t j = 0; j < kQualityLevels; ++j) out += "," + fixed2(m[i][j]);
        out += "\n";
    }
    return out;
}

nlohmann::json eval_matrix_json(const EvalMatrix& m) {
    nlohmann::json j;
    for (std::size_t i = 0; i < kQualityLevels; ++i)
        for (std::size_t k = 0; k < kQualityLevels; ++k) j[quality_name(int(i))][quality_name(int(k))] = m[i][k];
    return j;
}

std::string proportions_csv_header() { return "train/test,X0,X1,X2,X3,X4\n"; }

std::string proportions_csv_row(const std::string& pair, const std::array<double, kStreams>& shares) {
    std::string out = pair;
    for (double s : shares) out += "," + fixed2(s);
    return out + "\n";
}

template <typename T>
void save_model(const std::string& path, const ParamStore<T>& params, const ModelConfig& cfg,
                const nlohmann::json& extra) {
    nlohmann::json meta{{"kind", "ggvit-model"}, {"model", cfg}};
    if (!extra.is_null()) meta["extra"] = extra;
    save_checkpoint(path, params, meta);
}

ParamStore<double> load_model(const std::string& path, ModelConfig* cfg_out, const ModelConfig* expected) {
    nlohmann::json meta;
    ParamStore<double> params = load_checkpoint<double>(path, &meta);
    if (!meta.contains("kind") || meta["kind"] != "ggvit-model") {
        throw ValidationError(path + " is not a model checkpoint");
    }
    const ModelConfig cfg = meta.at("model").get<ModelConfig>();
    if (expected) {
        if (expected->preset != cfg.preset || !(expected->vit == cfg.vit)) {
            throw ValidationError("checkpoint " + path + " holds preset '" + cfg.preset + "', expected '" +
                                  expected->preset + "'");
        }
    }
    const ParamStore<double> fresh = init_model_params<double>(cfg, 0);
    if (fresh.size() != params.size()) throw ValidationError("checkpoint " + path + " has an unexpected layout");
    for (std::size_t i = 0; i < fresh.size(); ++i) {
        if (fresh.name(i) != params.name(i) || fresh.at(i).shape() != params.at(i).shape()) {
            throw ValidationError("checkpoint " + path + " has an unexpected tensor '" + params.name(i) + "'");
        }
    }
    if (cfg_out) *cfg_out = cfg;
    return params;
}

#define GGVIT_INSTANTIATE_TRAINER(T)                                                                       \
    template TrainResult<T> train(const TrainConfig&, const PreparedSet&, const PreparedSet&,               \
                                  const TrainCallbacks&, std::optional<ParamStore<T>>);                     \
    template double clip_gradients(std::vector<Tensor<T>>&, double);                                     \
    template EvalResult evaluate(const ParamStore<T>&, const ModelConfig&, const PreparedSet&, std::size_t); \
    template void save_model(const std::string&, const ParamStore<T>&, const ModelConfig&, const nlohmann::json&);

GGVIT_INSTANTIATE_TRAINER(float)
GGVIT_INSTANTIATE_TRAINER(double)

}  // namespace ggvit

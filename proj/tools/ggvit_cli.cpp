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

// ggvit: dataset synthesis, preprocessing, training, evaluation and reports.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "ggvit/data.hpp"
#include "ggvit/error.hpp"
#include "ggvit/hashing.hpp"
#include "ggvit/model_check.hpp"
#include "ggvit/quality.hpp"
#include "ggvit/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace ggvit::cli {

enum Exit { kOk = 0, kValidation = 1, kUsage = 2, kIo = 3, kNumeric = 4, kCheckFailed = 5, kInternal = 6 };

struct CheckFailed : Error {
    using Error::Error;
};

// ---------------------------------------------------------------- config files

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

bool has_flag(const std::vector<std::string>& args, const std::string& flag) {
    return std::any_of(args.begin(), args.end(),
                       [&](const std::string& a) { return a == flag || a.starts_with(flag + "="); });
}

// Replaces "--config FILE" with the file's key=value pairs as flags. Keys
// already given on the command line are skipped; '#' starts a comment.
std::vector<std::string> expand_config(std::vector<std::string> args) {
    std::string path;
    for (std::size_t i = 0; i < args.size(); ++i) {
        if (args[i] == "--config" && i + 1 < args.size()) {
            path = args[i + 1];
            args.erase(args.begin() + long(i), args.begin() + long(i) + 2);
            break;
        }
        if (args[i].starts_with("--config=")) {
            path = args[i].substr(9);
            args.erase(args.begin() + long(i));
            break;
        }
    }
    if (path.empty()) return args;
    std::ifstream in(path);
    if (!in) throw IoError("cannot read config file " + path);
    std::vector<std::string> extra;
    std::string line;
    for (std::size_t lineno = 1; std::getline(in, line); ++lineno) {
        const std::string body = trim(line.substr(0, line.find('#')));
        if (body.empty()) continue;
        const auto eq = body.find('=');
        const std::string key = eq == std::string::npos ? "" : trim(body.substr(0, eq));
        if (key.empty() || key.starts_with("-")) {
            throw ValidationError(path + ":" + std::to_string(lineno) + ": expected key = value");
        }
        if (key == "config") throw ValidationError(path + ":" + std::to_string(lineno) + ": config files do not nest");
        if (has_flag(args, "--" + key) || has_flag(extra, "--" + key)) continue;
        extra.push_back("--" + key);
        extra.push_back(trim(body.substr(eq + 1)));
    }
    args.insert(args.end(), extra.begin(), extra.end());
    return args;
}

// ---------------------------------------------------------------- provenance

std::string option_value(const CLI::Option* o) {
    const auto& r = o->results();
    if (r.empty()) return o->get_default_str();
    std::string out;
    for (std::size_t i = 0; i < r.size(); ++i) out += (i ? "," : "") + r[i];
    return out;
}

ordered_json resolved_options(const CLI::App* sub) {
    ordered_json j = ordered_json::object();
    for (const CLI::Option* o : sub->get_options()) {
        const std::string name = o->get_single_name();
        if (name.empty() || name == "help" || name == "help-all" || name == "config" || name == "out") continue;
        if (o->get_expected_min() == 0) {
            j[name] = o->count() > 0;
        } else {
            j[name] = option_value(o);
        }
    }
    return j;
}

std::string manifest_content_hash(const std::string& manifest, const std::vector<Sample>& samples) {
    std::string lines = "manifest " + sha256_file(manifest) + "\n";
    for (const auto& s : samples) lines += sha256_file(s.path) + " " + fs::path(s.path).filename().string() + "\n";
    return sha256_hex(lines);
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot write " + path.string());
    os << text;
    if (!os) throw IoError("write failed for " + path.string());
}

std::string read_text(const fs::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot read " + path.string());
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

void write_json(const fs::path& path, const ordered_json& j) { write_text(path, j.dump(2) + "\n"); }

void make_run_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create run directory " + dir.string() + ": " + ec.message());
}

// Written last into every run directory.
void write_run_record(const fs::path& dir, const CLI::App* sub, const ordered_json& resolved, std::uint64_t seed,
                      const ordered_json& inputs) {
    ordered_json j;
    j["command"] = sub->get_name();
    j["options"] = resolved_options(sub);
    j["resolved"] = resolved;
    j["seed"] = seed;
    j["inputs"] = inputs;
    write_json(dir / "run.json", j);
}

// ---------------------------------------------------------------- helpers

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

std::optional<int> parse_quality_filter(const std::string& q) {
    if (q == "all") return std::nullopt;
    return parse_quality(q);
}

void save_quality_classifier(const std::string& path, const ParamStore<double>& params, std::size_t side,
                             double val_accuracy) {
    save_checkpoint(path, params,
                    json{{"kind", "ggvit-quality"}, {"levels", kQualityLevels}, {"side", side},
                         {"val_accuracy", val_accuracy}});
}

ParamStore<double> load_quality_classifier(const std::string& path, std::size_t side) {
    json meta;
    ParamStore<double> p = load_checkpoint<double>(path, &meta);
    if (meta.value("kind", "") != "ggvit-quality") throw ValidationError(path + " is not a quality classifier");
    if (meta.at("side").get<std::size_t>() != side) {
        throw ValidationError("quality classifier " + path + " was trained at side " +
                              std::to_string(meta.at("side").get<std::size_t>()) + ", model needs " +
                              std::to_string(side));
    }
    return p;
}

struct QualitySource {
    std::string path;
    std::optional<ParamStore<double>> params;
};

QualitySource quality_source(const std::string& path, const ModelConfig& cfg) {
    QualitySource q{path, std::nullopt};
    if (cfg.iqb) {
        if (path.empty()) throw ValidationError("--quality-ckpt is required when the IQB branch is on");
        q.params = load_quality_classifier(path, cfg.vit.image_size);
    }
    return q;
}

PreparedSet prepare(const std::vector<Sample>& samples, const ModelConfig& cfg, const QualitySource& q) {
    return prepare_set(samples, cfg.vit.image_size, q.params ? &*q.params : nullptr);
}

std::string fmt(double v, int digits = 2) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

// ---------------------------------------------------------------- synth

struct SynthArgs {
    std::string out;
    SynthConfig cfg;
};

void setup_synth(CLI::App& app, SynthArgs& a) {
    auto* s = app.add_subcommand("synth", "Generate the seeded synthetic corpus and its manifest");
    s->add_option("--out", a.out, "Output directory")->required();
    s->add_option("--seed", a.cfg.seed, "Generator seed")->capture_default_str();
    s->add_option("--train-bases", a.cfg.train_bases, "Base faces in the train split")->capture_default_str();
    s->add_option("--val-bases", a.cfg.val_bases, "Base faces in the val split")->capture_default_str();
    s->add_option("--test-bases", a.cfg.test_bases, "Base faces in the test split")->capture_default_str();
    s->add_option("--side", a.cfg.side, "Frame side in pixels")->capture_default_str();
    s->add_option("--patch-min", a.cfg.patch_min, "Smallest edited patch side")->capture_default_str();
    s->add_option("--patch-max", a.cfg.patch_max, "Largest edited patch side")->capture_default_str();
    s->add_option("--forge-shift", a.cfg.forge_shift, "Color-shift scale inside the patch")->capture_default_str();
    s->add_option("--forge-noise", a.cfg.forge_noise, "Texture-noise half-width inside the patch")->capture_default_str();
}

int run_synth(const CLI::App* sub, const SynthArgs& a) {
    a.cfg.validate();
    make_run_dir(a.out);
    const auto samples = synth_generate(a.cfg, a.out);
    const auto counts = manifest_counts(samples);
    ordered_json resolved = json(a.cfg);
    resolved["counts"] = counts;
    write_run_record(a.out, sub, resolved, a.cfg.seed, ordered_json::object());
    std::cout << "wrote " << samples.size() << " images to " << a.out << "\n";
    for (const auto& [k, n] : counts) std::cout << "  " << k << ": " << n << "\n";
    return kOk;
}

// ---------------------------------------------------------------- preprocess

struct PreprocessArgs {
    std::string manifest, out, split = "all", quality = "all";
    std::size_t side = 64;
};

void setup_preprocess(CLI::App& app, PreprocessArgs& a) {
    auto* s = app.add_subcommand("preprocess", "Crop faces and write the five stream tensors per image");
    s->add_option("--manifest", a.manifest, "Manifest (JSON lines)")->required();
    s->add_option("--out", a.out, "Output directory")->required();
    s->add_option("--side", a.side, "Crop side")->capture_default_str();
    s->add_option("--split", a.split, "train, val, test or all")->capture_default_str();
    s->add_option("--quality", a.quality, "q0, q1, q2 or all")->capture_default_str();
}

int run_preprocess(const CLI::App* sub, const PreprocessArgs& a) {
    if (a.side == 0 || a.side % 2 != 0) throw ValidationError("--side must be a positive even number");
    const auto all = load_manifest(a.manifest);
    const std::optional<Split> split = a.split == "all" ? std::nullopt : std::optional<Split>(parse_split(a.split));
    const auto samples = filter_samples(all, split, parse_quality_filter(a.quality));
    make_run_dir(fs::path(a.out) / "streams");

    std::string index;
    for (const auto& s : samples) {
        const StreamSet<double> set = load_stream_set(s, a.side);
        const std::string stem = fs::path(s.path).stem().string();
        const fs::path file = fs::path(a.out) / "streams" / (stem + ".ggt");
        std::ostringstream blob;
        for (std::size_t k = 0; k < StreamSet<double>::kStreams; ++k) write_ggt1(blob, set.stream(k));
        write_text(file, blob.str());
        ordered_json line{{"image", fs::path(s.path).filename().string()},
                          {"streams", "streams/" + stem + ".ggt"},
                          {"label", s.label},
                          {"quality", s.quality},
                          {"split", split_name(s.split)}};
        index += line.dump() + "\n";
    }
    write_text(fs::path(a.out) / "index.jsonl", index);
    write_run_record(a.out, sub, ordered_json{{"side", a.side}, {"count", samples.size()}}, 0,
                     ordered_json{{"manifest", manifest_content_hash(a.manifest, samples)}});
    std::cout << "preprocessed " << samples.size() << " images into " << a.out << "\n";
    return kOk;
}

// ---------------------------------------------------------------- train-quality

struct TrainQualityArgs {
    std::string manifest, out;
    std::size_t side = 64;
    QualityTrainOptions opts;
};

void setup_train_quality(CLI::App& app, TrainQualityArgs& a) {
    auto* s = app.add_subcommand("train-quality", "Train the frozen compression-quality classifier");
    s->add_option("--manifest", a.manifest, "Manifest (JSON lines)")->required();
    s->add_option("--out", a.out, "Run directory")->required();
    s->add_option("--side", a.side, "Crop side; must match the detector's image size")->capture_default_str();
    s->add_option("--epochs", a.opts.epochs)->capture_default_str();
    s->add_option("--batch", a.opts.batch_size)->capture_default_str();
    s->add_option("--lr", a.opts.lr)->capture_default_str();
    s->add_option("--momentum", a.opts.momentum)->capture_default_str();
    s->add_option("--seed", a.opts.seed)->capture_default_str();
}

int run_train_quality(const CLI::App* sub, TrainQualityArgs& a) {
    const auto all = load_manifest(a.manifest);
    const auto train_s = filter_samples(all, Split::kTrain, std::nullopt);
    const auto val_s = filter_samples(all, Split::kVal, std::nullopt);
    if (val_s.empty()) throw ValidationError("manifest has no val split to measure held-out accuracy");
    const PreparedSet train_p = prepare_set(train_s, a.side, nullptr);
    const PreparedSet val_p = prepare_set(val_s, a.side, nullptr);
    const auto examples = [](const PreparedSet& p) {
        std::vector<QualityExample> ex;
        for (std::size_t i = 0; i < p.size(); ++i) ex.push_back({&p.crops[i], p.levels[i]});
        return ex;
    };
    const auto train_ex = examples(train_p);
    const auto val_ex = examples(val_p);

    make_run_dir(a.out);
    std::string log;
    a.opts.on_epoch = [&](std::size_t epoch, double loss, double acc) {
        log += ordered_json{{"epoch", epoch}, {"loss", loss}, {"train_accuracy", acc}}.dump() + "\n";
        std::cout << "epoch " << epoch << " loss " << fmt(loss, 4) << " train acc " << fmt(acc) << "%\n";
    };
    const ParamStore<double> params = train_quality_classifier(train_ex, kQualityLevels, a.opts);
    const double val_acc = quality_accuracy(params, val_ex);
    save_quality_classifier((fs::path(a.out) / "quality.ckpt").string(), params, a.side, val_acc);
    write_text(fs::path(a.out) / "log.jsonl", log);
    write_json(fs::path(a.out) / "metrics.json",
               ordered_json{{"train_accuracy", quality_accuracy(params, train_ex)}, {"val_accuracy", val_acc}});
    write_run_record(a.out, sub,
                     ordered_json{{"side", a.side},
                                  {"epochs", a.opts.epochs},
                                  {"batch", a.opts.batch_size},
                                  {"lr", a.opts.lr},
                                  {"momentum", a.opts.momentum}},
                     a.opts.seed, ordered_json{{"manifest", manifest_content_hash(a.manifest, all)}});
    std::cout << "held-out quality accuracy " << fmt(val_acc) << "%\n";
    return kOk;
}

// ---------------------------------------------------------------- model flags

struct ModelArgs {
    std::string preset = "tiny", guidance = "on";
    bool iqb = true, fab = true;
    double lambda = kDefaultLambda, lmc_s = 30.0, lmc_m = 0.35;

    ModelConfig build() const {
        ModelConfig c = model_config_for(preset);
        c.guidance = parse_guidance_mode(guidance);
        c.iqb = iqb;
        c.fab = fab;
        c.lambda = lambda;
        c.lmc.s = lmc_s;
        c.lmc.m = lmc_m;
        c.validate();
        return c;
    }
};

void add_model_flags(CLI::App* s, ModelArgs& m) {
    s->add_option("--preset", m.preset, "tiny, micro or base")->capture_default_str();
    s->add_option("--guidance", m.guidance, "on, off or zero")->capture_default_str();
    s->add_option("--iqb", m.iqb, "Quality block and margin loss (true/false)")->capture_default_str();
    s->add_option("--fab", m.fab, "Fusion attention block (true/false)")->capture_default_str();
    s->add_option("--lambda", m.lambda, "Weight of the margin loss")->capture_default_str();
    s->add_option("--lmc-s", m.lmc_s, "Margin loss scale")->capture_default_str();
    s->add_option("--lmc-m", m.lmc_m, "Margin loss margin")->capture_default_str();
}

// ---------------------------------------------------------------- train

struct TrainArgs {
    std::string manifest, out, quality_ckpt, train_quality = "all", val_quality;
    ModelArgs model;
    TrainConfig cfg;
    std::size_t threads = 0;
};

void setup_train(CLI::App& app, TrainArgs& a) {
    auto* s = app.add_subcommand("train", "Train a detector and keep the best-validation checkpoint");
    s->add_option("--manifest", a.manifest, "Manifest (JSON lines)")->required();
    s->add_option("--out", a.out, "Run directory")->required();
    s->add_option("--quality-ckpt", a.quality_ckpt, "Frozen quality classifier");
    s->add_option("--train-quality", a.train_quality, "q0, q1, q2 or all")->capture_default_str();
    s->add_option("--val-quality", a.val_quality, "Defaults to the train quality");
    add_model_flags(s, a.model);
    s->add_option("--epochs", a.cfg.epochs)->capture_default_str();
    s->add_option("--batch", a.cfg.batch_size)->capture_default_str();
    s->add_option("--lr", a.cfg.lr)->capture_default_str();
    s->add_option("--momentum", a.cfg.momentum)->capture_default_str();
    s->add_option("--weight-decay", a.cfg.weight_decay)->capture_default_str();
    s->add_option("--clip-norm", a.cfg.clip_norm, "Global gradient-norm cap (0 = off)")->capture_default_str();
    s->add_option("--seed", a.cfg.seed)->capture_default_str();
    s->add_option("--dtype", a.cfg.dtype, "f64 or f32")->capture_default_str();
    s->add_option("--threads", a.threads, "Evaluation workers (0 = GGVIT_THREADS or all cores)");
}

template <typename T>
int train_typed(const CLI::App* sub, TrainArgs& a, const std::vector<Sample>& all, const QualitySource& q) {
    const auto tq = parse_quality_filter(a.train_quality);
    const auto vq = a.val_quality.empty() ? tq : parse_quality_filter(a.val_quality);
    const auto train_s = filter_samples(all, Split::kTrain, tq);
    const auto val_s = filter_samples(all, Split::kVal, vq);
    if (train_s.empty()) throw ValidationError("no training samples match --train-quality " + a.train_quality);
    const PreparedSet train_p = prepare(train_s, a.cfg.model, q);
    const PreparedSet val_p = prepare(val_s, a.cfg.model, q);

    const fs::path dir(a.out);
    make_run_dir(dir);
    std::ofstream steps(dir / "steps.jsonl", std::ios::binary);
    std::ofstream epochs(dir / "epochs.jsonl", std::ios::binary);
    if (!steps || !epochs) throw IoError("cannot open logs in " + dir.string());
    const auto t0 = std::chrono::steady_clock::now();
    TrainCallbacks cb;
    cb.on_step = [&](const StepLog& s) { steps << json(s).dump() << "\n"; };
    cb.on_epoch = [&](const EpochLog& e) {
        epochs << json(e).dump() << "\n";
        epochs.flush();
        const double sec = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        std::cout << "epoch " << e.epoch << " loss " << fmt(e.mean_loss, 4) << " train " << fmt(e.train_accuracy)
                  << "% val " << fmt(e.val_accuracy) << "%" << (e.best ? " *" : "") << " [" << fmt(sec, 1)
                  << "s]" << std::endl;
    };
    TrainResult<T> r = train<T>(a.cfg, train_p, val_p, cb);
    steps.close();
    epochs.close();

    const ordered_json extra{{"train_quality", a.train_quality},
                             {"quality_ckpt", q.path.empty() ? "" : sha256_file(q.path)},
                             {"seed", a.cfg.seed},
                             {"dtype", a.cfg.dtype}};
    save_model((dir / "best.ckpt").string(), r.best_params, a.cfg.model, json(extra));
    save_model((dir / "last.ckpt").string(), r.final_params, a.cfg.model, json(extra));
    const EpochLog& last = r.epochs.back();
    write_json(dir / "metrics.json", ordered_json{{"best_epoch", r.best_epoch},
                                                  {"best_val_accuracy", r.best_val_accuracy},
                                                  {"final_train_accuracy", last.train_accuracy},
                                                  {"final_val_accuracy", last.val_accuracy},
                                                  {"variant", a.cfg.model.variant_name()}});
    ordered_json inputs{{"manifest", manifest_content_hash(a.manifest, all)}};
    if (!q.path.empty()) inputs["quality_ckpt"] = sha256_file(q.path);
    write_run_record(dir, sub, json(a.cfg), a.cfg.seed, inputs);
    std::cout << a.cfg.model.variant_name() << ": best val " << fmt(r.best_val_accuracy) << "% at epoch "
              << r.best_epoch << "\n";
    return kOk;
}

int run_train(const CLI::App* sub, TrainArgs& a) {
    a.cfg.model = a.model.build();
    a.cfg.validate();
    const QualitySource q = quality_source(a.quality_ckpt, a.cfg.model);
    const auto all = load_manifest(a.manifest);
    return a.cfg.dtype == "f32" ? train_typed<float>(sub, a, all, q) : train_typed<double>(sub, a, all, q);
}

// ---------------------------------------------------------------- evaluation

struct LoadedModel {
    ModelConfig cfg;
    ParamStore<double> params;
};

LoadedModel load_for_eval(const std::string& path, const std::string& preset) {
    if (!fs::exists(path)) throw IoError("checkpoint " + path + " not found");
    LoadedModel m;
    if (preset.empty()) {
        m.params = load_model(path, &m.cfg);
    } else {
        const ModelConfig expected = model_config_for(preset);
        m.params = load_model(path, &m.cfg, &expected);
    }
    return m;
}

std::string predictions_csv(const std::vector<Sample>& samples, const EvalResult& r) {
    std::string out = "image,label,predicted,p_real,p_forged\n";
    for (std::size_t i = 0; i < r.predictions.size(); ++i) {
        const auto& p = r.predictions[i];
        out += fs::path(samples[i].path).filename().string() + "," + std::to_string(p.label) + "," +
               std::to_string(p.predicted) + "," + fmt(p.probs[0], 6) + "," + fmt(p.probs[1], 6) + "\n";
    }
    return out;
}

std::string fusion_csv(const std::vector<Sample>& samples, const EvalResult& r) {
    std::string out = "image";
    for (std::size_t k = 0; k < kStreams; ++k) out += ",X" + std::to_string(k) + "_real,X" + std::to_string(k) + "_forged";
    out += "\n";
    for (std::size_t i = 0; i < r.predictions.size(); ++i) {
        out += fs::path(samples[i].path).filename().string();
        for (double v : r.predictions[i].fusion) out += "," + fmt(v, 6);
        out += "\n";
    }
    return out;
}

struct EvalArgs {
    std::string ckpt, manifest, out, split = "test", quality = "all", quality_ckpt, preset;
    std::size_t threads = 0;
};

void setup_eval(CLI::App& app, EvalArgs& a) {
    auto* s = app.add_subcommand("eval", "Evaluate one checkpoint on a manifest split");
    s->add_option("--ckpt", a.ckpt, "Model checkpoint")->required();
    s->add_option("--manifest", a.manifest, "Manifest (JSON lines)")->required();
    s->add_option("--out", a.out, "Run directory")->required();
    s->add_option("--split", a.split)->capture_default_str();
    s->add_option("--quality", a.quality, "q0, q1, q2 or all")->capture_default_str();
    s->add_option("--quality-ckpt", a.quality_ckpt, "Frozen quality classifier");
    s->add_option("--preset", a.preset, "Reject checkpoints of another preset");
    s->add_option("--threads", a.threads, "Evaluation workers (0 = GGVIT_THREADS or all cores)");
}

int run_eval(const CLI::App* sub, const EvalArgs& a) {
    const LoadedModel m = load_for_eval(a.ckpt, a.preset);
    const QualitySource q = quality_source(a.quality_ckpt, m.cfg);
    const auto all = load_manifest(a.manifest);
    const auto samples = filter_samples(all, parse_split(a.split), parse_quality_filter(a.quality));
    if (samples.empty()) throw ValidationError("no samples match the requested split and quality");
    const EvalResult r = evaluate(m.params, m.cfg, prepare(samples, m.cfg, q), a.threads);

    const fs::path dir(a.out);
    make_run_dir(dir);
    write_text(dir / "predictions.csv", predictions_csv(samples, r));
    write_text(dir / "fusion.csv", fusion_csv(samples, r));
    const auto shares = stream_proportions(fusion_tensors(r));
    write_text(dir / "proportions.csv", proportions_csv_header() + proportions_csv_row(a.quality, shares));
    write_json(dir / "metrics.json", ordered_json{{"accuracy", r.accuracy}, {"samples", samples.size()},
                                                  {"variant", m.cfg.variant_name()}});
    ordered_json inputs{{"ckpt", sha256_file(a.ckpt)}, {"manifest", manifest_content_hash(a.manifest, samples)}};
    if (!a.quality_ckpt.empty()) inputs["quality_ckpt"] = sha256_file(a.quality_ckpt);
    write_run_record(dir, sub, ordered_json{{"model", json(m.cfg)}, {"split", a.split}, {"quality", a.quality}}, 0,
                     inputs);
    std::cout << "accuracy " << fmt(r.accuracy) << "% on " << samples.size() << " samples\n";
    return kOk;
}

// ---------------------------------------------------------------- matrix

struct MatrixArgs {
    std::string ckpts, tests = "q0,q1,q2", manifest, out, split = "test", quality_ckpt, preset;
    std::size_t threads = 0;
};

void setup_matrix(CLI::App& app, MatrixArgs& a) {
    auto* s = app.add_subcommand("matrix", "Cross-quality accuracy matrix (rows: train quality)");
    s->add_option("--ckpts", a.ckpts, "Comma-separated checkpoints trained at q0,q1,q2")->required();
    s->add_option("--tests", a.tests, "Comma-separated test qualities")->capture_default_str();
    s->add_option("--manifest", a.manifest, "Manifest (JSON lines)")->required();
    s->add_option("--out", a.out, "Run directory")->required();
    s->add_option("--split", a.split)->capture_default_str();
    s->add_option("--quality-ckpt", a.quality_ckpt, "Frozen quality classifier");
    s->add_option("--preset", a.preset, "Reject checkpoints of another preset");
    s->add_option("--threads", a.threads);
}

int run_matrix(const CLI::App* sub, const MatrixArgs& a) {
    const auto ckpts = split_list(a.ckpts);
    const auto tests = split_list(a.tests);
    if (ckpts.size() != kQualityLevels) throw ValidationError("--ckpts needs one checkpoint per train quality (3)");
    if (tests.size() != kQualityLevels) throw ValidationError("--tests needs three qualities");
    std::vector<int> cols;
    for (const auto& t : tests) cols.push_back(parse_quality(t));
    for (std::size_t i = 0; i < kQualityLevels; ++i) {
        if (!fs::exists(ckpts[i])) {
            throw IoError("matrix row " + quality_name(int(i)) + ": checkpoint " + ckpts[i] + " not found");
        }
    }
    const auto all = load_manifest(a.manifest);
    const Split split = parse_split(a.split);

    EvalMatrix m{};
    std::string proportions = proportions_csv_header();
    ordered_json inputs{{"manifest", manifest_content_hash(a.manifest, all)}};
    std::map<std::string, PreparedSet> cache;
    for (std::size_t i = 0; i < kQualityLevels; ++i) {
        const LoadedModel lm = load_for_eval(ckpts[i], a.preset);
        const QualitySource q = quality_source(a.quality_ckpt, lm.cfg);
        inputs["ckpt_" + quality_name(int(i))] = sha256_file(ckpts[i]);
        for (int c : cols) {
            const auto samples = filter_samples(all, split, c);
            if (samples.empty()) throw ValidationError("no " + quality_name(c) + " samples in the " + a.split + " split");
            const std::string key = quality_name(c) + (lm.cfg.iqb ? "+q" : "") + std::to_string(lm.cfg.vit.image_size);
            if (!cache.count(key)) cache.emplace(key, prepare(samples, lm.cfg, q));
            const EvalResult r = evaluate(lm.params, lm.cfg, cache.at(key), a.threads);
            m[i][std::size_t(c)] = r.accuracy;
            proportions += proportions_csv_row(quality_name(int(i)) + "/" + quality_name(c),
                                               stream_proportions(fusion_tensors(r)));
            std::cout << quality_name(int(i)) << "/" << quality_name(c) << " " << fmt(r.accuracy) << "%\n";
        }
    }
    if (!a.quality_ckpt.empty()) inputs["quality_ckpt"] = sha256_file(a.quality_ckpt);

    const fs::path dir(a.out);
    make_run_dir(dir);
    write_text(dir / "matrix.csv", eval_matrix_csv(m));
    write_json(dir / "matrix.json", eval_matrix_json(m));
    write_text(dir / "proportions.csv", proportions);
    write_run_record(dir, sub, ordered_json{{"split", a.split}, {"tests", tests}}, 0, inputs);
    std::cout << eval_matrix_csv(m);
    return kOk;
}

// ---------------------------------------------------------------- proportions

struct ProportionsArgs {
    std::string ckpt, manifest, out, split = "test", test_quality = "q0", quality_ckpt, label;
    std::size_t threads = 0;
};

void setup_proportions(CLI::App& app, ProportionsArgs& a) {
    auto* s = app.add_subcommand("proportions", "Share of each stream in the fusion tensor");
    s->add_option("--ckpt", a.ckpt, "Model checkpoint")->required();
    s->add_option("--manifest", a.manifest, "Manifest (JSON lines)")->required();
    s->add_option("--out", a.out, "Run directory")->required();
    s->add_option("--split", a.split)->capture_default_str();
    s->add_option("--test-quality", a.test_quality)->capture_default_str();
    s->add_option("--quality-ckpt", a.quality_ckpt, "Frozen quality classifier");
    s->add_option("--label", a.label, "Row label, defaults to <train quality>/<test quality>");
    s->add_option("--threads", a.threads);
}

int run_proportions(const CLI::App* sub, const ProportionsArgs& a) {
    const LoadedModel m = load_for_eval(a.ckpt, "");
    const QualitySource q = quality_source(a.quality_ckpt, m.cfg);
    const auto all = load_manifest(a.manifest);
    const auto samples = filter_samples(all, parse_split(a.split), parse_quality(a.test_quality));
    if (samples.empty()) throw ValidationError("no samples match the requested split and quality");
    const EvalResult r = evaluate(m.params, m.cfg, prepare(samples, m.cfg, q), a.threads);
    const auto shares = stream_proportions(fusion_tensors(r));

    json meta;
    std::string label = a.label;
    if (label.empty()) {
        read_checkpoint_header(a.ckpt).meta.swap(meta);
        const std::string tq = meta.contains("extra") ? meta["extra"].value("train_quality", "?") : "?";
        label = tq + "/" + quality_name(parse_quality(a.test_quality));
    }
    const fs::path dir(a.out);
    make_run_dir(dir);
    const std::string csv = proportions_csv_header() + proportions_csv_row(label, shares);
    write_text(dir / "proportions.csv", csv);
    write_run_record(dir, sub, ordered_json{{"label", label}}, 0,
                     ordered_json{{"ckpt", sha256_file(a.ckpt)},
                                  {"manifest", manifest_content_hash(a.manifest, samples)}});
    std::cout << csv;
    return kOk;
}

// ---------------------------------------------------------------- gradcheck

struct GradcheckArgs {
    ModelGradcheckOptions opts;
    std::string out;
};

void setup_gradcheck(CLI::App& app, GradcheckArgs& a) {
    auto* s = app.add_subcommand("gradcheck", "Finite-difference check of every loss of the full model");
    s->add_option("--preset", a.opts.preset, "tiny, micro or base")->capture_default_str();
    s->add_option("--seed", a.opts.seed)->capture_default_str();
    s->add_option("--batch", a.opts.batch)->capture_default_str();
    s->add_option("--step", a.opts.fd.step)->capture_default_str();
    s->add_option("--tol", a.opts.fd.tol)->capture_default_str();
    s->add_option("--coords", a.opts.fd.coords_per_param, "Coordinates per tensor (0 = all)")->capture_default_str();
    s->add_option("--noise-ulps", a.opts.fd.noise_ulps, "Resolution floor in loss ulps (0 = plain relative error)")
        ->capture_default_str();
    s->add_option("--out", a.out, "Optional run directory for gradcheck.json");
}

int run_gradcheck(const CLI::App* sub, const GradcheckArgs& a) {
    const auto results = gradcheck_model(a.opts);
    bool ok = true;
    ordered_json report = ordered_json::array();
    for (const auto& r : results) {
        const auto& w = r.report.worst();
        std::size_t probes = 0, below = 0;
        for (const auto& p : r.report.params) {
            probes += p.checked;
            below += p.below_floor;
        }
        std::printf("%-9s max_rel_error=%.3e  worst=%s[%zu] analytic=%.6e numeric=%.6e  "
                    "(%zu probes, %zu under floor, %.1fs)  %s\n",
                    r.loss.c_str(), r.report.max_rel_error, w.name.c_str(), w.worst_index, w.analytic, w.numeric,
                    probes, below, r.seconds, r.report.pass() ? "PASS" : "FAIL");
        ok = ok && r.report.pass();
        report.push_back({{"loss", r.loss},
                          {"max_rel_error", r.report.max_rel_error},
                          {"worst_param", w.name},
                          {"probes", probes},
                          {"under_floor", below},
                          {"evaluations", r.report.evaluations},
                          {"pass", r.report.pass()}});
    }
    std::printf("gradcheck %s (tol %.0e, step %.0e)\n", ok ? "PASS" : "FAIL", a.opts.fd.tol, a.opts.fd.step);
    if (!a.out.empty()) {
        make_run_dir(a.out);
        write_json(fs::path(a.out) / "gradcheck.json", report);
        write_run_record(a.out, sub, ordered_json{{"preset", a.opts.preset}}, a.opts.seed, ordered_json::object());
    }
    if (!ok) throw CheckFailed("gradient check failed");
    return kOk;
}

// ---------------------------------------------------------------- report

struct ReportArgs {
    std::string matrix, proportions, out, title = "Cross-quality accuracy (%)";
};

void setup_report(CLI::App& app, ReportArgs& a) {
    auto* s = app.add_subcommand("report", "Plain-text tables and an SVG heatmap");
    s->add_option("--matrix", a.matrix, "matrix.json from the matrix command");
    s->add_option("--proportions", a.proportions, "proportions.csv");
    s->add_option("--out", a.out, "Output directory")->required();
    s->add_option("--title", a.title)->capture_default_str();
}

EvalMatrix read_matrix_json(const std::string& path) {
    const json j = json::parse(read_text(path));
    EvalMatrix m{};
    for (std::size_t i = 0; i < kQualityLevels; ++i) {
        for (std::size_t k = 0; k < kQualityLevels; ++k) {
            const double v = j.at(quality_name(int(i))).at(quality_name(int(k))).get<double>();
            if (!(v >= 0.0 && v <= 100.0)) throw ValidationError(path + ": accuracy outside [0, 100]");
            m[i][k] = v;
        }
    }
    return m;
}

std::vector<std::vector<std::string>> read_csv(const std::string& path) {
    std::vector<std::vector<std::string>> rows;
    std::stringstream ss(read_text(path));
    std::string line;
    while (std::getline(ss, line)) {
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::stringstream ls(line);
        std::string c;
        while (std::getline(ls, c, ',')) cells.push_back(c);
        rows.push_back(cells);
    }
    return rows;
}

std::string text_table(const std::vector<std::vector<std::string>>& rows) {
    std::vector<std::size_t> width;
    for (const auto& r : rows) {
        if (width.size() < r.size()) width.resize(r.size(), 0);
        for (std::size_t i = 0; i < r.size(); ++i) width[i] = std::max(width[i], r[i].size());
    }
    std::string out;
    for (std::size_t n = 0; n < rows.size(); ++n) {
        for (std::size_t i = 0; i < rows[n].size(); ++i) {
            const std::string& c = rows[n][i];
            out += i == 0 ? c + std::string(width[i] - c.size(), ' ') : "  " + std::string(width[i] - c.size(), ' ') + c;
        }
        out += "\n";
        if (n == 0) {
            std::size_t total = 0;
            for (std::size_t i = 0; i < width.size(); ++i) total += width[i] + (i ? 2 : 0);
            out += std::string(total, '-') + "\n";
        }
    }
    return out;
}

// White (0%) to dark blue (100%).
std::string heat_color(double pct) {
    const double t = std::clamp(pct / 100.0, 0.0, 1.0);
    const int r = int(247 - t * (247 - 8));
    const int g = int(251 - t * (251 - 48));
    const int b = int(255 - t * (255 - 107));
    char buf[16];
    std::snprintf(buf, sizeof buf, "#%02x%02x%02x", r, g, b);
    return buf;
}

std::string heatmap_svg(const EvalMatrix& m, const std::string& title) {
    const int cell = 90, left = 80, top = 70;
    const int w = left + cell * int(kQualityLevels) + 20, h = top + cell * int(kQualityLevels) + 20;
    std::ostringstream s;
    s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h
      << "\" font-family=\"sans-serif\" font-size=\"14\">\n";
    s << "  <text x=\"" << w / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"16\">" << title << "</text>\n";
    s << "  <text x=\"" << left + cell * int(kQualityLevels) / 2 << "\" y=\"44\" text-anchor=\"middle\">test</text>\n";
    s << "  <text x=\"18\" y=\"" << top + cell * int(kQualityLevels) / 2
      << "\" text-anchor=\"middle\" transform=\"rotate(-90 18 " << top + cell * int(kQualityLevels) / 2
      << ")\">train</text>\n";
    for (std::size_t i = 0; i < kQualityLevels; ++i) {
        s << "  <text x=\"" << left + cell * int(i) + cell / 2 << "\" y=\"" << top - 8
          << "\" text-anchor=\"middle\">" << quality_name(int(i)) << "</text>\n";
        s << "  <text x=\"" << left - 10 << "\" y=\"" << top + cell * int(i) + cell / 2 + 5
          << "\" text-anchor=\"end\">" << quality_name(int(i)) << "</text>\n";
    }
    for (std::size_t i = 0; i < kQualityLevels; ++i) {
        for (std::size_t k = 0; k < kQualityLevels; ++k) {
            const int x = left + cell * int(k), y = top + cell * int(i);
            s << "  <rect x=\"" << x << "\" y=\"" << y << "\" width=\"" << cell << "\" height=\"" << cell
              << "\" fill=\"" << heat_color(m[i][k]) << "\" stroke=\"#ffffff\"/>\n";
            s << "  <text x=\"" << x + cell / 2 << "\" y=\"" << y + cell / 2 + 5 << "\" text-anchor=\"middle\" fill=\""
              << (m[i][k] > 55.0 ? "#ffffff" : "#000000") << "\">" << fmt(m[i][k]) << "</text>\n";
        }
    }
    s << "</svg>\n";
    return s.str();
}

int run_report(const CLI::App* sub, const ReportArgs& a) {
    if (a.matrix.empty() && a.proportions.empty()) throw ValidationError("report needs --matrix and/or --proportions");
    const fs::path dir(a.out);
    make_run_dir(dir);
    std::string text;
    ordered_json inputs = ordered_json::object();
    if (!a.matrix.empty()) {
        const EvalMatrix m = read_matrix_json(a.matrix);
        std::vector<std::vector<std::string>> rows{{"train\\test"}};
        for (std::size_t k = 0; k < kQualityLevels; ++k) rows[0].push_back(quality_name(int(k)));
        for (std::size_t i = 0; i < kQualityLevels; ++i) {
            rows.push_back({quality_name(int(i))});
            for (std::size_t k = 0; k < kQualityLevels; ++k) rows.back().push_back(fmt(m[i][k]));
        }
        text += a.title + "\n\n" + text_table(rows) + "\n";
        write_text(dir / "heatmap.svg", heatmap_svg(m, a.title));
        inputs["matrix"] = sha256_file(a.matrix);
    }
    if (!a.proportions.empty()) {
        auto rows = read_csv(a.proportions);
        if (rows.empty() || rows[0].size() != kStreams + 1 || rows[0][1] != "X0") {
            throw ValidationError(a.proportions + " is not a proportions table");
        }
        for (std::size_t r = 1; r < rows.size(); ++r) {
            for (std::size_t c = 1; c < rows[r].size(); ++c) rows[r][c] += "%";
        }
        text += "Stream proportions in the fusion tensor\n\n" + text_table(rows);
        inputs["proportions"] = sha256_file(a.proportions);
    }
    write_text(dir / "report.txt", text);
    write_run_record(dir, sub, ordered_json{{"title", a.title}}, 0, inputs);
    std::cout << text;
    return kOk;
}

// ---------------------------------------------------------------- main

int dispatch(int argc, char** argv) {
    CLI::App app{"GGViT: globally guided multi-stream forgery detection"};
    app.require_subcommand(1);
    app.set_help_all_flag("--help-all", "Help for every subcommand");

    SynthArgs synth;
    PreprocessArgs pre;
    TrainQualityArgs tq;
    TrainArgs tr;
    EvalArgs ev;
    MatrixArgs mx;
    ProportionsArgs pr;
    GradcheckArgs gc;
    ReportArgs rp;
    setup_synth(app, synth);
    setup_preprocess(app, pre);
    setup_train_quality(app, tq);
    setup_train(app, tr);
    setup_eval(app, ev);
    setup_matrix(app, mx);
    setup_proportions(app, pr);
    setup_gradcheck(app, gc);
    setup_report(app, rp);
    std::string config_help;
    for (CLI::App* sub : app.get_subcommands({})) {
        sub->add_option("--config", config_help, "Flat key=value file; flags given on the command line win");
    }

    std::vector<std::string> args(argv + 1, argv + argc);
    args = expand_config(std::move(args));
    std::reverse(args.begin(), args.end());
    try {
        app.parse(args);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        std::cerr << "\n" << app.help();
        return kUsage;
    }

    const CLI::App* sub = app.get_subcommands().front();
    const std::string name = sub->get_name();
    if (name == "synth") return run_synth(sub, synth);
    if (name == "preprocess") return run_preprocess(sub, pre);
    if (name == "train-quality") return run_train_quality(sub, tq);
    if (name == "train") return run_train(sub, tr);
    if (name == "eval") return run_eval(sub, ev);
    if (name == "matrix") return run_matrix(sub, mx);
    if (name == "proportions") return run_proportions(sub, pr);
    if (name == "gradcheck") return run_gradcheck(sub, gc);
    return run_report(sub, rp);
}

}  // namespace ggvit::cli

int main(int argc, char** argv) {
    using namespace ggvit;
    try {
        return cli::dispatch(argc, argv);
    } catch (const cli::CheckFailed& e) {
        std::cerr << "error[check]: " << e.what() << "\n";
        return cli::kCheckFailed;
    } catch (const ValidationError& e) {
        std::cerr << "error[validation]: " << e.what() << "\n";
        return cli::kValidation;
    } catch (const IoError& e) {
        std::cerr << "error[io]: " << e.what() << "\n";
        return cli::kIo;
    } catch (const NumericError& e) {
        std::cerr << "error[numeric]: " << e.what() << "\n";
        return cli::kNumeric;
    } catch (const ShapeError& e) {
        std::cerr << "error[shape]: " << e.what() << "\n";
        return cli::kValidation;
    } catch (const std::exception& e) {
        std::cerr << "error[internal]: " << e.what() << "\n";
        return cli::kInternal;
    }
}

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

#include "ggvit/data.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

#include "ggvit/image_io.hpp"

namespace ggvit {

namespace fs = std::filesystem;

std::string_view split_name(Split s) {
    switch (s) {
        case Split::kTrain: return "train";
        case Split::kVal: return "val";
        case Split::kTest: return "test";
    }
    return "?";
}

Split parse_split(std::string_view s) {
    if (s == "train") return Split::kTrain;
    if (s == "val") return Split::kVal;
    if (s == "test") return Split::kTest;
    throw ValidationError("split must be train, val or test, got '" + std::string(s) + "'");
}

std::string quality_name(int level) { return "q" + std::to_string(level); }

int parse_quality(std::string_view s) {
    if (s.size() == 2 && s[0] == 'q' && s[1] >= '0' && s[1] <= '2') return s[1] - '0';
    if (s.size() == 1 && s[0] >= '0' && s[0] <= '2') return s[0] - '0';
    throw ValidationError("quality must be q0, q1 or q2, got '" + std::string(s) + "'");
}

namespace {

FaceBox box_from_json(const nlohmann::json& j) {
    FaceBox b{j.at("x").get<double>(), j.at("y").get<double>(), j.at("w").get<double>(), j.at("h").get<double>()};
    if (!(b.w > 0) || !(b.h > 0)) throw ValidationError("box must have positive w and h");
    return b;
}

nlohmann::json box_to_json(const FaceBox& b) { return {{"x", b.x}, {"y", b.y}, {"w", b.w}, {"h", b.h}}; }

}  // namespace

std::vector<Sample> load_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open manifest " + path);
    const fs::path base = fs::path(path).parent_path();
    std::vector<Sample> out;
    std::vector<std::string> missing;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const std::string where = path + ":" + std::to_string(lineno) + ": ";
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw ValidationError(where + "malformed JSON (" + e.what() + ")");
        }
        if (!j.is_object()) throw ValidationError(where + "expected a JSON object");
        const auto field = [&](const char* key) -> const nlohmann::json& {
            if (!j.contains(key)) throw ValidationError(where + "missing field '" + key + "'");
            return j.at(key);
        };
        Sample s;
        const auto& p = field("path");
        if (!p.is_string()) throw ValidationError(where + "field 'path' must be a string");
        const auto& label = field("label");
        if (!label.is_number_integer() || (label.get<int>() != 0 && label.get<int>() != 1)) {
            throw ValidationError(where + "field 'label' must be 0 or 1");
        }
        const auto& quality = field("quality");
        if (!quality.is_number_integer() || quality.get<int>() < 0 || quality.get<int>() > 2) {
            throw ValidationError(where + "field 'quality' must be 0, 1 or 2");
        }
        const auto& split = field("split");
        if (!split.is_string()) throw ValidationError(where + "field 'split' must be a string");
        try {
            s.split = parse_split(split.get<std::string>());
            if (j.contains("box") && !j.at("box").is_null()) s.box = box_from_json(j.at("box"));
        } catch (const std::exception& e) {
            throw ValidationError(where + "field '" + (j.contains("box") ? "box" : "split") + "': " + e.what());
        }
        const fs::path rel = p.get<std::string>();
        s.path = (rel.is_absolute() ? rel : base / rel).string();
        s.label = label.get<int>();
        s.quality = quality.get<int>();
        for (const auto& [k, v] : j.items())
            if (k != "path" && k != "label" && k != "quality" && k != "split" && k != "box") s.extra[k] = v;
        if (!fs::exists(s.path)) missing.push_back(s.path);
        out.push_back(std::move(s));
    }
    if (!missing.empty()) {
        std::string msg = "manifest " + path + " references " + std::to_string(missing.size()) + " missing image(s):";
        for (const auto& m : missing) msg += "\n  " + m;
        throw IoError(msg);
    }
    return out;
}

void write_manifest(const std::string& path, const std::vector<Sample>& samples) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write manifest " + path);
    const fs::path base = fs::path(path).parent_path();
    for (const auto& s : samples) {
        nlohmann::ordered_json j;
        j["path"] = fs::path(s.path).lexically_relative(base.empty() ? fs::path(".") : base).generic_string();
        j["label"] = s.label;
        j["quality"] = s.quality;
        j["split"] = std::string(split_name(s.split));
        if (s.box) j["box"] = box_to_json(*s.box);
        if (s.extra.is_object())
            for (const auto& [k, v] : s.extra.items()) j[k] = v;
        out << j.dump() << "\n";
    }
}

std::map<std::string, std::size_t> manifest_counts(const std::vector<Sample>& samples) {
    std::map<std::string, std::size_t> counts;
    for (const auto& s : samples) {
        ++counts[std::to_string(s.label) + "/" + quality_name(s.quality) + "/" + std::string(split_name(s.split))];
    }
    return counts;
}

std::vector<Sample> filter_samples(const std::vector<Sample>& samples, std::optional<Split> split,
                                   std::optional<int> quality) {
    std::vector<Sample> out;
    for (const auto& s : samples)
        if ((!split || s.split == *split) && (!quality || s.quality == *quality)) out.push_back(s);
    return out;
}

void SynthConfig::validate() const {
    if (side < 48) throw ValidationError("synth side must be >= 48");
    if (patch_min < 2 || patch_max < patch_min) throw ValidationError("synth patch range is invalid");
    if (!(forge_shift >= 0) || !(forge_noise >= 0)) throw ValidationError("synth forgery strengths must be >= 0");
    if (train_bases == 0) throw ValidationError("synth needs at least one training base");
    double wsum = 0.0;
    for (double w : quadrant_weights) {
        if (!(w >= 0)) throw ValidationError("quadrant weights must be non-negative");
        wsum += w;
    }
    if (!(wsum > 0)) throw ValidationError("quadrant weights must not all be zero");
}

void to_json(nlohmann::json& j, const SynthConfig& c) {
    nlohmann::json levels = nlohmann::json::array();
    for (const auto& l : c.levels) levels.push_back({{"blur_sigma", l.blur_sigma}, {"quant_levels", l.quant_levels}});
    j = nlohmann::json{{"train_bases", c.train_bases}, {"val_bases", c.val_bases}, {"test_bases", c.test_bases},
                       {"side", c.side},   {"seed", c.seed},   {"patch_min", c.patch_min},
                       {"patch_max", c.patch_max}, {"forge_shift", c.forge_shift}, {"forge_noise", c.forge_noise}, {"quadrant_weights", c.quadrant_weights}, {"levels", levels}};
}

namespace {

// Smooth random field: a (cells+1)^2 lattice of uniform values, bilinearly
// interpolated over an n x n image.
std::vector<double> value_noise(Rng& rng, std::size_t n, std::size_t cells, double lo, double hi) {
    std::vector<double> lattice((cells + 1) * (cells + 1));
    for (auto& v : lattice) v = rng.uniform(lo, hi);
    std::vector<double> out(n * n);
    for (std::size_t y = 0; y < n; ++y) {
        const double fy = double(y) / double(n - 1) * double(cells);
        const std::size_t y0 = std::min(cells - 1, std::size_t(fy));
        const double ty = fy - double(y0);
        for (std::size_t x = 0; x < n; ++x) {
            const double fx = double(x) / double(n - 1) * double(cells);
            const std::size_t x0 = std::min(cells - 1, std::size_t(fx));
            const double tx = fx - double(x0);
            const auto at = [&](std::size_t yy, std::size_t xx) { return lattice[yy * (cells + 1) + xx]; };
            out[y * n + x] = (1 - ty) * ((1 - tx) * at(y0, x0) + tx * at(y0, x0 + 1)) +
                             ty * ((1 - tx) * at(y0 + 1, x0) + tx * at(y0 + 1, x0 + 1));
        }
    }
    return out;
}

double smoothstep(double e0, double e1, double x) {
    const double t = std::clamp((x - e0) / (e1 - e0), 0.0, 1.0);
    return t * t * (3.0 - 2.0 * t);
}

// 1 inside the ellipse, 0 outside, with a one-pixel soft edge.
double ellipse_mask(double x, double y, double cx, double cy, double rx, double ry) {
    const double d = std::sqrt(((x - cx) / rx) * ((x - cx) / rx) + ((y - cy) / ry) * ((y - cy) / ry));
    const double px = 1.0 / std::min(rx, ry);
    return 1.0 - smoothstep(1.0 - px, 1.0 + px, d);
}

double sample_clamped(const Tensor<double>& img, std::size_t c, double y, double x) {
    const std::size_t n = img.dim(1);
    const double maxc = double(n - 1);
    y = std::clamp(y, 0.0, maxc);
    x = std::clamp(x, 0.0, maxc);
    const std::size_t y0 = std::min(n - 2, std::size_t(y));
    const std::size_t x0 = std::min(n - 2, std::size_t(x));
    const double ty = y - double(y0), tx = x - double(x0);
    const auto at = [&](std::size_t yy, std::size_t xx) { return img[(c * n + yy) * n + xx]; };
    return (1 - ty) * ((1 - tx) * at(y0, x0) + tx * at(y0, x0 + 1)) +
           ty * ((1 - tx) * at(y0 + 1, x0) + tx * at(y0 + 1, x0 + 1));
}

int pick_quadrant(Rng& rng, const std::array<double, 4>& w) {
    const double total = w[0] + w[1] + w[2] + w[3];
    double u = rng.uniform() * total;
    for (int k = 0; k < 4; ++k) {
        if (u < w[std::size_t(k)]) return k;
        u -= w[std::size_t(k)];
    }
    return 3;
}

}  // namespace

SynthBase synth_base(Rng& rng, const SynthConfig& cfg) {
    const std::size_t n = cfg.side;
    const double sd = double(n);
    Tensor<double> img(Shape{3, n, n});

    const auto bg0 = value_noise(rng, n, 4, 0.15, 0.85);
    const auto bg1 = value_noise(rng, n, 4, 0.15, 0.85);
    const auto shade = value_noise(rng, n, 6, -0.07, 0.07);
    const double cx = sd * 0.5 + rng.uniform(-0.05, 0.05) * sd;
    const double cy = sd * 0.52 + rng.uniform(-0.05, 0.05) * sd;
    const double rx = sd * rng.uniform(0.27, 0.32);
    const double ry = sd * rng.uniform(0.32, 0.37);
    const std::array<double, 3> skin{0.78 + rng.uniform(-0.08, 0.08), 0.58 + rng.uniform(-0.08, 0.08),
                                     0.47 + rng.uniform(-0.08, 0.08)};
    const std::array<double, 3> eye_col{0.12, 0.09, 0.08};
    const std::array<double, 3> mouth_col{0.62 + rng.uniform(-0.05, 0.05), 0.22, 0.25};
    const double eye_dx = rx * rng.uniform(0.36, 0.44);
    const double eye_y = cy - ry * rng.uniform(0.2, 0.3);
    const double mouth_y = cy + ry * rng.uniform(0.45, 0.55);

    for (std::size_t y = 0; y < n; ++y) {
        for (std::size_t x = 0; x < n; ++x) {
            const double fx = double(x), fy = double(y);
            const std::size_t i = y * n + x;
            const double face = ellipse_mask(fx, fy, cx, cy, rx, ry);
            const double eyes = std::max(ellipse_mask(fx, fy, cx - eye_dx, eye_y, rx * 0.18, ry * 0.09),
                                         ellipse_mask(fx, fy, cx + eye_dx, eye_y, rx * 0.18, ry * 0.09));
            const double mouth = ellipse_mask(fx, fy, cx, mouth_y, rx * 0.36, ry * 0.08);
            const double light = 0.08 * (1.0 - (fy - cy) / ry) * 0.5;
            for (std::size_t c = 0; c < 3; ++c) {
                const double back = c == 1 ? bg1[i] : (c == 0 ? bg0[i] : 0.5 * (bg0[i] + bg1[i]));
                double v = skin[c] + shade[i] + light;
                v = v * (1 - eyes) + eye_col[c] * eyes;
                v = v * (1 - mouth) + mouth_col[c] * mouth;
                v = back * (1 - face) + v * face;
                img[(c * n + y) * n + x] = v;
            }
        }
    }
    for (auto& v : img.data()) v = std::clamp(v + 0.015 * rng.normal(), 0.0, 1.0);

    SynthBase out;
    out.real = img;
    const double jitter = 1.5;
    out.box = FaceBox{std::round(2 * (cx - rx + rng.uniform(-jitter, jitter))) / 2,
                      std::round(2 * (cy - ry + rng.uniform(-jitter, jitter))) / 2, std::round(2 * 2 * rx) / 2,
                      std::round(2 * 2 * ry) / 2};

    // Forged patch inside one quadrant of the expanded crop.
    out.quadrant = pick_quadrant(rng, cfg.quadrant_weights);
    const FaceBox e = expand_box(out.box);
    const double half = e.w / 2.0;
    const double qx = e.x + double(out.quadrant % 2) * half;
    const double qy = e.y + double(out.quadrant / 2) * half;
    const int p = cfg.patch_min + int(rng.below(std::uint64_t(cfg.patch_max - cfg.patch_min + 1)));
    const auto place = [&](double q0) {
        const int lo = std::max(1, int(std::ceil(q0)) + 1);
        const int hi = std::min(int(n) - p - 1, int(std::floor(q0 + half)) - p - 1);
        return hi >= lo ? lo + int(rng.below(std::uint64_t(hi - lo + 1))) : std::clamp(lo, 1, int(n) - p - 1);
    };
    const int px = place(qx);
    const int py = place(qy);
    out.patch = FaceBox{double(px), double(py), double(p), double(p)};

    Tensor<double> forged = img;
    const double amp = rng.uniform(1.5, 3.0);
    const double ph0 = rng.uniform(0.0, 6.283185307179586);
    const double ph1 = rng.uniform(0.0, 6.283185307179586);
    const double strength = rng.uniform(0.8, 1.2);
    const double k = cfg.forge_shift * strength;
    const std::array<double, 3> shift{0.12 * k, -0.08 * k, 0.10 * k};
    for (int y = py; y < py + p; ++y) {
        for (int x = px; x < px + p; ++x) {
            const double dx = amp * std::sin(6.283185307179586 * double(y - py) / double(p) + ph0);
            const double dy = amp * std::cos(6.283185307179586 * double(x - px) / double(p) + ph1);
            for (std::size_t c = 0; c < 3; ++c) {
                const double warped = sample_clamped(img, c, double(y) + dy, double(x) + dx);
                const double v = warped + shift[c] + rng.uniform(-cfg.forge_noise, cfg.forge_noise);
                forged[(c * n + std::size_t(y)) * n + std::size_t(x)] = std::clamp(v, 0.0, 1.0);
            }
        }
    }
    out.forged = std::move(forged);
    return out;
}

Tensor<double> degrade(const Tensor<double>& image, const DegradeLevel& level) {
    Tensor<double> out = image;
    if (level.blur_sigma > 0) {
        const std::size_t ch = image.dim(0), h = image.dim(1), w = image.dim(2);
        const int r = int(std::ceil(3.0 * level.blur_sigma));
        std::vector<double> k(std::size_t(2 * r + 1));
        double ks = 0.0;
        for (int i = -r; i <= r; ++i) {
            k[std::size_t(i + r)] = std::exp(-0.5 * double(i * i) / (level.blur_sigma * level.blur_sigma));
            ks += k[std::size_t(i + r)];
        }
        for (auto& v : k) v /= ks;
        Tensor<double> tmp(image.shape());
        for (std::size_t c = 0; c < ch; ++c) {
            for (std::size_t y = 0; y < h; ++y)
                for (std::size_t x = 0; x < w; ++x) {
                    double acc = 0.0;
                    for (int i = -r; i <= r; ++i) {
                        const long xx = std::clamp(long(x) + i, 0L, long(w) - 1);
                        acc += k[std::size_t(i + r)] * image[(c * h + y) * w + std::size_t(xx)];
                    }
                    tmp[(c * h + y) * w + x] = acc;
                }
            for (std::size_t y = 0; y < h; ++y)
                for (std::size_t x = 0; x < w; ++x) {
                    double acc = 0.0;
                    for (int i = -r; i <= r; ++i) {
                        const long yy = std::clamp(long(y) + i, 0L, long(h) - 1);
                        acc += k[std::size_t(i + r)] * tmp[(c * h + std::size_t(yy)) * w + x];
                    }
                    out[(c * h + y) * w + x] = acc;
                }
        }
    }
    if (level.quant_levels > 1) {
        const double steps = double(level.quant_levels - 1);
        for (auto& v : out.data()) v = std::round(std::clamp(v, 0.0, 1.0) * steps) / steps;
    }
    return out;
}

std::vector<Sample> synth_generate(const SynthConfig& cfg, const std::string& out_dir) {
    cfg.validate();
    fs::create_directories(fs::path(out_dir) / "images");
    Rng rng(cfg.seed);
    std::vector<Sample> samples;
    const std::array<std::pair<Split, std::size_t>, 3> splits{
        {{Split::kTrain, cfg.train_bases}, {Split::kVal, cfg.val_bases}, {Split::kTest, cfg.test_bases}}};
    for (const auto& [split, count] : splits) {
        for (std::size_t b = 0; b < count; ++b) {
            const SynthBase base = synth_base(rng, cfg);
            for (int label = 0; label < 2; ++label) {
                const Tensor<double>& src = label == 0 ? base.real : base.forged;
                for (int q = 0; q < 3; ++q) {
                    char name[96];
                    std::snprintf(name, sizeof name, "images/%s_%04zu_%d_q%d.png", std::string(split_name(split)).c_str(),
                                  b, label, q);
                    const fs::path file = fs::path(out_dir) / name;
                    write_png(file.string(), degrade(src, cfg.levels[std::size_t(q)]));
                    Sample s;
                    s.path = file.string();
                    s.label = label;
                    s.quality = q;
                    s.split = split;
                    s.box = base.box;
                    s.extra["base"] = b;
                    s.extra["quadrant"] = base.quadrant + 1;
                    if (label == 1) s.extra["patch"] = box_to_json(base.patch);
                    samples.push_back(std::move(s));
                }
            }
        }
    }
    write_manifest((fs::path(out_dir) / "manifest.jsonl").string(), samples);
    return samples;
}

std::vector<std::vector<std::size_t>> make_batches(std::size_t n, std::size_t batch_size, std::uint64_t seed,
                                                   std::size_t epoch, bool shuffle) {
    if (batch_size == 0) throw ValidationError("batch size must be >= 1");
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    if (shuffle) {
        Rng rng(seed ^ (0x9E3779B97F4A7C15ULL * (std::uint64_t(epoch) + 1)));
        rng.shuffle(order);
    }
    std::vector<std::vector<std::size_t>> batches;
    for (std::size_t i = 0; i < n; i += batch_size)
        batches.emplace_back(order.begin() + long(i), order.begin() + long(std::min(n, i + batch_size)));
    return batches;
}

Tensor<double> load_face_crop(const Sample& sample, std::size_t side) {
    const Tensor<double> image = read_png(sample.path);
    const FaceBox box = sample.box ? *sample.box : FaceBox{0, 0, double(image.dim(2)), double(image.dim(1))};
    return crop_resize(image, expand_box(box), side);
}

StreamSet<double> load_stream_set(const Sample& sample, std::size_t side) {
    return split_quadrants(load_face_crop(sample, side));
}

}  // namespace ggvit

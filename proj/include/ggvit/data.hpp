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

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "ggvit/preprocess.hpp"
#include "ggvit/rng.hpp"

namespace ggvit {

enum class Split { kTrain, kVal, kTest };

std::string_view split_name(Split s);
Split parse_split(std::string_view s);

// "q0", "q1", "q2"
std::string quality_name(int level);
int parse_quality(std::string_view s);

struct Sample {
    std::string path;  // resolved against the manifest directory
    int label = 0;     // 0 real, 1 forged
    int quality = 0;   // 0 pristine .. 2 heaviest
    Split split = Split::kTrain;
    std::optional<FaceBox> box;
    nlohmann::json extra;  // any further keys, kept verbatim
};

// JSON Lines; `path` values are relative to the manifest's directory unless
// absolute. Throws ValidationError naming the line and field, or IoError
// listing every missing image.
std::vector<Sample> load_manifest(const std::string& path);

// Inverse of load_manifest; paths are written relative to the manifest.
void write_manifest(const std::string& path, const std::vector<Sample>& samples);

// Counts keyed by "label/quality/split", e.g. "1/q2/train".
std::map<std::string, std::size_t> manifest_counts(const std::vector<Sample>& samples);

std::vector<Sample> filter_samples(const std::vector<Sample>& samples, std::optional<Split> split,
                                   std::optional<int> quality);

struct DegradeLevel {
    double blur_sigma = 0.0;     // 0 disables the blur
    int quant_levels = 0;        // 0 disables the quantization
};

struct SynthConfig {
    std::size_t train_bases = 200;
    std::size_t val_bases = 50;
    std::size_t test_bases = 50;
    std::size_t side = 80;
    std::uint64_t seed = 7;
    int patch_min = 14;
    int patch_max = 20;
    double forge_shift = 1.5;   // scale of the (0.12, -0.08, 0.10) color shift
    double forge_noise = 0.12;  // half-width of the uniform texture noise
    // Relative weights of quadrants X1..X4 for the forged patch.
    std::array<double, 4> quadrant_weights{1.0, 1.0, 1.0, 1.0};
    std::array<DegradeLevel, 3> levels{DegradeLevel{0.0, 0}, DegradeLevel{0.8, 32}, DegradeLevel{1.6, 12}};

    void validate() const;
};

void to_json(nlohmann::json& j, const SynthConfig& c);

struct SynthBase {
    Tensor<double> real;
    Tensor<double> forged;
    FaceBox box;
    int quadrant = 0;  // 0..3 = X1..X4
    FaceBox patch;     // integer pixel rectangle that was edited
};

// One base pair, before degradation.
SynthBase synth_base(Rng& rng, const SynthConfig& cfg);

// Gaussian blur (edge-clamped, radius ceil(3 sigma)) then uniform value
// quantization.
Tensor<double> degrade(const Tensor<double>& image, const DegradeLevel& level);

// Writes images/<split>_<base>_<label>_q<k>.png and manifest.jsonl under
// out_dir; returns the samples in manifest order.
std::vector<Sample> synth_generate(const SynthConfig& cfg, const std::string& out_dir);

// Index batches for one epoch. With shuffle the order is a Fisher-Yates
// permutation seeded by (seed, epoch); the last batch may be short.
std::vector<std::vector<std::size_t>> make_batches(std::size_t n, std::size_t batch_size, std::uint64_t seed,
                                                   std::size_t epoch, bool shuffle);

// Reads the image and runs the preprocessing pipeline. Samples without a
// box use the whole frame.
StreamSet<double> load_stream_set(const Sample& sample, std::size_t side);

// Just the whole-face crop X0.
Tensor<double> load_face_crop(const Sample& sample, std::size_t side);

}  // namespace ggvit

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
#include <filesystem>
#include <fstream>
#include <set>

#include "ggvit/data.hpp"
#include "ggvit/hashing.hpp"
#include "ggvit/image_io.hpp"
#include "test_util.hpp"

namespace ggvit {
namespace {

namespace fs = std::filesystem;
using test::TempDir;

void write_text(const std::string& path, const std::string& text) {
    std::ofstream(path) << text;
}

std::string message_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const std::exception& e) {
        return e.what();
    }
    return "";
}

class Manifest : public ::testing::Test {
   protected:
    void SetUp() override {
        fs::create_directories(dir.path() / "img");
        write_png(dir.str("img/a.png"), Tensor<double>(Shape{3, 8, 8}, 0.5));
    }
    std::string manifest(const std::string& body) {
        write_text(dir.str("m.jsonl"), body);
        return dir.str("m.jsonl");
    }
    TempDir dir{"manifest"};
};

TEST_F(Manifest, EmptyFileGivesNoSamples) { EXPECT_TRUE(load_manifest(manifest("")).empty()); }

TEST_F(Manifest, OneValidLine) {
    const auto s = load_manifest(
        manifest(R"({"path":"img/a.png","label":1,"quality":2,"split":"val","box":{"x":1,"y":2,"w":3,"h":4},"base":9})"
                 "\n"));
    ASSERT_EQ(s.size(), 1u);
    EXPECT_EQ(s[0].path, dir.str("img/a.png"));
    EXPECT_EQ(s[0].label, 1);
    EXPECT_EQ(s[0].quality, 2);
    EXPECT_EQ(s[0].split, Split::kVal);
    ASSERT_TRUE(s[0].box.has_value());
    EXPECT_EQ(*s[0].box, (FaceBox{1, 2, 3, 4}));
    EXPECT_EQ(s[0].extra["base"], 9);
}

TEST_F(Manifest, BadLabelNamesFieldAndLine) {
    const auto path = manifest(R"({"path":"img/a.png","label":0,"quality":0,"split":"train"})"
                               "\n"
                               R"({"path":"img/a.png","label":2,"quality":0,"split":"train"})"
                               "\n");
    const std::string msg = message_of([&] { load_manifest(path); });
    EXPECT_NE(msg.find(":2:"), std::string::npos) << msg;
    EXPECT_NE(msg.find("label"), std::string::npos) << msg;
    EXPECT_THROW(load_manifest(path), ValidationError);
}

TEST_F(Manifest, MalformedAndIncompleteLines) {
    EXPECT_THROW(load_manifest(manifest("{not json\n")), ValidationError);
    EXPECT_THROW(load_manifest(manifest("[1,2]\n")), ValidationError);
    const std::string msg = message_of(
        [&] { load_manifest(manifest(R"({"path":"img/a.png","label":0,"split":"train"})" "\n")); });
    EXPECT_NE(msg.find("quality"), std::string::npos) << msg;
    EXPECT_THROW(load_manifest(manifest(R"({"path":"img/a.png","label":0,"quality":3,"split":"train"})" "\n")),
                 ValidationError);
    EXPECT_THROW(load_manifest(manifest(R"({"path":"img/a.png","label":0,"quality":0,"split":"dev"})" "\n")),
                 ValidationError);
}

TEST_F(Manifest, MissingImagesAreListed) {
    const auto path = manifest(R"({"path":"img/gone1.png","label":0,"quality":0,"split":"train"})"
                               "\n"
                               R"({"path":"img/a.png","label":0,"quality":0,"split":"train"})"
                               "\n"
                               R"({"path":"img/gone2.png","label":1,"quality":0,"split":"test"})"
                               "\n");
    const std::string msg = message_of([&] { load_manifest(path); });
    EXPECT_NE(msg.find("gone1.png"), std::string::npos);
    EXPECT_NE(msg.find("gone2.png"), std::string::npos);
    EXPECT_THROW(load_manifest(path), IoError);
}

TEST_F(Manifest, WriteThenLoadRoundTrips) {
    Sample s;
    s.path = dir.str("img/a.png");
    s.label = 1;
    s.quality = 1;
    s.split = Split::kTest;
    s.box = FaceBox{0.5, 1, 6, 6};
    s.extra["quadrant"] = 3;
    write_manifest(dir.str("out.jsonl"), {s, s});
    const auto back = load_manifest(dir.str("out.jsonl"));
    ASSERT_EQ(back.size(), 2u);
    EXPECT_EQ(back[1].path, s.path);
    EXPECT_EQ(back[1].box, s.box);
    EXPECT_EQ(back[1].extra, s.extra);
    const auto counts = manifest_counts(back);
    EXPECT_EQ(counts.at("1/q1/test"), 2u);
}

SynthConfig small_synth(std::uint64_t seed) {
    SynthConfig cfg;
    cfg.train_bases = 4;
    cfg.val_bases = 2;
    cfg.test_bases = 2;
    cfg.seed = seed;
    return cfg;
}

TEST(Synth, SameSeedIsByteIdentical) {
    TempDir a("synth_a"), b("synth_b"), c("synth_c");
    synth_generate(small_synth(7), a.str());
    synth_generate(small_synth(7), b.str());
    synth_generate(small_synth(8), c.str());
    EXPECT_EQ(sha256_tree(a.str()), sha256_tree(b.str()));
    EXPECT_NE(sha256_tree(a.str()), sha256_tree(c.str()));
}

TEST(Synth, CountsAndBalance) {
    TempDir dir("synth_counts");
    const auto samples = synth_generate(small_synth(3), dir.str());
    EXPECT_EQ(samples.size(), 8u * 2 * 3);
    const auto counts = manifest_counts(samples);
    for (const char* split : {"train", "val", "test"}) {
        for (int q = 0; q < 3; ++q) {
            const auto key = [&](int label) { return std::to_string(label) + "/" + quality_name(q) + "/" + split; };
            const long real = long(counts.at(key(0)));
            const long forged = long(counts.at(key(1)));
            EXPECT_LE(std::abs(real - forged), 1) << split << " q" << q;
        }
    }
    EXPECT_EQ(load_manifest(dir.str("manifest.jsonl")).size(), samples.size());
}

TEST(Synth, ForgeryStaysInsideItsPatch) {
    const auto cfg = small_synth(4);
    Rng rng(cfg.seed);
    for (int n = 0; n < 20; ++n) {
        const SynthBase base = synth_base(rng, cfg);
        const std::size_t side = cfg.side;
        const auto inside = [&](std::size_t y, std::size_t x) {
            return double(x) >= base.patch.x && double(x) < base.patch.x + base.patch.w && double(y) >= base.patch.y &&
                   double(y) < base.patch.y + base.patch.h;
        };
        std::size_t changed = 0;
        for (std::size_t c = 0; c < 3; ++c)
            for (std::size_t y = 0; y < side; ++y)
                for (std::size_t x = 0; x < side; ++x) {
                    const std::size_t i = (c * side + y) * side + x;
                    if (!inside(y, x)) ASSERT_EQ(base.real[i], base.forged[i]);
                    else if (base.real[i] != base.forged[i]) ++changed;
                }
        EXPECT_GT(changed, 0u);
        const FaceBox e = expand_box(base.box);
        const double half = e.w / 2.0;
        const double cx = base.patch.x + base.patch.w / 2.0 - e.x;
        const double cy = base.patch.y + base.patch.h / 2.0 - e.y;
        EXPECT_EQ(int(cx >= half) + 2 * int(cy >= half), base.quadrant);
    }
}

TEST(Synth, StoredPristinePairDiffersOnlyInPatch) {
    TempDir dir("synth_outside");
    const auto samples = synth_generate(small_synth(5), dir.str());
    for (std::size_t i = 0; i + 3 < samples.size(); i += 6) {
        const Sample& real = samples[i];
        const Sample& forged = samples[i + 3];
        ASSERT_EQ(real.quality, 0);
        ASSERT_EQ(forged.label, 1);
        const auto a = read_png(real.path);
        const auto b = read_png(forged.path);
        const auto& p = forged.extra.at("patch");
        const std::size_t side = a.dim(1);
        for (std::size_t c = 0; c < 3; ++c)
            for (std::size_t y = 0; y < side; ++y)
                for (std::size_t x = 0; x < side; ++x) {
                    const bool inside = double(x) >= p["x"].get<double>() &&
                                        double(x) < p["x"].get<double>() + p["w"].get<double>() &&
                                        double(y) >= p["y"].get<double>() &&
                                        double(y) < p["y"].get<double>() + p["h"].get<double>();
                    if (!inside) ASSERT_EQ(a[(c * side + y) * side + x], b[(c * side + y) * side + x]);
                }
    }
}

double mean_abs_delta(const Tensor<double>& a, const Tensor<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
    return s / double(a.size());
}

TEST(Synth, DegradationGrowsWithLevel) {
    const auto cfg = small_synth(6);
    Rng rng(cfg.seed);
    for (int n = 0; n < 20; ++n) {
        const SynthBase base = synth_base(rng, cfg);
        for (const auto* img : {&base.real, &base.forged}) {
            const auto q0 = quantize_8bit(degrade(*img, cfg.levels[0]));
            const double d1 = mean_abs_delta(quantize_8bit(degrade(*img, cfg.levels[1])), q0);
            const double d2 = mean_abs_delta(quantize_8bit(degrade(*img, cfg.levels[2])), q0);
            EXPECT_GT(d1, 0.0);
            EXPECT_GT(d2, d1);
        }
    }
}

TEST(Synth, DegradeLevelZeroIsIdentity) {
    Rng rng(1);
    const auto img = test::random_tensor(rng, {3, 16, 16}, 0, 1);
    EXPECT_EQ(degrade(img, DegradeLevel{}), img);
    const auto q = degrade(img, DegradeLevel{0.0, 3});
    for (double v : q.data()) EXPECT_TRUE(v == 0.0 || v == 0.5 || v == 1.0);
}

TEST(Synth, ConfigValidation) {
    auto cfg = small_synth(1);
    cfg.patch_max = cfg.patch_min - 1;
    EXPECT_THROW(cfg.validate(), ValidationError);
    cfg = small_synth(1);
    cfg.side = 20;
    EXPECT_THROW(cfg.validate(), ValidationError);
    cfg = small_synth(1);
    cfg.quadrant_weights = {0, 0, 0, 0};
    EXPECT_THROW(cfg.validate(), ValidationError);
    cfg = small_synth(1);
    cfg.forge_noise = -1;
    EXPECT_THROW(cfg.validate(), ValidationError);
}

TEST(Batches, SizesAndLastShortBatch) {
    const auto b = make_batches(10, 8, 1, 0, true);
    ASSERT_EQ(b.size(), 2u);
    EXPECT_EQ(b[0].size(), 8u);
    EXPECT_EQ(b[1].size(), 2u);
    std::set<std::size_t> seen;
    for (const auto& batch : b) seen.insert(batch.begin(), batch.end());
    EXPECT_EQ(seen.size(), 10u);
}

TEST(Batches, SeededAndOrdered) {
    EXPECT_EQ(make_batches(50, 8, 3, 2, true), make_batches(50, 8, 3, 2, true));
    EXPECT_NE(make_batches(50, 8, 3, 2, true), make_batches(50, 8, 3, 3, true));
    EXPECT_NE(make_batches(50, 8, 3, 2, true), make_batches(50, 8, 4, 2, true));
    const auto plain = make_batches(10, 4, 3, 0, false);
    std::size_t next = 0;
    for (const auto& batch : plain)
        for (std::size_t i : batch) EXPECT_EQ(i, next++);
    EXPECT_THROW(make_batches(10, 0, 0, 0, false), ValidationError);
    EXPECT_TRUE(make_batches(0, 4, 0, 0, true).empty());
}

TEST(Names, QualityAndSplit) {
    for (int q = 0; q < 3; ++q) EXPECT_EQ(parse_quality(quality_name(q)), q);
    EXPECT_THROW(parse_quality("q3"), ValidationError);
    for (auto s : {Split::kTrain, Split::kVal, Split::kTest}) EXPECT_EQ(parse_split(split_name(s)), s);
}

TEST(ImageIo, PngRoundTripIsExactAfterQuantization) {
    TempDir dir("png");
    Rng rng(2);
    const auto img = quantize_8bit(test::random_tensor(rng, {3, 7, 5}, -0.2, 1.2));
    write_png(dir.str("x.png"), img);
    const auto back = read_png(dir.str("x.png"));
    EXPECT_EQ(back, img);
    for (double v : back.data()) {
        EXPECT_GE(v, 0.0);
        EXPECT_LE(v, 1.0);
        EXPECT_EQ(std::round(v * 255.0), v * 255.0);
    }
    EXPECT_THROW(read_png(dir.str("missing.png")), IoError);
}

TEST(Hashing, KnownVectors) {
    EXPECT_EQ(sha256_hex(std::string("abc")), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    EXPECT_EQ(sha256_hex(std::string()), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    TempDir dir("hash");
    write_text(dir.str("f.txt"), "abc");
    EXPECT_EQ(sha256_file(dir.str("f.txt")), sha256_hex(std::string("abc")));
}

TEST(Hashing, TreeSeesNamesAndContents) {
    TempDir a("tree_a"), b("tree_b");
    write_text(a.str("x"), "1");
    write_text(b.str("x"), "1");
    EXPECT_EQ(sha256_tree(a.str()), sha256_tree(b.str()));
    write_text(b.str("x"), "2");
    EXPECT_NE(sha256_tree(a.str()), sha256_tree(b.str()));
    write_text(b.str("x"), "1");
    fs::rename(b.path() / "x", b.path() / "y");
    EXPECT_NE(sha256_tree(a.str()), sha256_tree(b.str()));
}

}  // namespace
}  // namespace ggvit

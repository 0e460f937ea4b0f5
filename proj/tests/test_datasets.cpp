#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <complex>
#include <filesystem>
#include <fstream>

#include "rashvit/datasets.hpp"
#include "rashvit/errors.hpp"

using namespace rashvit;
using namespace rashvit::datasets;
namespace fs = std::filesystem;

namespace {

struct TmpDir {
    fs::path path;
    explicit TmpDir(const std::string& name) : path(fs::temp_directory_path() / name) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TmpDir() { fs::remove_all(path); }
};

}  // namespace

TEST_CASE("synthetic generation is deterministic and class-labeled") {
    auto spec = default_synth_spec(4, 6, 42);
    auto a = synth_generate(spec);
    auto b = synth_generate(spec);
    REQUIRE(a.size() == 24);
    CHECK(a.num_classes() == 4);
    for (size_t i = 0; i < a.size(); ++i) {
        CHECK(a.segments[i].samples == b.segments[i].samples);
        CHECK(a.labels[i] == b.labels[i]);
    }
    spec.seed = 43;
    auto c = synth_generate(spec);
    CHECK(a.segments[0].samples != c.segments[0].samples);
}

TEST_CASE("synthetic classes are spectrally distinguishable") {
    auto spec = default_synth_spec(3, 2, 7);
    auto ds = synth_generate(spec);
    // dominant FFT bin above DC should sit near the class resonance
    for (size_t i = 0; i < ds.size(); ++i) {
        auto spectrum = sigproc::fft(ds.segments[i].samples);
        size_t half = spectrum.size() / 2;
        size_t best = 1;
        for (size_t k = 2; k < half; ++k)
            if (std::abs(spectrum[k]) > std::abs(spectrum[best])) best = k;
        double peak_hz = static_cast<double>(best) * spec.sample_rate_hz / static_cast<double>(spectrum.size());
        double expect_hz = spec.classes[static_cast<size_t>(ds.labels[i])].resonance_hz;
        CHECK(std::abs(peak_hz - expect_hz) < 150.0);
    }
}

TEST_CASE("archive round trip is bit-exact") {
    TmpDir dir("rashvit_test_archive");
    auto ds = synth_generate(default_synth_spec(3, 4, 9));
    save_archive(ds, dir.path.string());
    auto loaded = load_archive((dir.path / "manifest.json").string());

    REQUIRE(loaded.size() == ds.size());
    CHECK(loaded.num_classes() == 3);
    // save groups segments per class; compare as per-class pools of f32 payloads
    for (int c = 0; c < 3; ++c) {
        std::vector<std::vector<float>> want, got;
        for (size_t i = 0; i < ds.size(); ++i)
            if (ds.labels[i] == c)
                want.emplace_back(ds.segments[i].samples.begin(), ds.segments[i].samples.end());
        for (size_t i = 0; i < loaded.size(); ++i)
            if (loaded.labels[i] == c)
                got.emplace_back(loaded.segments[i].samples.begin(), loaded.segments[i].samples.end());
        CHECK(want == got);
    }

    // second save of the loaded dataset writes identical raw files
    TmpDir dir2("rashvit_test_archive2");
    save_archive(loaded, dir2.path.string());
    for (int c = 0; c < 3; ++c) {
        char name[32];
        std::snprintf(name, sizeof(name), "class_%03d.f32", c);
        std::ifstream f1(dir.path / name, std::ios::binary), f2(dir2.path / name, std::ios::binary);
        std::string b1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
        std::string b2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
        CHECK(b1 == b2);
    }
}

TEST_CASE("load_archive reports label gaps and missing files") {
    TmpDir dir("rashvit_test_badarchive");
    auto ds = synth_generate(default_synth_spec(3, 2, 11));
    save_archive(ds, dir.path.string());

    auto manifest_path = (dir.path / "manifest.json").string();
    std::ifstream in(manifest_path);
    nlohmann::json j = nlohmann::json::parse(in);
    in.close();

    SUBCASE("label gap") {
        for (auto& e : j["entries"])
            if (e["label"] == 1) e["label"] = 2;
        std::ofstream out(manifest_path);
        out << j.dump();
        out.close();
        CHECK_THROWS_WITH_AS(load_archive(manifest_path), doctest::Contains("missing class index 1"), DataError);
    }
    SUBCASE("missing raw file") {
        fs::remove(dir.path / "class_001.f32");
        CHECK_THROWS_AS(load_archive(manifest_path), DataError);
    }
    SUBCASE("file too short") {
        fs::resize_file(dir.path / "class_001.f32", 16);
        CHECK_THROWS_AS(load_archive(manifest_path), DataError);
    }
    SUBCASE("label out of range") {
        j["entries"][0]["label"] = 99;
        std::ofstream out(manifest_path);
        out << j.dump();
        out.close();
        CHECK_THROWS_AS(load_archive(manifest_path), DataError);
    }
}

TEST_CASE("stratified split honors 7:1:2 with largest-remainder rounding") {
    auto ds = synth_generate(default_synth_spec(10, 200, 13));
    split(ds, {0.7, 0.1, 0.2}, 5);
    auto hist = class_histogram(ds);
    int64_t tr = 0, va = 0, te = 0;
    for (const auto& row : hist) {
        CHECK(row[0] == 140);
        CHECK(row[1] == 20);
        CHECK(row[2] == 40);
        CHECK(row[3] == 200);
        tr += row[0];
        va += row[1];
        te += row[2];
    }
    CHECK(tr == 1400);
    CHECK(va == 200);
    CHECK(te == 400);
    for (auto s : ds.splits) CHECK(s != Split::none);
}

TEST_CASE("split is deterministic per seed and covers odd counts") {
    auto ds = synth_generate(default_synth_spec(3, 7, 17));
    split(ds, {0.7, 0.1, 0.2}, 21);
    auto first = ds.splits;
    split(ds, {0.7, 0.1, 0.2}, 21);
    CHECK(ds.splits == first);
    split(ds, {0.7, 0.1, 0.2}, 22);
    CHECK(ds.splits != first);

    // every segment assigned; per-class totals preserved
    auto hist = class_histogram(ds);
    for (const auto& row : hist) CHECK(row[0] + row[1] + row[2] == row[3]);
}

TEST_CASE("split validation") {
    auto ds = synth_generate(default_synth_spec(2, 2, 19));
    CHECK_THROWS_AS(split(ds, {0.5, 0.4, 0.2}, 1), UsageError);     // ratios sum > 1
    CHECK_THROWS_AS(split(ds, {0.34, 0.33, 0.33}, 1), DataError);   // 2 segments, 3 parts
}

TEST_CASE("synth spec json round trip rejects unknown keys") {
    auto spec = default_synth_spec(4, 8, 23);
    auto j = synth_spec_to_json(spec);
    auto back = synth_spec_from_json(j);
    CHECK(back.num_classes == 4);
    CHECK(back.segments_per_class == 8);
    CHECK(back.seed == 23);
    CHECK(back.classes[2].resonance_hz == spec.classes[2].resonance_hz);

    j["segments"] = 5;  // typo'd key
    CHECK_THROWS_WITH_AS(synth_spec_from_json(j), doctest::Contains("segments"), UsageError);
}

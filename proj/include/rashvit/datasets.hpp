#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "rashvit/sigproc.hpp"

namespace rashvit::datasets {

enum class Split { train = 0, val = 1, test = 2, none = 3 };

struct ManifestEntry {
    std::string file;
    uint64_t byte_offset = 0;
    uint64_t sample_count = 0;
    int label = 0;
};

// manifest.json + headerless little-endian f32 raw files.
struct Manifest {
    double sample_rate_hz = 12000.0;
    int window = sigproc::kWindowSize;
    int stride = sigproc::kWindowSize;
    std::vector<std::string> class_names;
    std::vector<ManifestEntry> entries;
};

struct LabeledDataset {
    std::vector<sigproc::SignalSegment> segments;
    std::vector<int> labels;
    std::vector<Split> splits;  // Split::none until split() runs
    std::vector<std::string> class_names;
    double sample_rate_hz = 12000.0;
    nlohmann::json provenance;

    int num_classes() const { return static_cast<int>(class_names.size()); }
    size_t size() const { return segments.size(); }
    std::vector<size_t> indices_of(Split s) const;
};

struct ClassParams {
    double impulse_rate_hz = 30.0;
    double resonance_hz = 1000.0;
    double decay_per_sec = 400.0;
    double amplitude = 1.0;
};

struct SynthSpec {
    int num_classes = 10;
    std::vector<ClassParams> classes;  // size num_classes; filled by default_synth_spec
    double noise_floor = 0.05;
    int segments_per_class = 64;
    int segment_length = sigproc::kWindowSize;
    double sample_rate_hz = 12000.0;
    uint64_t seed = 7;
};

SynthSpec default_synth_spec(int num_classes = 10, int segments_per_class = 64, uint64_t seed = 7);
SynthSpec synth_spec_from_json(const nlohmann::json& j);
nlohmann::json synth_spec_to_json(const SynthSpec& spec);

LabeledDataset load_archive(const std::string& manifest_path);
void save_archive(const LabeledDataset& ds, const std::string& dir);

// Stratified per class, largest-remainder rounding, deterministic given seed.
void split(LabeledDataset& ds, std::array<double, 3> ratios, uint64_t seed);

LabeledDataset synth_generate(const SynthSpec& spec);

// rows[k] = {train, val, test, total} counts for class k.
std::vector<std::array<int64_t, 4>> class_histogram(const LabeledDataset& ds);

}  // namespace rashvit::datasets

#include "rashvit/datasets.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>
#include <set>

#include "rashvit/errors.hpp"

namespace rashvit::datasets {

namespace fs = std::filesystem;

std::vector<size_t> LabeledDataset::indices_of(Split s) const {
    std::vector<size_t> out;
    for (size_t i = 0; i < splits.size(); ++i)
        if (splits[i] == s) out.push_back(i);
    return out;
}

namespace {

uint64_t mix_seed(uint64_t a, uint64_t b) {
    // splitmix64 finalizer over the combined value
    uint64_t z = a + 0x9e3779b97f4a7c15ull * (b + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

Manifest manifest_from_json(const nlohmann::json& j) {
    Manifest m;
    m.sample_rate_hz = j.at("sample_rate_hz").get<double>();
    m.window = j.value("window", sigproc::kWindowSize);
    m.stride = j.value("stride", sigproc::kWindowSize);
    m.class_names = j.at("classes").get<std::vector<std::string>>();
    for (const auto& e : j.at("entries")) {
        ManifestEntry me;
        me.file = e.at("file").get<std::string>();
        me.byte_offset = e.value("byte_offset", 0ull);
        me.sample_count = e.at("sample_count").get<uint64_t>();
        me.label = e.at("label").get<int>();
        m.entries.push_back(std::move(me));
    }
    return m;
}

}  // namespace

LabeledDataset load_archive(const std::string& manifest_path) {
    std::ifstream f(manifest_path);
    if (!f) throw DataError("load_archive: cannot open manifest " + manifest_path);
    nlohmann::json j = nlohmann::json::parse(f, nullptr, false);
    if (j.is_discarded()) throw DataError("load_archive: malformed manifest JSON in " + manifest_path);
    Manifest m = manifest_from_json(j);

    int k = static_cast<int>(m.class_names.size());
    std::set<int> seen;
    for (const auto& e : m.entries) {
        if (e.label < 0 || e.label >= k)
            throw DataError("load_archive: label " + std::to_string(e.label) + " outside [0," + std::to_string(k) +
                            ")");
        seen.insert(e.label);
    }
    for (int c = 0; c < k; ++c)
        if (!seen.contains(c)) throw DataError("load_archive: label gap, missing class index " + std::to_string(c));

    LabeledDataset ds;
    ds.class_names = m.class_names;
    ds.sample_rate_hz = m.sample_rate_hz;
    ds.provenance = {{"kind", "archive"}, {"manifest", manifest_path}};

    fs::path base = fs::path(manifest_path).parent_path();
    for (const auto& e : m.entries) {
        fs::path file = base / e.file;
        std::ifstream raw(file, std::ios::binary);
        if (!raw) throw DataError("load_archive: missing file " + file.string());
        raw.seekg(0, std::ios::end);
        uint64_t bytes = static_cast<uint64_t>(raw.tellg());
        if (bytes < e.byte_offset + e.sample_count * sizeof(float))
            throw DataError("load_archive: file too short: " + file.string() + " (" + std::to_string(bytes) +
                            " bytes, need " + std::to_string(e.byte_offset + e.sample_count * sizeof(float)) + ")");
        raw.seekg(static_cast<std::streamoff>(e.byte_offset));
        std::vector<float> buf(e.sample_count);
        raw.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(float)));
        std::vector<double> signal(buf.begin(), buf.end());
        auto segs = sigproc::sliding_window(signal, m.window, m.stride, m.sample_rate_hz, e.file);
        for (auto& s : segs) {
            ds.segments.push_back(std::move(s));
            ds.labels.push_back(e.label);
        }
    }
    ds.splits.assign(ds.segments.size(), Split::none);
    return ds;
}

void save_archive(const LabeledDataset& ds, const std::string& dir) {
    if (ds.segments.empty()) throw DataError("save_archive: empty dataset");
    fs::create_directories(dir);
    size_t window = ds.segments.front().samples.size();
    for (const auto& s : ds.segments)
        if (s.samples.size() != window) throw DataError("save_archive: segments have mixed lengths");

    int k = ds.num_classes();
    nlohmann::json entries = nlohmann::json::array();
    for (int c = 0; c < k; ++c) {
        char name[32];
        std::snprintf(name, sizeof(name), "class_%03d.f32", c);
        std::string tmp = (fs::path(dir) / (std::string(name) + ".tmp")).string();
        uint64_t count = 0;
        {
            std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
            if (!out) throw DataError("save_archive: cannot write " + tmp);
            for (size_t i = 0; i < ds.segments.size(); ++i) {
                if (ds.labels[i] != c) continue;
                std::vector<float> buf(ds.segments[i].samples.begin(), ds.segments[i].samples.end());
                out.write(reinterpret_cast<const char*>(buf.data()),
                          static_cast<std::streamsize>(buf.size() * sizeof(float)));
                count += buf.size();
            }
        }
        fs::rename(tmp, fs::path(dir) / name);
        entries.push_back({{"file", name}, {"byte_offset", 0}, {"sample_count", count}, {"label", c}});
    }
    nlohmann::json manifest = {{"sample_rate_hz", ds.sample_rate_hz},
                               {"window", window},
                               {"stride", window},
                               {"classes", ds.class_names},
                               {"entries", entries}};
    std::string tmp = (fs::path(dir) / "manifest.json.tmp").string();
    {
        std::ofstream out(tmp, std::ios::trunc);
        out << manifest.dump(2) << "\n";
    }
    fs::rename(tmp, fs::path(dir) / "manifest.json");
}

void split(LabeledDataset& ds, std::array<double, 3> ratios, uint64_t seed) {
    double sum = ratios[0] + ratios[1] + ratios[2];
    if (std::abs(sum - 1.0) > 1e-9) throw UsageError("split: ratios must sum to 1");
    int k = ds.num_classes();
    ds.splits.assign(ds.segments.size(), Split::none);
    int parts = 0;
    for (double r : ratios) parts += r > 0.0 ? 1 : 0;
    for (int c = 0; c < k; ++c) {
        std::vector<size_t> idx;
        for (size_t i = 0; i < ds.labels.size(); ++i)
            if (ds.labels[i] == c) idx.push_back(i);
        if (static_cast<int>(idx.size()) < parts)
            throw DataError("split: class " + std::to_string(c) + " has " + std::to_string(idx.size()) +
                            " segments, fewer than " + std::to_string(parts) + " split parts");
        std::mt19937_64 rng(mix_seed(seed, static_cast<uint64_t>(c)));
        std::shuffle(idx.begin(), idx.end(), rng);
        // largest-remainder apportionment
        size_t n = idx.size();
        std::array<int64_t, 3> cnt;
        std::array<double, 3> frac;
        int64_t assigned = 0;
        for (int s = 0; s < 3; ++s) {
            double q = ratios[static_cast<size_t>(s)] * static_cast<double>(n);
            cnt[static_cast<size_t>(s)] = static_cast<int64_t>(std::floor(q));
            frac[static_cast<size_t>(s)] = q - std::floor(q);
            assigned += cnt[static_cast<size_t>(s)];
        }
        while (assigned < static_cast<int64_t>(n)) {
            int best = 0;
            for (int s = 1; s < 3; ++s)
                if (frac[static_cast<size_t>(s)] > frac[static_cast<size_t>(best)]) best = s;
            ++cnt[static_cast<size_t>(best)];
            frac[static_cast<size_t>(best)] = -1.0;
            ++assigned;
        }
        size_t pos = 0;
        for (int s = 0; s < 3; ++s)
            for (int64_t i = 0; i < cnt[static_cast<size_t>(s)]; ++i) ds.splits[idx[pos++]] = static_cast<Split>(s);
    }
}

SynthSpec default_synth_spec(int num_classes, int segments_per_class, uint64_t seed) {
    SynthSpec spec;
    spec.num_classes = num_classes;
    spec.segments_per_class = segments_per_class;
    spec.seed = seed;
    for (int c = 0; c < num_classes; ++c) {
        ClassParams p;
        p.impulse_rate_hz = 20.0 + 11.0 * c;
        p.resonance_hz = 500.0 + 320.0 * c;
        p.decay_per_sec = 300.0 + 45.0 * c;
        p.amplitude = 1.0;
        spec.classes.push_back(p);
    }
    return spec;
}

nlohmann::json synth_spec_to_json(const SynthSpec& spec) {
    nlohmann::json classes = nlohmann::json::array();
    for (const auto& c : spec.classes)
        classes.push_back({{"impulse_rate_hz", c.impulse_rate_hz},
                           {"resonance_hz", c.resonance_hz},
                           {"decay_per_sec", c.decay_per_sec},
                           {"amplitude", c.amplitude}});
    return {{"num_classes", spec.num_classes},    {"classes", classes},
            {"noise_floor", spec.noise_floor},    {"segments_per_class", spec.segments_per_class},
            {"segment_length", spec.segment_length}, {"sample_rate_hz", spec.sample_rate_hz},
            {"seed", spec.seed}};
}

SynthSpec synth_spec_from_json(const nlohmann::json& j) {
    for (auto it = j.begin(); it != j.end(); ++it) {
        static const std::set<std::string> allowed = {"num_classes",   "classes",        "noise_floor",
                                                      "segments_per_class", "segment_length", "sample_rate_hz",
                                                      "seed"};
        if (!allowed.contains(it.key())) throw UsageError("synth spec: unknown key '" + it.key() + "'");
    }
    SynthSpec d = default_synth_spec(j.value("num_classes", 10));
    SynthSpec spec = d;
    spec.noise_floor = j.value("noise_floor", d.noise_floor);
    spec.segments_per_class = j.value("segments_per_class", d.segments_per_class);
    spec.segment_length = j.value("segment_length", d.segment_length);
    spec.sample_rate_hz = j.value("sample_rate_hz", d.sample_rate_hz);
    spec.seed = j.value("seed", d.seed);
    if (j.contains("classes")) {
        spec.classes.clear();
        for (const auto& e : j.at("classes")) {
            for (auto it = e.begin(); it != e.end(); ++it) {
                static const std::set<std::string> ck = {"impulse_rate_hz", "resonance_hz", "decay_per_sec",
                                                         "amplitude"};
                if (!ck.contains(it.key())) throw UsageError("synth spec: unknown class key '" + it.key() + "'");
            }
            ClassParams p;
            p.impulse_rate_hz = e.value("impulse_rate_hz", 30.0);
            p.resonance_hz = e.value("resonance_hz", 1000.0);
            p.decay_per_sec = e.value("decay_per_sec", 400.0);
            p.amplitude = e.value("amplitude", 1.0);
            spec.classes.push_back(p);
        }
    }
    if (static_cast<int>(spec.classes.size()) != spec.num_classes)
        throw UsageError("synth spec: classes list size does not match num_classes");
    return spec;
}

LabeledDataset synth_generate(const SynthSpec& spec) {
    if (static_cast<int>(spec.classes.size()) != spec.num_classes)
        throw UsageError("synth_generate: classes list size does not match num_classes");
    LabeledDataset ds;
    ds.sample_rate_hz = spec.sample_rate_hz;
    ds.provenance = {{"kind", "synth"}, {"spec", synth_spec_to_json(spec)},
                     {"generator", sigproc::kNoiseGeneratorName}};
    for (int c = 0; c < spec.num_classes; ++c) ds.class_names.push_back("synth_class_" + std::to_string(c));

    int n = spec.segment_length;
    for (int c = 0; c < spec.num_classes; ++c) {
        const auto& p = spec.classes[static_cast<size_t>(c)];
        for (int s = 0; s < spec.segments_per_class; ++s) {
            uint64_t seg_seed = mix_seed(spec.seed, (static_cast<uint64_t>(c) << 32) | static_cast<uint64_t>(s));
            std::mt19937_64 rng(seg_seed);
            std::uniform_real_distribution<double> u(0.0, 1.0);

            std::vector<double> x(static_cast<size_t>(n), 0.0);
            if (p.amplitude != 0.0 && p.impulse_rate_hz > 0.0) {
                double period = spec.sample_rate_hz / p.impulse_rate_hz;
                double phase = u(rng) * period;
                double omega = 2.0 * std::numbers::pi * p.resonance_hz / spec.sample_rate_hz;
                double lambda = p.decay_per_sec / spec.sample_rate_hz;
                int ring_len = lambda > 0.0 ? std::min(n, static_cast<int>(std::ceil(7.0 / lambda))) : n;
                for (double t0 = phase; t0 < static_cast<double>(n); t0 += period) {
                    int start = static_cast<int>(std::ceil(t0));
                    double amp = p.amplitude * (0.8 + 0.4 * u(rng));
                    for (int t = start; t < std::min(n, start + ring_len); ++t) {
                        double dt = static_cast<double>(t) - t0;
                        x[static_cast<size_t>(t)] += amp * std::exp(-lambda * dt) * std::sin(omega * dt);
                    }
                }
            }
            if (spec.noise_floor > 0.0) {
                auto noise = sigproc::gaussian_sequence(mix_seed(seg_seed, 0x6e6f697365ull), x.size());
                for (size_t i = 0; i < x.size(); ++i) x[i] += spec.noise_floor * noise[i];
            }
            sigproc::SignalSegment seg;
            seg.samples = std::move(x);
            seg.sample_rate_hz = spec.sample_rate_hz;
            seg.source_id = "synth:c" + std::to_string(c) + ":s" + std::to_string(s);
            ds.segments.push_back(std::move(seg));
            ds.labels.push_back(c);
        }
    }
    ds.splits.assign(ds.segments.size(), Split::none);
    return ds;
}

std::vector<std::array<int64_t, 4>> class_histogram(const LabeledDataset& ds) {
    std::vector<std::array<int64_t, 4>> out(static_cast<size_t>(ds.num_classes()), {0, 0, 0, 0});
    for (size_t i = 0; i < ds.labels.size(); ++i) {
        auto& row = out[static_cast<size_t>(ds.labels[i])];
        if (ds.splits[i] != Split::none) ++row[static_cast<size_t>(ds.splits[i])];
        ++row[3];
    }
    return out;
}

}  // namespace rashvit::datasets

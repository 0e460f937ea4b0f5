// End-to-end acceptance checks. Each criterion prints exactly one
// [PASS]/[FAIL] line; the process exits nonzero if any criterion fails.

#include <chrono>
#include <cmath>
#include <complex>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "rashvit/checkpoint.hpp"
#include "rashvit/datasets.hpp"
#include "rashvit/gradcheck_suite.hpp"
#include "rashvit/model_info.hpp"
#include "rashvit/sigproc.hpp"
#include "rashvit/train.hpp"

using namespace rashvit;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

int g_failures = 0;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

void report(int criterion, bool pass, const std::string& detail, double secs) {
    std::printf("[%s] criterion %d: %s (%.1f s)\n", pass ? "PASS" : "FAIL", criterion, detail.c_str(), secs);
    std::fflush(stdout);
    if (!pass) ++g_failures;
}

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    if (!f) return "<missing:" + p.string() + ">";
    return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

// --- criterion 1: gradient checks -------------------------------------------

void criterion_1() {
    auto t0 = Clock::now();
    auto results = run_grad_checks(false);
    double worst_ratio = 0.0;
    std::string worst_name;
    bool ok = true;
    for (const auto& r : results) {
        if (!r.pass) ok = false;
        double ratio = r.max_err / r.tol;
        if (ratio > worst_ratio) {
            worst_ratio = ratio;
            worst_name = r.name;
        }
    }
    double secs = seconds_since(t0);
    ok = ok && secs < 120.0;
    char buf[256];
    std::snprintf(buf, sizeof buf, "%zu gradient checks, worst err/tol %.2e (%s)", results.size(), worst_ratio,
                  worst_name.c_str());
    report(1, ok, buf, secs);
}

// --- criterion 2: FFT against a naive DFT oracle -----------------------------

std::vector<std::complex<double>> naive_dft(const std::vector<double>& x) {
    size_t n = x.size();
    std::vector<std::complex<double>> out(n);
    for (size_t k = 0; k < n; ++k) {
        std::complex<double> acc = 0.0;
        for (size_t j = 0; j < n; ++j) {
            double ang = -2.0 * M_PI * static_cast<double>(k) * static_cast<double>(j) / static_cast<double>(n);
            acc += x[j] * std::complex<double>(std::cos(ang), std::sin(ang));
        }
        out[k] = acc;
    }
    return out;
}

void criterion_2() {
    auto t0 = Clock::now();
    std::mt19937_64 rng(401);
    std::normal_distribution<double> dist(0.0, 1.0);
    double max_abs = 0.0;
    for (size_t n : {size_t{8}, size_t{64}, size_t{2048}}) {
        for (int trial = 0; trial < 20; ++trial) {
            std::vector<double> x(n);
            for (auto& v : x) v = dist(rng);
            auto fast = sigproc::fft(x);
            auto slow = naive_dft(x);
            for (size_t k = 0; k < n; ++k) max_abs = std::max(max_abs, std::abs(fast[k] - slow[k]));
        }
    }
    double secs = seconds_since(t0);
    bool ok = max_abs < 1e-9 && secs < 10.0;
    char buf[160];
    std::snprintf(buf, sizeof buf, "FFT vs naive DFT, N in {8,64,2048}, 20 vectors each, max |diff| %.2e", max_abs);
    report(2, ok, buf, secs);
}

// --- criterion 3: noise-injection calibration --------------------------------

void criterion_3() {
    auto t0 = Clock::now();
    sigproc::SignalSegment base;
    base.samples = sigproc::gaussian_sequence(77, 2048);
    for (size_t i = 0; i < base.samples.size(); ++i)
        base.samples[i] += 0.8 * std::sin(0.07 * static_cast<double>(i));
    auto clean = sigproc::normalize(base);

    int total = 0, passed = 0;
    double worst = 0.0;
    for (double target : {-10.0, -6.0, 0.0, 6.0, 10.0}) {
        for (uint64_t seed = 0; seed < 100; ++seed) {
            auto noisy = sigproc::inject_noise(clean, {target, seed});
            double err = std::abs(sigproc::measure_snr(clean, noisy) - target);
            worst = std::max(worst, err);
            ++total;
            if (err <= 0.2) ++passed;
        }
    }
    double rate = static_cast<double>(passed) / static_cast<double>(total);
    double secs = seconds_since(t0);
    bool ok = rate >= 0.99 && secs < 30.0;
    char buf[200];
    std::snprintf(buf, sizeof buf,
                  "SNR calibration at n=2048: %d/%d within +/-0.2 dB over {-10,-6,0,6,10} dB (worst err %.3f dB)",
                  passed, total, worst);
    report(3, ok, buf, secs);
}

// --- criterion 4: architecture shape contract --------------------------------

void criterion_4() {
    auto t0 = Clock::now();
    model::ModelConfig cfg;  // defaults: dims 128/224/320, ratio 1/4.67
    bool ok = true;
    std::string why;

    int cp1 = cfg.partial_channels(128), cp2 = cfg.partial_channels(224), cp3 = cfg.partial_channels(320);
    if (cp1 != 27 || cp2 != 47 || cp3 != 68) {
        ok = false;
        why = "partial channels " + std::to_string(cp1) + "/" + std::to_string(cp2) + "/" + std::to_string(cp3);
    }

    std::mt19937_64 init_rng(3);
    model::RaShvitNet<float> net(cfg, 3);
    for (const auto& [name, _] : net.store().params)
        if (name.rfind("stage1.", 0) == 0 && name.find("shsa") != std::string::npos) {
            ok = false;
            why = "stage-1 parameter " + name + " belongs to an attention module";
        }

    Tensor<float> images({2, 2, 64, 32});
    std::mt19937_64 rng(5);
    std::normal_distribution<double> d(0.0, 1.0);
    for (auto& v : images.data) v = static_cast<float>(d(rng));
    Tape<float> tape;
    model::Fwd<float> f{tape, false, rng};
    std::vector<std::vector<int64_t>> trace;
    net.forward(f, images, &trace);
    std::vector<std::vector<int64_t>> want = {
        {2, 2, 64, 32}, {2, 128, 4, 2}, {2, 224, 2, 1}, {2, 320, 1, 1}, {2, 10}};
    if (trace != want) {
        ok = false;
        why = "shape trace mismatch";
    }

    double secs = seconds_since(t0);
    bool in_budget = secs < 5.0;
    report(4, ok && in_budget,
           ok ? "partial channels 27/47/68, stage 1 attention-free, shape trace "
                "(B,2,64,32)->(B,128,4,2)->(B,224,2,1)->(B,320,1,1)->(B,10)"
              : why,
           secs);
}

// --- criteria 5 and 6: synthetic training and the SNR sweep -------------------

train_eval::RunRecord train_tiny(const datasets::LabeledDataset& ds, model::RaShvitNet<float>& net,
                                 uint64_t seed) {
    train_eval::TrainConfig tcfg;
    tcfg.epochs = 300;
    tcfg.batch_size = 16;
    tcfg.seed = seed;
    tcfg.early_stop_train_acc = 0.995;
    return train_eval::train(ds, net.config(), tcfg, net, "");
}

void criteria_5_and_6(const datasets::LabeledDataset& ds) {
    auto t0 = Clock::now();
    auto mcfg = model::tiny_config(10);
    model::RaShvitNet<float> net(mcfg, train_eval::derive_seed(1, 0x4d4f44));
    auto rec = train_tiny(ds, net, 1);
    double train_acc = rec.history.back().train_acc;
    double test_acc = rec.final_metrics.accuracy;
    double secs5 = seconds_since(t0);
    bool ok5 = train_acc >= 0.99 && test_acc >= 0.90 && rec.history.size() <= 300 && secs5 < 900.0;
    char buf[200];
    std::snprintf(buf, sizeof buf,
                  "synthetic 10-class, 64 segments/class: train acc %.3f (>=0.99), test acc %.3f (>=0.90), "
                  "%zu epochs (<=300)",
                  train_acc, test_acc, rec.history.size());
    report(5, ok5, buf, secs5);

    auto t1 = Clock::now();
    std::vector<std::optional<double>> snrs;
    for (int s = -10; s <= 10; s += 2) snrs.push_back(static_cast<double>(s));
    auto cells = train_eval::snr_sweep(net, ds, datasets::Split::test, snrs, {1, 2, 3});
    std::map<double, double> mean_acc;
    for (const auto& c : cells) mean_acc[*c.snr_db] += c.accuracy / 3.0;

    // walk from +10 down to -10; accuracy must not increase as SNR drops,
    // except for at most one inversion of at most 2 percentage points
    int inversions = 0;
    double worst_inversion = 0.0;
    for (int s = 10; s > -10; s -= 2) {
        double step = mean_acc[static_cast<double>(s - 2)] - mean_acc[static_cast<double>(s)];
        if (step > 0.0) {
            ++inversions;
            worst_inversion = std::max(worst_inversion, step);
        }
    }
    bool ok6 = inversions <= 1 && worst_inversion <= 0.02;
    std::snprintf(buf, sizeof buf,
                  "11-point SNR sweep (3 noise seeds): mean acc %.3f @ +10 dB -> %.3f @ -10 dB, "
                  "%d inversion(s), worst %.3f (<=1 of <=0.02 allowed)",
                  mean_acc[10.0], mean_acc[-10.0], inversions, worst_inversion);
    report(6, ok6, buf, seconds_since(t1));
}

// --- criterion 7: ablations at -6 dB ------------------------------------------

void criterion_7(const datasets::LabeledDataset& ds) {
    auto t0 = Clock::now();
    auto mcfg = model::tiny_config(10);
    std::vector<train_eval::AblationVariant> variants = {
        {"no_ahab", false, std::nullopt, std::nullopt},
        {"plain_ffn", std::nullopt, false, std::nullopt},
        {"raw_features", std::nullopt, std::nullopt, std::string("raw")},
    };
    std::map<std::string, double> mean;
    for (uint64_t seed : {1, 2, 3}) {
        train_eval::TrainConfig tcfg;
        tcfg.epochs = 300;
        tcfg.batch_size = 16;
        tcfg.seed = seed;
        tcfg.early_stop_train_acc = 0.995;
        tcfg.eval_noise = {-6.0, 99};  // trained clean, evaluated under -6 dB injection
        auto rows = train_eval::ablate(ds, mcfg, tcfg, variants, {-6.0});
        for (const auto& r : rows) mean[r.variant] += r.accuracy / 3.0;
    }
    double d_fft = mean["base"] - mean["raw_features"];
    double d_ffn = mean["base"] - mean["plain_ffn"];
    double d_ahab = mean["base"] - mean["no_ahab"];
    bool ok = d_fft >= 0.0 && d_ffn >= 0.0;
    char buf[256];
    std::snprintf(buf, sizeof buf,
                  "-6 dB ablations over seeds {1,2,3}: FFT vs raw margin %+.3f (>=0), residual-FFN vs plain "
                  "margin %+.3f (>=0); attention-branch delta %+.3f (reported, not asserted)",
                  d_fft, d_ffn, d_ahab);
    report(7, ok, buf, seconds_since(t0));
}

// --- criterion 8: bit-level reproducibility -----------------------------------

void criterion_8() {
    auto t0 = Clock::now();
    auto dir = fs::temp_directory_path() / "rashvit_acceptance_repro";
    fs::remove_all(dir);
    fs::create_directories(dir);
    bool ok = true;
    std::string why = "checkpoint save/load/save byte-identical; archive round trip bit-exact; "
                      "identical runs produce identical records";

    auto mcfg = model::tiny_config(3);
    mcfg.dropout_p = 0.0;
    model::RaShvitNet<float> net(mcfg, 9);
    checkpoint::save((dir / "c1.bin").string(), net);
    auto restored = checkpoint::restore((dir / "c1.bin").string());
    checkpoint::save((dir / "c2.bin").string(), restored);
    if (slurp(dir / "c1.bin") != slurp(dir / "c2.bin")) {
        ok = false;
        why = "checkpoint save->load->save changed bytes";
    }

    auto ds = datasets::synth_generate(datasets::default_synth_spec(3, 8, 31));
    datasets::save_archive(ds, (dir / "a1").string());
    auto loaded = datasets::load_archive((dir / "a1" / "manifest.json").string());
    datasets::save_archive(loaded, (dir / "a2").string());
    for (const auto& entry : fs::directory_iterator(dir / "a1"))
        if (slurp(entry.path()) != slurp(dir / "a2" / entry.path().filename())) {
            ok = false;
            why = "archive round trip changed " + entry.path().filename().string();
        }
    // payloads are stored as float32; loading promotes back to double, so the
    // round trip must reproduce the f32 quantization of the source exactly
    for (size_t i = 0; ok && i < ds.segments.size(); ++i) {
        if (loaded.labels[i] != ds.labels[i]) ok = false;
        for (size_t k = 0; ok && k < ds.segments[i].samples.size(); ++k)
            if (loaded.segments[i].samples[k] !=
                static_cast<double>(static_cast<float>(ds.segments[i].samples[k])))
                ok = false;
        if (!ok) why = "archive round trip changed segment payloads";
    }

    datasets::split(ds, {0.7, 0.1, 0.2}, 1);
    train_eval::TrainConfig tcfg;
    tcfg.epochs = 2;
    tcfg.batch_size = 8;
    tcfg.seed = 5;
    auto run_once = [&] {
        model::RaShvitNet<float> n(mcfg, train_eval::derive_seed(tcfg.seed, 0x4d4f44));
        return train_eval::train(ds, mcfg, tcfg, n, "").to_json().dump();
    };
    if (run_once() != run_once()) {
        ok = false;
        why = "two identical training runs disagree";
    }

    fs::remove_all(dir);
    report(8, ok, why, seconds_since(t0));
}

// --- criterion 9: accounting fixtures ------------------------------------------

void criterion_9() {
    auto t0 = Clock::now();
    bool ok = true;
    std::string why;

    if (model::conv_macs(3, 2, 16, 1, 32, 16) != 147456) {
        ok = false;
        why = "3x3 conv 2->16 on 32x16 MACs";
    }
    for (int c : {16, 64, 320})
        if (model::conv_params(1, c, c, 1, true) != static_cast<int64_t>(c) * c + c) {
            ok = false;
            why = "1x1 conv C->C+bias params";
        }
    if (model::conv_params(3, 48, 48, 48, false) != 9 * 48 ||
        model::conv_macs(3, 48, 48, 48, 8, 4) != 9LL * 48 * 8 * 4) {
        ok = false;
        why = "3x3 depthwise fixture";
    }

    model::ModelConfig cfg;
    int64_t params = model::count_params(cfg);
    int64_t macs = model::estimate_flops(cfg);
    char buf[300];
    std::snprintf(buf, sizeof buf,
                  "accounting fixtures exact; default config: %.2f M params / %.2f M MACs vs published "
                  "19.46 M / 6.01 M (stage depths behind the published figures were never released, so "
                  "totals are not expected to match)",
                  static_cast<double>(params) / 1e6, static_cast<double>(macs) / 1e6);
    report(9, ok, ok ? buf : why, seconds_since(t0));
}

}  // namespace

int main() {
    auto data = datasets::synth_generate(datasets::default_synth_spec(10, 64, 7));
    datasets::split(data, {0.7, 0.1, 0.2}, 1);

    criterion_1();
    criterion_2();
    criterion_3();
    criterion_4();
    criteria_5_and_6(data);
    criterion_7(data);
    criterion_8();
    criterion_9();

    if (g_failures > 0) {
        std::printf("acceptance: %d criterion(s) failed\n", g_failures);
        return 1;
    }
    std::printf("acceptance: all criteria passed\n");
    return 0;
}

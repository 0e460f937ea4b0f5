// Command-line surface for the bearing fault-diagnosis pipeline:
// synthesize data, train, evaluate, sweep over noise levels, run ablations,
// verify gradients, and export features/plots.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "rashvit/checkpoint.hpp"
#include "rashvit/config_json.hpp"
#include "rashvit/datasets.hpp"
#include "rashvit/errors.hpp"
#include "rashvit/gradcheck_suite.hpp"
#include "rashvit/io.hpp"
#include "rashvit/model_info.hpp"
#include "rashvit/svg.hpp"
#include "rashvit/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace rashvit;

namespace {

json load_json_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw DataError("cannot open " + path);
    json j = json::parse(f, nullptr, false);
    if (j.is_discarded()) throw UsageError("malformed JSON in " + path);
    return j;
}

std::string fmt_full(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::string snr_label(const std::optional<double>& snr) {
    if (!snr) return "clean";
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%g", *snr);
    return buf;
}

// Grammar: "a:step:b" (inclusive endpoints) or a single value; the literal
// "clean" means no injection.
std::vector<std::optional<double>> parse_snr_grid(const std::string& text) {
    std::vector<std::optional<double>> out;
    size_t start = 0;
    auto parse_item = [&out](const std::string& item) {
        if (item == "clean") {
            out.push_back(std::nullopt);
            return;
        }
        std::vector<double> nums;
        size_t p = 0;
        while (p <= item.size()) {
            size_t q = item.find(':', p);
            std::string tok = item.substr(p, q == std::string::npos ? q : q - p);
            try {
                size_t used = 0;
                nums.push_back(std::stod(tok, &used));
                if (used != tok.size()) throw std::invalid_argument(tok);
            } catch (const std::exception&) {
                throw UsageError("bad SNR grid token '" + tok + "' (expected a:step:b or a number)");
            }
            if (q == std::string::npos) break;
            p = q + 1;
        }
        if (nums.size() == 1) {
            out.push_back(nums[0]);
        } else if (nums.size() == 3) {
            double a = nums[0], step = nums[1], b = nums[2];
            if (step == 0.0 || (b - a) * step < 0.0) throw UsageError("bad SNR grid '" + item + "': empty range");
            int n = static_cast<int>(std::floor((b - a) / step + 1e-9)) + 1;
            for (int i = 0; i < n; ++i) out.push_back(a + step * i);
        } else {
            throw UsageError("bad SNR grid '" + item + "': expected a:step:b");
        }
    };
    while (start <= text.size()) {
        size_t comma = text.find(',', start);
        parse_item(text.substr(start, comma == std::string::npos ? comma : comma - start));
        if (comma == std::string::npos) break;
        start = comma + 1;
    }
    if (out.empty()) throw UsageError("empty SNR grid");
    return out;
}

struct RunConfig {
    model::ModelConfig model;
    train_eval::TrainConfig train;
    std::string manifest;                         // exactly one of manifest /
    std::optional<datasets::SynthSpec> synth;     // synth is set
    std::array<double, 3> split_ratios{0.7, 0.1, 0.2};
    uint64_t split_seed = 1;
    std::string out_dir;
};

RunConfig run_config_from_json(const json& j) {
    require_keys(j, {"model", "train", "data", "split", "out_dir"}, "run config");
    RunConfig rc;
    if (j.contains("model")) rc.model = j.at("model").get<model::ModelConfig>();
    if (j.contains("train")) rc.train = train_eval::TrainConfig::from_json(j.at("train"));
    if (!j.contains("data")) throw UsageError("run config: missing 'data'");
    const json& data = j.at("data");
    require_keys(data, {"manifest", "synth"}, "run config data");
    if (data.contains("manifest") == data.contains("synth"))
        throw UsageError("run config data: exactly one of 'manifest' or 'synth' required");
    if (data.contains("manifest")) rc.manifest = data.at("manifest").get<std::string>();
    if (data.contains("synth")) rc.synth = datasets::synth_spec_from_json(data.at("synth"));
    if (j.contains("split")) {
        const json& sp = j.at("split");
        require_keys(sp, {"ratios", "seed"}, "run config split");
        if (sp.contains("ratios")) rc.split_ratios = sp.at("ratios").get<std::array<double, 3>>();
        rc.split_seed = sp.value("seed", rc.split_seed);
    }
    if (!j.contains("out_dir")) throw UsageError("run config: missing 'out_dir'");
    rc.out_dir = j.at("out_dir").get<std::string>();
    return rc;
}

datasets::LabeledDataset load_run_dataset(const RunConfig& rc) {
    auto ds = rc.synth ? datasets::synth_generate(*rc.synth) : datasets::load_archive(rc.manifest);
    datasets::split(ds, rc.split_ratios, rc.split_seed);
    return ds;
}

datasets::Split parse_split(const std::string& name) {
    if (name == "train") return datasets::Split::train;
    if (name == "val") return datasets::Split::val;
    if (name == "test") return datasets::Split::test;
    throw UsageError("unknown split '" + name + "' (expected train|val|test)");
}

std::string confusion_csv(const train_eval::Metrics& m, const std::vector<std::string>& names) {
    std::string csv = "true\\pred";
    for (const auto& n : names) csv += "," + n;
    csv += "\n";
    for (size_t r = 0; r < m.confusion.size(); ++r) {
        csv += names[r];
        for (int64_t v : m.confusion[r]) csv += "," + std::to_string(v);
        csv += "\n";
    }
    return csv;
}

void write_metrics_artifacts(const train_eval::Metrics& m, const std::vector<std::string>& names,
                             const std::string& dir, const std::string& title) {
    fs::create_directories(dir);
    write_text_atomic((fs::path(dir) / "metrics.json").string(), m.to_json().dump(2) + "\n");
    write_text_atomic((fs::path(dir) / "confusion.csv").string(), confusion_csv(m, names));
    write_text_atomic((fs::path(dir) / "confusion.svg").string(), svg::render_confusion_heatmap(m.confusion, names, title));
}

int run_gradcheck(bool inject_fault) {
    auto results = run_grad_checks(inject_fault);
    for (const auto& r : results)
        std::printf("[%s] %-42s max_rel_err=%.3e  tol=%.0e\n", r.pass ? "PASS" : "FAIL", r.name.c_str(), r.max_err,
                    r.tol);
    if (!all_pass(results)) {
        int failures = 0;
        for (const auto& r : results) failures += r.pass ? 0 : 1;
        std::printf("gradcheck: %d op(s) FAILED\n", failures);
        return 3;
    }
    std::printf("gradcheck: all %zu checks passed\n", results.size());
    return 0;
}

void cmd_synth(const std::string& spec_path, const std::string& out_dir, std::optional<uint64_t> seed,
               std::optional<int> classes, std::optional<int> segments) {
    datasets::SynthSpec spec =
        spec_path.empty() ? datasets::default_synth_spec() : datasets::synth_spec_from_json(load_json_file(spec_path));
    if (classes) spec = datasets::default_synth_spec(*classes, spec.segments_per_class, spec.seed);
    if (segments) spec.segments_per_class = *segments;
    if (seed) spec.seed = *seed;
    auto ds = datasets::synth_generate(spec);
    datasets::save_archive(ds, out_dir);
    write_text_atomic((fs::path(out_dir) / "synth_spec.json").string(),
                      datasets::synth_spec_to_json(spec).dump(2) + "\n");
    std::printf("synth: wrote %zu segments (%d classes x %d) to %s\n", ds.size(), spec.num_classes,
                spec.segments_per_class, out_dir.c_str());
}

void cmd_train(const std::string& config_path) {
    RunConfig rc = run_config_from_json(load_json_file(config_path));
    rc.model.validate();
    auto ds = load_run_dataset(rc);
    if (ds.num_classes() != rc.model.num_classes)
        throw UsageError("train: dataset has " + std::to_string(ds.num_classes()) + " classes, model config says " +
                         std::to_string(rc.model.num_classes));
    fs::create_directories(rc.out_dir);
    model::RaShvitNet<float> net(rc.model, train_eval::derive_seed(rc.train.seed, 0x4d4f44));
    std::vector<Tensor<float>> initial;
    for (const auto& [_, p] : net.store().params) initial.push_back(p->value);

    std::string ckpt = (fs::path(rc.out_dir) / "checkpoint.bin").string();
    auto rec = train_eval::train(ds, rc.model, rc.train, net, ckpt);

    bool changed = false;
    for (size_t i = 0; i < initial.size() && !changed; ++i)
        for (int64_t k = 0; k < initial[i].numel() && !changed; ++k)
            changed = initial[i][k] != net.store().params[i].second->value[k];

    json out = rec.to_json();
    out["params_changed"] = changed;
    write_text_atomic((fs::path(rc.out_dir) / "run.json").string(), out.dump(2) + "\n");

    std::string hist = "epoch,train_loss,train_acc,val_acc\n";
    for (size_t e = 0; e < rec.history.size(); ++e)
        hist += std::to_string(e) + "," + fmt_full(rec.history[e].train_loss) + "," +
                fmt_full(rec.history[e].train_acc) + "," + fmt_full(rec.history[e].val_acc) + "\n";
    write_text_atomic((fs::path(rc.out_dir) / "history.csv").string(), hist);
    write_metrics_artifacts(rec.final_metrics, ds.class_names, rc.out_dir, "test-split confusion");

    std::printf("train: %zu epochs, best val acc %.4f (epoch %d), test acc %.4f\n", rec.history.size(),
                rec.best_val_acc, rec.best_epoch, rec.final_metrics.accuracy);
    std::printf("train: artifacts in %s\n", rc.out_dir.c_str());
}

void cmd_eval(const std::string& ckpt_path, const std::string& data_path, const std::string& split_name,
              const std::string& snr_text, uint64_t noise_seed, const std::string& features,
              std::array<double, 3> ratios, uint64_t split_seed, const std::string& out_dir) {
    auto net = checkpoint::restore(ckpt_path);
    auto ds = datasets::load_archive(data_path);
    datasets::split(ds, ratios, split_seed);
    train_eval::NoiseSetting noise;
    noise.seed = noise_seed;
    if (!snr_text.empty() && snr_text != "clean") {
        auto grid = parse_snr_grid(snr_text);
        if (grid.size() != 1) throw UsageError("eval: --snr takes a single value (use sweep for grids)");
        noise.snr_db = grid[0];
    }
    auto m = train_eval::evaluate(net, ds, parse_split(split_name), noise, features);
    write_metrics_artifacts(m, ds.class_names, out_dir,
                            split_name + " confusion @ " + snr_label(noise.snr_db) + " dB");
    std::printf("eval: %s split, snr=%s -> accuracy %.4f (loss %.4f)\n", split_name.c_str(),
                snr_label(noise.snr_db).c_str(), m.accuracy, m.loss);
}

void cmd_sweep(const std::string& ckpt_path, const std::string& data_path, const std::string& split_name,
               const std::string& snrs_text, const std::vector<uint64_t>& seeds, const std::string& features,
               std::array<double, 3> ratios, uint64_t split_seed, const std::string& out_dir) {
    auto net = checkpoint::restore(ckpt_path);
    auto ds = datasets::load_archive(data_path);
    datasets::split(ds, ratios, split_seed);
    auto snrs = parse_snr_grid(snrs_text);
    auto cells = train_eval::snr_sweep(net, ds, parse_split(split_name), snrs, seeds, features);

    fs::create_directories(out_dir);
    std::string csv = "snr_db,seed,accuracy\n";
    for (const auto& c : cells)
        csv += snr_label(c.snr_db) + "," + std::to_string(c.seed) + "," + fmt_full(c.accuracy) + "\n";
    write_text_atomic((fs::path(out_dir) / "sweep.csv").string(), csv);

    svg::Series mean_series{"mean accuracy", {}, {}};
    std::string mean_csv = "snr_db,mean_accuracy\n";
    for (size_t s = 0; s < snrs.size(); ++s) {
        double acc = 0.0;
        for (size_t k = 0; k < seeds.size(); ++k) acc += cells[s * seeds.size() + k].accuracy;
        acc /= static_cast<double>(seeds.size());
        mean_csv += snr_label(snrs[s]) + "," + fmt_full(acc) + "\n";
        if (snrs[s]) {
            mean_series.xs.push_back(*snrs[s]);
            mean_series.ys.push_back(acc);
        }
    }
    write_text_atomic((fs::path(out_dir) / "sweep_mean.csv").string(), mean_csv);
    write_text_atomic((fs::path(out_dir) / "sweep.svg").string(),
                      svg::render_accuracy_plot({mean_series}, "accuracy vs SNR"));
    std::printf("sweep: %zu cells (%zu SNR points x %zu seeds) -> %s\n", cells.size(), snrs.size(), seeds.size(),
                out_dir.c_str());
}

void cmd_ablate(const std::string& config_path, const std::string& snrs_text) {
    RunConfig rc = run_config_from_json(load_json_file(config_path));
    rc.model.validate();
    auto ds = load_run_dataset(rc);
    auto snrs = parse_snr_grid(snrs_text);

    std::vector<train_eval::AblationVariant> variants;
    variants.push_back({"no_ahab", false, std::nullopt, std::nullopt});
    variants.push_back({"plain_ffn", std::nullopt, false, std::nullopt});
    variants.push_back({rc.train.feature_mode == "raw" ? "fft_features" : "raw_features", std::nullopt, std::nullopt,
                        std::string(rc.train.feature_mode == "raw" ? "fft" : "raw")});

    auto rows = train_eval::ablate(ds, rc.model, rc.train, variants, snrs);

    fs::create_directories(rc.out_dir);
    std::string csv = "variant,snr_db,accuracy,delta_vs_base\n";
    for (const auto& r : rows)
        csv += r.variant + "," + snr_label(r.snr_db) + "," + fmt_full(r.accuracy) + "," + fmt_full(r.delta_vs_base) +
               "\n";
    write_text_atomic((fs::path(rc.out_dir) / "ablation.csv").string(), csv);

    std::vector<svg::Series> series;
    for (const auto& r : rows) {
        if (!r.snr_db) continue;
        auto it = std::find_if(series.begin(), series.end(), [&](const svg::Series& s) { return s.name == r.variant; });
        if (it == series.end()) {
            series.push_back({r.variant, {}, {}});
            it = series.end() - 1;
        }
        it->xs.push_back(*r.snr_db);
        it->ys.push_back(r.accuracy);
    }
    if (!series.empty())
        write_text_atomic((fs::path(rc.out_dir) / "ablation.svg").string(),
                          svg::render_accuracy_plot(series, "ablation accuracy vs SNR"));
    for (const auto& r : rows)
        std::printf("ablate: %-14s snr=%-6s acc=%.4f delta=%+.4f\n", r.variant.c_str(), snr_label(r.snr_db).c_str(),
                    r.accuracy, r.delta_vs_base);
    std::printf("ablate: table written to %s\n", (fs::path(rc.out_dir) / "ablation.csv").string().c_str());
}

void cmd_info(const std::string& config_path, bool tiny, const std::string& json_out) {
    model::ModelConfig cfg;
    if (tiny) {
        cfg = model::tiny_config();
    } else if (!config_path.empty()) {
        json j = load_json_file(config_path);
        cfg = (j.contains("model") ? j.at("model") : j).get<model::ModelConfig>();
    }
    cfg.validate();
    auto layers = model::model_accounting(cfg);
    int64_t params = model::count_params(cfg);
    int64_t macs = model::estimate_flops(cfg);

    std::printf("%-36s %12s %14s\n", "layer", "params", "MACs");
    for (const auto& l : layers) std::printf("%-36s %12lld %14lld\n", l.name.c_str(), static_cast<long long>(l.params),
                                             static_cast<long long>(l.macs));
    std::printf("%-36s %12lld %14lld\n", "TOTAL", static_cast<long long>(params), static_cast<long long>(macs));
    std::printf("totals: %.3f M params, %.3f M MACs/sample\n", static_cast<double>(params) / 1e6,
                static_cast<double>(macs) / 1e6);
    std::printf("published RA-SHViT-Net figures: 19.46 M params / 6.01 MFLOPs; the stage depths behind those\n"
                "numbers were never released, so this comparison is informational (depths here: %d,%d,%d).\n",
                cfg.depths[0], cfg.depths[1], cfg.depths[2]);

    if (!json_out.empty()) {
        json jl = json::array();
        for (const auto& l : layers) jl.push_back({{"layer", l.name}, {"params", l.params}, {"macs", l.macs}});
        json out = {{"config", cfg}, {"layers", jl}, {"total_params", params}, {"total_macs", macs}};
        write_text_atomic(json_out, out.dump(2) + "\n");
    }
}

void cmd_export(const std::string& ckpt_path, const std::string& data_path, const std::string& split_name,
                const std::string& snr_text, uint64_t noise_seed, const std::string& features,
                std::array<double, 3> ratios, uint64_t split_seed, const std::string& out_csv) {
    auto net = checkpoint::restore(ckpt_path);
    auto ds = datasets::load_archive(data_path);
    datasets::split(ds, ratios, split_seed);
    train_eval::NoiseSetting noise;
    noise.seed = noise_seed;
    if (!snr_text.empty() && snr_text != "clean") noise.snr_db = parse_snr_grid(snr_text).at(0);
    train_eval::export_features(net, ds, parse_split(split_name), noise, out_csv, features);
    std::printf("export: wrote %s\n", out_csv.c_str());
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"bearing fault diagnosis: FFT featurization + RA-SHViT training/evaluation"};
    app.require_subcommand(1);

    // synth
    auto* synth = app.add_subcommand("synth", "generate a synthetic signal archive");
    std::string synth_spec, synth_out;
    std::optional<uint64_t> synth_seed;
    std::optional<int> synth_classes, synth_segments;
    synth->add_option("--spec", synth_spec, "generator spec JSON (default: built-in 10-class spec)");
    synth->add_option("--out", synth_out, "output directory")->required();
    synth->add_option("--seed", synth_seed, "override generator seed");
    synth->add_option("--classes", synth_classes, "number of classes (rebuilds default per-class params)");
    synth->add_option("--segments-per-class", synth_segments, "segments per class");

    // train
    auto* train = app.add_subcommand("train", "train a model from a run-config file");
    std::string train_config;
    train->add_option("--config", train_config, "run config JSON")->required();

    // shared eval-style flags
    std::string ev_ckpt, ev_data, ev_split = "test", ev_snr, ev_features = "fft", ev_out = ".";
    uint64_t ev_noise_seed = 0, ev_split_seed = 1;
    std::vector<double> ev_ratios{0.7, 0.1, 0.2};
    auto add_data_flags = [&](CLI::App* c) {
        c->add_option("--checkpoint", ev_ckpt, "model checkpoint")->required();
        c->add_option("--data", ev_data, "archive manifest.json")->required();
        c->add_option("--split", ev_split, "train|val|test (default test)");
        c->add_option("--features", ev_features, "fft|raw (default fft)");
        c->add_option("--split-ratios", ev_ratios, "train,val,test ratios (default 0.7 0.1 0.2)")->expected(3);
        c->add_option("--split-seed", ev_split_seed, "split shuffle seed (default 1)");
    };

    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on one split");
    add_data_flags(eval);
    eval->add_option("--snr", ev_snr, "injected SNR in dB, or 'clean' (default clean)");
    eval->add_option("--noise-seed", ev_noise_seed, "noise seed (default 0)");
    eval->add_option("--out", ev_out, "output directory (default .)");

    auto* sweep = app.add_subcommand("sweep", "accuracy sweep over an SNR grid");
    std::string sweep_snrs = "-10:2:10";
    std::vector<uint64_t> sweep_seeds{1};
    add_data_flags(sweep);
    sweep->add_option("--snrs", sweep_snrs, "grid a:step:b, inclusive (default -10:2:10); 'clean' allowed");
    sweep->add_option("--seeds", sweep_seeds, "noise seeds to average over")->delimiter(',');
    sweep->add_option("--out", ev_out, "output directory (default .)");

    auto* ablate = app.add_subcommand("ablate", "controlled one-axis ablations from a run config");
    std::string ablate_config, ablate_snrs = "-6";
    ablate->add_option("--config", ablate_config, "run config JSON")->required();
    ablate->add_option("--snrs", ablate_snrs, "evaluation SNR grid (default -6)");

    auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference verification of all backward rules");
    bool inject_fault = false;
    gradcheck->add_flag("--inject-fault", inject_fault,
                        "append a known-bad backward rule; the run must then report a failure");

    auto* info = app.add_subcommand("info", "parameter count, MAC estimate, per-layer table");
    std::string info_config, info_json;
    bool info_tiny = false;
    info->add_option("--config", info_config, "model config JSON (or a run config; default config if omitted)");
    info->add_flag("--tiny", info_tiny, "use the tiny desk-scale config");
    info->add_option("--json", info_json, "also write the table as JSON");

    auto* exp = app.add_subcommand("export-features", "dump post-pooling feature vectors to CSV");
    exp->add_option("--snr", ev_snr, "injected SNR in dB, or 'clean' (default clean)");
    exp->add_option("--noise-seed", ev_noise_seed, "noise seed (default 0)");
    add_data_flags(exp);
    std::string exp_out = "features.csv";
    exp->add_option("--out", exp_out, "output CSV path");

    try {
        app.parse(argc, argv);
        std::array<double, 3> ratios{ev_ratios[0], ev_ratios[1], ev_ratios[2]};
        if (*synth) cmd_synth(synth_spec, synth_out, synth_seed, synth_classes, synth_segments);
        if (*train) cmd_train(train_config);
        if (*eval) cmd_eval(ev_ckpt, ev_data, ev_split, ev_snr, ev_noise_seed, ev_features, ratios, ev_split_seed, ev_out);
        if (*sweep) cmd_sweep(ev_ckpt, ev_data, ev_split, sweep_snrs, sweep_seeds, ev_features, ratios, ev_split_seed, ev_out);
        if (*ablate) cmd_ablate(ablate_config, ablate_snrs);
        if (*gradcheck) return run_gradcheck(inject_fault);
        if (*info) cmd_info(info_config, info_tiny, info_json);
        if (*exp) cmd_export(ev_ckpt, ev_data, ev_split, ev_snr, ev_noise_seed, ev_features, ratios, ev_split_seed, exp_out);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? 0 : 1;
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 1;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 2;
    } catch (const NumericError& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return 3;
    } catch (const nlohmann::json::exception& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}

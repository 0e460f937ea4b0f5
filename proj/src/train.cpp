#include "rashvit/train.hpp"

#include <atomic>
#include <cmath>
#include <mutex>
#include <cstdlib>
#include <thread>

#include "rashvit/checkpoint.hpp"
#include "rashvit/config_json.hpp"
#include "rashvit/errors.hpp"
#include "rashvit/io.hpp"
#include "rashvit/optim.hpp"

namespace rashvit::train_eval {

uint64_t derive_seed(uint64_t base, uint64_t index) {
    uint64_t z = base + 0x9e3779b97f4a7c15ull * (index + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

void parallel_for(size_t n, const std::function<void(size_t)>& fn) {
    size_t threads = std::thread::hardware_concurrency();
    if (const char* env = std::getenv("RA_SHVIT_THREADS")) {
        long v = std::strtol(env, nullptr, 10);
        if (v >= 1) threads = static_cast<size_t>(v);
    }
    threads = std::min(std::max<size_t>(threads, 1), n);
    if (threads <= 1) {
        for (size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mu;
    std::vector<std::thread> pool;
    for (size_t t = 0; t < threads; ++t)
        pool.emplace_back([&] {
            for (size_t i = next.fetch_add(1); i < n; i = next.fetch_add(1)) {
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(error_mu);
                    if (!error) error = std::current_exception();
                }
            }
        });
    for (auto& th : pool) th.join();
    if (error) std::rethrow_exception(error);
}

void TrainConfig::validate() const {
    if (epochs < 1) throw UsageError("train config: epochs must be >= 1");
    if (batch_size < 2) throw UsageError("train config: batch_size must be >= 2 (batch norm)");
    if (feature_mode != "fft" && feature_mode != "raw")
        throw UsageError("train config: feature_mode must be 'fft' or 'raw'");
}

namespace {
nlohmann::json noise_to_json(const NoiseSetting& n) {
    return {{"snr_db", n.snr_db ? nlohmann::json(*n.snr_db) : nlohmann::json(nullptr)}, {"seed", n.seed}};
}
NoiseSetting noise_from_json(const nlohmann::json& j) {
    require_keys(j, {"snr_db", "seed"}, "noise setting");
    NoiseSetting n;
    if (j.contains("snr_db") && !j.at("snr_db").is_null()) n.snr_db = j.at("snr_db").get<double>();
    n.seed = j.value("seed", 0ull);
    return n;
}
}  // namespace

nlohmann::json TrainConfig::to_json() const {
    return {{"lr", lr},
            {"batch_size", batch_size},
            {"epochs", epochs},
            {"seed", seed},
            {"weight_decay", weight_decay},
            {"beta1", beta1},
            {"beta2", beta2},
            {"adam_eps", adam_eps},
            {"train_noise", noise_to_json(train_noise)},
            {"eval_noise", noise_to_json(eval_noise)},
            {"feature_mode", feature_mode},
            {"early_stop_train_acc", early_stop_train_acc}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
    require_keys(j,
                 {"lr", "batch_size", "epochs", "seed", "weight_decay", "beta1", "beta2", "adam_eps", "train_noise",
                  "eval_noise", "feature_mode", "early_stop_train_acc"},
                 "train config");
    TrainConfig c;
    c.lr = j.value("lr", c.lr);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.epochs = j.value("epochs", c.epochs);
    c.seed = j.value("seed", c.seed);
    c.weight_decay = j.value("weight_decay", c.weight_decay);
    c.beta1 = j.value("beta1", c.beta1);
    c.beta2 = j.value("beta2", c.beta2);
    c.adam_eps = j.value("adam_eps", c.adam_eps);
    if (j.contains("train_noise")) c.train_noise = noise_from_json(j.at("train_noise"));
    if (j.contains("eval_noise")) c.eval_noise = noise_from_json(j.at("eval_noise"));
    c.feature_mode = j.value("feature_mode", c.feature_mode);
    c.early_stop_train_acc = j.value("early_stop_train_acc", c.early_stop_train_acc);
    c.validate();
    return c;
}

nlohmann::json RunRecord::to_json() const {
    nlohmann::json hist = nlohmann::json::array();
    for (const auto& e : history)
        hist.push_back({{"train_loss", e.train_loss}, {"train_acc", e.train_acc}, {"val_acc", e.val_acc}});
    return {{"model_config", model_config},
            {"train_config", train_config},
            {"seed", seed},
            {"history", hist},
            {"final_metrics", final_metrics.to_json()},
            {"checkpoint", checkpoint_path},
            {"best_epoch", best_epoch},
            {"best_val_acc", best_val_acc},
            {"noise_generator", generator_name}};
}

std::vector<sigproc::SpectralImage> build_features(const datasets::LabeledDataset& ds,
                                                   const std::vector<size_t>& indices,
                                                   const std::string& feature_mode, const NoiseSetting& noise) {
    std::vector<sigproc::SpectralImage> out;
    out.reserve(indices.size());
    for (size_t i : indices) {
        auto seg = sigproc::normalize(ds.segments[i]);
        if (noise.snr_db && std::isfinite(*noise.snr_db))
            seg = sigproc::inject_noise(seg, {*noise.snr_db, derive_seed(noise.seed, static_cast<uint64_t>(i))});
        auto img = feature_mode == "raw" ? sigproc::featurize_raw(seg) : sigproc::featurize(seg);
        img.label = ds.labels[i];
        out.push_back(std::move(img));
    }
    return out;
}

namespace {

Tensor<float> assemble_batch(const std::vector<sigproc::SpectralImage>& feats, const std::vector<size_t>& order,
                             size_t begin, size_t count) {
    const auto& shape = feats[order[begin]].data.shape;
    Tensor<float> batch({static_cast<int64_t>(count), shape[0], shape[1], shape[2]});
    int64_t per = feats[order[begin]].data.numel();
    for (size_t b = 0; b < count; ++b)
        std::copy_n(feats[order[begin + b]].data.data.data(), static_cast<size_t>(per),
                    batch.data.data() + static_cast<int64_t>(b) * per);
    return batch;
}

struct EvalResult {
    std::vector<int> predictions;
    double mean_loss = 0.0;
};

EvalResult predict(const model::RaShvitNet<float>& net, const std::vector<sigproc::SpectralImage>& feats,
                   const std::vector<int>& labels) {
    EvalResult res;
    std::vector<size_t> order(feats.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::mt19937_64 rng(0);  // unused in eval mode
    constexpr size_t kBatch = 64;
    double loss_sum = 0.0;
    int k = net.config().num_classes;
    for (size_t begin = 0; begin < feats.size(); begin += kBatch) {
        size_t count = std::min(kBatch, feats.size() - begin);
        Tape<float> tape;
        model::Fwd<float> f{tape, false, rng};
        auto logits = net.forward(f, assemble_batch(feats, order, begin, count));
        std::vector<int> batch_labels(labels.begin() + static_cast<ptrdiff_t>(begin),
                                      labels.begin() + static_cast<ptrdiff_t>(begin + count));
        loss_sum += nn::cross_entropy(tape, logits, batch_labels)->value[0] * static_cast<double>(count);
        for (size_t b = 0; b < count; ++b) {
            int best = 0;
            for (int c = 1; c < k; ++c)
                if (logits->value[static_cast<int64_t>(b) * k + c] > logits->value[static_cast<int64_t>(b) * k + best])
                    best = c;
            res.predictions.push_back(best);
        }
    }
    res.mean_loss = feats.empty() ? 0.0 : loss_sum / static_cast<double>(feats.size());
    return res;
}

void copy_params(model::RaShvitNet<float>& dst, const model::RaShvitNet<float>& src) {
    for (size_t i = 0; i < src.store().params.size(); ++i)
        dst.store().params[i].second->value = src.store().params[i].second->value;
    for (size_t i = 0; i < src.store().buffers.size(); ++i)
        *dst.store().buffers[i].second = *src.store().buffers[i].second;
}

struct Snapshot {
    std::vector<Tensor<float>> params, buffers;
    void capture(const model::RaShvitNet<float>& net) {
        params.clear();
        buffers.clear();
        for (const auto& [_, p] : net.store().params) params.push_back(p->value);
        for (const auto& [_, b] : net.store().buffers) buffers.push_back(*b);
    }
    void restore(model::RaShvitNet<float>& net) const {
        for (size_t i = 0; i < params.size(); ++i) net.store().params[i].second->value = params[i];
        for (size_t i = 0; i < buffers.size(); ++i) *net.store().buffers[i].second = buffers[i];
    }
};

}  // namespace

RunRecord train(const datasets::LabeledDataset& ds, const model::ModelConfig& mcfg, const TrainConfig& tcfg,
                model::RaShvitNet<float>& net, const std::string& checkpoint_path) {
    tcfg.validate();
    auto train_idx = ds.indices_of(datasets::Split::train);
    auto val_idx = ds.indices_of(datasets::Split::val);
    auto test_idx = ds.indices_of(datasets::Split::test);
    if (train_idx.empty()) throw DataError("train: empty train split");

    auto train_feats = build_features(ds, train_idx, tcfg.feature_mode, tcfg.train_noise);
    auto val_feats = build_features(ds, val_idx, tcfg.feature_mode, tcfg.train_noise);
    std::vector<int> train_labels, val_labels;
    for (size_t i : train_idx) train_labels.push_back(ds.labels[i]);
    for (size_t i : val_idx) val_labels.push_back(ds.labels[i]);

    AdamW<float> opt({tcfg.lr, tcfg.beta1, tcfg.beta2, tcfg.adam_eps, tcfg.weight_decay});
    std::mt19937_64 shuffle_rng(derive_seed(tcfg.seed, 0x5348));
    std::mt19937_64 dropout_rng(derive_seed(tcfg.seed, 0x4452));

    RunRecord rec;
    rec.model_config = mcfg;
    rec.train_config = tcfg.to_json();
    rec.seed = tcfg.seed;
    rec.generator_name = sigproc::kNoiseGeneratorName;
    rec.checkpoint_path = checkpoint_path;

    Snapshot best;
    best.capture(net);
    int k = mcfg.num_classes;
    std::vector<size_t> order(train_feats.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;

    for (int epoch = 0; epoch < tcfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        double loss_sum = 0.0;
        int64_t seen = 0, correct = 0;
        size_t bs = static_cast<size_t>(tcfg.batch_size);
        for (size_t begin = 0; begin + 2 <= order.size(); begin += bs) {
            size_t count = std::min(bs, order.size() - begin);
            if (count < 2) break;  // batch norm needs >= 2 samples
            Tape<float> tape;
            model::Fwd<float> f{tape, true, dropout_rng};
            auto logits = net.forward(f, assemble_batch(train_feats, order, begin, count));
            std::vector<int> batch_labels;
            for (size_t b = 0; b < count; ++b) batch_labels.push_back(train_labels[order[begin + b]]);
            auto loss = nn::cross_entropy(tape, logits, batch_labels);
            if (!std::isfinite(loss->value[0]))
                throw NumericError("train: non-finite loss at epoch " + std::to_string(epoch));
            net.store().zero_grad();
            tape.backward(loss);
            opt.step(net.store());
            loss_sum += static_cast<double>(loss->value[0]) * static_cast<double>(count);
            for (size_t b = 0; b < count; ++b) {
                int bestc = 0;
                for (int c = 1; c < k; ++c)
                    if (logits->value[static_cast<int64_t>(b) * k + c] >
                        logits->value[static_cast<int64_t>(b) * k + bestc])
                        bestc = c;
                correct += bestc == batch_labels[b] ? 1 : 0;
            }
            seen += static_cast<int64_t>(count);
        }
        EpochStat stat;
        stat.train_loss = seen ? loss_sum / static_cast<double>(seen) : 0.0;
        stat.train_acc = seen ? static_cast<double>(correct) / static_cast<double>(seen) : 0.0;
        if (!val_feats.empty()) {
            auto ev = predict(net, val_feats, val_labels);
            int64_t ok = 0;
            for (size_t i = 0; i < ev.predictions.size(); ++i) ok += ev.predictions[i] == val_labels[i] ? 1 : 0;
            stat.val_acc = static_cast<double>(ok) / static_cast<double>(val_labels.size());
        }
        rec.history.push_back(stat);
        if (stat.val_acc > rec.best_val_acc || rec.best_epoch < 0) {
            rec.best_val_acc = stat.val_acc;
            rec.best_epoch = epoch;
            best.capture(net);
        }
        if (stat.train_acc >= tcfg.early_stop_train_acc) break;
    }

    best.restore(net);
    if (!checkpoint_path.empty()) checkpoint::save(checkpoint_path, net);
    if (!test_idx.empty()) rec.final_metrics = evaluate(net, ds, datasets::Split::test, tcfg.eval_noise,
                                                        tcfg.feature_mode);
    return rec;
}

Metrics evaluate(const model::RaShvitNet<float>& net, const datasets::LabeledDataset& ds, datasets::Split split,
                 const NoiseSetting& noise, const std::string& feature_mode) {
    auto idx = ds.indices_of(split);
    if (idx.empty()) throw DataError("evaluate: empty split");
    if (ds.num_classes() != net.config().num_classes)
        throw DataError("evaluate: dataset has " + std::to_string(ds.num_classes()) + " classes, model expects " +
                        std::to_string(net.config().num_classes));
    auto feats = build_features(ds, idx, feature_mode, noise);
    std::vector<int> labels;
    for (size_t i : idx) labels.push_back(ds.labels[i]);
    auto ev = predict(net, feats, labels);
    return metrics_from_predictions(labels, ev.predictions, ds.num_classes(), ev.mean_loss);
}

std::vector<SweepCell> snr_sweep(const model::RaShvitNet<float>& net, const datasets::LabeledDataset& ds,
                                 datasets::Split split, const std::vector<std::optional<double>>& snrs,
                                 const std::vector<uint64_t>& seeds, const std::string& feature_mode) {
    std::vector<SweepCell> cells;
    for (const auto& snr : snrs)
        for (uint64_t seed : seeds) cells.push_back({snr, seed, 0.0});
    parallel_for(cells.size(), [&](size_t i) {
        NoiseSetting noise{cells[i].snr_db, derive_seed(cells[i].seed, i)};
        cells[i].accuracy = evaluate(net, ds, split, noise, feature_mode).accuracy;
    });
    return cells;
}

std::vector<AblationRow> ablate(const datasets::LabeledDataset& ds, const model::ModelConfig& base_mcfg,
                                const TrainConfig& base_tcfg, const std::vector<AblationVariant>& variants,
                                const std::vector<std::optional<double>>& eval_snrs) {
    for (const auto& v : variants) {
        int axes = (v.ahab ? 1 : 0) + (v.res_ffn ? 1 : 0) + (v.features ? 1 : 0);
        if (axes != 1)
            throw UsageError("ablate: variant '" + v.name + "' must alter exactly one axis, alters " +
                             std::to_string(axes));
    }

    struct Cell {
        std::string name;
        model::ModelConfig mcfg;
        TrainConfig tcfg;
        std::vector<double> accs;
    };
    std::vector<Cell> cells;
    cells.push_back({"base", base_mcfg, base_tcfg, {}});
    for (const auto& v : variants) {
        Cell c{v.name, base_mcfg, base_tcfg, {}};
        if (v.ahab) c.mcfg.use_ahab = *v.ahab;
        if (v.res_ffn) c.mcfg.use_res_ffn = *v.res_ffn;
        if (v.features) c.tcfg.feature_mode = *v.features;
        cells.push_back(std::move(c));
    }

    parallel_for(cells.size(), [&](size_t i) {
        model::RaShvitNet<float> net(cells[i].mcfg, derive_seed(cells[i].tcfg.seed, 0x4d4f44));
        train(ds, cells[i].mcfg, cells[i].tcfg, net, "");
        for (size_t s = 0; s < eval_snrs.size(); ++s) {
            NoiseSetting noise{eval_snrs[s], cells[i].tcfg.eval_noise.seed};
            cells[i].accs.push_back(
                evaluate(net, ds, datasets::Split::test, noise, cells[i].tcfg.feature_mode).accuracy);
        }
    });

    std::vector<AblationRow> rows;
    for (const auto& c : cells)
        for (size_t s = 0; s < eval_snrs.size(); ++s)
            rows.push_back({c.name, eval_snrs[s], c.accs[s], c.accs[s] - cells[0].accs[s]});
    return rows;
}

void export_features(const model::RaShvitNet<float>& net, const datasets::LabeledDataset& ds,
                     datasets::Split split, const NoiseSetting& noise, const std::string& csv_path,
                     const std::string& feature_mode) {
    auto idx = ds.indices_of(split);
    if (idx.empty()) throw DataError("export_features: empty split");
    auto feats = build_features(ds, idx, feature_mode, noise);
    int width = net.feature_width();
    std::string csv;
    for (int i = 0; i < width; ++i) csv += "f" + std::to_string(i) + ",";
    csv += "label\n";
    std::mt19937_64 rng(0);
    constexpr size_t kBatch = 64;
    std::vector<size_t> order(feats.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    char buf[64];
    for (size_t begin = 0; begin < feats.size(); begin += kBatch) {
        size_t count = std::min(kBatch, feats.size() - begin);
        Tape<float> tape;
        model::Fwd<float> f{tape, false, rng};
        auto fv = net.forward_features(f, assemble_batch(feats, order, begin, count));
        for (size_t b = 0; b < count; ++b) {
            for (int c = 0; c < width; ++c) {
                std::snprintf(buf, sizeof(buf), "%.9g,", static_cast<double>(fv->value[static_cast<int64_t>(b) * width + c]));
                csv += buf;
            }
            csv += std::to_string(ds.labels[idx[begin + b]]) + "\n";
        }
    }
    write_text_atomic(csv_path, csv);
}

}  // namespace rashvit::train_eval

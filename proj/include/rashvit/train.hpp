#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "rashvit/datasets.hpp"
#include "rashvit/metrics.hpp"
#include "rashvit/model.hpp"

namespace rashvit::train_eval {

// nullopt snr means no injection (the "+inf SNR" sentinel).
struct NoiseSetting {
    std::optional<double> snr_db;
    uint64_t seed = 0;
};

struct TrainConfig {
    double lr = 0.001;
    int batch_size = 16;
    int epochs = 100;
    uint64_t seed = 0;
    double weight_decay = 0.01;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    NoiseSetting train_noise;
    NoiseSetting eval_noise;
    std::string feature_mode = "fft";  // "fft" | "raw"
    // Stop once train accuracy reaches this level; > 1 disables.
    double early_stop_train_acc = 2.0;

    void validate() const;
    nlohmann::json to_json() const;
    static TrainConfig from_json(const nlohmann::json& j);
};

struct EpochStat {
    double train_loss = 0.0;
    double train_acc = 0.0;
    double val_acc = 0.0;
};

struct RunRecord {
    nlohmann::json model_config;
    nlohmann::json train_config;
    uint64_t seed = 0;
    std::vector<EpochStat> history;
    Metrics final_metrics;  // test split under eval_noise
    std::string checkpoint_path;
    int best_epoch = -1;
    double best_val_acc = 0.0;
    std::string generator_name;

    nlohmann::json to_json() const;
};

// Normalize -> (optional) noise injection -> featurize, per the run's feature mode.
std::vector<sigproc::SpectralImage> build_features(const datasets::LabeledDataset& ds,
                                                   const std::vector<size_t>& indices,
                                                   const std::string& feature_mode, const NoiseSetting& noise);

RunRecord train(const datasets::LabeledDataset& ds, const model::ModelConfig& mcfg, const TrainConfig& tcfg,
                model::RaShvitNet<float>& net, const std::string& checkpoint_path);

Metrics evaluate(const model::RaShvitNet<float>& net, const datasets::LabeledDataset& ds, datasets::Split split,
                 const NoiseSetting& noise, const std::string& feature_mode = "fft");

struct SweepCell {
    std::optional<double> snr_db;
    uint64_t seed = 0;
    double accuracy = 0.0;
};

// One evaluate per (snr, seed); cells run in parallel (RA_SHVIT_THREADS caps).
std::vector<SweepCell> snr_sweep(const model::RaShvitNet<float>& net, const datasets::LabeledDataset& ds,
                                 datasets::Split split, const std::vector<std::optional<double>>& snrs,
                                 const std::vector<uint64_t>& seeds, const std::string& feature_mode = "fft");

// One-axis modification of the base configuration (controlled-variable rule).
struct AblationVariant {
    std::string name;
    std::optional<bool> ahab;
    std::optional<bool> res_ffn;
    std::optional<std::string> features;
};

struct AblationRow {
    std::string variant;
    std::optional<double> snr_db;
    double accuracy = 0.0;
    double delta_vs_base = 0.0;
};

std::vector<AblationRow> ablate(const datasets::LabeledDataset& ds, const model::ModelConfig& base_mcfg,
                                const TrainConfig& base_tcfg, const std::vector<AblationVariant>& variants,
                                const std::vector<std::optional<double>>& eval_snrs);

// CSV rows: feature_0..feature_{D-1},label — the post-pooling pre-classifier vector.
void export_features(const model::RaShvitNet<float>& net, const datasets::LabeledDataset& ds,
                     datasets::Split split, const NoiseSetting& noise, const std::string& csv_path,
                     const std::string& feature_mode = "fft");

// Cell-level parallelism helper; thread count from RA_SHVIT_THREADS (default: hardware).
void parallel_for(size_t n, const std::function<void(size_t)>& fn);

uint64_t derive_seed(uint64_t base, uint64_t index);

}  // namespace rashvit::train_eval

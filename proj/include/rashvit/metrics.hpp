#pragma once

#include <cstdint>
#include <vector>

#include <json.hpp>

namespace rashvit::train_eval {

struct Metrics {
    double accuracy = 0.0;
    double loss = 0.0;
    std::vector<std::vector<int64_t>> confusion;  // [true][predicted]
    std::vector<double> precision, recall;

    int64_t total() const;
    nlohmann::json to_json() const;
};

Metrics metrics_from_predictions(const std::vector<int>& truth, const std::vector<int>& predicted, int num_classes,
                                 double mean_loss);

}  // namespace rashvit::train_eval

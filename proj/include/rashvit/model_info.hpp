#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rashvit/model.hpp"

namespace rashvit::model {

struct LayerStat {
    std::string name;
    int64_t params = 0;  // learnable only
    int64_t macs = 0;    // multiply-accumulates per sample
};

// Closed-form walk of the architecture; totals must match the constructed
// parameter store exactly (asserted in tests).
std::vector<LayerStat> model_accounting(const ModelConfig& cfg);

int64_t count_params(const ModelConfig& cfg);
int64_t estimate_flops(const ModelConfig& cfg);  // MACs per sample

// Single-conv helpers, used by the accounting fixtures.
int64_t conv_macs(int k, int cin, int cout, int groups, int out_h, int out_w);
int64_t conv_params(int k, int cin, int cout, int groups, bool bias);

}  // namespace rashvit::model

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace rashvit::svg {

// Accuracy-vs-SNR polyline; one series per named curve. Standalone SVG.
struct Series {
    std::string name;
    std::vector<double> xs;  // SNR in dB
    std::vector<double> ys;  // accuracy in [0,1]
};

std::string render_accuracy_plot(const std::vector<Series>& series, const std::string& title);

// K x K heatmap with per-cell counts.
std::string render_confusion_heatmap(const std::vector<std::vector<int64_t>>& confusion,
                                     const std::vector<std::string>& class_names, const std::string& title);

}  // namespace rashvit::svg

#include "rashvit/metrics.hpp"

#include "rashvit/errors.hpp"

namespace rashvit::train_eval {

int64_t Metrics::total() const {
    int64_t n = 0;
    for (const auto& row : confusion)
        for (int64_t v : row) n += v;
    return n;
}

nlohmann::json Metrics::to_json() const {
    return {{"accuracy", accuracy},
            {"loss", loss},
            {"confusion", confusion},
            {"precision", precision},
            {"recall", recall}};
}

Metrics metrics_from_predictions(const std::vector<int>& truth, const std::vector<int>& predicted, int num_classes,
                                 double mean_loss) {
    if (truth.size() != predicted.size()) throw UsageError("metrics: truth/prediction size mismatch");
    Metrics m;
    m.loss = mean_loss;
    m.confusion.assign(static_cast<size_t>(num_classes), std::vector<int64_t>(static_cast<size_t>(num_classes), 0));
    for (size_t i = 0; i < truth.size(); ++i) {
        if (truth[i] < 0 || truth[i] >= num_classes || predicted[i] < 0 || predicted[i] >= num_classes)
            throw DataError("metrics: class index out of range");
        ++m.confusion[static_cast<size_t>(truth[i])][static_cast<size_t>(predicted[i])];
    }
    int64_t correct = 0;
    for (int c = 0; c < num_classes; ++c) correct += m.confusion[static_cast<size_t>(c)][static_cast<size_t>(c)];
    m.accuracy = truth.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(truth.size());
    m.precision.assign(static_cast<size_t>(num_classes), 0.0);
    m.recall.assign(static_cast<size_t>(num_classes), 0.0);
    for (int c = 0; c < num_classes; ++c) {
        int64_t tp = m.confusion[static_cast<size_t>(c)][static_cast<size_t>(c)];
        int64_t row = 0, col = 0;
        for (int o = 0; o < num_classes; ++o) {
            row += m.confusion[static_cast<size_t>(c)][static_cast<size_t>(o)];
            col += m.confusion[static_cast<size_t>(o)][static_cast<size_t>(c)];
        }
        m.recall[static_cast<size_t>(c)] = row ? static_cast<double>(tp) / static_cast<double>(row) : 0.0;
        m.precision[static_cast<size_t>(c)] = col ? static_cast<double>(tp) / static_cast<double>(col) : 0.0;
    }
    return m;
}

}  // namespace rashvit::train_eval

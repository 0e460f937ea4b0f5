#pragma once

#include <functional>
#include <random>

#include "rashvit/ops.hpp"

namespace rashvit {

// Builds a scalar loss from leaf nodes. Must be a pure function of the leaf
// values (reconstruct any RNG or batch-norm running stats inside each call).
using GradCheckFn =
    std::function<NodePtr<double>(Tape<double>&, const std::vector<NodePtr<double>>&)>;

// Max over all input coordinates of |analytic - central difference| / max(1, |analytic|).
inline double grad_check(const GradCheckFn& f, std::vector<Tensor<double>> inputs, double h = 1e-5) {
    Tape<double> tape;
    std::vector<NodePtr<double>> leaves;
    leaves.reserve(inputs.size());
    for (auto& in : inputs) leaves.push_back(make_leaf<double>(in, true));
    auto loss = f(tape, leaves);
    tape.backward(loss);

    auto eval = [&](const std::vector<Tensor<double>>& vals) {
        Tape<double> t;
        std::vector<NodePtr<double>> ls;
        ls.reserve(vals.size());
        for (const auto& v : vals) ls.push_back(make_leaf<double>(v, false));
        return f(t, ls)->value[0];
    };

    double worst = 0.0;
    for (size_t ii = 0; ii < inputs.size(); ++ii) {
        for (int64_t i = 0; i < inputs[ii].numel(); ++i) {
            double orig = inputs[ii][i];
            inputs[ii][i] = orig + h;
            double fp = eval(inputs);
            inputs[ii][i] = orig - h;
            double fm = eval(inputs);
            inputs[ii][i] = orig;
            double fd = (fp - fm) / (2.0 * h);
            double an = leaves[ii]->grad[i];
            double err = std::abs(an - fd) / std::max(1.0, std::abs(an));
            worst = std::max(worst, err);
        }
    }
    return worst;
}

inline Tensor<double> random_tensor(std::vector<int64_t> shape, std::mt19937_64& rng, double scale = 1.0) {
    std::normal_distribution<double> d(0.0, scale);
    Tensor<double> t(std::move(shape));
    for (auto& v : t.data) v = d(rng);
    return t;
}

}  // namespace rashvit

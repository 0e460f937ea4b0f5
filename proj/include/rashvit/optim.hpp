#pragma once

#include <cmath>

#include "rashvit/params.hpp"

namespace rashvit {

struct AdamWConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.01;
};

// Decoupled weight decay: theta <- theta - lr * (m_hat / (sqrt(v_hat) + eps) + wd * theta)
template <class T>
class AdamW {
  public:
    explicit AdamW(AdamWConfig cfg = {}) : cfg_(cfg) {}

    void step(ParamStore<T>& store) {
        if (m_.empty()) {
            for (const auto& [_, p] : store.params) {
                m_.push_back(Tensor<T>::zeros(p->value.shape));
                v_.push_back(Tensor<T>::zeros(p->value.shape));
            }
        }
        ++t_;
        T bc1 = T(1) - static_cast<T>(std::pow(cfg_.beta1, static_cast<double>(t_)));
        T bc2 = T(1) - static_cast<T>(std::pow(cfg_.beta2, static_cast<double>(t_)));
        for (size_t pi = 0; pi < store.params.size(); ++pi) {
            auto& p = store.params[pi].second;
            auto& m = m_[pi];
            auto& v = v_[pi];
            for (int64_t i = 0; i < p->value.numel(); ++i) {
                T g = p->grad[i];
                m[i] = static_cast<T>(cfg_.beta1) * m[i] + (T(1) - static_cast<T>(cfg_.beta1)) * g;
                v[i] = static_cast<T>(cfg_.beta2) * v[i] + (T(1) - static_cast<T>(cfg_.beta2)) * g * g;
                T m_hat = m[i] / bc1;
                T v_hat = v[i] / bc2;
                p->value[i] -= static_cast<T>(cfg_.lr) *
                               (m_hat / (std::sqrt(v_hat) + static_cast<T>(cfg_.eps)) +
                                static_cast<T>(cfg_.weight_decay) * p->value[i]);
            }
        }
    }

    int64_t step_count() const { return t_; }
    const AdamWConfig& config() const { return cfg_; }

  private:
    AdamWConfig cfg_;
    int64_t t_ = 0;
    std::vector<Tensor<T>> m_, v_;
};

}  // namespace rashvit

#pragma once

#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "rashvit/tape.hpp"

namespace rashvit {

// Named learnable tensors plus non-learnable buffers (batch-norm running
// stats). Insertion order is fixed by construction, which keeps checkpoints
// and optimizer state deterministic.
template <class T>
struct ParamStore {
    std::vector<std::pair<std::string, NodePtr<T>>> params;
    std::vector<std::pair<std::string, std::shared_ptr<Tensor<T>>>> buffers;

    NodePtr<T> add_param(const std::string& name, Tensor<T> init) {
        for (const auto& [n, _] : params)
            if (n == name) throw std::invalid_argument("duplicate parameter: " + name);
        auto node = make_leaf<T>(std::move(init), true);
        params.emplace_back(name, node);
        return node;
    }

    std::shared_ptr<Tensor<T>> add_buffer(const std::string& name, Tensor<T> init) {
        auto t = std::make_shared<Tensor<T>>(std::move(init));
        buffers.emplace_back(name, t);
        return t;
    }

    NodePtr<T> find(const std::string& name) const {
        for (const auto& [n, p] : params)
            if (n == name) return p;
        return nullptr;
    }

    void zero_grad() {
        for (auto& [_, p] : params) p->zero_grad();
    }

    int64_t total_params() const {
        int64_t n = 0;
        for (const auto& [_, p] : params) n += p->value.numel();
        return n;
    }
};

}  // namespace rashvit

#pragma once

#include <functional>
#include <memory>
#include <stdexcept>
#include <vector>

#include "rashvit/tensor.hpp"

namespace rashvit {

// A value in the compute graph. grad is allocated only when requires_grad.
template <class T>
struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    bool requires_grad = false;

    void ensure_grad() {
        if (grad.numel() != value.numel()) grad = Tensor<T>::zeros(value.shape);
    }
    void zero_grad() {
        for (auto& g : grad.data) g = T(0);
    }
};

template <class T>
using NodePtr = std::shared_ptr<Node<T>>;

template <class T>
NodePtr<T> make_leaf(Tensor<T> v, bool requires_grad = false) {
    auto n = std::make_shared<Node<T>>();
    n->value = std::move(v);
    n->requires_grad = requires_grad;
    if (requires_grad) n->ensure_grad();
    return n;
}

// Records one forward pass; backward replays the records in reverse.
template <class T>
class Tape {
  public:
    NodePtr<T> emit(Tensor<T> v, bool requires_grad) {
        auto n = make_leaf<T>(std::move(v), requires_grad);
        return n;
    }

    void record(std::function<void()> back) { steps_.push_back(std::move(back)); }

    void backward(const NodePtr<T>& loss) {
        if (loss->value.numel() != 1) throw std::invalid_argument("backward: loss must be scalar");
        if (!loss->requires_grad) return;
        loss->ensure_grad();
        loss->grad[0] = T(1);
        for (auto it = steps_.rbegin(); it != steps_.rend(); ++it) (*it)();
    }

    size_t size() const { return steps_.size(); }

  private:
    std::vector<std::function<void()>> steps_;
};

}  // namespace rashvit

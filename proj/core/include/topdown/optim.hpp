#pragma once

#include "topdown/tensor.hpp"

namespace topdown {

// SGD with momentum and coupled weight decay:
//   v <- momentum * v + grad + weight_decay * param
//   param <- param - lr * v
// Velocity buffers are zero-initialized on attach and persist across steps.
template <typename T>
struct OptimizerState {
    T momentum = T(0.9);
    T weight_decay = T(0);
    std::vector<std::vector<T>> velocity;

    void attach(const std::vector<Tensor<T>>& params) {
        velocity.clear();
        for (const auto& p : params) velocity.emplace_back(p.numel(), T(0));
    }
};

template <typename T>
void sgd_step(std::vector<Tensor<T>>& params, OptimizerState<T>& state, T lr);

}  // namespace topdown

#include "topdown/optim.hpp"

namespace topdown {

template <typename T>
void sgd_step(std::vector<Tensor<T>>& params, OptimizerState<T>& state, T lr) {
    if (lr <= T(0)) throw std::invalid_argument("sgd_step: lr must be > 0");
    if (state.velocity.size() != params.size())
        throw std::invalid_argument("sgd_step: optimizer state not attached to these parameters");
    for (size_t i = 0; i < params.size(); ++i) {
        Tensor<T>& p = params[i];
        if (!p.has_grad())
            throw std::invalid_argument("sgd_step: parameter " + std::to_string(i) +
                                        " has no gradient");
        std::vector<T>& v = state.velocity[i];
        const AVec<T>& g = p.grad();
        T* pd = p.data();
        for (size_t j = 0; j < v.size(); ++j) {
            v[j] = state.momentum * v[j] + g[j] + state.weight_decay * pd[j];
            pd[j] -= lr * v[j];
        }
    }
}

template void sgd_step<float>(std::vector<Tensor<float>>&, OptimizerState<float>&, float);
template void sgd_step<double>(std::vector<Tensor<double>>&, OptimizerState<double>&, double);

}  // namespace topdown

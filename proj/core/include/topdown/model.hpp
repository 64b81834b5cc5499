#pragma once

#include "topdown/arch.hpp"
#include "topdown/layers.hpp"
#include "topdown/rng.hpp"

namespace topdown {

// One step of the execution plan. Parameter indices point into
// Model::params; stats indices into Model::stats.
struct PlanOp {
    enum class Kind { input, conv, bn, relu, pool2, merge, res, gap, head };
    Kind kind = Kind::input;
    int k = 0, stride = 1, pad = 0;
    int branch = -1;      // merge/input: index into the highest-first input list
    std::vector<int> p;   // parameter indices (order documented per kind)
    std::vector<int> st;  // batch-norm stats indices
};

template <typename T>
struct BnStats {
    Tensor<T> mean;  // running mean, initialized to 0
    Tensor<T> var;   // running variance, initialized to 1
};

// Instantiated network: named parameters plus an ordered execution plan.
// Bottom-up models take one input; top-down models take the full pyramid,
// ordered highest resolution first.
template <typename T>
struct Model {
    ArchSpec spec;
    std::vector<std::string> names;
    std::vector<Tensor<T>> params;
    std::vector<BnStats<T>> stats;
    std::vector<PlanOp> plan;
    int arity = 1;
    std::vector<std::pair<int, int>> input_extents;  // per input, highest first

    std::vector<Tensor<T>>& parameters() { return params; }
    int64_t parameter_elements() const {
        int64_t n = 0;
        for (const auto& p : params) n += p.numel();
        return n;
    }
    int param_index(const std::string& name) const;

    // Plan indices after which the running feature map is a stage boundary:
    // the consumed input first, then each stage's final activation.
    std::vector<int> stage_boundary_points() const;
    // Capture point of the final convolutional stage's activation.
    int last_conv_point() const;
    // Native spatial extent of the feature map at a capture point.
    std::pair<int, int> extent_at(int point) const;
};

// Allocates and initializes parameters deterministically from the seed
// (He-uniform fan-in for conv weights, zero biases, gamma=1/beta=0) and
// builds the execution plan. Rejects specs whose ladder underflows.
template <typename T>
Model<T> instantiate(const ArchSpec& spec, uint64_t seed);

// Deterministic logits [N, classes]. Inputs are highest-resolution first;
// bottom-up models expect exactly one. Train mode uses batch statistics and
// updates the running buffers.
template <typename T>
Tensor<T> forward(Model<T>& model, const std::vector<Tensor<T>>& inputs, bool train);

// forward() that additionally returns the live tensors at the requested
// plan indices (tape participation intact), for Grad-CAM and probes.
template <typename T>
Tensor<T> forward_captures(Model<T>& model, const std::vector<Tensor<T>>& inputs, bool train,
                           const std::vector<int>& points, std::vector<Tensor<T>>* captured);

}  // namespace topdown

#pragma once

#include <cmath>

#include "topdown/ops.hpp"

namespace topdown {

// Gaussian anti-aliasing blur: std sigma in pixels, odd window of width
// 2*ceil(3*sigma)+1 (nearest odd integer >= 6*sigma+1).
struct BlurSpec {
    double sigma = 1.0;
    int window = 7;

    static BlurSpec from_sigma(double sigma) {
        if (sigma <= 0) throw std::invalid_argument("BlurSpec: sigma must be > 0");
        BlurSpec s;
        s.sigma = sigma;
        s.window = 2 * static_cast<int>(std::ceil(3.0 * sigma)) + 1;
        return s;
    }
};

// Discretized, truncated, renormalized Gaussian; coefficients sum to 1.
template <typename T>
std::vector<T> gaussian_kernel(const BlurSpec& spec);

// Separable Gaussian blur (reflect padding), no subsampling.
template <typename T>
Tensor<T> gaussian_blur(Tensor<T> image, const BlurSpec& spec);

// Blur then stride-2 subsampling at even indices. H and W must be even.
// Differentiable: participates in the tape like any op.
template <typename T>
Tensor<T> blur_downsample2(Tensor<T> image, const BlurSpec& spec);

// Nearest-neighbor 2x upsample followed by a 3x3 same-padding convolution.
template <typename T>
Tensor<T> upscale(Tensor<T> input, Tensor<T> weight, Tensor<T> bias);

// Low/high-resolution fusion block. Order is exactly: 1x1 conv on the
// upsampled low-resolution map (to the high-res input's channel count),
// element-wise addition with the high-res input, concatenation with that
// same input, 3x3 same-padding convolution to the block's output width.
template <typename T>
struct MergeBlock {
    Tensor<T> conv1x1_w;  // [Ch, Cl, 1, 1]
    Tensor<T> conv1x1_b;  // [Ch]
    Tensor<T> conv3x3_w;  // [Cout, 2*Ch, 3, 3]
    Tensor<T> conv3x3_b;  // [Cout]
};

template <typename T>
Tensor<T> merge(Tensor<T> low, Tensor<T> high_input, const MergeBlock<T>& block);

// Closed-form trainable-parameter count of a merge block.
inline int64_t merge_param_count(int64_t c_low, int64_t c_high, int64_t c_out) {
    return (c_low * c_high + c_high) + (9 * 2 * c_high * c_out + c_out);
}

}  // namespace topdown

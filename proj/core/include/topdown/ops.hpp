#pragma once

#include "topdown/tape.hpp"

namespace topdown {

// Differentiable tensor operations. Each op computes its forward result and,
// when a tape is active and any input requires grad, records an exact
// backward closure. Shape violations are rejected loudly (no broadcasting
// beyond per-channel bias).

template <typename T>
Tensor<T> add(Tensor<T> a, Tensor<T> b);

template <typename T>
Tensor<T> mul(Tensor<T> a, Tensor<T> b);  // elementwise

template <typename T>
Tensor<T> relu(Tensor<T> x);

template <typename T>
Tensor<T> sum(Tensor<T> x);  // scalar

// y[n,co,:,:] = bias[co] + sum_ci w[co,ci,:,:] * x[n,ci,:,:] (cross-correlation,
// zero padding). H' = floor((H + 2*padding - kh)/stride) + 1, same for W'.
template <typename T>
Tensor<T> conv2d(Tensor<T> input, Tensor<T> weight, Tensor<T> bias, int stride, int padding);

// 2x2 mean pooling, stride 2; H and W must be even.
template <typename T>
Tensor<T> avg_pool2(Tensor<T> x);

// Each cell replicated into a 2x2 block.
template <typename T>
Tensor<T> upsample_nearest2(Tensor<T> x);

template <typename T>
Tensor<T> concat_channels(const std::vector<Tensor<T>>& xs);

// N,C,H,W -> N,C,1,1
template <typename T>
Tensor<T> global_avg_pool(Tensor<T> x);

// Fresh tensor with the same values in a new shape (copying view).
template <typename T>
Tensor<T> reshape(Tensor<T> x, Shape shape);

// Per-channel batch normalization over N,H,W. Train mode normalizes with
// batch statistics (biased variance, epsilon 1e-5) and folds them into the
// running buffers with momentum 0.9 on the running side; eval mode uses the
// running buffers. gamma/beta are the affine parameters; running_mean/var
// are plain buffers mutated in train mode.
template <typename T>
Tensor<T> batch_norm(Tensor<T> x, Tensor<T> gamma, Tensor<T> beta, Tensor<T> running_mean,
                     Tensor<T> running_var, bool train);

inline constexpr double kBatchNormEps = 1e-5;
inline constexpr double kBatchNormMomentum = 0.9;

// Mean over the batch of -log softmax(logits)[label]; max-subtraction
// stabilized. Accepts logits of shape [N,K] or [N,K,1,1].
template <typename T>
Tensor<T> softmax_cross_entropy(Tensor<T> logits, const std::vector<int>& labels);

// Row-wise softmax probabilities (no tape participation; evaluation helper).
template <typename T>
std::vector<T> softmax_rows(const Tensor<T>& logits);

// Scalar view of logits[n,k] for class-gradient seeds (Grad-CAM roots).
template <typename T>
Tensor<T> pick(Tensor<T> logits, int64_t n, int64_t k);

// Separable correlation with a 1-D kernel applied horizontally then
// vertically, reflect padding (edge not repeated), then stride-s
// subsampling anchored at index 0 in both dims. Differentiable.
template <typename T>
Tensor<T> sep_filter2d_reflect(Tensor<T> x, const std::vector<T>& kernel, int stride);

// Reflection index map for position p on an axis of extent n (reflect
// without edge repeat); exposed for oracle tests.
int64_t reflect_index(int64_t p, int64_t n);

template <typename T>
int argmax_row(const T* row, int k);

}  // namespace topdown

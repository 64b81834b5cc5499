#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "topdown/layers.hpp"
#include "topdown/rng.hpp"
#include "topdown/tensor.hpp"

namespace topdown {

// Labeled image set. Images are NCHW in [0, 1] until normalize() subtracts
// the per-pixel mean (after which mean_image records what was removed).
template <typename T>
struct Dataset {
    Tensor<T> images;
    std::vector<int> labels;
    Tensor<T> mean_image;  // [C,H,W]; defined only after normalize()

    int64_t size() const { return images.defined() ? images.shape()[0] : 0; }
};

// Image pyramid for a batch: per-level tensors ordered highest resolution
// first, each level half the extent of the previous.
template <typename T>
struct PyramidInput {
    std::vector<Tensor<T>> levels;
    BlurSpec blur;
};

// IDX (big-endian) loaders. Images scale to [0,1]; magic and size are
// checked and mismatches reported with the offending path.
template <typename T>
Tensor<T> load_idx_images(const std::string& path);
std::vector<int> load_idx_labels(const std::string& path);
template <typename T>
Dataset<T> load_dataset_idx(const std::string& images_path, const std::string& labels_path);

// CIFAR-10 binary batches: 3073-byte records (label + 3*1024 pixels).
template <typename T>
Dataset<T> load_cifar10(const std::vector<std::string>& paths);

// Deterministic shuffled split; first part receives round(frac * N).
template <typename T>
std::pair<Dataset<T>, Dataset<T>> split(const Dataset<T>& ds, double frac, uint64_t seed);

template <typename T>
Dataset<T> take(const Dataset<T>& ds, const std::vector<int64_t>& indices);

template <typename T>
Tensor<T> compute_mean_image(const Dataset<T>& ds);
// Subtracts mean (broadcast over N) in place and records it.
template <typename T>
void normalize(Dataset<T>& ds, const Tensor<T>& mean);

// Batch gather along N (copy; no tape participation).
template <typename T>
Tensor<T> gather(const Tensor<T>& images, const std::vector<int64_t>& indices);
std::vector<int> gather_labels(const std::vector<int>& labels, const std::vector<int64_t>& indices);

// Random pad-and-crop plus horizontal flips (training augmentation).
template <typename T>
Tensor<T> augment(const Tensor<T>& batch, Rng& rng, int pad, bool hflip);

// Blur-downsample chain; levels[0] is the input itself. Extents must divide
// by 2^(levels-1). Differentiable when recorded on an active tape.
template <typename T>
PyramidInput<T> make_pyramid(const Tensor<T>& images, int levels, const BlurSpec& blur);

}  // namespace topdown

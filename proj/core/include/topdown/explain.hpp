#pragma once

#include <optional>
#include <string>
#include <vector>

#include "topdown/data.hpp"
#include "topdown/model.hpp"

namespace topdown {

// Class-activation heatmap. `values` is min-max normalized to [0,1] and
// nearest-neighbor upscaled to the model's full input extent (h x w);
// native_h/native_w record the producing layer's own extent.
template <typename T>
struct Heatmap {
    int point = 0;  // plan index of the producing capture point
    int native_h = 0, native_w = 0;
    int h = 0, w = 0;
    std::vector<T> values;
};

// Gradient-weighted class activation map at a capture point: channel
// weights are the spatial mean of d(logit_class)/d(map), the map is
// ReLU(sum_c w_c * map_c), min-max normalized (all-zero maps stay zero) and
// upscaled. Inputs are preprocessed batch-1 tensors. Points at or past the
// global pooling are rejected (no spatial footprint left).
template <typename T>
Heatmap<T> grad_cam(Model<T>& model, const std::vector<Tensor<T>>& inputs, int cls, int point);

// One heatmap per stage boundary: the consumed input, then each stage's
// final activation (stage count + 1 maps).
template <typename T>
std::vector<Heatmap<T>> layerwise_cam(Model<T>& model, const std::vector<Tensor<T>>& inputs,
                                      int cls);

// Pixel-count accumulator for weakly supervised localization.
struct LocalizationStats {
    long long tp = 0, fp = 0, fn = 0;
    int samples = 0;  // jointly correctly-classified samples evaluated
    double threshold = 0.2;

    std::optional<double> precision() const {
        if (tp + fp == 0) return std::nullopt;
        return static_cast<double>(tp) / static_cast<double>(tp + fp);
    }
    std::optional<double> recall() const {
        if (tp + fn == 0) return std::nullopt;
        return static_cast<double>(tp) / static_cast<double>(tp + fn);
    }
};

// A model plus the preprocessing state its heatmaps need.
template <typename T>
struct ExplainSubject {
    Model<T>* model = nullptr;
    Tensor<T> mean_image;  // [C,H,W]
};

// Joint localization protocol: restrict to samples both models classify
// correctly; object mask = raw image pixels > object_threshold (max over
// channels); prediction mask = last-stage heatmap >= t; pixel TP/FP/FN
// accumulated per model. `samples` = 0 in both results signals an empty
// intersection (evaluation skipped).
template <typename T>
std::pair<LocalizationStats, LocalizationStats> localization_eval(
    ExplainSubject<T> a, ExplainSubject<T> b, const Dataset<T>& test01, double blur_sigma,
    double t, double object_threshold, int max_samples);

}  // namespace topdown

#include "topdown/explain.hpp"

#include <algorithm>
#include <cmath>

#include "topdown/ops.hpp"
#include "topdown/tape.hpp"

namespace topdown {

template <typename T>
Heatmap<T> grad_cam(Model<T>& model, const std::vector<Tensor<T>>& inputs, int cls, int point) {
    if (cls < 0 || cls >= model.spec.classes)
        throw std::invalid_argument("class " + std::to_string(cls) + " outside [0, " +
                                    std::to_string(model.spec.classes) + ")");
    if (point < 0 || point >= static_cast<int>(model.plan.size()))
        throw std::invalid_argument("capture point " + std::to_string(point) + " out of range");
    const auto kind = model.plan[static_cast<size_t>(point)].kind;
    if (kind == PlanOp::Kind::gap || kind == PlanOp::Kind::head)
        throw std::invalid_argument("capture point " + std::to_string(point) +
                                    " has no spatial footprint (pooled or head output)");

    // Fresh leaf copies so input-level maps have gradients too.
    std::vector<Tensor<T>> leaves;
    leaves.reserve(inputs.size());
    for (const auto& t : inputs) {
        Tensor<T> c = t.clone();
        c.set_requires_grad(true);
        leaves.push_back(c);
    }

    Tape<T> tape;
    TapeScope<T> scope(tape);
    std::vector<Tensor<T>> captured;
    Tensor<T> logits = forward_captures(model, leaves, false, {point}, &captured);
    Tensor<T> root = pick(logits, 0, cls);
    tape.backward(root);

    const Tensor<T>& map = captured.front();
    const auto& ms = map.shape();
    const int64_t C = ms[1], H = ms[2], W = ms[3];
    Heatmap<T> hm;
    hm.point = point;
    hm.native_h = static_cast<int>(H);
    hm.native_w = static_cast<int>(W);
    hm.h = model.spec.in_h;
    hm.w = model.spec.in_w;

    std::vector<double> cam(static_cast<size_t>(H * W), 0.0);
    if (map.has_grad()) {
        const auto& g = map.grad();
        const auto& v = map.vec();
        for (int64_t c = 0; c < C; ++c) {
            double wsum = 0;
            for (int64_t i = 0; i < H * W; ++i) wsum += static_cast<double>(g[c * H * W + i]);
            const double weight = wsum / static_cast<double>(H * W);
            for (int64_t i = 0; i < H * W; ++i)
                cam[static_cast<size_t>(i)] += weight * static_cast<double>(v[c * H * W + i]);
        }
    }
    double mx = 0;
    for (auto& v : cam) {
        v = std::max(v, 0.0);
        mx = std::max(mx, v);
    }
    double mn = mx;
    for (double v : cam) mn = std::min(mn, v);
    // Min-max normalize; degenerate (constant) maps stay all-zero.
    if (mx > mn)
        for (auto& v : cam) v = (v - mn) / (mx - mn);
    else
        for (auto& v : cam) v = 0.0;

    hm.values.resize(static_cast<size_t>(hm.h) * hm.w);
    for (int y = 0; y < hm.h; ++y) {
        const int64_t sy = static_cast<int64_t>(y) * H / hm.h;
        for (int x = 0; x < hm.w; ++x) {
            const int64_t sx = static_cast<int64_t>(x) * W / hm.w;
            hm.values[static_cast<size_t>(y) * hm.w + x] = static_cast<T>(cam[sy * W + sx]);
        }
    }
    return hm;
}

template <typename T>
std::vector<Heatmap<T>> layerwise_cam(Model<T>& model, const std::vector<Tensor<T>>& inputs,
                                      int cls) {
    std::vector<Heatmap<T>> maps;
    for (int point : model.stage_boundary_points())
        maps.push_back(grad_cam(model, inputs, cls, point));
    return maps;
}

namespace {

template <typename T>
std::vector<Tensor<T>> subject_inputs(const ExplainSubject<T>& s, const Tensor<T>& image01,
                                      double blur_sigma) {
    Tensor<T> x = image01.clone();
    auto& v = x.vec();
    const auto& m = s.mean_image.vec();
    for (size_t i = 0; i < v.size(); ++i) v[i] -= m[i];
    if (s.model->arity == 1) return {x};
    return make_pyramid(x, s.model->arity, BlurSpec::from_sigma(blur_sigma)).levels;
}

template <typename T>
int subject_predict(const ExplainSubject<T>& s, const Tensor<T>& image01, double blur_sigma) {
    Tensor<T> out = forward(*s.model, subject_inputs(s, image01, blur_sigma), false);
    return argmax_row(out.data(), static_cast<int>(out.numel()));
}

}  // namespace

template <typename T>
std::pair<LocalizationStats, LocalizationStats> localization_eval(
    ExplainSubject<T> a, ExplainSubject<T> b, const Dataset<T>& test01, double blur_sigma,
    double t, double object_threshold, int max_samples) {
    LocalizationStats sa, sb;
    sa.threshold = sb.threshold = t;
    const auto& shape = test01.images.shape();
    const int64_t C = shape[1], H = shape[2], W = shape[3];

    for (int64_t i = 0; i < test01.size() && sa.samples < max_samples; ++i) {
        Tensor<T> image01 = gather(test01.images, {i});
        const int label = test01.labels[static_cast<size_t>(i)];
        if (subject_predict(a, image01, blur_sigma) != label) continue;
        if (subject_predict(b, image01, blur_sigma) != label) continue;

        // Object mask from the raw image (max over channels).
        std::vector<char> object(static_cast<size_t>(H * W), 0);
        const auto& v = image01.vec();
        for (int64_t c = 0; c < C; ++c)
            for (int64_t p = 0; p < H * W; ++p)
                if (static_cast<double>(v[c * H * W + p]) > object_threshold)
                    object[static_cast<size_t>(p)] = 1;

        auto tally = [&](ExplainSubject<T>& s, LocalizationStats& st) {
            const auto inputs = subject_inputs(s, image01, blur_sigma);
            Heatmap<T> hm = grad_cam(*s.model, inputs, label, s.model->last_conv_point());
            for (int64_t p = 0; p < H * W; ++p) {
                const bool pred = static_cast<double>(hm.values[static_cast<size_t>(p)]) >= t;
                const bool obj = object[static_cast<size_t>(p)] != 0;
                if (pred && obj)
                    ++st.tp;
                else if (pred && !obj)
                    ++st.fp;
                else if (!pred && obj)
                    ++st.fn;
            }
            ++st.samples;
        };
        tally(a, sa);
        tally(b, sb);
    }
    return {sa, sb};
}

#define TOPDOWN_INSTANTIATE_EXPLAIN(T)                                                         \
    template struct Heatmap<T>;                                                                \
    template Heatmap<T> grad_cam<T>(Model<T>&, const std::vector<Tensor<T>>&, int, int);       \
    template std::vector<Heatmap<T>> layerwise_cam<T>(Model<T>&, const std::vector<Tensor<T>>&, \
                                                      int);                                    \
    template std::pair<LocalizationStats, LocalizationStats> localization_eval<T>(             \
        ExplainSubject<T>, ExplainSubject<T>, const Dataset<T>&, double, double, double, int);

TOPDOWN_INSTANTIATE_EXPLAIN(float)
TOPDOWN_INSTANTIATE_EXPLAIN(double)

}  // namespace topdown

#include "topdown/layers.hpp"

#include <cmath>

namespace topdown {

template <typename T>
std::vector<T> gaussian_kernel(const BlurSpec& spec) {
    if (spec.sigma <= 0) throw std::invalid_argument("gaussian_kernel: sigma must be > 0");
    const int w = spec.window;
    if (w < 1 || w % 2 == 0) throw std::invalid_argument("gaussian_kernel: window must be odd");
    const int r = w / 2;
    std::vector<T> k(static_cast<size_t>(w));
    double total = 0.0;
    for (int i = 0; i < w; ++i) {
        const double d = i - r;
        const double v = std::exp(-d * d / (2.0 * spec.sigma * spec.sigma));
        k[i] = static_cast<T>(v);
        total += v;
    }
    for (int i = 0; i < w; ++i) k[i] = static_cast<T>(static_cast<double>(k[i]) / total);
    return k;
}

template <typename T>
Tensor<T> gaussian_blur(Tensor<T> image, const BlurSpec& spec) {
    return sep_filter2d_reflect(image, gaussian_kernel<T>(spec), 1);
}

template <typename T>
Tensor<T> blur_downsample2(Tensor<T> image, const BlurSpec& spec) {
    if (image.rank() != 4)
        fail_shape("blur_downsample2", "expected N,C,H,W, got " + shape_str(image.shape()));
    if (image.dim(2) % 2 != 0 || image.dim(3) % 2 != 0)
        fail_shape("blur_downsample2", "H and W must be even, got " + shape_str(image.shape()));
    return sep_filter2d_reflect(image, gaussian_kernel<T>(spec), 2);
}

template <typename T>
Tensor<T> upscale(Tensor<T> input, Tensor<T> weight, Tensor<T> bias) {
    if (weight.rank() != 4 || weight.dim(2) != 3 || weight.dim(3) != 3)
        fail_shape("upscale", "weight must be Cout,Cin,3,3, got " + shape_str(weight.shape()));
    return conv2d(upsample_nearest2(input), weight, bias, 1, 1);
}

template <typename T>
Tensor<T> merge(Tensor<T> low, Tensor<T> high_input, const MergeBlock<T>& block) {
    if (low.rank() != 4 || high_input.rank() != 4)
        fail_shape("merge", "expected N,C,H,W inputs");
    if (high_input.dim(2) != 2 * low.dim(2) || high_input.dim(3) != 2 * low.dim(3))
        fail_shape("merge", "high-resolution input " + shape_str(high_input.shape()) +
                                " must be exactly 2x the low input " + shape_str(low.shape()));
    Tensor<T> up = upsample_nearest2(low);
    Tensor<T> projected = conv2d(up, block.conv1x1_w, block.conv1x1_b, 1, 0);
    Tensor<T> added = add(projected, high_input);
    Tensor<T> stacked = concat_channels<T>({added, high_input});
    return conv2d(stacked, block.conv3x3_w, block.conv3x3_b, 1, 1);
}

#define TOPDOWN_INSTANTIATE_LAYERS(T)                                          \
    template std::vector<T> gaussian_kernel<T>(const BlurSpec&);               \
    template Tensor<T> gaussian_blur<T>(Tensor<T>, const BlurSpec&);           \
    template Tensor<T> blur_downsample2<T>(Tensor<T>, const BlurSpec&);        \
    template Tensor<T> upscale<T>(Tensor<T>, Tensor<T>, Tensor<T>);            \
    template Tensor<T> merge<T>(Tensor<T>, Tensor<T>, const MergeBlock<T>&);

TOPDOWN_INSTANTIATE_LAYERS(float)
TOPDOWN_INSTANTIATE_LAYERS(double)

}  // namespace topdown

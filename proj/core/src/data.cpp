#include "topdown/data.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace topdown {

namespace {

std::vector<unsigned char> read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open '" + path + "'");
    in.seekg(0, std::ios::end);
    const std::streamoff len = in.tellg();
    in.seekg(0, std::ios::beg);
    std::vector<unsigned char> buf(static_cast<size_t>(len));
    if (len > 0) in.read(reinterpret_cast<char*>(buf.data()), len);
    if (!in) throw std::runtime_error("short read from '" + path + "'");
    return buf;
}

uint32_t be32(const unsigned char* p) {
    return (uint32_t(p[0]) << 24) | (uint32_t(p[1]) << 16) | (uint32_t(p[2]) << 8) | uint32_t(p[3]);
}

[[noreturn]] void fail_magic(const std::string& path, uint32_t got, uint32_t want) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "'%s': bad IDX magic 0x%08x (expected 0x%08x)", path.c_str(), got,
                  want);
    throw std::runtime_error(buf);
}

void check_size(const std::string& path, size_t got, size_t want) {
    if (got != want) {
        std::ostringstream os;
        os << "'" << path << "': file holds " << got << " bytes, expected " << want;
        throw std::runtime_error(os.str());
    }
}

}  // namespace

template <typename T>
Tensor<T> load_idx_images(const std::string& path) {
    const auto buf = read_file(path);
    if (buf.size() < 16) throw std::runtime_error("'" + path + "': too short for an IDX image header");
    const uint32_t magic = be32(buf.data());
    if (magic != 0x803u) fail_magic(path, magic, 0x803u);
    const int64_t n = be32(buf.data() + 4);
    const int64_t h = be32(buf.data() + 8);
    const int64_t w = be32(buf.data() + 12);
    check_size(path, buf.size(), 16 + size_t(n) * h * w);
    Tensor<T> out = Tensor<T>::zeros({n, 1, h, w});
    auto& v = out.vec();
    const unsigned char* src = buf.data() + 16;
    for (size_t i = 0; i < v.size(); ++i) v[i] = static_cast<T>(src[i]) / T(255);
    return out;
}

std::vector<int> load_idx_labels(const std::string& path) {
    const auto buf = read_file(path);
    if (buf.size() < 8) throw std::runtime_error("'" + path + "': too short for an IDX label header");
    const uint32_t magic = be32(buf.data());
    if (magic != 0x801u) fail_magic(path, magic, 0x801u);
    const size_t n = be32(buf.data() + 4);
    check_size(path, buf.size(), 8 + n);
    std::vector<int> labels(n);
    for (size_t i = 0; i < n; ++i) labels[i] = buf[8 + i];
    return labels;
}

template <typename T>
Dataset<T> load_dataset_idx(const std::string& images_path, const std::string& labels_path) {
    Dataset<T> ds;
    ds.images = load_idx_images<T>(images_path);
    ds.labels = load_idx_labels(labels_path);
    if (ds.images.shape()[0] != static_cast<int64_t>(ds.labels.size())) {
        std::ostringstream os;
        os << "image/label count mismatch: " << ds.images.shape()[0] << " images in '" << images_path
           << "' vs " << ds.labels.size() << " labels in '" << labels_path << "'";
        throw std::runtime_error(os.str());
    }
    return ds;
}

template <typename T>
Dataset<T> load_cifar10(const std::vector<std::string>& paths) {
    constexpr size_t kRecord = 3073;  // label byte + 32*32*3 pixels
    std::vector<unsigned char> all;
    for (const auto& p : paths) {
        auto buf = read_file(p);
        if (buf.size() % kRecord != 0) {
            std::ostringstream os;
            os << "'" << p << "': " << buf.size() << " bytes is not a multiple of the " << kRecord
               << "-byte record size";
            throw std::runtime_error(os.str());
        }
        all.insert(all.end(), buf.begin(), buf.end());
    }
    const int64_t n = static_cast<int64_t>(all.size() / kRecord);
    Dataset<T> ds;
    ds.images = Tensor<T>::zeros({n, 3, 32, 32});
    ds.labels.resize(n);
    auto& v = ds.images.vec();
    for (int64_t i = 0; i < n; ++i) {
        const unsigned char* rec = all.data() + size_t(i) * kRecord;
        ds.labels[i] = rec[0];
        for (size_t j = 0; j < 3072; ++j) v[size_t(i) * 3072 + j] = static_cast<T>(rec[1 + j]) / T(255);
    }
    return ds;
}

template <typename T>
Dataset<T> take(const Dataset<T>& ds, const std::vector<int64_t>& indices) {
    Dataset<T> out;
    out.images = gather(ds.images, indices);
    out.labels = gather_labels(ds.labels, indices);
    out.mean_image = ds.mean_image;
    return out;
}

template <typename T>
std::pair<Dataset<T>, Dataset<T>> split(const Dataset<T>& ds, double frac, uint64_t seed) {
    if (frac <= 0.0 || frac >= 1.0)
        throw std::invalid_argument("split fraction must lie in (0,1), got " + std::to_string(frac));
    Rng rng(seed);
    const auto perm = rng.permutation(static_cast<size_t>(ds.size()));
    const int64_t cut = std::llround(frac * static_cast<double>(ds.size()));
    std::vector<int64_t> first(perm.begin(), perm.begin() + cut);
    std::vector<int64_t> second(perm.begin() + cut, perm.end());
    return {take(ds, first), take(ds, second)};
}

template <typename T>
Tensor<T> compute_mean_image(const Dataset<T>& ds) {
    const auto& s = ds.images.shape();
    const int64_t n = s[0], chw = s[1] * s[2] * s[3];
    Tensor<T> mean = Tensor<T>::zeros({s[1], s[2], s[3]});
    std::vector<double> acc(static_cast<size_t>(chw), 0.0);
    const auto& v = ds.images.vec();
    for (int64_t i = 0; i < n; ++i)
        for (int64_t j = 0; j < chw; ++j) acc[j] += v[i * chw + j];
    auto& m = mean.vec();
    for (int64_t j = 0; j < chw; ++j) m[j] = static_cast<T>(acc[j] / static_cast<double>(n));
    return mean;
}

template <typename T>
void normalize(Dataset<T>& ds, const Tensor<T>& mean) {
    const auto& s = ds.images.shape();
    const int64_t chw = s[1] * s[2] * s[3];
    if (mean.numel() != chw)
        fail_shape("normalize", "mean image " + shape_str(mean.shape()) + " does not match images " +
                                    shape_str(s));
    auto& v = ds.images.vec();
    const auto& m = mean.vec();
    for (int64_t i = 0; i < s[0]; ++i)
        for (int64_t j = 0; j < chw; ++j) v[i * chw + j] -= m[j];
    ds.mean_image = mean.clone();
}

template <typename T>
Tensor<T> gather(const Tensor<T>& images, const std::vector<int64_t>& indices) {
    const auto& s = images.shape();
    const int64_t chw = s[1] * s[2] * s[3];
    Tensor<T> out = Tensor<T>::zeros({static_cast<int64_t>(indices.size()), s[1], s[2], s[3]});
    auto& o = out.vec();
    const auto& v = images.vec();
    for (size_t i = 0; i < indices.size(); ++i) {
        const int64_t src = indices[i];
        if (src < 0 || src >= s[0])
            throw std::out_of_range("gather index " + std::to_string(src) + " outside [0, " +
                                    std::to_string(s[0]) + ")");
        std::copy_n(v.begin() + src * chw, chw, o.begin() + static_cast<int64_t>(i) * chw);
    }
    return out;
}

std::vector<int> gather_labels(const std::vector<int>& labels, const std::vector<int64_t>& indices) {
    std::vector<int> out(indices.size());
    for (size_t i = 0; i < indices.size(); ++i) out[i] = labels.at(static_cast<size_t>(indices[i]));
    return out;
}

template <typename T>
Tensor<T> augment(const Tensor<T>& batch, Rng& rng, int pad, bool hflip) {
    const auto& s = batch.shape();
    Tensor<T> out = Tensor<T>::zeros(s);
    const int64_t C = s[1], H = s[2], W = s[3];
    const auto& v = batch.vec();
    auto& o = out.vec();
    for (int64_t n = 0; n < s[0]; ++n) {
        const int dy = pad > 0 ? static_cast<int>(rng.index(2 * pad + 1)) - pad : 0;
        const int dx = pad > 0 ? static_cast<int>(rng.index(2 * pad + 1)) - pad : 0;
        const bool flip = hflip && rng.coin();
        for (int64_t c = 0; c < C; ++c)
            for (int64_t y = 0; y < H; ++y) {
                const int64_t sy = y + dy;
                if (sy < 0 || sy >= H) continue;  // zero padding
                for (int64_t x = 0; x < W; ++x) {
                    const int64_t sx0 = x + dx;
                    if (sx0 < 0 || sx0 >= W) continue;
                    const int64_t sx = flip ? W - 1 - sx0 : sx0;
                    o[((n * C + c) * H + y) * W + x] = v[((n * C + c) * H + sy) * W + sx];
                }
            }
    }
    return out;
}

template <typename T>
PyramidInput<T> make_pyramid(const Tensor<T>& images, int levels, const BlurSpec& blur) {
    if (levels < 1) throw std::invalid_argument("pyramid needs at least one level");
    const auto& s = images.shape();
    const int64_t div = int64_t(1) << (levels - 1);
    if (s[2] % div != 0 || s[3] % div != 0) {
        std::ostringstream os;
        os << "extent " << s[2] << "x" << s[3] << " does not divide by 2^" << (levels - 1)
           << " for a " << levels << "-level pyramid";
        throw std::invalid_argument(os.str());
    }
    PyramidInput<T> pyr;
    pyr.blur = blur;
    pyr.levels.push_back(images);
    for (int l = 1; l < levels; ++l)
        pyr.levels.push_back(blur_downsample2(pyr.levels.back(), blur));
    return pyr;
}

#define TOPDOWN_INSTANTIATE_DATA(T)                                                              \
    template Tensor<T> load_idx_images<T>(const std::string&);                                   \
    template Dataset<T> load_dataset_idx<T>(const std::string&, const std::string&);             \
    template Dataset<T> load_cifar10<T>(const std::vector<std::string>&);                        \
    template Dataset<T> take<T>(const Dataset<T>&, const std::vector<int64_t>&);                 \
    template std::pair<Dataset<T>, Dataset<T>> split<T>(const Dataset<T>&, double, uint64_t);    \
    template Tensor<T> compute_mean_image<T>(const Dataset<T>&);                                 \
    template void normalize<T>(Dataset<T>&, const Tensor<T>&);                                   \
    template Tensor<T> gather<T>(const Tensor<T>&, const std::vector<int64_t>&);                 \
    template Tensor<T> augment<T>(const Tensor<T>&, Rng&, int, bool);                            \
    template PyramidInput<T> make_pyramid<T>(const Tensor<T>&, int, const BlurSpec&);

TOPDOWN_INSTANTIATE_DATA(float)
TOPDOWN_INSTANTIATE_DATA(double)

}  // namespace topdown

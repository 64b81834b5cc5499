#include "topdown/ops.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>

namespace topdown {

namespace {

template <typename T>
using MatRM = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapM = Eigen::Map<MatRM<T>>;
template <typename T>
using CMapM = Eigen::Map<const MatRM<T>>;
template <typename T>
using MapV = Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>>;
template <typename T>
using CMapV = Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>>;

template <typename T>
bool tracing(std::initializer_list<const Tensor<T>*> inputs) {
    if (Tape<T>::current() == nullptr) return false;
    for (const Tensor<T>* t : inputs)
        if (t->defined() && t->requires_grad()) return true;
    return false;
}

template <typename T>
void accumulate(const std::shared_ptr<TensorImpl<T>>& impl, const AVec<T>& delta) {
    if (!impl->requires_grad) return;
    impl->ensure_grad();
    for (size_t i = 0; i < delta.size(); ++i) impl->grad[i] += delta[i];
}

// True when the output grid equals the input grid (stride 1, same padding):
// then an im2col row is the whole input plane shifted by one flat offset.
inline bool same_grid(int64_t H, int64_t W, int64_t Ho, int64_t Wo, int stride) {
    return stride == 1 && Ho == H && Wo == W;
}

// im2col for one sample: row (c,ki,kj) of the [C*kh*kw, Ho*Wo] matrix holds
// that tap's value for each output pixel.
template <typename T>
void im2col(const T* x, int64_t C, int64_t H, int64_t W, int kh, int kw, int stride, int pad,
            int64_t Ho, int64_t Wo, T* col) {
    if (same_grid(H, W, Ho, Wo, stride)) {
        // One shifted plane copy per tap, then zero the wrapped-around border
        // entries the copy picked up from adjacent rows.
        const int64_t plane = H * W;
        for (int64_t c = 0; c < C; ++c) {
            const T* src = x + c * plane;
            for (int ki = 0; ki < kh; ++ki) {
                for (int kj = 0; kj < kw; ++kj) {
                    T* dst = col + ((c * kh + ki) * kw + kj) * plane;
                    const int64_t dy = ki - pad, dx = kj - pad;
                    const int64_t lo = std::max<int64_t>(0, -dy), hi = std::min(H, H - dy);
                    if (lo > 0) std::fill(dst, dst + lo * W, T(0));
                    if (hi < H) std::fill(dst + hi * W, dst + plane, T(0));
                    if (hi <= lo) continue;
                    // Clamp the source span to the plane; the skipped entries are
                    // border positions the fixup loops below zero anyway.
                    const int64_t off = dy * W + dx;
                    const int64_t s0 = std::max<int64_t>(0, lo * W + off);
                    const int64_t s1 = std::min(plane, hi * W + off);
                    if (s1 > s0) std::copy(src + s0, src + s1, dst + s0 - off);
                    if (dx < 0)
                        for (int64_t y = lo; y < hi; ++y)
                            std::fill(dst + y * W, dst + y * W - dx, T(0));
                    else if (dx > 0)
                        for (int64_t y = lo; y < hi; ++y)
                            std::fill(dst + (y + 1) * W - dx, dst + (y + 1) * W, T(0));
                }
            }
        }
        return;
    }
    for (int64_t c = 0; c < C; ++c) {
        for (int ki = 0; ki < kh; ++ki) {
            for (int kj = 0; kj < kw; ++kj) {
                T* dst = col + ((c * kh + ki) * kw + kj) * Ho * Wo;
                for (int64_t oy = 0; oy < Ho; ++oy) {
                    const int64_t iy = oy * stride - pad + ki;
                    if (iy < 0 || iy >= H) {
                        std::fill(dst, dst + Wo, T(0));
                        dst += Wo;
                        continue;
                    }
                    const T* src = x + (c * H + iy) * W;
                    for (int64_t ox = 0; ox < Wo; ++ox) {
                        const int64_t ix = ox * stride - pad + kj;
                        *dst++ = (ix < 0 || ix >= W) ? T(0) : src[ix];
                    }
                }
            }
        }
    }
}

// Adjoint of im2col: scatter col-gradient back onto the (unpadded) image.
template <typename T>
void col2im(const T* col, int64_t C, int64_t H, int64_t W, int kh, int kw, int stride, int pad,
            int64_t Ho, int64_t Wo, T* dx) {
    if (same_grid(H, W, Ho, Wo, stride)) {
        // Mirror of the fast im2col: one shifted vector-add per tap, skipping
        // the border entries that fell outside the image.
        const int64_t plane = H * W;
        for (int64_t c = 0; c < C; ++c) {
            T* dst = dx + c * plane;
            for (int ki = 0; ki < kh; ++ki) {
                for (int kj = 0; kj < kw; ++kj) {
                    const T* src = col + ((c * kh + ki) * kw + kj) * plane;
                    const int64_t dy = ki - pad, dx2 = kj - pad;
                    const int64_t lo = std::max<int64_t>(0, -dy), hi = std::min(H, H - dy);
                    for (int64_t y = lo; y < hi; ++y) {
                        const int64_t xlo = std::max<int64_t>(0, -dx2);
                        const int64_t xhi = std::min(W, W - dx2);
                        const T* s = src + y * W + xlo;
                        T* d = dst + (y + dy) * W + xlo + dx2;
                        const int64_t n = xhi - xlo;
                        for (int64_t i = 0; i < n; ++i) d[i] += s[i];
                    }
                }
            }
        }
        return;
    }
    for (int64_t c = 0; c < C; ++c) {
        for (int ki = 0; ki < kh; ++ki) {
            for (int kj = 0; kj < kw; ++kj) {
                const T* src = col + ((c * kh + ki) * kw + kj) * Ho * Wo;
                for (int64_t oy = 0; oy < Ho; ++oy) {
                    const int64_t iy = oy * stride - pad + ki;
                    if (iy >= 0 && iy < H) {
                        T* dst = dx + (c * H + iy) * W;
                        for (int64_t ox = 0; ox < Wo; ++ox) {
                            const int64_t ix = ox * stride - pad + kj;
                            if (ix >= 0 && ix < W) dst[ix] += src[ox];
                        }
                    }
                    src += Wo;
                }
            }
        }
    }
}

template <typename T>
void require_nchw(const Tensor<T>& t, const char* op) {
    if (t.rank() != 4) fail_shape(op, "expected a rank-4 N,C,H,W tensor, got " + shape_str(t.shape()));
}

}  // namespace

int64_t reflect_index(int64_t p, int64_t n) {
    if (n == 1) return 0;
    const int64_t period = 2 * n - 2;
    int64_t m = p % period;
    if (m < 0) m += period;
    return m < n ? m : period - m;
}

template <typename T>
int argmax_row(const T* row, int k) {
    int best = 0;
    for (int i = 1; i < k; ++i)
        if (row[i] > row[best]) best = i;
    return best;
}

template <typename T>
Tensor<T> add(Tensor<T> a, Tensor<T> b) {
    if (a.shape() != b.shape())
        fail_shape("add", "shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    Tensor<T> out = Tensor<T>::zeros(a.shape());
    const T* pa = a.data();
    const T* pb = b.data();
    T* po = out.data();
    const int64_t n = a.numel();
    for (int64_t i = 0; i < n; ++i) po[i] = pa[i] + pb[i];

    if (tracing<T>({&a, &b})) {
        out.set_requires_grad(true);
        auto ai = a.impl(), bi = b.impl(), oi = out.impl();
        Tape<T>::current()->record([ai, bi, oi]() {
            if (oi->grad.empty()) return;
            accumulate(ai, oi->grad);
            accumulate(bi, oi->grad);
        });
    }
    return out;
}

template <typename T>
Tensor<T> mul(Tensor<T> a, Tensor<T> b) {
    if (a.shape() != b.shape())
        fail_shape("mul", "shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    Tensor<T> out = Tensor<T>::zeros(a.shape());
    const T* pa = a.data();
    const T* pb = b.data();
    T* po = out.data();
    const int64_t n = a.numel();
    for (int64_t i = 0; i < n; ++i) po[i] = pa[i] * pb[i];

    if (tracing<T>({&a, &b})) {
        out.set_requires_grad(true);
        auto ai = a.impl(), bi = b.impl(), oi = out.impl();
        Tape<T>::current()->record([ai, bi, oi]() {
            if (oi->grad.empty()) return;
            const size_t n = oi->grad.size();
            if (ai->requires_grad) {
                ai->ensure_grad();
                for (size_t i = 0; i < n; ++i) ai->grad[i] += oi->grad[i] * bi->data[i];
            }
            if (bi->requires_grad) {
                bi->ensure_grad();
                for (size_t i = 0; i < n; ++i) bi->grad[i] += oi->grad[i] * ai->data[i];
            }
        });
    }
    return out;
}

template <typename T>
Tensor<T> relu(Tensor<T> x) {
    Tensor<T> out = Tensor<T>::zeros(x.shape());
    const T* px = x.data();
    T* po = out.data();
    const int64_t n = x.numel();
    for (int64_t i = 0; i < n; ++i) po[i] = px[i] > T(0) ? px[i] : T(0);

    if (tracing<T>({&x})) {
        out.set_requires_grad(true);
        auto xi = x.impl(), oi = out.impl();
        Tape<T>::current()->record([xi, oi]() {
            if (oi->grad.empty() || !xi->requires_grad) return;
            xi->ensure_grad();
            for (size_t i = 0; i < oi->grad.size(); ++i)
                if (xi->data[i] > T(0)) xi->grad[i] += oi->grad[i];
        });
    }
    return out;
}

template <typename T>
Tensor<T> sum(Tensor<T> x) {
    T acc = T(0);
    const T* px = x.data();
    const int64_t n = x.numel();
    for (int64_t i = 0; i < n; ++i) acc += px[i];
    Tensor<T> out = Tensor<T>::scalar(acc);

    if (tracing<T>({&x})) {
        out.set_requires_grad(true);
        auto xi = x.impl(), oi = out.impl();
        Tape<T>::current()->record([xi, oi]() {
            if (oi->grad.empty() || !xi->requires_grad) return;
            xi->ensure_grad();
            const T g = oi->grad[0];
            for (size_t i = 0; i < xi->grad.size(); ++i) xi->grad[i] += g;
        });
    }
    return out;
}

template <typename T>
Tensor<T> conv2d(Tensor<T> input, Tensor<T> weight, Tensor<T> bias, int stride, int padding) {
    require_nchw(input, "conv2d");
    if (weight.rank() != 4)
        fail_shape("conv2d", "weight must be Cout,Cin,kh,kw, got " + shape_str(weight.shape()));
    const int64_t N = input.dim(0), Cin = input.dim(1), H = input.dim(2), W = input.dim(3);
    const int64_t Cout = weight.dim(0), kh = weight.dim(2), kw = weight.dim(3);
    if (weight.dim(1) != Cin)
        fail_shape("conv2d", "input channels " + std::to_string(Cin) + " do not match weight Cin " +
                                 std::to_string(weight.dim(1)) + " (weight " + shape_str(weight.shape()) +
                                 ", input " + shape_str(input.shape()) + ")");
    if (bias.numel() != Cout)
        fail_shape("conv2d", "bias length " + std::to_string(bias.numel()) + " != Cout " +
                                 std::to_string(Cout));
    if (stride < 1 || padding < 0) fail_shape("conv2d", "stride must be >= 1 and padding >= 0");
    if (H + 2 * padding < kh || W + 2 * padding < kw)
        fail_shape("conv2d", "kernel larger than padded input");
    const int64_t Ho = (H + 2 * padding - kh) / stride + 1;
    const int64_t Wo = (W + 2 * padding - kw) / stride + 1;

    Tensor<T> out = Tensor<T>::zeros({N, Cout, Ho, Wo});
    const int64_t ckk = Cin * kh * kw;
    const int64_t cols = Ho * Wo;

    if (kh == 1 && kw == 1 && stride == 1 && padding == 0) {
        // 1x1 conv: each sample is already a [Cin, cols] matrix; no col buffers.
        CMapM<T> Wm(weight.data(), Cout, Cin);
        for (int64_t n = 0; n < N; ++n) {
            CMapM<T> Xm(input.data() + n * Cin * cols, Cin, cols);
            MapM<T> Om(out.data() + n * Cout * cols, Cout, cols);
            Om.noalias() = Wm * Xm;
            for (int64_t co = 0; co < Cout; ++co) Om.row(co).array() += bias.data()[co];
        }
        if (tracing<T>({&input, &weight, &bias})) {
            out.set_requires_grad(true);
            auto xi = input.impl(), wi = weight.impl(), bi = bias.impl(), oi = out.impl();
            Tape<T>::current()->record([xi, wi, bi, oi, N, Cin, Cout, cols]() {
                if (oi->grad.empty()) return;
                if (bi->requires_grad) {
                    bi->ensure_grad();
                    CMapM<T> G(oi->grad.data(), N * Cout, cols);
                    for (int64_t n = 0; n < N; ++n)
                        for (int64_t co = 0; co < Cout; ++co)
                            bi->grad[co] += G.row(n * Cout + co).sum();
                }
                const bool need_w = wi->requires_grad;
                const bool need_x = xi->requires_grad;
                if (!need_w && !need_x) return;
                if (need_w) wi->ensure_grad();
                if (need_x) xi->ensure_grad();
                CMapM<T> Wm(wi->data.data(), Cout, Cin);
                for (int64_t n = 0; n < N; ++n) {
                    CMapM<T> Gm(oi->grad.data() + n * Cout * cols, Cout, cols);
                    if (need_w) {
                        CMapM<T> Xm(xi->data.data() + n * Cin * cols, Cin, cols);
                        MapM<T> dWm(wi->grad.data(), Cout, Cin);
                        dWm.noalias() += Gm * Xm.transpose();
                    }
                    if (need_x) {
                        MapM<T> dXm(xi->grad.data() + n * Cin * cols, Cin, cols);
                        dXm.noalias() += Wm.transpose() * Gm;
                    }
                }
            });
        }
        return out;
    }

    // Per-sample im2col + GEMM: each sample's col matrix stays cache-resident.
    std::vector<T> col(static_cast<size_t>(ckk * cols));
    CMapM<T> Wm(weight.data(), Cout, ckk);
    for (int64_t n = 0; n < N; ++n) {
        im2col(input.data() + n * Cin * H * W, Cin, H, W, static_cast<int>(kh),
               static_cast<int>(kw), stride, padding, Ho, Wo, col.data());
        CMapM<T> Cm(col.data(), ckk, cols);
        MapM<T> Om(out.data() + n * Cout * cols, Cout, cols);
        Om.noalias() = Wm * Cm;
        for (int64_t co = 0; co < Cout; ++co) Om.row(co).array() += bias.data()[co];
    }

    if (tracing<T>({&input, &weight, &bias})) {
        out.set_requires_grad(true);
        auto xi = input.impl(), wi = weight.impl(), bi = bias.impl(), oi = out.impl();
        const int s = stride, p = padding;
        Tape<T>::current()->record([xi, wi, bi, oi, s, p, N, Cin, H, W, Cout, kh, kw, Ho, Wo]() {
            if (oi->grad.empty()) return;
            const int64_t ckk = Cin * kh * kw;
            const int64_t cols = Ho * Wo;
            const bool need_b = bi->requires_grad;
            const bool need_w = wi->requires_grad;
            const bool need_x = xi->requires_grad;
            if (!need_b && !need_w && !need_x) return;
            if (need_b) bi->ensure_grad();
            if (need_w) wi->ensure_grad();
            if (need_x) xi->ensure_grad();
            // On a same-size grid, dX is itself a same-padding convolution of the
            // output gradient with the channel-transposed, spatially flipped
            // kernel — reusing the fast im2col instead of a col2im scatter.
            const bool x_as_conv = need_x && same_grid(H, W, Ho, Wo, s);
            std::vector<T> wflip;
            if (x_as_conv) {
                wflip.resize(static_cast<size_t>(Cin * Cout * kh * kw));
                for (int64_t ci = 0; ci < Cin; ++ci)
                    for (int64_t co = 0; co < Cout; ++co)
                        for (int64_t ky = 0; ky < kh; ++ky)
                            for (int64_t kx = 0; kx < kw; ++kx)
                                wflip[((ci * Cout + co) * kh + ky) * kw + kx] =
                                    wi->data[((co * Cin + ci) * kh + (kh - 1 - ky)) * kw +
                                             (kw - 1 - kx)];
            }
            std::vector<T> col((need_w || x_as_conv)
                                   ? static_cast<size_t>(std::max(ckk, Cout * kh * kw) * cols)
                                   : 0);
            std::vector<T> dcol((need_x && !x_as_conv) ? static_cast<size_t>(ckk * cols) : 0);
            CMapM<T> Wm(wi->data.data(), Cout, ckk);
            for (int64_t n = 0; n < N; ++n) {
                CMapM<T> Gm(oi->grad.data() + n * Cout * cols, Cout, cols);
                if (need_b)
                    for (int64_t co = 0; co < Cout; ++co) bi->grad[co] += Gm.row(co).sum();
                if (need_w) {
                    im2col(xi->data.data() + n * Cin * H * W, Cin, H, W, static_cast<int>(kh),
                           static_cast<int>(kw), s, p, Ho, Wo, col.data());
                    CMapM<T> Cm(col.data(), ckk, cols);
                    MapM<T> dWm(wi->grad.data(), Cout, ckk);
                    dWm.noalias() += Gm * Cm.transpose();
                }
                if (x_as_conv) {
                    im2col(oi->grad.data() + n * Cout * cols, Cout, H, W, static_cast<int>(kh),
                           static_cast<int>(kw), 1, p, H, W, col.data());
                    CMapM<T> Cg(col.data(), Cout * kh * kw, cols);
                    CMapM<T> Fm(wflip.data(), Cin, Cout * kh * kw);
                    MapM<T> dXm(xi->grad.data() + n * Cin * H * W, Cin, cols);
                    dXm.noalias() += Fm * Cg;
                } else if (need_x) {
                    MapM<T> dCm(dcol.data(), ckk, cols);
                    dCm.noalias() = Wm.transpose() * Gm;
                    col2im(dcol.data(), Cin, H, W, static_cast<int>(kh), static_cast<int>(kw), s,
                           p, Ho, Wo, xi->grad.data() + n * Cin * H * W);
                }
            }
        });
    }
    return out;
}

template <typename T>
Tensor<T> avg_pool2(Tensor<T> x) {
    require_nchw(x, "avg_pool2");
    const int64_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    if (H % 2 != 0 || W % 2 != 0)
        fail_shape("avg_pool2", "H and W must be even, got " + shape_str(x.shape()));
    const int64_t Ho = H / 2, Wo = W / 2;
    Tensor<T> out = Tensor<T>::zeros({N, C, Ho, Wo});
    const T* px = x.data();
    T* po = out.data();
    for (int64_t nc = 0; nc < N * C; ++nc) {
        const T* src = px + nc * H * W;
        T* dst = po + nc * Ho * Wo;
        for (int64_t y = 0; y < Ho; ++y)
            for (int64_t xw = 0; xw < Wo; ++xw) {
                const T* a = src + (2 * y) * W + 2 * xw;
                dst[y * Wo + xw] = (a[0] + a[1] + a[W] + a[W + 1]) * T(0.25);
            }
    }

    if (tracing<T>({&x})) {
        out.set_requires_grad(true);
        auto xi = x.impl(), oi = out.impl();
        Tape<T>::current()->record([xi, oi, N, C, H, W, Ho, Wo]() {
            if (oi->grad.empty() || !xi->requires_grad) return;
            xi->ensure_grad();
            for (int64_t nc = 0; nc < N * C; ++nc) {
                const T* g = oi->grad.data() + nc * Ho * Wo;
                T* dx = xi->grad.data() + nc * H * W;
                for (int64_t y = 0; y < Ho; ++y)
                    for (int64_t xw = 0; xw < Wo; ++xw) {
                        const T v = g[y * Wo + xw] * T(0.25);
                        T* a = dx + (2 * y) * W + 2 * xw;
                        a[0] += v;
                        a[1] += v;
                        a[W] += v;
                        a[W + 1] += v;
                    }
            }
        });
    }
    return out;
}

template <typename T>
Tensor<T> upsample_nearest2(Tensor<T> x) {
    require_nchw(x, "upsample_nearest2");
    const int64_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    Tensor<T> out = Tensor<T>::zeros({N, C, 2 * H, 2 * W});
    const T* px = x.data();
    T* po = out.data();
    for (int64_t nc = 0; nc < N * C; ++nc) {
        const T* src = px + nc * H * W;
        T* dst = po + nc * 4 * H * W;
        for (int64_t y = 0; y < H; ++y) {
            // Double one row in place, then replicate it as the second row.
            const T* s = src + y * W;
            T* d = dst + (2 * y) * (2 * W);
            for (int64_t xw = 0; xw < W; ++xw) {
                d[2 * xw] = s[xw];
                d[2 * xw + 1] = s[xw];
            }
            std::copy(d, d + 2 * W, d + 2 * W);
        }
    }

    if (tracing<T>({&x})) {
        out.set_requires_grad(true);
        auto xi = x.impl(), oi = out.impl();
        Tape<T>::current()->record([xi, oi, N, C, H, W]() {
            if (oi->grad.empty() || !xi->requires_grad) return;
            xi->ensure_grad();
            for (int64_t nc = 0; nc < N * C; ++nc) {
                const T* g = oi->grad.data() + nc * 4 * H * W;
                T* dx = xi->grad.data() + nc * H * W;
                for (int64_t y = 0; y < H; ++y) {
                    const T* g0 = g + (2 * y) * (2 * W);
                    const T* g1 = g0 + 2 * W;
                    T* d = dx + y * W;
                    for (int64_t xw = 0; xw < W; ++xw)
                        d[xw] += g0[2 * xw] + g0[2 * xw + 1] + g1[2 * xw] + g1[2 * xw + 1];
                }
            }
        });
    }
    return out;
}

template <typename T>
Tensor<T> concat_channels(const std::vector<Tensor<T>>& xs) {
    if (xs.empty()) fail_shape("concat_channels", "no inputs");
    require_nchw(xs[0], "concat_channels");
    const int64_t N = xs[0].dim(0), H = xs[0].dim(2), W = xs[0].dim(3);
    int64_t Ctot = 0;
    for (const auto& x : xs) {
        require_nchw(x, "concat_channels");
        if (x.dim(0) != N || x.dim(2) != H || x.dim(3) != W)
            fail_shape("concat_channels", "N,H,W mismatch: " + shape_str(x.shape()) + " vs " +
                                              shape_str(xs[0].shape()));
        Ctot += x.dim(1);
    }
    Tensor<T> out = Tensor<T>::zeros({N, Ctot, H, W});
    const int64_t hw = H * W;
    for (int64_t n = 0; n < N; ++n) {
        int64_t coff = 0;
        for (const auto& x : xs) {
            const int64_t C = x.dim(1);
            std::copy(x.data() + n * C * hw, x.data() + (n + 1) * C * hw,
                      out.data() + (n * Ctot + coff) * hw);
            coff += C;
        }
    }

    bool any = false;
    for (const auto& x : xs) any = any || x.requires_grad();
    if (Tape<T>::current() && any) {
        out.set_requires_grad(true);
        std::vector<std::shared_ptr<TensorImpl<T>>> impls;
        for (const auto& x : xs) impls.push_back(x.impl());
        auto oi = out.impl();
        Tape<T>::current()->record([impls, oi, N, Ctot, hw]() {
            if (oi->grad.empty()) return;
            for (int64_t n = 0; n < N; ++n) {
                int64_t coff = 0;
                for (const auto& xi : impls) {
                    const int64_t C = xi->shape[1];
                    if (xi->requires_grad) {
                        xi->ensure_grad();
                        const T* g = oi->grad.data() + (n * Ctot + coff) * hw;
                        T* dst = xi->grad.data() + n * C * hw;
                        for (int64_t i = 0; i < C * hw; ++i) dst[i] += g[i];
                    }
                    coff += C;
                }
            }
        });
    }
    return out;
}

template <typename T>
Tensor<T> global_avg_pool(Tensor<T> x) {
    require_nchw(x, "global_avg_pool");
    const int64_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    const int64_t hw = H * W;
    Tensor<T> out = Tensor<T>::zeros({N, C, 1, 1});
    const T inv = T(1) / static_cast<T>(hw);
    for (int64_t nc = 0; nc < N * C; ++nc) {
        const T* src = x.data() + nc * hw;
        T acc = T(0);
        for (int64_t i = 0; i < hw; ++i) acc += src[i];
        out.data()[nc] = acc * inv;
    }

    if (tracing<T>({&x})) {
        out.set_requires_grad(true);
        auto xi = x.impl(), oi = out.impl();
        Tape<T>::current()->record([xi, oi, N, C, hw]() {
            if (oi->grad.empty() || !xi->requires_grad) return;
            xi->ensure_grad();
            const T inv = T(1) / static_cast<T>(hw);
            for (int64_t nc = 0; nc < N * C; ++nc) {
                const T g = oi->grad[nc] * inv;
                T* dst = xi->grad.data() + nc * hw;
                for (int64_t i = 0; i < hw; ++i) dst[i] += g;
            }
        });
    }
    return out;
}

template <typename T>
Tensor<T> reshape(Tensor<T> x, Shape shape) {
    if (numel(shape) != x.numel())
        fail_shape("reshape", shape_str(x.shape()) + " cannot reshape to " + shape_str(shape));
    Tensor<T> out = Tensor<T>::from_aligned(std::move(shape), x.vec());

    if (tracing<T>({&x})) {
        out.set_requires_grad(true);
        auto xi = x.impl(), oi = out.impl();
        Tape<T>::current()->record([xi, oi]() {
            if (oi->grad.empty() || !xi->requires_grad) return;
            accumulate(xi, oi->grad);
        });
    }
    return out;
}

template <typename T>
Tensor<T> batch_norm(Tensor<T> x, Tensor<T> gamma, Tensor<T> beta, Tensor<T> running_mean,
                     Tensor<T> running_var, bool train) {
    require_nchw(x, "batch_norm");
    const int64_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    if (gamma.numel() != C || beta.numel() != C || running_mean.numel() != C ||
        running_var.numel() != C)
        fail_shape("batch_norm", "per-channel parameter length != C=" + std::to_string(C));
    const int64_t hw = H * W;
    const int64_t M = N * hw;
    if (M < 1) fail_shape("batch_norm", "empty batch");

    std::vector<T> mean(C), inv_std(C);
    if (train) {
        // Single traversal in memory order; double accumulators keep the
        // E[x^2]-mu^2 form safe at batch scale.
        std::vector<double> s1(C, 0.0), s2(C, 0.0);
        for (int64_t n = 0; n < N; ++n)
            for (int64_t c = 0; c < C; ++c) {
                CMapV<T> v(x.data() + (n * C + c) * hw, hw);
                s1[c] += static_cast<double>(v.sum());
                s2[c] += static_cast<double>(v.squaredNorm());
            }
        for (int64_t c = 0; c < C; ++c) {
            const double mu = s1[c] / static_cast<double>(M);
            const double var = std::max(0.0, s2[c] / static_cast<double>(M) - mu * mu);
            mean[c] = static_cast<T>(mu);
            inv_std[c] = static_cast<T>(1.0 / std::sqrt(var + kBatchNormEps));
            running_mean.data()[c] = static_cast<T>(kBatchNormMomentum) * running_mean.data()[c] +
                                     static_cast<T>((1 - kBatchNormMomentum) * mu);
            running_var.data()[c] = static_cast<T>(kBatchNormMomentum) * running_var.data()[c] +
                                    static_cast<T>((1 - kBatchNormMomentum) * var);
        }
    } else {
        for (int64_t c = 0; c < C; ++c) {
            mean[c] = running_mean.data()[c];
            inv_std[c] = T(1) / std::sqrt(running_var.data()[c] + static_cast<T>(kBatchNormEps));
        }
    }

    Tensor<T> out = Tensor<T>::zeros(x.shape());
    for (int64_t n = 0; n < N; ++n)
        for (int64_t c = 0; c < C; ++c) {
            CMapV<T> src(x.data() + (n * C + c) * hw, hw);
            MapV<T> dst(out.data() + (n * C + c) * hw, hw);
            const T a = gamma.data()[c] * inv_std[c];
            const T b = beta.data()[c] - a * mean[c];
            dst.array() = a * src.array() + b;
        }

    if (tracing<T>({&x, &gamma, &beta})) {
        out.set_requires_grad(true);
        auto xi = x.impl(), gi = gamma.impl(), bi = beta.impl(), oi = out.impl();
        const bool was_train = train;
        Tape<T>::current()->record([xi, gi, bi, oi, mean, inv_std, N, C, hw, was_train]() {
            if (oi->grad.empty()) return;
            const int64_t M = N * hw;
            // Channel-wise reductions of dy and dy*x in one memory-order pass.
            std::vector<double> sdy(C, 0.0), sdyx(C, 0.0);
            for (int64_t n = 0; n < N; ++n)
                for (int64_t c = 0; c < C; ++c) {
                    CMapV<T> dy(oi->grad.data() + (n * C + c) * hw, hw);
                    CMapV<T> px(xi->data.data() + (n * C + c) * hw, hw);
                    sdy[c] += static_cast<double>(dy.sum());
                    sdyx[c] += static_cast<double>(dy.dot(px));
                }
            for (int64_t c = 0; c < C; ++c) {
                const T mu = mean[c], is = inv_std[c], g = gi->data[c];
                const T sum_dy = static_cast<T>(sdy[c]);
                // sum(dy * xhat) = is * (sum(dy*x) - mu * sum(dy))
                const T sum_dy_xhat = is * static_cast<T>(sdyx[c] - mu * sdy[c]);
                if (gi->requires_grad) {
                    gi->ensure_grad();
                    gi->grad[c] += sum_dy_xhat;
                }
                if (bi->requires_grad) {
                    bi->ensure_grad();
                    bi->grad[c] += sum_dy;
                }
                if (xi->requires_grad) {
                    xi->ensure_grad();
                    const T mean_dy = sum_dy / static_cast<T>(M);
                    const T mean_dy_xhat = sum_dy_xhat / static_cast<T>(M);
                    // dx += a*dy + b*x + k, folding the train-mode centering
                    // terms into per-channel constants.
                    const T a = g * is;
                    const T b = was_train ? -g * is * is * mean_dy_xhat : T(0);
                    const T k = was_train ? a * (mu * is * mean_dy_xhat - mean_dy) : T(0);
                    for (int64_t n = 0; n < N; ++n) {
                        CMapV<T> dy(oi->grad.data() + (n * C + c) * hw, hw);
                        CMapV<T> px(xi->data.data() + (n * C + c) * hw, hw);
                        MapV<T> dx(xi->grad.data() + (n * C + c) * hw, hw);
                        if (was_train)
                            dx.array() += a * dy.array() + b * px.array() + k;
                        else
                            dx.array() += a * dy.array();
                    }
                }
            }
        });
    }
    return out;
}

template <typename T>
Tensor<T> softmax_cross_entropy(Tensor<T> logits, const std::vector<int>& labels) {
    Tensor<T> flat = logits;
    if (logits.rank() == 4) {
        if (logits.dim(2) != 1 || logits.dim(3) != 1)
            fail_shape("softmax_cross_entropy", "spatial logits not supported: " +
                                                    shape_str(logits.shape()));
        flat = reshape(logits, {logits.dim(0), logits.dim(1)});
    } else if (logits.rank() != 2) {
        fail_shape("softmax_cross_entropy", "expected [N,K] logits, got " + shape_str(logits.shape()));
    }
    const int64_t N = flat.dim(0), K = flat.dim(1);
    if (static_cast<int64_t>(labels.size()) != N)
        fail_shape("softmax_cross_entropy", "label count != batch size");
    for (int y : labels)
        if (y < 0 || y >= K)
            fail_shape("softmax_cross_entropy", "label " + std::to_string(y) + " out of range [0," +
                                                    std::to_string(K) + ")");

    std::vector<T> probs(static_cast<size_t>(N * K));
    T loss = T(0);
    for (int64_t n = 0; n < N; ++n) {
        const T* row = flat.data() + n * K;
        T mx = row[0];
        for (int64_t k = 1; k < K; ++k) mx = std::max(mx, row[k]);
        T denom = T(0);
        for (int64_t k = 0; k < K; ++k) {
            const T e = std::exp(row[k] - mx);
            probs[n * K + k] = e;
            denom += e;
        }
        for (int64_t k = 0; k < K; ++k) probs[n * K + k] /= denom;
        loss -= std::log(probs[n * K + labels[n]]);
    }
    loss /= static_cast<T>(N);
    Tensor<T> out = Tensor<T>::scalar(loss);

    if (tracing<T>({&flat})) {
        out.set_requires_grad(true);
        auto li = flat.impl(), oi = out.impl();
        Tape<T>::current()->record([li, oi, probs, labels, N, K]() {
            if (oi->grad.empty() || !li->requires_grad) return;
            li->ensure_grad();
            const T g = oi->grad[0] / static_cast<T>(N);
            for (int64_t n = 0; n < N; ++n)
                for (int64_t k = 0; k < K; ++k) {
                    T d = probs[n * K + k];
                    if (k == labels[n]) d -= T(1);
                    li->grad[n * K + k] += g * d;
                }
        });
    }
    return out;
}

template <typename T>
std::vector<T> softmax_rows(const Tensor<T>& logits) {
    Shape s = logits.shape();
    int64_t N, K;
    if (s.size() == 2) {
        N = s[0];
        K = s[1];
    } else if (s.size() == 4 && s[2] == 1 && s[3] == 1) {
        N = s[0];
        K = s[1];
    } else {
        fail_shape("softmax_rows", "expected [N,K] logits, got " + shape_str(s));
    }
    std::vector<T> out(static_cast<size_t>(N * K));
    for (int64_t n = 0; n < N; ++n) {
        const T* row = logits.data() + n * K;
        T mx = row[0];
        for (int64_t k = 1; k < K; ++k) mx = std::max(mx, row[k]);
        T denom = T(0);
        for (int64_t k = 0; k < K; ++k) {
            out[n * K + k] = std::exp(row[k] - mx);
            denom += out[n * K + k];
        }
        for (int64_t k = 0; k < K; ++k) out[n * K + k] /= denom;
    }
    return out;
}

template <typename T>
Tensor<T> pick(Tensor<T> logits, int64_t n, int64_t k) {
    int64_t N, K;
    if (logits.rank() == 2) {
        N = logits.dim(0);
        K = logits.dim(1);
    } else if (logits.rank() == 4 && logits.dim(2) == 1 && logits.dim(3) == 1) {
        N = logits.dim(0);
        K = logits.dim(1);
    } else {
        fail_shape("pick", "expected [N,K] logits, got " + shape_str(logits.shape()));
    }
    if (n < 0 || n >= N || k < 0 || k >= K) fail_shape("pick", "index out of range");
    Tensor<T> out = Tensor<T>::scalar(logits.data()[n * K + k]);

    if (tracing<T>({&logits})) {
        out.set_requires_grad(true);
        auto li = logits.impl(), oi = out.impl();
        const int64_t flat = n * K + k;
        Tape<T>::current()->record([li, oi, flat]() {
            if (oi->grad.empty() || !li->requires_grad) return;
            li->ensure_grad();
            li->grad[flat] += oi->grad[0];
        });
    }
    return out;
}

template <typename T>
Tensor<T> sep_filter2d_reflect(Tensor<T> x, const std::vector<T>& kernel, int stride) {
    require_nchw(x, "sep_filter2d_reflect");
    if (kernel.empty() || kernel.size() % 2 == 0)
        fail_shape("sep_filter2d_reflect", "kernel width must be odd and positive");
    if (stride < 1) fail_shape("sep_filter2d_reflect", "stride must be >= 1");
    const int64_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    if (stride > 1 && (H % stride != 0 || W % stride != 0))
        fail_shape("sep_filter2d_reflect",
                   "extents must be divisible by stride, got " + shape_str(x.shape()));
    const int64_t r = static_cast<int64_t>(kernel.size()) / 2;
    const int64_t Ho = H / stride, Wo = W / stride;

    Tensor<T> out = Tensor<T>::zeros({N, C, Ho, Wo});
    std::vector<T> tmp(static_cast<size_t>(H * Wo));
    for (int64_t nc = 0; nc < N * C; ++nc) {
        const T* src = x.data() + nc * H * W;
        // Horizontal pass (stride applied on W).
        for (int64_t y = 0; y < H; ++y)
            for (int64_t j = 0; j < Wo; ++j) {
                T acc = T(0);
                for (int64_t t = 0; t < 2 * r + 1; ++t)
                    acc += kernel[t] * src[y * W + reflect_index(j * stride - r + t, W)];
                tmp[y * Wo + j] = acc;
            }
        // Vertical pass (stride applied on H).
        T* dst = out.data() + nc * Ho * Wo;
        for (int64_t i = 0; i < Ho; ++i)
            for (int64_t j = 0; j < Wo; ++j) {
                T acc = T(0);
                for (int64_t t = 0; t < 2 * r + 1; ++t)
                    acc += kernel[t] * tmp[reflect_index(i * stride - r + t, H) * Wo + j];
                dst[i * Wo + j] = acc;
            }
    }

    if (tracing<T>({&x})) {
        out.set_requires_grad(true);
        auto xi = x.impl(), oi = out.impl();
        const int s = stride;
        Tape<T>::current()->record([xi, oi, kernel, s, N, C, H, W, Ho, Wo, r]() {
            if (oi->grad.empty() || !xi->requires_grad) return;
            xi->ensure_grad();
            std::vector<T> dtmp(static_cast<size_t>(H * Wo));
            for (int64_t nc = 0; nc < N * C; ++nc) {
                const T* g = oi->grad.data() + nc * Ho * Wo;
                std::fill(dtmp.begin(), dtmp.end(), T(0));
                // Adjoint of the vertical pass.
                for (int64_t i = 0; i < Ho; ++i)
                    for (int64_t j = 0; j < Wo; ++j) {
                        const T v = g[i * Wo + j];
                        for (int64_t t = 0; t < 2 * r + 1; ++t)
                            dtmp[reflect_index(i * s - r + t, H) * Wo + j] += kernel[t] * v;
                    }
                // Adjoint of the horizontal pass.
                T* dx = xi->grad.data() + nc * H * W;
                for (int64_t y = 0; y < H; ++y)
                    for (int64_t j = 0; j < Wo; ++j) {
                        const T v = dtmp[y * Wo + j];
                        for (int64_t t = 0; t < 2 * r + 1; ++t)
                            dx[y * W + reflect_index(j * s - r + t, W)] += kernel[t] * v;
                    }
            }
        });
    }
    return out;
}

#define TOPDOWN_INSTANTIATE_OPS(T)                                                               \
    template Tensor<T> add<T>(Tensor<T>, Tensor<T>);                                             \
    template Tensor<T> mul<T>(Tensor<T>, Tensor<T>);                                             \
    template Tensor<T> relu<T>(Tensor<T>);                                                       \
    template Tensor<T> sum<T>(Tensor<T>);                                                        \
    template Tensor<T> conv2d<T>(Tensor<T>, Tensor<T>, Tensor<T>, int, int);                     \
    template Tensor<T> avg_pool2<T>(Tensor<T>);                                                  \
    template Tensor<T> upsample_nearest2<T>(Tensor<T>);                                          \
    template Tensor<T> concat_channels<T>(const std::vector<Tensor<T>>&);                        \
    template Tensor<T> global_avg_pool<T>(Tensor<T>);                                            \
    template Tensor<T> reshape<T>(Tensor<T>, Shape);                                             \
    template Tensor<T> batch_norm<T>(Tensor<T>, Tensor<T>, Tensor<T>, Tensor<T>, Tensor<T>,      \
                                     bool);                                                      \
    template Tensor<T> softmax_cross_entropy<T>(Tensor<T>, const std::vector<int>&);             \
    template std::vector<T> softmax_rows<T>(const Tensor<T>&);                                   \
    template Tensor<T> pick<T>(Tensor<T>, int64_t, int64_t);                                     \
    template Tensor<T> sep_filter2d_reflect<T>(Tensor<T>, const std::vector<T>&, int);           \
    template int argmax_row<T>(const T*, int);

TOPDOWN_INSTANTIATE_OPS(float)
TOPDOWN_INSTANTIATE_OPS(double)

}  // namespace topdown

#include "topdown/attack.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "topdown/ops.hpp"
#include "topdown/rng.hpp"
#include "topdown/tape.hpp"

namespace topdown {

template <typename T>
std::vector<double> Target<T>::loss_grad(const Tensor<T>&, int) {
    throw std::logic_error("this target does not expose input gradients");
}

template <typename T>
int Target<T>::predict(const Tensor<T>& image01) {
    const auto l = logits(image01);
    return static_cast<int>(std::max_element(l.begin(), l.end()) - l.begin());
}

template <typename T>
ModelTarget<T>::ModelTarget(Model<T>& model, const Tensor<T>& mean_image, BlurSpec blur)
    : model_(&model), blur_(blur) {
    const auto& ms = mean_image.shape();
    if (ms.size() != 3) fail_shape("ModelTarget", "mean image must be [C,H,W], got " + shape_str(ms));
    neg_mean_ = Tensor<T>::zeros({1, ms[0], ms[1], ms[2]});
    auto& v = neg_mean_.vec();
    const auto& m = mean_image.vec();
    for (size_t i = 0; i < v.size(); ++i) v[i] = -m[i];
}

template <typename T>
int ModelTarget<T>::classes() const {
    return model_->spec.classes;
}

namespace {

template <typename T>
std::vector<Tensor<T>> target_inputs(Model<T>& model, const Tensor<T>& normalized, BlurSpec blur) {
    if (model.arity == 1) return {normalized};
    return make_pyramid(normalized, model.arity, blur).levels;
}

}  // namespace

template <typename T>
std::vector<double> ModelTarget<T>::logits(const Tensor<T>& image01) {
    Tensor<T> x = add(image01, neg_mean_);
    Tensor<T> out = forward(*model_, target_inputs(*model_, x, blur_), false);
    std::vector<double> l(out.vec().size());
    for (size_t i = 0; i < l.size(); ++i) l[i] = static_cast<double>(out.vec()[i]);
    return l;
}

template <typename T>
std::vector<double> ModelTarget<T>::loss_grad(const Tensor<T>& image01, int label) {
    Tensor<T> input = image01.clone();
    input.set_requires_grad(true);
    Tape<T> tape;
    TapeScope<T> scope(tape);
    Tensor<T> x = add(input, neg_mean_);
    Tensor<T> out = forward(*model_, target_inputs(*model_, x, blur_), false);
    Tensor<T> loss = softmax_cross_entropy(out, {label});
    tape.backward(loss);
    const auto& g = input.grad();
    std::vector<double> gd(g.size());
    for (size_t i = 0; i < g.size(); ++i) gd[i] = static_cast<double>(g[i]);
    return gd;
}

namespace {

template <typename T>
double l2_between(const Tensor<T>& a, const Tensor<T>& b) {
    const auto& av = a.vec();
    const auto& bv = b.vec();
    double s = 0;
    for (size_t i = 0; i < av.size(); ++i) {
        const double d = static_cast<double>(av[i]) - static_cast<double>(bv[i]);
        s += d * d;
    }
    return std::sqrt(s);
}

template <typename T>
void clip01(Tensor<T>& t) {
    for (auto& v : t.vec()) v = std::min(T(1), std::max(T(0), v));
}

// Shared prologue: an already-wrong prediction is a zero-cost success.
template <typename T>
bool trivially_fooled(Target<T>& target, const Tensor<T>& image01, int label,
                      const std::string& name, AttackOutcome<T>& out) {
    out.attack = name;
    if (target.predict(image01) != label) {
        out.success = true;
        out.l2 = 0.0;
        out.perturbed = image01.clone();
        return true;
    }
    return false;
}

// Generic scale bisection: `apply` maps a scale to a candidate image.
// Invariant: scale 0 is not fooling (checked by the caller), `hi` is.
template <typename T, typename Apply>
void bisect_scale(Target<T>& target, int label, Apply&& apply, double hi, int steps,
                  const Tensor<T>& original, AttackOutcome<T>& out) {
    double lo = 0.0;
    for (int i = 0; i < steps; ++i) {
        const double mid = 0.5 * (lo + hi);
        Tensor<T> candidate = apply(mid);
        if (target.predict(candidate) != label)
            hi = mid;
        else
            lo = mid;
    }
    out.perturbed = apply(hi);
    out.success = target.predict(out.perturbed) != label;  // re-verify at the kept scale
    out.l2 = out.success ? l2_between(out.perturbed, original) : kNoL2;
}

}  // namespace

template <typename T>
AttackOutcome<T> attack_gaussian_noise(Target<T>& target, const Tensor<T>& image01, int label,
                                       uint64_t seed, int steps, double max_scale) {
    AttackOutcome<T> out;
    if (trivially_fooled(target, image01, label, "gaussian_noise", out)) return out;
    Rng rng(seed);
    std::vector<T> dir(image01.vec().size());
    for (auto& d : dir) d = static_cast<T>(rng.normal());
    auto apply = [&](double scale) {
        Tensor<T> c = image01.clone();
        auto& v = c.vec();
        for (size_t i = 0; i < v.size(); ++i) v[i] += static_cast<T>(scale) * dir[i];
        clip01(c);
        return c;
    };
    if (target.predict(apply(max_scale)) == label) return out;  // not fooled within budget
    bisect_scale(target, label, apply, max_scale, steps, image01, out);
    return out;
}

template <typename T>
AttackOutcome<T> attack_pointwise(Target<T>& target, const Tensor<T>& image01, int label,
                                  uint64_t seed) {
    AttackOutcome<T> out;
    if (trivially_fooled(target, image01, label, "pointwise", out)) return out;
    Rng rng(seed);
    const size_t n = image01.vec().size();

    // Escalate salt-and-pepper density until the prediction flips.
    Tensor<T> fooling;
    bool found = false;
    for (int round = 0; round < 3 && !found; ++round) {
        for (double p : {0.01, 0.02, 0.05, 0.1, 0.2, 0.4, 0.7, 1.0}) {
            Tensor<T> c = image01.clone();
            auto& v = c.vec();
            for (size_t i = 0; i < n; ++i)
                if (rng.uniform(0.0, 1.0) < p) v[i] = rng.coin() ? T(1) : T(0);
            if (target.predict(c) != label) {
                fooling = c;
                found = true;
                break;
            }
        }
    }
    if (!found) return out;

    // Greedy repair: restore features one at a time while the input still
    // fools; repeat passes until a pass changes nothing. Never increases
    // the count of touched features.
    const auto& orig = image01.vec();
    bool changed = true;
    int passes = 0;
    while (changed && passes++ < 10) {
        changed = false;
        auto order = rng.permutation(n);
        for (size_t oi : order) {
            auto& v = fooling.vec();
            if (v[oi] == orig[oi]) continue;
            const T saved = v[oi];
            v[oi] = orig[oi];
            if (target.predict(fooling) != label) {
                changed = true;  // restored for free
            } else {
                fooling.vec()[oi] = saved;
            }
        }
    }
    out.success = true;
    out.perturbed = fooling;
    out.l2 = l2_between(fooling, image01);
    return out;
}

template <typename T>
AttackOutcome<T> attack_blur(Target<T>& target, const Tensor<T>& image01, int label, int steps) {
    AttackOutcome<T> out;
    if (trivially_fooled(target, image01, label, "blur", out)) return out;
    const double sigma_max = static_cast<double>(image01.shape()[3]) / 6.0;
    auto apply = [&](double sigma) {
        if (sigma <= 1e-9) return image01.clone();
        Tensor<T> c = gaussian_blur(image01, BlurSpec::from_sigma(sigma));
        clip01(c);
        return c;
    };
    if (target.predict(apply(sigma_max)) == label) return out;
    bisect_scale(target, label, apply, sigma_max, steps, image01, out);
    return out;
}

namespace {

// Rotation about the image center followed by an integer shift; bilinear
// sampling with zeros outside the support.
template <typename T>
Tensor<T> warp(const Tensor<T>& img, double degrees, int dy, int dx) {
    const auto& s = img.shape();
    const int64_t C = s[1], H = s[2], W = s[3];
    Tensor<T> out = Tensor<T>::zeros(s);
    const double rad = degrees * std::numbers::pi / 180.0;
    const double cosr = std::cos(rad), sinr = std::sin(rad);
    const double cy = (static_cast<double>(H) - 1) / 2.0, cx = (static_cast<double>(W) - 1) / 2.0;
    const auto& v = img.vec();
    auto& o = out.vec();
    for (int64_t c = 0; c < C; ++c)
        for (int64_t y = 0; y < H; ++y)
            for (int64_t x = 0; x < W; ++x) {
                // Inverse map: undo the shift, then the rotation.
                const double ty = static_cast<double>(y - dy) - cy;
                const double tx = static_cast<double>(x - dx) - cx;
                const double sy = cosr * ty + sinr * tx + cy;
                const double sx = -sinr * ty + cosr * tx + cx;
                const int64_t y0 = static_cast<int64_t>(std::floor(sy));
                const int64_t x0 = static_cast<int64_t>(std::floor(sx));
                const double fy = sy - static_cast<double>(y0);
                const double fx = sx - static_cast<double>(x0);
                double acc = 0;
                for (int oy = 0; oy <= 1; ++oy)
                    for (int ox = 0; ox <= 1; ++ox) {
                        const int64_t yy = y0 + oy, xx = x0 + ox;
                        if (yy < 0 || yy >= H || xx < 0 || xx >= W) continue;
                        const double wgt = (oy ? fy : 1 - fy) * (ox ? fx : 1 - fx);
                        acc += wgt * static_cast<double>(v[(c * H + yy) * W + xx]);
                    }
                o[(c * H + y) * W + x] = static_cast<T>(acc);
            }
    return out;
}

}  // namespace

template <typename T>
AttackOutcome<T> attack_spatial(Target<T>& target, const Tensor<T>& image01, int label,
                                bool shifts_only) {
    AttackOutcome<T> out;
    out.attack = shifts_only ? "shifts" : "spatial";
    std::vector<double> rotations = {0};
    if (!shifts_only)
        for (int d = -30; d <= 30; d += 6)
            if (d != 0) rotations.push_back(d);
    for (double deg : rotations)
        for (int dy = -5; dy <= 5; ++dy)
            for (int dx = -5; dx <= 5; ++dx) {
                Tensor<T> c = warp(image01, deg, dy, dx);
                clip01(c);
                if (target.predict(c) != label) {
                    const double d2 = l2_between(c, image01);
                    if (d2 < out.l2) {
                        out.l2 = d2;
                        out.perturbed = c;
                        out.success = true;
                    }
                }
            }
    return out;
}

template <typename T>
AttackOutcome<T> attack_gradient(Target<T>& target, const Tensor<T>& image01, int label, int steps,
                                 double max_step) {
    AttackOutcome<T> out;
    if (trivially_fooled(target, image01, label, "gradient", out)) return out;
    if (!target.has_gradient()) {
        out.note = "target exposes no input gradient";
        return out;
    }
    const auto g = target.loss_grad(image01, label);
    bool all_zero = true;
    for (double v : g)
        if (v != 0) {
            all_zero = false;
            break;
        }
    if (all_zero) {
        out.note = "zero input gradient; no ascent direction";
        return out;
    }
    auto apply = [&](double eps) {
        Tensor<T> c = image01.clone();
        auto& v = c.vec();
        for (size_t i = 0; i < v.size(); ++i)
            v[i] += static_cast<T>(eps * (g[i] > 0 ? 1.0 : (g[i] < 0 ? -1.0 : 0.0)));
        clip01(c);
        return c;
    };
    if (target.predict(apply(max_step)) == label) return out;
    bisect_scale(target, label, apply, max_step, steps, image01, out);
    return out;
}

template <typename T>
RobustnessCurve curve(const std::vector<AttackOutcome<T>>& outcomes, int n_evaluated) {
    RobustnessCurve c;
    if (!outcomes.empty()) c.attack = outcomes.front().attack;
    std::vector<double> l2s;
    for (const auto& o : outcomes)
        if (o.success && std::isfinite(o.l2)) l2s.push_back(o.l2);
    std::sort(l2s.begin(), l2s.end());
    const double denom = n_evaluated > 0 ? static_cast<double>(n_evaluated) : 1.0;
    for (size_t i = 0; i < l2s.size(); ++i) {
        if (i + 1 < l2s.size() && l2s[i + 1] == l2s[i]) continue;  // keep last of ties
        c.points.push_back({l2s[i], static_cast<double>(i + 1) / denom});
    }
    return c;
}

double auc(const RobustnessCurve& c, double t_max) {
    double area = 0, prev_t = 0, level = 0;
    for (const auto& [t, f] : c.points) {
        if (t > t_max) break;
        area += level * (t - prev_t);
        prev_t = t;
        level = f;
    }
    area += level * (t_max - prev_t);
    return area;
}

template <typename T>
std::vector<double> inject_per_branch(Model<T>& model, const Tensor<T>& clean01,
                                      const Tensor<T>& perturbed01, const std::vector<int>& branches,
                                      const Tensor<T>& mean_image, BlurSpec blur) {
    if (model.arity < 2)
        throw std::invalid_argument("per-branch injection needs a multi-input model");
    if (branches.empty()) throw std::invalid_argument("branch list must be non-empty");
    Tensor<T> neg = Tensor<T>::zeros(clean01.shape());
    {
        auto& v = neg.vec();
        const auto& m = mean_image.vec();
        for (size_t i = 0; i < v.size(); ++i) v[i] = -m[i];
    }
    auto levels_of = [&](const Tensor<T>& img) {
        return make_pyramid(add(img, neg), model.arity, blur).levels;
    };
    auto clean_levels = levels_of(clean01);
    auto pert_levels = levels_of(perturbed01);
    std::vector<Tensor<T>> inputs = clean_levels;
    for (int b : branches) {
        if (b < 0 || b >= model.arity)
            throw std::invalid_argument("branch " + std::to_string(b) + " outside [0, " +
                                        std::to_string(model.arity) + ")");
        inputs[static_cast<size_t>(b)] = pert_levels[static_cast<size_t>(b)];
    }
    Tensor<T> out = forward(model, inputs, false);
    std::vector<double> l(out.vec().size());
    for (size_t i = 0; i < l.size(); ++i) l[i] = static_cast<double>(out.vec()[i]);
    return l;
}

#define TOPDOWN_INSTANTIATE_ATTACK(T)                                                             \
    template class Target<T>;                                                                     \
    template class ModelTarget<T>;                                                                \
    template AttackOutcome<T> attack_gaussian_noise<T>(Target<T>&, const Tensor<T>&, int,         \
                                                       uint64_t, int, double);                    \
    template AttackOutcome<T> attack_pointwise<T>(Target<T>&, const Tensor<T>&, int, uint64_t);   \
    template AttackOutcome<T> attack_blur<T>(Target<T>&, const Tensor<T>&, int, int);             \
    template AttackOutcome<T> attack_spatial<T>(Target<T>&, const Tensor<T>&, int, bool);         \
    template AttackOutcome<T> attack_gradient<T>(Target<T>&, const Tensor<T>&, int, int, double); \
    template RobustnessCurve curve<T>(const std::vector<AttackOutcome<T>>&, int);                 \
    template std::vector<double> inject_per_branch<T>(Model<T>&, const Tensor<T>&,                \
                                                      const Tensor<T>&, const std::vector<int>&,  \
                                                      const Tensor<T>&, BlurSpec);

TOPDOWN_INSTANTIATE_ATTACK(float)
TOPDOWN_INSTANTIATE_ATTACK(double)

}  // namespace topdown

#pragma once

#include <limits>
#include <string>
#include <vector>

#include "topdown/data.hpp"
#include "topdown/model.hpp"

namespace topdown {

// Classifier under attack: logits for a single [1,C,H,W] image in [0,1]
// space. Subclasses own any preprocessing (mean subtraction, pyramid).
template <typename T>
class Target {
  public:
    virtual ~Target() = default;
    virtual int classes() const = 0;
    virtual std::vector<double> logits(const Tensor<T>& image01) = 0;
    // d(cross-entropy)/d(image01), same element order as the image.
    virtual bool has_gradient() const { return false; }
    virtual std::vector<double> loss_grad(const Tensor<T>& image01, int label);
    int predict(const Tensor<T>& image01);
};

// Wraps a trained model: x - mean, pyramid for multi-input models,
// eval-mode forward. The pyramid is built on-tape for gradients.
template <typename T>
class ModelTarget : public Target<T> {
  public:
    ModelTarget(Model<T>& model, const Tensor<T>& mean_image, BlurSpec blur);
    int classes() const override;
    std::vector<double> logits(const Tensor<T>& image01) override;
    bool has_gradient() const override { return true; }
    std::vector<double> loss_grad(const Tensor<T>& image01, int label) override;

  private:
    Model<T>* model_;
    Tensor<T> neg_mean_;  // [1,C,H,W], negated for on-tape subtraction
    BlurSpec blur_;
};

constexpr double kNoL2 = std::numeric_limits<double>::infinity();

template <typename T>
struct AttackOutcome {
    int sample_id = -1;
    bool success = false;
    double l2 = kNoL2;  // between perturbed and original, in [0,1] space
    Tensor<T> perturbed;
    std::string attack;
    int rep_kept = 0;
    std::string note;
};

// Minimal-perturbation attacks. All return the smallest fooling
// perturbation found (L2=inf sentinel on failure), keep pixels in [0,1],
// and treat an already-misclassified sample as fooled at L2=0.
// Bisections run `steps` halvings between 0 and the per-attack maximum.

// Scaled seeded unit-Gaussian direction; bisection on the scale.
template <typename T>
AttackOutcome<T> attack_gaussian_noise(Target<T>& target, const Tensor<T>& image01, int label,
                                       uint64_t seed, int steps = 12, double max_scale = 8.0);

// Salt-and-pepper escalation followed by greedy per-feature repair that
// minimizes the number of touched values.
template <typename T>
AttackOutcome<T> attack_pointwise(Target<T>& target, const Tensor<T>& image01, int label,
                                  uint64_t seed);

// Bisection on Gaussian blur strength, capped at sigma = width/6.
template <typename T>
AttackOutcome<T> attack_blur(Target<T>& target, const Tensor<T>& image01, int label,
                             int steps = 12);

// Exhaustive grid over rotations (±30° in 6° steps; full mode only) and
// integer translations (±5 px), bilinear resampling, zeros outside;
// minimal-L2 fooling transform kept.
template <typename T>
AttackOutcome<T> attack_spatial(Target<T>& target, const Tensor<T>& image01, int label,
                                bool shifts_only);

// Fast-gradient-sign direction from the clean image, bisection on the step.
template <typename T>
AttackOutcome<T> attack_gradient(Target<T>& target, const Tensor<T>& image01, int label,
                                 int steps = 12, double max_step = 1.0);

// Three seeded repetitions (seed, seed+1, seed+2); keeps the success with
// the smallest L2.
template <typename T, typename Fn>
AttackOutcome<T> worst_of_3(Fn&& attack, Target<T>& target, const Tensor<T>& image01, int label,
                            uint64_t seed) {
    AttackOutcome<T> best = attack(target, image01, label, seed);
    best.rep_kept = 0;
    for (int r = 1; r < 3; ++r) {
        AttackOutcome<T> out = attack(target, image01, label, seed + static_cast<uint64_t>(r));
        if (out.success && (!best.success || out.l2 < best.l2)) {
            best = std::move(out);
            best.rep_kept = r;
        }
    }
    return best;
}

struct RobustnessCurve {
    std::string attack;
    std::vector<std::pair<double, double>> points;  // (L2 threshold, accuracy loss)
};

// Accuracy-loss step curve: fraction of the n_evaluated samples fooled at
// L2 <= t, emitted at the sorted distinct finite fooling distances.
template <typename T>
RobustnessCurve curve(const std::vector<AttackOutcome<T>>& outcomes, int n_evaluated);

// Area under the step curve on [0, t_max].
double auc(const RobustnessCurve& c, double t_max);

// Forward pass of a multi-input model with the perturbed image's pyramid
// substituted on the listed branches (0 = highest resolution) and the clean
// image's pyramid elsewhere. Images are raw [0,1]; mean subtraction happens
// inside. Rejects single-input models and empty branch lists.
template <typename T>
std::vector<double> inject_per_branch(Model<T>& model, const Tensor<T>& clean01,
                                      const Tensor<T>& perturbed01, const std::vector<int>& branches,
                                      const Tensor<T>& mean_image, BlurSpec blur);

}  // namespace topdown

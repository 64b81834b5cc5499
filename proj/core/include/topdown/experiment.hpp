#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "topdown/attack.hpp"
#include "topdown/config.hpp"
#include "topdown/explain.hpp"
#include "topdown/train.hpp"

namespace topdown {

// Architecture for a comparison variant of a named backbone: "bu" is the
// baseline itself; "td", "td_uni", "td_rev" are its top-down forms under
// the mirror / uniform / reversed arrangements.
ArchSpec variant_spec(const std::string& backbone, const std::string& variant);

// Train/test pair in [0,1]. "mnist" and "fashion" read the four IDX files
// from `dir`; "cifar10" reads the binary batches.
template <typename T>
std::pair<Dataset<T>, Dataset<T>> load_named_dataset(const std::string& name,
                                                     const std::string& dir);

// Directory holding a named dataset: [data] dir if set, otherwise
// $TOPDOWN_DATA_DIR/<name> or data/<name>. The effective value is recorded
// back so the config echo is self-sufficient.
std::string resolve_data_dir(ExperimentConfig& cfg, const std::string& dataset);

// A trained model plus the preprocessing state downstream passes need.
template <typename T>
struct SubjectRun {
    std::string label;
    int repeat = 0;
    Model<T>* model = nullptr;
    Tensor<T> mean_image;  // [C,H,W]
};

// Writes a normalization sidecar next to a checkpoint (TDN1 container with
// the single record "mean_image") and reads one back.
template <typename T>
void save_mean_sidecar(const std::string& checkpoint_path, const Tensor<T>& mean_image);
template <typename T>
Tensor<T> load_mean_sidecar(const std::string& checkpoint_path);

// ---- Comparison training (accuracy-parity protocol) ----
// Effective keys: [run] dataset/backbone/variants/out/seed, [data] dir,
// [train] plus per-variant [train.<v>] overlays. Every effective value is
// recorded back into `cfg`, which is echoed to <out>/config.echo.ini.
// Writes epochs.csv, runs.csv, summary.csv and, per variant and repeat,
// checkpoints/<v>.rep<r>.tdn with .arch and .mean sidecars.
template <typename T>
RepeatOutcome<T> run_training_comparison(ExperimentConfig& cfg, std::ostream* log);

// ---- Robustness comparison (minimal-perturbation attack suite) ----
struct AucRow {
    std::string attack;
    double t_max = 0;
    double auc_a = 0, auc_b = 0;
};
struct RobustnessResult {
    std::vector<int64_t> sample_ids;  // evaluated subset: jointly correct, in test order
    std::vector<AucRow> auc;          // one row per attack
};
// Subject `a` is the reference (bottom-up) model, `b` the comparison
// (top-down) model; `blur_sigma` is the pyramid width b was trained with.
// Effective keys: [attack] list/samples/seed/steps/dump_pgm/branches and
// [run] out. Writes per-model outcome CSVs, per-attack aligned sample and
// curve CSVs, auc.csv, optional perturbed-image PGMs, and — when branches
// are requested and b is multi-input — the per-branch injection sweep.
template <typename T>
RobustnessResult run_robustness_comparison(ExperimentConfig& cfg, SubjectRun<T> a,
                                           SubjectRun<T> b, const Dataset<T>& test01,
                                           double blur_sigma, std::ostream* log);

// ---- Localization comparison (weakly supervised, jointly-correct subset) ----
struct LocalizationRow {
    std::string model;
    int repeat = 0;
    LocalizationStats stats;
};
struct LocalizationAggregate {
    std::string model;
    int defined = 0;  // repeats whose precision and recall were both defined
    double mean_precision = 0, std_precision = 0;  // population std over `defined`
    double mean_recall = 0, std_recall = 0;
};
struct LocalizationResult {
    std::vector<LocalizationRow> rows;           // one per model x repeat
    std::vector<LocalizationAggregate> summary;  // one per model
};
// `a_runs` and `b_runs` are repeat-aligned (equal length, matching order).
// Effective keys: [explain] threshold/object_threshold/max_samples/
// dump_samples and [run] out. Writes localization.csv and
// localization_summary.csv, plus layerwise heatmap PGMs for the first
// dump_samples jointly-correct samples of the first repeat pair.
template <typename T>
LocalizationResult run_localization_comparison(ExperimentConfig& cfg,
                                               std::vector<SubjectRun<T>> a_runs,
                                               std::vector<SubjectRun<T>> b_runs,
                                               const Dataset<T>& test01, double blur_sigma,
                                               std::ostream* log);

}  // namespace topdown

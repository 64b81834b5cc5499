#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "topdown/data.hpp"
#include "topdown/model.hpp"

namespace topdown {

// Training protocol: SGD + momentum with a stepwise LR decay at fractional
// milestones of the epoch budget.
struct TrainConfig {
    int epochs = 20;
    int batch = 128;
    double lr = 0.05;
    double weight_decay = 5e-4;
    double momentum = 0.9;
    std::vector<double> milestones = {0.5, 0.8};  // fractions of epochs, strictly increasing
    double decay_factor = 10.0;
    uint64_t seed = 1;
    bool augment = false;
    int repeats = 4;
    double blur_sigma = 1.0;          // pyramid anti-aliasing for top-down models
    std::string checkpoint_path;      // final weights written here when non-empty

    void validate() const;
};

// LR for a 1-based epoch: base divided by factor once per crossed milestone
// (milestone i takes effect after epoch floor(f_i * epochs)).
double lr_at_epoch(const TrainConfig& cfg, int epoch);

struct EpochStats {
    int epoch = 0;
    double lr = 0, train_loss = 0, train_acc = 0, val_loss = 0, val_acc = 0;
};

struct RunReport {
    std::vector<EpochStats> epochs;
    double test_acc = 0, test_loss = 0;
    double wall_seconds = 0;
};

struct EvalResult {
    double accuracy = 0, loss = 0;
};

// Eval-mode accuracy and mean cross-entropy; deterministic and side-effect
// free (running statistics untouched).
template <typename T>
EvalResult evaluate(Model<T>& model, const Dataset<T>& ds, int batch, double blur_sigma);

// Trains in place; deterministic for a fixed seed and config. Train rows of
// the report come from the training batches themselves (batch-statistics
// batch norm); validation rows from eval-mode passes. A non-finite loss
// aborts with the epoch and batch index. test_acc/test_loss stay zero here —
// the caller owns test evaluation.
template <typename T>
RunReport train(Model<T>& model, const Dataset<T>& train_ds, const Dataset<T>& val_ds,
                const TrainConfig& cfg, std::ostream* log = nullptr);

// One trained run of a comparison experiment.
template <typename T>
struct TrainedRun {
    std::string label;
    int repeat = 0;
    Model<T> model;
    RunReport report;
    Tensor<T> mean_image;  // per-pixel mean used for this run's normalization
};

struct VariantSummary {
    std::string label;
    std::vector<double> test_accs;  // one per repeat
    double mean = 0, stddev = 0;    // population std over exactly `repeats` runs
};

template <typename T>
struct RepeatOutcome {
    std::vector<VariantSummary> rows;
    std::vector<TrainedRun<T>> runs;
};

// A named architecture + config pair to be compared.
struct TrainJob {
    std::string label;
    ArchSpec spec;
    TrainConfig cfg;
};

// Runs every job `repeats` times with a fresh 90/10 split per repeat
// (repeat r across jobs shares the split seed, so variants see identical
// data). Normalization mean is computed on each run's train part.
template <typename T>
RepeatOutcome<T> repeat_experiment(const std::vector<TrainJob>& jobs, const Dataset<T>& full_train,
                                   const Dataset<T>& test, double val_frac = 0.1,
                                   std::ostream* log = nullptr);

}  // namespace topdown

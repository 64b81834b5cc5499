#include "topdown/train.hpp"

#include <chrono>
#include <cmath>
#include <numeric>
#include <ostream>
#include <sstream>

#include "topdown/checkpoint.hpp"
#include "topdown/ops.hpp"
#include "topdown/optim.hpp"
#include "topdown/tape.hpp"

namespace topdown {

void TrainConfig::validate() const {
    if (epochs < 1) throw std::invalid_argument("epochs must be >= 1");
    if (batch < 1) throw std::invalid_argument("batch size must be >= 1");
    if (lr < 0) throw std::invalid_argument("learning rate must be >= 0");
    if (weight_decay < 0) throw std::invalid_argument("weight decay must be >= 0");
    if (momentum < 0 || momentum >= 1) throw std::invalid_argument("momentum must lie in [0,1)");
    if (decay_factor <= 1) throw std::invalid_argument("decay factor must be > 1");
    for (size_t i = 0; i < milestones.size(); ++i) {
        if (milestones[i] <= 0 || milestones[i] >= 1)
            throw std::invalid_argument("milestones must lie in (0,1)");
        if (i > 0 && milestones[i] <= milestones[i - 1])
            throw std::invalid_argument("milestones must be strictly increasing");
    }
    if (repeats < 1) throw std::invalid_argument("repeats must be >= 1");
    if (blur_sigma <= 0) throw std::invalid_argument("blur sigma must be > 0");
}

double lr_at_epoch(const TrainConfig& cfg, int epoch) {
    int drops = 0;
    for (double f : cfg.milestones)
        if (epoch > static_cast<int>(std::floor(f * cfg.epochs))) ++drops;
    return cfg.lr / std::pow(cfg.decay_factor, drops);
}

namespace {

// Slices one batch from precomputed pyramid levels (or the single image
// tensor for bottom-up models).
template <typename T>
std::vector<Tensor<T>> slice_inputs(const std::vector<Tensor<T>>& levels,
                                    const std::vector<int64_t>& idx) {
    std::vector<Tensor<T>> out;
    out.reserve(levels.size());
    for (const auto& lvl : levels) out.push_back(gather(lvl, idx));
    return out;
}

template <typename T>
std::vector<Tensor<T>> dataset_levels(const Model<T>& model, const Tensor<T>& images,
                                      double blur_sigma) {
    if (model.arity == 1) return {images};
    return make_pyramid(images, model.arity, BlurSpec::from_sigma(blur_sigma)).levels;
}

template <typename T>
int batch_correct(const Tensor<T>& logits, const std::vector<int>& labels) {
    const int64_t n = logits.shape()[0];
    const int k = static_cast<int>(logits.numel() / n);
    int c = 0;
    for (int64_t i = 0; i < n; ++i)
        if (argmax_row(logits.data() + i * k, k) == labels[static_cast<size_t>(i)]) ++c;
    return c;
}

}  // namespace

template <typename T>
EvalResult evaluate(Model<T>& model, const Dataset<T>& ds, int batch, double blur_sigma) {
    const auto levels = dataset_levels(model, ds.images, blur_sigma);
    const int64_t n = ds.size();
    double loss_sum = 0;
    int correct = 0;
    for (int64_t at = 0; at < n; at += batch) {
        std::vector<int64_t> idx(static_cast<size_t>(std::min<int64_t>(batch, n - at)));
        std::iota(idx.begin(), idx.end(), at);
        auto inputs = slice_inputs(levels, idx);
        Tensor<T> logits = forward(model, inputs, false);
        const auto labels = gather_labels(ds.labels, idx);
        loss_sum += static_cast<double>(softmax_cross_entropy(logits, labels).item()) *
                    static_cast<double>(idx.size());
        correct += batch_correct(logits, labels);
    }
    EvalResult r;
    r.accuracy = n ? static_cast<double>(correct) / static_cast<double>(n) : 0;
    r.loss = n ? loss_sum / static_cast<double>(n) : 0;
    return r;
}

template <typename T>
RunReport train(Model<T>& model, const Dataset<T>& train_ds, const Dataset<T>& val_ds,
                const TrainConfig& cfg, std::ostream* log) {
    cfg.validate();
    const auto t0 = std::chrono::steady_clock::now();
    RunReport report;

    // With augmentation the pyramid must be rebuilt per batch from the
    // augmented full-resolution crop; otherwise precompute it once.
    std::vector<Tensor<T>> levels;
    if (!cfg.augment) levels = dataset_levels(model, train_ds.images, cfg.blur_sigma);

    Rng rng(cfg.seed);
    OptimizerState<T> opt;
    opt.momentum = cfg.momentum;
    opt.weight_decay = cfg.weight_decay;
    opt.attach(model.params);

    const int64_t n = train_ds.size();
    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        const double lr = lr_at_epoch(cfg, epoch);
        const auto perm = rng.permutation(static_cast<size_t>(n));
        double loss_sum = 0;
        int correct = 0;
        int batch_index = 0;
        for (int64_t at = 0; at < n; at += cfg.batch, ++batch_index) {
            std::vector<int64_t> idx(perm.begin() + at,
                                     perm.begin() + std::min<int64_t>(at + cfg.batch, n));
            std::vector<Tensor<T>> inputs;
            if (cfg.augment) {
                Tensor<T> images = augment(gather(train_ds.images, idx), rng, 4, true);
                inputs = dataset_levels(model, images, cfg.blur_sigma);
            } else {
                inputs = slice_inputs(levels, idx);
            }
            const auto labels = gather_labels(train_ds.labels, idx);

            Tape<T> tape;
            TapeScope<T> scope(tape);
            Tensor<T> logits = forward(model, inputs, true);
            Tensor<T> loss = softmax_cross_entropy(logits, labels);
            const double loss_v = static_cast<double>(loss.item());
            if (!std::isfinite(loss_v)) {
                std::ostringstream os;
                os << "training diverged: non-finite loss at epoch " << epoch << ", batch "
                   << batch_index;
                throw std::runtime_error(os.str());
            }
            for (auto& p : model.params) p.zero_grad();
            tape.backward(loss);
            if (lr > 0) sgd_step(model.params, opt, static_cast<T>(lr));

            loss_sum += loss_v * static_cast<double>(idx.size());
            correct += batch_correct(logits, labels);
        }

        EpochStats s;
        s.epoch = epoch;
        s.lr = lr;
        s.train_loss = loss_sum / static_cast<double>(n);
        s.train_acc = static_cast<double>(correct) / static_cast<double>(n);
        const EvalResult val = evaluate(model, val_ds, 256, cfg.blur_sigma);
        s.val_loss = val.loss;
        s.val_acc = val.accuracy;
        report.epochs.push_back(s);
        if (log) {
            const double secs =
                std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            char line[160];
            std::snprintf(line, sizeof line,
                          "epoch %d/%d lr=%g train %.4f/%.2f%% val %.4f/%.2f%% (%.0fs)", epoch,
                          cfg.epochs, lr, s.train_loss, 100 * s.train_acc, s.val_loss,
                          100 * s.val_acc, secs);
            (*log) << line << "\n" << std::flush;
        }
    }
    report.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (!cfg.checkpoint_path.empty()) save_model(model, cfg.checkpoint_path);
    return report;
}

template <typename T>
RepeatOutcome<T> repeat_experiment(const std::vector<TrainJob>& jobs, const Dataset<T>& full_train,
                                   const Dataset<T>& test, double val_frac, std::ostream* log) {
    RepeatOutcome<T> out;
    for (const auto& job : jobs) {
        job.cfg.validate();
        VariantSummary row;
        row.label = job.label;
        for (int r = 0; r < job.cfg.repeats; ++r) {
            // Repeat r shares its split seed across jobs so every variant
            // sees the same data; the init/shuffle seed moves with r.
            const uint64_t run_seed = job.cfg.seed + static_cast<uint64_t>(r);
            auto [train_part, val_part] = split(full_train, 1.0 - val_frac, 1000003u + run_seed);
            const Tensor<T> mean = compute_mean_image(train_part);
            normalize(train_part, mean);
            normalize(val_part, mean);
            Dataset<T> test_run = take(test, [&] {
                std::vector<int64_t> all(static_cast<size_t>(test.size()));
                std::iota(all.begin(), all.end(), 0);
                return all;
            }());
            normalize(test_run, mean);

            Model<T> model = instantiate<T>(job.spec, run_seed);
            TrainConfig run_cfg = job.cfg;
            run_cfg.seed = run_seed;
            if (!job.cfg.checkpoint_path.empty())
                run_cfg.checkpoint_path =
                    job.cfg.checkpoint_path + ".rep" + std::to_string(r) + ".tdn";
            if (log)
                (*log) << "[" << job.label << " repeat " << r << "] training '" << job.spec.name
                       << "' for " << run_cfg.epochs << " epochs\n";
            RunReport report = train(model, train_part, val_part, run_cfg, log);
            const EvalResult te = evaluate(model, test_run, 256, run_cfg.blur_sigma);
            report.test_acc = te.accuracy;
            report.test_loss = te.loss;
            if (log)
                (*log) << "[" << job.label << " repeat " << r << "] test acc "
                       << 100 * te.accuracy << "%\n";
            row.test_accs.push_back(te.accuracy);
            TrainedRun<T> run;
            run.label = job.label;
            run.repeat = r;
            run.model = std::move(model);
            run.report = std::move(report);
            run.mean_image = mean;
            out.runs.push_back(std::move(run));
        }
        const double n = static_cast<double>(row.test_accs.size());
        row.mean = std::accumulate(row.test_accs.begin(), row.test_accs.end(), 0.0) / n;
        double ss = 0;
        for (double a : row.test_accs) ss += (a - row.mean) * (a - row.mean);
        row.stddev = std::sqrt(ss / n);
        out.rows.push_back(std::move(row));
    }
    return out;
}

#define TOPDOWN_INSTANTIATE_TRAIN(T)                                                            \
    template EvalResult evaluate<T>(Model<T>&, const Dataset<T>&, int, double);                 \
    template RunReport train<T>(Model<T>&, const Dataset<T>&, const Dataset<T>&,                \
                                const TrainConfig&, std::ostream*);                             \
    template struct TrainedRun<T>;                                                              \
    template RepeatOutcome<T> repeat_experiment<T>(const std::vector<TrainJob>&,                \
                                                   const Dataset<T>&, const Dataset<T>&, double, \
                                                   std::ostream*);

TOPDOWN_INSTANTIATE_TRAIN(float)
TOPDOWN_INSTANTIATE_TRAIN(double)

}  // namespace topdown

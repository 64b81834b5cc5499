#include "topdown/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <numeric>
#include <ostream>
#include <set>

#include "topdown/checkpoint.hpp"
#include "topdown/csvio.hpp"
#include "topdown/image_io.hpp"
#include "topdown/ops.hpp"

namespace topdown {

namespace fs = std::filesystem;

ArchSpec variant_spec(const std::string& backbone, const std::string& variant) {
    const ArchSpec base = builtin_spec(backbone);
    if (variant == "bu") return base;
    Arrangement arr;
    if (variant == "td")
        arr = Arrangement::mirror;
    else if (variant == "td_uni")
        arr = Arrangement::uniform;
    else if (variant == "td_rev")
        arr = Arrangement::reversed;
    else
        throw std::invalid_argument("unknown variant '" + variant +
                                    "' (expected bu, td, td_uni, td_rev)");
    MirrorResult m = mirror(base, arr);
    m.spec.name = base.name + "_" + variant;
    return m.spec;
}

template <typename T>
std::pair<Dataset<T>, Dataset<T>> load_named_dataset(const std::string& name,
                                                     const std::string& dir) {
    const fs::path d(dir);
    if (name == "mnist" || name == "fashion") {
        Dataset<T> train = load_dataset_idx<T>((d / "train-images-idx3-ubyte").string(),
                                               (d / "train-labels-idx1-ubyte").string());
        Dataset<T> test = load_dataset_idx<T>((d / "t10k-images-idx3-ubyte").string(),
                                              (d / "t10k-labels-idx1-ubyte").string());
        return {std::move(train), std::move(test)};
    }
    if (name == "cifar10") {
        std::vector<std::string> batches;
        for (int i = 1; i <= 5; ++i)
            batches.push_back((d / ("data_batch_" + std::to_string(i) + ".bin")).string());
        Dataset<T> train = load_cifar10<T>(batches);
        Dataset<T> test = load_cifar10<T>({(d / "test_batch.bin").string()});
        return {std::move(train), std::move(test)};
    }
    throw std::invalid_argument("unknown dataset '" + name +
                                "' (expected mnist, fashion, cifar10)");
}

std::string resolve_data_dir(ExperimentConfig& cfg, const std::string& dataset) {
    std::string dir = cfg.get("data", "dir", "");
    if (dir.empty()) {
        const char* env = std::getenv("TOPDOWN_DATA_DIR");
        dir = (env && *env) ? (fs::path(env) / dataset).string()
                            : (fs::path("data") / dataset).string();
    }
    cfg.set("data", "dir", dir);
    return dir;
}

template <typename T>
void save_mean_sidecar(const std::string& checkpoint_path, const Tensor<T>& mean_image) {
    NamedTensor rec;
    rec.name = "mean_image";
    rec.shape = mean_image.shape();
    if constexpr (std::is_same_v<T, float>) {
        rec.dtype = 0;
        rec.f32 = mean_image.vec();
    } else {
        rec.dtype = 1;
        rec.f64 = mean_image.vec();
    }
    write_container(checkpoint_path + ".mean", {rec});
}

template <typename T>
Tensor<T> load_mean_sidecar(const std::string& checkpoint_path) {
    const std::string path = checkpoint_path + ".mean";
    const auto records = read_container(path);
    if (records.size() != 1 || records[0].name != "mean_image")
        throw std::runtime_error("'" + path + "': expected the single record 'mean_image'");
    const NamedTensor& rec = records[0];
    Tensor<T> mean = Tensor<T>::zeros(rec.shape);
    auto& v = mean.vec();
    if (rec.dtype == 0)
        for (size_t i = 0; i < v.size(); ++i) v[i] = static_cast<T>(rec.f32[i]);
    else
        for (size_t i = 0; i < v.size(); ++i) v[i] = static_cast<T>(rec.f64[i]);
    return mean;
}

// ---------------------------------------------------------------------------
// Comparison training
// ---------------------------------------------------------------------------

template <typename T>
RepeatOutcome<T> run_training_comparison(ExperimentConfig& cfg, std::ostream* log) {
    const std::string dataset = cfg.get("run", "dataset", "mnist");
    const std::string backbone = cfg.get("run", "backbone", "lenetfc");
    const std::string out_dir = cfg.get("run", "out", "runs/train");
    std::vector<std::string> variants = cfg.get_list("run", "variants");
    if (variants.empty()) variants = {"bu", "td"};
    const int64_t seed = cfg.get_int("run", "seed", 1);

    cfg.set("run", "dataset", dataset);
    cfg.set("run", "backbone", backbone);
    cfg.set("run", "out", out_dir);
    {
        std::string joined;
        for (size_t i = 0; i < variants.size(); ++i) joined += (i ? "," : "") + variants[i];
        cfg.set("run", "variants", joined);
    }
    cfg.set("run", "seed", std::to_string(seed));
    const std::string data_dir = resolve_data_dir(cfg, dataset);

    cfg.record_train_config("", cfg.train_config(""));
    std::vector<TrainJob> jobs;
    for (const auto& v : variants) {
        TrainJob job;
        job.label = v;
        job.spec = variant_spec(backbone, v);
        job.cfg = cfg.train_config(v);
        cfg.record_train_config(v, job.cfg);
        job.cfg.checkpoint_path = (fs::path(out_dir) / "checkpoints" / v).string();
        jobs.push_back(std::move(job));
    }

    fs::create_directories(fs::path(out_dir) / "checkpoints");
    cfg.write_file((fs::path(out_dir) / "config.echo.ini").string());

    auto [full_train, test] = load_named_dataset<T>(dataset, data_dir);
    RepeatOutcome<T> outcome = repeat_experiment<T>(jobs, full_train, test, 0.1, log);

    for (const auto& run : outcome.runs)
        save_mean_sidecar((fs::path(out_dir) / "checkpoints" /
                           (run.label + ".rep" + std::to_string(run.repeat) + ".tdn"))
                              .string(),
                          run.mean_image);

    {
        CsvWriter epochs((fs::path(out_dir) / "epochs.csv").string(), "train_epochs", 1,
                         {"label", "repeat", "epoch", "lr", "train_loss", "train_acc",
                          "val_loss", "val_acc"});
        for (const auto& run : outcome.runs)
            for (const auto& e : run.report.epochs)
                epochs.row({run.label, std::to_string(run.repeat), std::to_string(e.epoch),
                            CsvWriter::num(e.lr), CsvWriter::num(e.train_loss),
                            CsvWriter::num(e.train_acc), CsvWriter::num(e.val_loss),
                            CsvWriter::num(e.val_acc)});
    }
    {
        CsvWriter runs((fs::path(out_dir) / "runs.csv").string(), "train_runs", 1,
                       {"label", "repeat", "seed", "test_acc", "test_loss"});
        for (const auto& run : outcome.runs) {
            uint64_t run_seed = 0;
            for (const auto& job : jobs)
                if (job.label == run.label)
                    run_seed = job.cfg.seed + static_cast<uint64_t>(run.repeat);
            runs.row({run.label, std::to_string(run.repeat), std::to_string(run_seed),
                      CsvWriter::num(run.report.test_acc), CsvWriter::num(run.report.test_loss)});
        }
    }
    {
        CsvWriter summary((fs::path(out_dir) / "summary.csv").string(), "train_summary", 1,
                          {"label", "repeats", "mean_test_acc", "std_test_acc"});
        for (const auto& row : outcome.rows)
            summary.row({row.label, std::to_string(row.test_accs.size()),
                         CsvWriter::num(row.mean), CsvWriter::num(row.stddev)});
    }
    if (log)
        for (const auto& row : outcome.rows)
            (*log) << row.label << ": test acc " << 100 * row.mean << "% +/- "
                   << 100 * row.stddev << "pp over " << row.test_accs.size() << " repeats\n";
    return outcome;
}

// ---------------------------------------------------------------------------
// Robustness comparison
// ---------------------------------------------------------------------------

namespace {

// Step-curve evaluation at an arbitrary threshold from raw outcomes.
template <typename T>
double loss_at(const std::vector<AttackOutcome<T>>& outcomes, int n_eval, double t) {
    int fooled = 0;
    for (const auto& o : outcomes)
        if (o.success && o.l2 <= t) ++fooled;
    return n_eval ? static_cast<double>(fooled) / n_eval : 0.0;
}

// Channel-mean [0,1] view of an image tensor for PGM dumps.
template <typename T>
std::vector<double> gray01(const Tensor<T>& image) {
    const auto& s = image.shape();
    const int64_t C = s[1], hw = s[2] * s[3];
    std::vector<double> g(static_cast<size_t>(hw), 0.0);
    for (int64_t c = 0; c < C; ++c)
        for (int64_t p = 0; p < hw; ++p)
            g[static_cast<size_t>(p)] += static_cast<double>(image.vec()[c * hw + p]) / C;
    return g;
}

std::vector<int> parse_branch_token(const std::string& tok, int arity) {
    if (tok == "all") {
        std::vector<int> all(static_cast<size_t>(arity));
        std::iota(all.begin(), all.end(), 0);
        return all;
    }
    if (tok == "high") return {0};
    if (tok == "low") return {arity - 1};
    if (tok == "mid") {
        if (arity != 3)
            throw std::invalid_argument("branch 'mid' needs a 3-input ladder, have arity " +
                                        std::to_string(arity));
        return {1};
    }
    try {
        const int idx = std::stoi(tok);
        if (idx < 0 || idx >= arity) throw std::out_of_range("branch");
        return {idx};
    } catch (const std::exception&) {
        throw std::invalid_argument("unknown branch '" + tok +
                                    "' (expected high, mid, low, all, or an index)");
    }
}

}  // namespace

template <typename T>
RobustnessResult run_robustness_comparison(ExperimentConfig& cfg, SubjectRun<T> a,
                                           SubjectRun<T> b, const Dataset<T>& test01,
                                           double blur_sigma, std::ostream* log) {
    const std::string out_dir = cfg.get("run", "out", "runs/attack");
    std::vector<std::string> attacks = cfg.get_list("attack", "list");
    if (attacks.empty())
        attacks = {"gaussian_noise", "pointwise", "blur", "spatial", "shifts", "gradient"};
    const int n_want = static_cast<int>(cfg.get_int("attack", "samples", 500));
    const uint64_t seed =
        static_cast<uint64_t>(cfg.get_int("attack", "seed", cfg.get_int("run", "seed", 1)));
    const int steps = static_cast<int>(cfg.get_int("attack", "steps", 12));
    const int dump_pgm = static_cast<int>(cfg.get_int("attack", "dump_pgm", 0));
    const std::vector<std::string> branch_toks = cfg.get_list("attack", "branches");

    cfg.set("run", "out", out_dir);
    {
        std::string joined;
        for (size_t i = 0; i < attacks.size(); ++i) joined += (i ? "," : "") + attacks[i];
        cfg.set("attack", "list", joined);
    }
    cfg.set("attack", "samples", std::to_string(n_want));
    cfg.set("attack", "seed", std::to_string(seed));
    cfg.set("attack", "steps", std::to_string(steps));
    cfg.set("attack", "blur_sigma", CsvWriter::num(blur_sigma));
    cfg.set("attack", "dump_pgm", std::to_string(dump_pgm));
    {
        std::string joined;
        for (size_t i = 0; i < branch_toks.size(); ++i) joined += (i ? "," : "") + branch_toks[i];
        cfg.set("attack", "branches", joined);
    }
    cfg.set("attack", "subject_a", a.label);
    cfg.set("attack", "subject_b", b.label);
    fs::create_directories(out_dir);
    if (dump_pgm > 0) fs::create_directories(fs::path(out_dir) / "pgm");
    cfg.write_file((fs::path(out_dir) / "config.echo.ini").string());

    const BlurSpec blur = BlurSpec::from_sigma(blur_sigma);
    ModelTarget<T> target_a(*a.model, a.mean_image, blur);
    ModelTarget<T> target_b(*b.model, b.mean_image, blur);

    const bool sweep_branches = !branch_toks.empty() && b.model->arity > 1;
    std::optional<CsvWriter> branch_csv;
    if (sweep_branches)
        branch_csv.emplace((fs::path(out_dir) / "branch_injection.csv").string(),
                           "branch_injection", 1,
                           std::vector<std::string>{"attack", "branch", "n_evaluated", "flipped",
                                                    "drop"});

    // Evaluated subset: the first n_want test samples both models classify
    // correctly, in test order.
    RobustnessResult result;
    for (int64_t i = 0; i < test01.size() && static_cast<int>(result.sample_ids.size()) < n_want;
         ++i) {
        Tensor<T> image = gather(test01.images, {i});
        const int label = test01.labels[static_cast<size_t>(i)];
        if (target_a.predict(image) != label) continue;
        if (target_b.predict(image) != label) continue;
        result.sample_ids.push_back(i);
    }
    const int n_eval = static_cast<int>(result.sample_ids.size());
    if (log)
        (*log) << "evaluating " << n_eval << " jointly-correct samples, attacks:";
    if (log) {
        for (const auto& name : attacks) (*log) << " " << name;
        (*log) << "\n";
    }

    for (size_t ai = 0; ai < attacks.size(); ++ai) {
        const std::string& name = attacks[ai];
        std::vector<std::vector<AttackOutcome<T>>> per_model(2);
        ModelTarget<T>* targets[2] = {&target_a, &target_b};
        const std::string labels[2] = {a.label, b.label};

        for (int m = 0; m < 2; ++m) {
            per_model[m].reserve(result.sample_ids.size());
            for (int64_t id : result.sample_ids) {
                Tensor<T> image = gather(test01.images, {id});
                const int label = test01.labels[static_cast<size_t>(id)];
                const uint64_t s =
                    seed + 1000000ull * static_cast<uint64_t>(ai) + 16ull * static_cast<uint64_t>(id);
                AttackOutcome<T> out;
                if (name == "gaussian_noise")
                    out = worst_of_3(
                        [&](Target<T>& t, const Tensor<T>& im, int lb, uint64_t sd) {
                            return attack_gaussian_noise(t, im, lb, sd, steps);
                        },
                        *targets[m], image, label, s);
                else if (name == "pointwise")
                    out = worst_of_3(
                        [&](Target<T>& t, const Tensor<T>& im, int lb, uint64_t sd) {
                            return attack_pointwise(t, im, lb, sd);
                        },
                        *targets[m], image, label, s);
                else if (name == "blur")
                    out = attack_blur(*targets[m], image, label, steps);
                else if (name == "spatial")
                    out = attack_spatial(*targets[m], image, label, false);
                else if (name == "shifts")
                    out = attack_spatial(*targets[m], image, label, true);
                else if (name == "gradient")
                    out = attack_gradient(*targets[m], image, label, steps);
                else
                    throw std::invalid_argument("unknown attack '" + name + "'");
                out.sample_id = static_cast<int>(id);
                per_model[m].push_back(std::move(out));
            }

            CsvWriter oc((fs::path(out_dir) / ("outcomes_" + labels[m] + "_" + name + ".csv"))
                             .string(),
                         "attack_outcomes", 1,
                         {"sample_id", "label", "success", "l2", "rep_kept", "note"});
            int dumped = 0;
            for (const auto& o : per_model[m]) {
                oc.row({std::to_string(o.sample_id),
                        std::to_string(test01.labels[static_cast<size_t>(o.sample_id)]),
                        o.success ? "1" : "0", CsvWriter::num(o.l2), std::to_string(o.rep_kept),
                        o.note});
                if (o.success && dumped < dump_pgm) {
                    const auto& s = o.perturbed.shape();
                    write_pgm((fs::path(out_dir) / "pgm" /
                               (labels[m] + "_" + name + "_s" + std::to_string(o.sample_id) +
                                ".pgm"))
                                  .string(),
                              gray01(o.perturbed), static_cast<int>(s[2]),
                              static_cast<int>(s[3]));
                    ++dumped;
                }
            }
        }

        // Shared threshold domain: distinct finite fooling distances of both
        // models, so the paired curves and AUCs are directly comparable.
        std::set<double> ts;
        double t_max = 0;
        for (int m = 0; m < 2; ++m)
            for (const auto& o : per_model[m])
                if (o.success && std::isfinite(o.l2)) {
                    ts.insert(o.l2);
                    t_max = std::max(t_max, o.l2);
                }
        {
            CsvWriter cu((fs::path(out_dir) / ("curve_" + name + ".csv")).string(),
                         "attack_curve", 1, {"t", "loss_a", "loss_b"});
            cu.row({"0", "0", "0"});
            for (double t : ts)
                cu.row({CsvWriter::num(t), CsvWriter::num(loss_at(per_model[0], n_eval, t)),
                        CsvWriter::num(loss_at(per_model[1], n_eval, t))});
        }
        {
            CsvWriter sa((fs::path(out_dir) / ("samples_" + name + ".csv")).string(),
                         "attack_samples", 1, {"sample_id", "label", "l2_a", "l2_b"});
            for (size_t i = 0; i < result.sample_ids.size(); ++i)
                sa.row({std::to_string(result.sample_ids[i]),
                        std::to_string(
                            test01.labels[static_cast<size_t>(result.sample_ids[i])]),
                        CsvWriter::num(per_model[0][i].l2), CsvWriter::num(per_model[1][i].l2)});
        }

        AucRow row;
        row.attack = name;
        row.t_max = t_max;
        row.auc_a = auc(curve(per_model[0], n_eval), t_max);
        row.auc_b = auc(curve(per_model[1], n_eval), t_max);
        result.auc.push_back(row);
        if (log)
            (*log) << name << ": auc(" << a.label << ") " << row.auc_a << ", auc(" << b.label
                   << ") " << row.auc_b << " on [0, " << row.t_max << "]\n";

        // Per-branch injection: the comparison model's successful perturbed
        // images re-evaluated with only the listed pyramid branches fed the
        // perturbation.
        if (sweep_branches) {
            for (const auto& tok : branch_toks) {
                const std::vector<int> branches = parse_branch_token(tok, b.model->arity);
                int flipped = 0;
                for (const auto& o : per_model[1]) {
                    if (!o.success) continue;
                    Tensor<T> clean = gather(test01.images, {o.sample_id});
                    const auto logits = inject_per_branch(*b.model, clean, o.perturbed,
                                                          branches, b.mean_image, blur);
                    const int pred = static_cast<int>(std::max_element(logits.begin(),
                                                                       logits.end()) -
                                                      logits.begin());
                    if (pred != test01.labels[static_cast<size_t>(o.sample_id)]) ++flipped;
                }
                branch_csv->row(
                    {name, tok, std::to_string(n_eval), std::to_string(flipped),
                     CsvWriter::num(n_eval ? static_cast<double>(flipped) / n_eval : 0.0)});
            }
        }
    }

    {
        CsvWriter au((fs::path(out_dir) / "auc.csv").string(), "attack_auc", 1,
                     {"attack", "t_max", "auc_a", "auc_b"});
        for (const auto& r : result.auc)
            au.row({r.attack, CsvWriter::num(r.t_max), CsvWriter::num(r.auc_a),
                    CsvWriter::num(r.auc_b)});
    }
    return result;
}

// ---------------------------------------------------------------------------
// Localization comparison
// ---------------------------------------------------------------------------

namespace {

template <typename T>
std::vector<Tensor<T>> explain_inputs(const SubjectRun<T>& s, const Tensor<T>& image01,
                                      double blur_sigma) {
    Tensor<T> x = image01.clone();
    auto& v = x.vec();
    const auto& m = s.mean_image.vec();
    for (size_t i = 0; i < v.size(); ++i) v[i] -= m[i];
    if (s.model->arity == 1) return {x};
    return make_pyramid(x, s.model->arity, BlurSpec::from_sigma(blur_sigma)).levels;
}

template <typename T>
int explain_predict(const SubjectRun<T>& s, const Tensor<T>& image01, double blur_sigma) {
    Tensor<T> out = forward(*s.model, explain_inputs(s, image01, blur_sigma), false);
    return argmax_row(out.data(), static_cast<int>(out.numel()));
}

struct MeanStd {
    double mean = 0, stddev = 0;
    int n = 0;
};

MeanStd mean_std(const std::vector<double>& xs) {
    MeanStd r;
    r.n = static_cast<int>(xs.size());
    if (!r.n) return r;
    r.mean = std::accumulate(xs.begin(), xs.end(), 0.0) / r.n;
    double ss = 0;
    for (double x : xs) ss += (x - r.mean) * (x - r.mean);
    r.stddev = std::sqrt(ss / r.n);
    return r;
}

std::string opt_num(const std::optional<double>& v) {
    return v ? CsvWriter::num(*v) : std::string();
}

}  // namespace

template <typename T>
LocalizationResult run_localization_comparison(ExperimentConfig& cfg,
                                               std::vector<SubjectRun<T>> a_runs,
                                               std::vector<SubjectRun<T>> b_runs,
                                               const Dataset<T>& test01, double blur_sigma,
                                               std::ostream* log) {
    if (a_runs.empty() || a_runs.size() != b_runs.size())
        throw std::invalid_argument("localization needs repeat-aligned run lists, got " +
                                    std::to_string(a_runs.size()) + " vs " +
                                    std::to_string(b_runs.size()));
    const std::string out_dir = cfg.get("run", "out", "runs/explain");
    const double t = cfg.get_num("explain", "threshold", 0.2);
    const double object_threshold = cfg.get_num("explain", "object_threshold", 0.0);
    const int max_samples = static_cast<int>(cfg.get_int("explain", "max_samples", 10000));
    const int dump_samples = static_cast<int>(cfg.get_int("explain", "dump_samples", 8));

    cfg.set("run", "out", out_dir);
    cfg.set("explain", "threshold", CsvWriter::num(t));
    cfg.set("explain", "object_threshold", CsvWriter::num(object_threshold));
    cfg.set("explain", "max_samples", std::to_string(max_samples));
    cfg.set("explain", "dump_samples", std::to_string(dump_samples));
    cfg.set("explain", "blur_sigma", CsvWriter::num(blur_sigma));
    fs::create_directories(out_dir);
    if (dump_samples > 0) fs::create_directories(fs::path(out_dir) / "pgm");
    cfg.write_file((fs::path(out_dir) / "config.echo.ini").string());

    LocalizationResult result;
    std::vector<double> precisions[2], recalls[2];
    for (size_t r = 0; r < a_runs.size(); ++r) {
        ExplainSubject<T> sa{a_runs[r].model, a_runs[r].mean_image};
        ExplainSubject<T> sb{b_runs[r].model, b_runs[r].mean_image};
        auto [stats_a, stats_b] =
            localization_eval(sa, sb, test01, blur_sigma, t, object_threshold, max_samples);
        if (stats_a.samples == 0 && log)
            (*log) << "repeat " << r << ": no jointly-correct samples, skipped\n";
        result.rows.push_back({a_runs[r].label, a_runs[r].repeat, stats_a});
        result.rows.push_back({b_runs[r].label, b_runs[r].repeat, stats_b});
        const LocalizationStats* s[2] = {&stats_a, &stats_b};
        for (int m = 0; m < 2; ++m)
            if (s[m]->precision() && s[m]->recall()) {
                precisions[m].push_back(*s[m]->precision());
                recalls[m].push_back(*s[m]->recall());
            }
        if (log)
            (*log) << "repeat " << r << ": " << stats_a.samples << " samples, precision "
                   << opt_num(stats_a.precision()) << " vs " << opt_num(stats_b.precision())
                   << "\n";
    }

    const std::string labels[2] = {a_runs[0].label, b_runs[0].label};
    for (int m = 0; m < 2; ++m) {
        LocalizationAggregate agg;
        agg.model = labels[m];
        const MeanStd p = mean_std(precisions[m]), rc = mean_std(recalls[m]);
        agg.defined = p.n;
        agg.mean_precision = p.mean;
        agg.std_precision = p.stddev;
        agg.mean_recall = rc.mean;
        agg.std_recall = rc.stddev;
        result.summary.push_back(agg);
    }

    {
        CsvWriter rows((fs::path(out_dir) / "localization.csv").string(), "localization", 1,
                       {"model", "repeat", "samples", "tp", "fp", "fn", "precision", "recall"});
        for (const auto& row : result.rows)
            rows.row({row.model, std::to_string(row.repeat), std::to_string(row.stats.samples),
                      std::to_string(row.stats.tp), std::to_string(row.stats.fp),
                      std::to_string(row.stats.fn), opt_num(row.stats.precision()),
                      opt_num(row.stats.recall())});
    }
    {
        CsvWriter summary((fs::path(out_dir) / "localization_summary.csv").string(),
                          "localization_summary", 1,
                          {"model", "defined_repeats", "mean_precision", "std_precision",
                           "mean_recall", "std_recall"});
        for (const auto& agg : result.summary)
            summary.row({agg.model, std::to_string(agg.defined),
                         CsvWriter::num(agg.mean_precision), CsvWriter::num(agg.std_precision),
                         CsvWriter::num(agg.mean_recall), CsvWriter::num(agg.std_recall)});
    }

    // Layerwise heatmap gallery for the first repeat pair: the consumed
    // input plus each stage boundary, one PGM per map, native extent in the
    // file name.
    if (dump_samples > 0) {
        int dumped = 0;
        for (int64_t i = 0; i < test01.size() && dumped < dump_samples; ++i) {
            Tensor<T> image = gather(test01.images, {i});
            const int label = test01.labels[static_cast<size_t>(i)];
            if (explain_predict(a_runs[0], image, blur_sigma) != label) continue;
            if (explain_predict(b_runs[0], image, blur_sigma) != label) continue;
            const auto& s = image.shape();
            write_pgm((fs::path(out_dir) / "pgm" / ("input_s" + std::to_string(i) + ".pgm"))
                          .string(),
                      gray01(image), static_cast<int>(s[2]), static_cast<int>(s[3]));
            for (int m = 0; m < 2; ++m) {
                const SubjectRun<T>& run = m == 0 ? a_runs[0] : b_runs[0];
                const auto inputs = explain_inputs(run, image, blur_sigma);
                const auto maps = layerwise_cam(*run.model, inputs, label);
                for (size_t j = 0; j < maps.size(); ++j) {
                    std::vector<double> v01(maps[j].values.begin(), maps[j].values.end());
                    write_pgm((fs::path(out_dir) / "pgm" /
                               (run.label + "_s" + std::to_string(i) + "_l" + std::to_string(j) +
                                "_" + std::to_string(maps[j].native_h) + "x" +
                                std::to_string(maps[j].native_w) + ".pgm"))
                                  .string(),
                              v01, maps[j].h, maps[j].w);
                }
            }
            ++dumped;
        }
    }
    return result;
}

#define TOPDOWN_INSTANTIATE_EXPERIMENT(T)                                                       \
    template std::pair<Dataset<T>, Dataset<T>> load_named_dataset<T>(const std::string&,        \
                                                                     const std::string&);       \
    template struct SubjectRun<T>;                                                              \
    template void save_mean_sidecar<T>(const std::string&, const Tensor<T>&);                   \
    template Tensor<T> load_mean_sidecar<T>(const std::string&);                                \
    template RepeatOutcome<T> run_training_comparison<T>(ExperimentConfig&, std::ostream*);     \
    template RobustnessResult run_robustness_comparison<T>(ExperimentConfig&, SubjectRun<T>,    \
                                                           SubjectRun<T>, const Dataset<T>&,    \
                                                           double, std::ostream*);              \
    template LocalizationResult run_localization_comparison<T>(                                 \
        ExperimentConfig&, std::vector<SubjectRun<T>>, std::vector<SubjectRun<T>>,              \
        const Dataset<T>&, double, std::ostream*);

TOPDOWN_INSTANTIATE_EXPERIMENT(float)
TOPDOWN_INSTANTIATE_EXPERIMENT(double)

}  // namespace topdown

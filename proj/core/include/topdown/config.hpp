#pragma once

#include <string>
#include <vector>

#include "topdown/train.hpp"

namespace topdown {

// Ordered INI-style key/value store: `[section]` headers, `key = value`
// lines, `#` comments. Order is preserved so a serialized echo is
// bit-stable. Variant-specific training overrides live in sections like
// [train.td] overlaid on [train].
class ExperimentConfig {
  public:
    static ExperimentConfig parse(const std::string& text);
    static ExperimentConfig parse_file(const std::string& path);
    std::string serialize() const;
    void write_file(const std::string& path) const;

    bool has(const std::string& section, const std::string& key) const;
    std::string get(const std::string& section, const std::string& key,
                    const std::string& fallback = "") const;
    // Upsert preserving first-seen order of sections and keys.
    void set(const std::string& section, const std::string& key, const std::string& value);

    double get_num(const std::string& section, const std::string& key, double fallback) const;
    int64_t get_int(const std::string& section, const std::string& key, int64_t fallback) const;
    bool get_bool(const std::string& section, const std::string& key, bool fallback) const;
    // Comma-separated list values.
    std::vector<std::string> get_list(const std::string& section, const std::string& key) const;

    // Effective TrainConfig for a variant: [train] overlaid by
    // [train.<variant>]. The [run] seed is the config-wide default.
    TrainConfig train_config(const std::string& variant) const;
    // Writes every effective [train]/[train.<variant>] key back, so the
    // echo captures defaults that were never spelled out.
    void record_train_config(const std::string& variant, const TrainConfig& cfg);

  private:
    struct Section {
        std::string name;
        std::vector<std::pair<std::string, std::string>> entries;
    };
    std::vector<Section> sections_;
    Section* find(const std::string& name);
    const Section* find(const std::string& name) const;
};

}  // namespace topdown

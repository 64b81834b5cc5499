#include "topdown/config.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

#include "topdown/csvio.hpp"

namespace topdown {

namespace {

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

[[noreturn]] void parse_fail(int line, const std::string& what) {
    throw std::invalid_argument("config line " + std::to_string(line) + ": " + what);
}

}  // namespace

ExperimentConfig ExperimentConfig::parse(const std::string& text) {
    ExperimentConfig cfg;
    std::istringstream in(text);
    std::string line;
    std::string current;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#' || t[0] == ';') continue;
        if (t.front() == '[') {
            if (t.back() != ']') parse_fail(lineno, "unterminated section header '" + t + "'");
            current = trim(t.substr(1, t.size() - 2));
            if (current.empty()) parse_fail(lineno, "empty section name");
            if (!cfg.find(current)) cfg.sections_.push_back({current, {}});
            continue;
        }
        const size_t eq = t.find('=');
        if (eq == std::string::npos) parse_fail(lineno, "expected 'key = value', got '" + t + "'");
        const std::string key = trim(t.substr(0, eq));
        const std::string value = trim(t.substr(eq + 1));
        if (key.empty()) parse_fail(lineno, "empty key");
        if (current.empty()) parse_fail(lineno, "'" + key + "' appears before any [section]");
        cfg.set(current, key, value);
    }
    return cfg;
}

ExperimentConfig ExperimentConfig::parse_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse(ss.str());
}

std::string ExperimentConfig::serialize() const {
    std::ostringstream out;
    for (size_t i = 0; i < sections_.size(); ++i) {
        if (i) out << "\n";
        out << "[" << sections_[i].name << "]\n";
        for (const auto& [k, v] : sections_[i].entries) out << k << " = " << v << "\n";
    }
    return out.str();
}

void ExperimentConfig::write_file(const std::string& path) const {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write config '" + path + "'");
    out << serialize();
    if (!out) throw std::runtime_error("write to '" + path + "' failed");
}

ExperimentConfig::Section* ExperimentConfig::find(const std::string& name) {
    for (auto& s : sections_)
        if (s.name == name) return &s;
    return nullptr;
}

const ExperimentConfig::Section* ExperimentConfig::find(const std::string& name) const {
    for (const auto& s : sections_)
        if (s.name == name) return &s;
    return nullptr;
}

bool ExperimentConfig::has(const std::string& section, const std::string& key) const {
    const Section* s = find(section);
    if (!s) return false;
    for (const auto& [k, v] : s->entries)
        if (k == key) return true;
    return false;
}

std::string ExperimentConfig::get(const std::string& section, const std::string& key,
                                  const std::string& fallback) const {
    const Section* s = find(section);
    if (!s) return fallback;
    for (const auto& [k, v] : s->entries)
        if (k == key) return v;
    return fallback;
}

void ExperimentConfig::set(const std::string& section, const std::string& key,
                           const std::string& value) {
    Section* s = find(section);
    if (!s) {
        sections_.push_back({section, {}});
        s = &sections_.back();
    }
    for (auto& [k, v] : s->entries)
        if (k == key) {
            v = value;
            return;
        }
    s->entries.push_back({key, value});
}

double ExperimentConfig::get_num(const std::string& section, const std::string& key,
                                 double fallback) const {
    const std::string v = get(section, key);
    if (v.empty()) return fallback;
    size_t used = 0;
    const double parsed = std::stod(v, &used);
    if (used != v.size())
        throw std::invalid_argument("[" + section + "] " + key + ": '" + v + "' is not a number");
    return parsed;
}

int64_t ExperimentConfig::get_int(const std::string& section, const std::string& key,
                                  int64_t fallback) const {
    const std::string v = get(section, key);
    if (v.empty()) return fallback;
    size_t used = 0;
    const long long parsed = std::stoll(v, &used);
    if (used != v.size())
        throw std::invalid_argument("[" + section + "] " + key + ": '" + v + "' is not an integer");
    return parsed;
}

bool ExperimentConfig::get_bool(const std::string& section, const std::string& key,
                                bool fallback) const {
    const std::string v = get(section, key);
    if (v.empty()) return fallback;
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw std::invalid_argument("[" + section + "] " + key + ": '" + v + "' is not a boolean");
}

std::vector<std::string> ExperimentConfig::get_list(const std::string& section,
                                                    const std::string& key) const {
    std::vector<std::string> out;
    std::istringstream in(get(section, key));
    std::string tok;
    while (std::getline(in, tok, ',')) {
        tok = trim(tok);
        if (!tok.empty()) out.push_back(tok);
    }
    return out;
}

TrainConfig ExperimentConfig::train_config(const std::string& variant) const {
    TrainConfig base;  // compiled defaults
    auto overlay = [&](const std::string& section) {
        if (!find(section)) return;
        base.epochs = static_cast<int>(get_int(section, "epochs", base.epochs));
        base.batch = static_cast<int>(get_int(section, "batch", base.batch));
        base.lr = get_num(section, "lr", base.lr);
        base.weight_decay = get_num(section, "weight_decay", base.weight_decay);
        base.momentum = get_num(section, "momentum", base.momentum);
        base.decay_factor = get_num(section, "decay_factor", base.decay_factor);
        base.repeats = static_cast<int>(get_int(section, "repeats", base.repeats));
        base.augment = get_bool(section, "augment", base.augment);
        base.blur_sigma = get_num(section, "blur_sigma", base.blur_sigma);
        if (has(section, "milestones")) {
            base.milestones.clear();
            for (const auto& tok : get_list(section, "milestones"))
                base.milestones.push_back(std::stod(tok));
        }
    };
    overlay("train");
    if (!variant.empty()) overlay("train." + variant);
    base.seed = static_cast<uint64_t>(get_int("run", "seed", static_cast<int64_t>(base.seed)));
    base.validate();
    return base;
}

void ExperimentConfig::record_train_config(const std::string& variant, const TrainConfig& cfg) {
    const std::string section = variant.empty() ? "train" : "train." + variant;
    set(section, "epochs", std::to_string(cfg.epochs));
    set(section, "batch", std::to_string(cfg.batch));
    set(section, "lr", CsvWriter::num(cfg.lr));
    set(section, "weight_decay", CsvWriter::num(cfg.weight_decay));
    set(section, "momentum", CsvWriter::num(cfg.momentum));
    std::string ms;
    for (size_t i = 0; i < cfg.milestones.size(); ++i)
        ms += (i ? "," : "") + CsvWriter::num(cfg.milestones[i]);
    set(section, "milestones", ms);
    set(section, "decay_factor", CsvWriter::num(cfg.decay_factor));
    set(section, "repeats", std::to_string(cfg.repeats));
    set(section, "augment", cfg.augment ? "true" : "false");
    set(section, "blur_sigma", CsvWriter::num(cfg.blur_sigma));
}

}  // namespace topdown

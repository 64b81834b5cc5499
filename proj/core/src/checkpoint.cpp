#include "topdown/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

namespace topdown {

static_assert(std::endian::native == std::endian::little,
              "container IO assumes a little-endian host");

namespace {

constexpr char kMagic[4] = {'T', 'D', 'N', '1'};

void put_u32(std::ostream& out, uint32_t v) { out.write(reinterpret_cast<const char*>(&v), 4); }
void put_u64(std::ostream& out, uint64_t v) { out.write(reinterpret_cast<const char*>(&v), 8); }

[[noreturn]] void corrupt(const std::string& path, const std::string& what) {
    throw std::runtime_error("'" + path + "': corrupt container: " + what);
}

// Pairs each batch-norm stats slot with its serialized names, derived from
// the owning gamma parameter ("...bn.gamma" -> "...bn.running_mean").
template <typename T>
std::vector<std::pair<std::string, std::string>> stats_names(const Model<T>& m) {
    std::vector<std::pair<std::string, std::string>> out(m.stats.size());
    auto assign = [&](int slot, const std::string& gamma_name) {
        const std::string prefix = gamma_name.substr(0, gamma_name.rfind(".gamma"));
        out[static_cast<size_t>(slot)] = {prefix + ".running_mean", prefix + ".running_var"};
    };
    for (const auto& op : m.plan) {
        if (op.kind == PlanOp::Kind::bn) assign(op.st[0], m.names[op.p[0]]);
        if (op.kind == PlanOp::Kind::res) {
            assign(op.st[0], m.names[op.p[2]]);
            assign(op.st[1], m.names[op.p[6]]);
        }
    }
    return out;
}

template <typename T>
NamedTensor to_record(const std::string& name, const Tensor<T>& t) {
    NamedTensor r;
    r.name = name;
    r.shape = t.shape();
    if constexpr (std::is_same_v<T, float>) {
        r.dtype = 0;
        r.f32.assign(t.vec().begin(), t.vec().end());
    } else {
        r.dtype = 1;
        r.f64.assign(t.vec().begin(), t.vec().end());
    }
    return r;
}

template <typename T>
void fill_from(Tensor<T>& dst, const NamedTensor& r, const std::string& path) {
    const int want_dtype = std::is_same_v<T, float> ? 0 : 1;
    if (r.dtype != want_dtype)
        throw std::runtime_error("'" + path + "': tensor '" + r.name + "' stored as " +
                                 (r.dtype ? "float64" : "float32") + " but the model expects " +
                                 (want_dtype ? "float64" : "float32"));
    if (r.shape != dst.shape())
        throw std::runtime_error("'" + path + "': tensor '" + r.name + "' has shape " +
                                 shape_str(r.shape) + ", model expects " + shape_str(dst.shape()));
    auto& v = dst.vec();
    for (size_t i = 0; i < v.size(); ++i)
        v[i] = static_cast<T>(r.dtype == 0 ? static_cast<double>(r.f32[i]) : r.f64[i]);
}

}  // namespace

void write_container(const std::string& path, const std::vector<NamedTensor>& records) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write '" + path + "'");
    out.write(kMagic, 4);
    for (const auto& r : records) {
        put_u32(out, static_cast<uint32_t>(r.name.size()));
        out.write(r.name.data(), static_cast<std::streamsize>(r.name.size()));
        const unsigned char dtype = static_cast<unsigned char>(r.dtype);
        const unsigned char rank = static_cast<unsigned char>(r.shape.size());
        out.put(static_cast<char>(dtype));
        out.put(static_cast<char>(rank));
        int64_t n = 1;
        for (auto e : r.shape) {
            put_u64(out, static_cast<uint64_t>(e));
            n *= e;
        }
        if (r.dtype == 0) {
            if (static_cast<int64_t>(r.f32.size()) != n)
                throw std::invalid_argument("record '" + r.name + "' value count mismatch");
            out.write(reinterpret_cast<const char*>(r.f32.data()), n * 4);
        } else {
            if (static_cast<int64_t>(r.f64.size()) != n)
                throw std::invalid_argument("record '" + r.name + "' value count mismatch");
            out.write(reinterpret_cast<const char*>(r.f64.data()), n * 8);
        }
    }
    if (!out) throw std::runtime_error("write to '" + path + "' failed");
}

std::vector<NamedTensor> read_container(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open '" + path + "'");
    char magic[4];
    if (!in.read(magic, 4) || std::string(magic, 4) != std::string(kMagic, 4))
        corrupt(path, "missing TDN1 magic");
    std::vector<NamedTensor> records;
    while (true) {
        uint32_t name_len = 0;
        if (!in.read(reinterpret_cast<char*>(&name_len), 4)) break;  // clean end of file
        NamedTensor r;
        r.name.resize(name_len);
        if (!in.read(r.name.data(), name_len)) corrupt(path, "truncated name");
        unsigned char dtype_rank[2];
        if (!in.read(reinterpret_cast<char*>(dtype_rank), 2)) corrupt(path, "truncated header");
        r.dtype = dtype_rank[0];
        if (r.dtype != 0 && r.dtype != 1)
            corrupt(path, "unknown dtype " + std::to_string(r.dtype) + " for '" + r.name + "'");
        r.shape.resize(dtype_rank[1]);
        int64_t n = 1;
        for (auto& e : r.shape) {
            uint64_t v = 0;
            if (!in.read(reinterpret_cast<char*>(&v), 8)) corrupt(path, "truncated extents");
            e = static_cast<int64_t>(v);
            n *= e;
        }
        if (r.dtype == 0) {
            r.f32.resize(static_cast<size_t>(n));
            if (!in.read(reinterpret_cast<char*>(r.f32.data()), n * 4))
                corrupt(path, "truncated values for '" + r.name + "'");
        } else {
            r.f64.resize(static_cast<size_t>(n));
            if (!in.read(reinterpret_cast<char*>(r.f64.data()), n * 8))
                corrupt(path, "truncated values for '" + r.name + "'");
        }
        records.push_back(std::move(r));
    }
    return records;
}

template <typename T>
void save_model(const Model<T>& model, const std::string& path) {
    std::vector<NamedTensor> records;
    records.reserve(model.params.size() + 2 * model.stats.size());
    for (size_t i = 0; i < model.params.size(); ++i)
        records.push_back(to_record(model.names[i], model.params[i]));
    const auto snames = stats_names(model);
    for (size_t i = 0; i < model.stats.size(); ++i) {
        records.push_back(to_record(snames[i].first, model.stats[i].mean));
        records.push_back(to_record(snames[i].second, model.stats[i].var));
    }
    write_container(path, records);

    std::ofstream arch(path + ".arch", std::ios::trunc);
    if (!arch) throw std::runtime_error("cannot write '" + path + ".arch'");
    arch << print_arch(model.spec);
    if (!arch) throw std::runtime_error("write to '" + path + ".arch' failed");
}

template <typename T>
Model<T> load_model(const std::string& path) {
    std::ifstream arch_in(path + ".arch");
    if (!arch_in) throw std::runtime_error("cannot open '" + path + ".arch'");
    std::stringstream ss;
    ss << arch_in.rdbuf();
    Model<T> m = instantiate<T>(parse_arch(ss.str()), 0);

    std::map<std::string, NamedTensor> by_name;
    for (auto& r : read_container(path)) {
        if (!by_name.emplace(r.name, std::move(r)).second)
            throw std::runtime_error("'" + path + "': duplicate tensor '" + r.name + "'");
    }
    auto consume = [&](const std::string& name) -> NamedTensor {
        auto it = by_name.find(name);
        if (it == by_name.end())
            throw std::runtime_error("'" + path + "': missing tensor '" + name + "'");
        NamedTensor r = std::move(it->second);
        by_name.erase(it);
        return r;
    };
    for (size_t i = 0; i < m.params.size(); ++i) fill_from(m.params[i], consume(m.names[i]), path);
    const auto snames = stats_names(m);
    for (size_t i = 0; i < m.stats.size(); ++i) {
        fill_from(m.stats[i].mean, consume(snames[i].first), path);
        fill_from(m.stats[i].var, consume(snames[i].second), path);
    }
    if (!by_name.empty()) {
        std::ostringstream os;
        os << "'" << path << "': container holds " << by_name.size()
           << " tensor(s) the model does not use:";
        for (const auto& [k, v] : by_name) os << " '" << k << "'";
        throw std::runtime_error(os.str());
    }
    return m;
}

template void save_model<float>(const Model<float>&, const std::string&);
template void save_model<double>(const Model<double>&, const std::string&);
template Model<float> load_model<float>(const std::string&);
template Model<double> load_model<double>(const std::string&);

}  // namespace topdown

#include "topdown/arch.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "topdown/layers.hpp"

namespace topdown {

std::string arrangement_name(Arrangement a) {
    switch (a) {
        case Arrangement::mirror: return "mirror";
        case Arrangement::uniform: return "uniform";
        case Arrangement::reversed: return "reversed";
    }
    return "?";
}

Arrangement arrangement_from_name(const std::string& name) {
    if (name == "mirror") return Arrangement::mirror;
    if (name == "uniform") return Arrangement::uniform;
    if (name == "reversed") return Arrangement::reversed;
    throw std::invalid_argument("unknown arrangement '" + name +
                                "' (expected mirror|uniform|reversed)");
}

namespace {

// Spatial extent after a same-padded window of stride s.
int strided(int extent, int s) { return (extent + s - 1) / s; }

}  // namespace

void validate(const ArchSpec& spec) {
    if (spec.name.empty()) throw std::invalid_argument("arch: empty name");
    if (spec.in_c < 1 || spec.in_h < 1 || spec.in_w < 1)
        throw std::invalid_argument("arch '" + spec.name + "': invalid input shape");
    if (spec.classes < 2) throw std::invalid_argument("arch '" + spec.name + "': classes < 2");
    if (spec.stages.empty()) throw std::invalid_argument("arch '" + spec.name + "': no stages");
    if (spec.transitions.size() + 1 != spec.stages.size())
        throw std::invalid_argument("arch '" + spec.name + "': transition count " +
                                    std::to_string(spec.transitions.size()) + " != stages-1");
    for (const auto& st : spec.stages) {
        if (st.layers.empty())
            throw std::invalid_argument("arch '" + spec.name + "': empty stage");
        for (const auto& l : st.layers)
            if (l.k < 1 || l.s < 1 || l.f < 1)
                throw std::invalid_argument("arch '" + spec.name +
                                            "': layer k, s, f must be positive");
    }
    for (const auto& tr : spec.transitions) {
        if (spec.kind == NetKind::bottom_up && tr.kind != Transition::Kind::pool2)
            throw std::invalid_argument("arch '" + spec.name +
                                        "': bottom-up specs use pool2 transitions");
        if (spec.kind == NetKind::top_down && tr.kind != Transition::Kind::merge)
            throw std::invalid_argument("arch '" + spec.name +
                                        "': top-down specs use merge transitions");
        if (tr.kind == Transition::Kind::merge && tr.merge_f < 1)
            throw std::invalid_argument("arch '" + spec.name + "': merge width must be positive");
    }
    stage_resolutions(spec);  // throws on resolution underflow
}

std::vector<std::pair<int, int>> stage_resolutions(const ArchSpec& spec) {
    std::vector<std::pair<int, int>> out;
    int h, w;
    if (spec.kind == NetKind::bottom_up) {
        h = spec.in_h;
        w = spec.in_w;
    } else {
        // Top-down execution starts at the lowest pyramid level.
        const int down = static_cast<int>(spec.stages.size()) - 1;
        h = spec.in_h;
        w = spec.in_w;
        for (int i = 0; i < down; ++i) {
            if (h % 2 != 0 || w % 2 != 0)
                throw std::invalid_argument("arch '" + spec.name +
                                            "': pyramid level extents must halve exactly");
            h /= 2;
            w /= 2;
        }
    }
    for (size_t i = 0; i < spec.stages.size(); ++i) {
        out.emplace_back(h, w);
        for (const auto& l : spec.stages[i].layers) {
            h = strided(h, l.s);
            w = strided(w, l.s);
            if (h < 1 || w < 1)
                throw std::invalid_argument("arch '" + spec.name +
                                            "': resolution underflow inside stage " +
                                            std::to_string(i + 1));
        }
        if (i < spec.transitions.size()) {
            if (spec.transitions[i].kind == Transition::Kind::pool2) {
                if (h % 2 != 0 || w % 2 != 0 || h < 2 || w < 2)
                    throw std::invalid_argument("arch '" + spec.name +
                                                "': pool2 needs even extents, has " +
                                                std::to_string(h) + "x" + std::to_string(w));
                h /= 2;
                w /= 2;
            } else {
                h *= 2;
                w *= 2;
            }
        }
    }
    return out;
}

int resolution_count(const ArchSpec& spec) {
    // Chain specs change resolution only at transitions; strided layers
    // (residual groups) add further distinct resolutions.
    std::vector<std::pair<int, int>> seen;
    int h = spec.in_h, w = spec.in_w;
    if (spec.kind == NetKind::top_down) {
        const auto res = stage_resolutions(spec);
        h = res.front().first;
        w = res.front().second;
    }
    seen.emplace_back(h, w);
    for (size_t i = 0; i < spec.stages.size(); ++i) {
        for (const auto& l : spec.stages[i].layers) {
            h = strided(h, l.s);
            w = strided(w, l.s);
            if (std::find(seen.begin(), seen.end(), std::make_pair(h, w)) == seen.end())
                seen.emplace_back(h, w);
        }
        if (i < spec.transitions.size()) {
            if (spec.transitions[i].kind == Transition::Kind::pool2) {
                h /= 2;
                w /= 2;
            } else {
                h *= 2;
                w *= 2;
            }
            if (std::find(seen.begin(), seen.end(), std::make_pair(h, w)) == seen.end())
                seen.emplace_back(h, w);
        }
    }
    return static_cast<int>(seen.size());
}

int uniform_width(const ArchSpec& spec) {
    double total = 0;
    int count = 0;
    for (const auto& st : spec.stages)
        for (const auto& l : st.layers) {
            total += l.f;
            ++count;
        }
    return static_cast<int>(std::lround(total / count));
}

MirrorResult mirror(const ArchSpec& spec, Arrangement arrangement) {
    validate(spec);
    if (spec.kind != NetKind::bottom_up)
        throw std::invalid_argument("mirror: '" + spec.name + "' is not a bottom-up spec");
    for (const auto& st : spec.stages)
        for (const auto& l : st.layers)
            if (l.kind != LayerSpec::Kind::conv)
                throw std::invalid_argument(
                    "mirror: '" + spec.name +
                    "' contains residual blocks; only plain pool-marker chains are mirrorable");

    MirrorResult result;
    ArchSpec& td = result.spec;
    td.kind = NetKind::top_down;
    td.in_c = spec.in_c;
    td.in_h = spec.in_h;
    td.in_w = spec.in_w;
    td.classes = spec.classes;
    switch (arrangement) {
        case Arrangement::mirror: td.name = spec.name + "_td"; break;
        case Arrangement::uniform: td.name = spec.name + "_td_uni"; break;
        case Arrangement::reversed: td.name = spec.name + "_td_rev"; break;
    }

    if (spec.transitions.empty())
        result.warnings.push_back("spec '" + spec.name +
                                  "' has no downsampling: the mirrored network equals the "
                                  "baseline and has nothing to merge");

    // Full reversal of the layer sequence; stage boundaries mirror too.
    const size_t n = spec.stages.size();
    std::vector<int> bu_widths;  // conv widths in baseline order
    for (const auto& st : spec.stages)
        for (const auto& l : st.layers) bu_widths.push_back(l.f);

    td.stages.resize(n);
    for (size_t i = 0; i < n; ++i) {
        const StageSpec& src = spec.stages[n - 1 - i];
        StageSpec& dst = td.stages[i];
        dst.layers.assign(src.layers.rbegin(), src.layers.rend());
    }

    // Width assignment over the reversed conv sequence.
    const int uni = uniform_width(spec);
    size_t pos = 0;
    for (auto& st : td.stages)
        for (auto& l : st.layers) {
            switch (arrangement) {
                case Arrangement::mirror: break;  // widths travel with their convs
                case Arrangement::uniform: l.f = uni; break;
                case Arrangement::reversed: l.f = bu_widths[pos]; break;
            }
            ++pos;
        }

    // Merge points replace the (reversed) pool markers; the merge output
    // width is the consuming stage's first conv width.
    td.transitions.resize(spec.transitions.size());
    for (size_t i = 0; i < td.transitions.size(); ++i) {
        td.transitions[i].kind = Transition::Kind::merge;
        td.transitions[i].merge_f = td.stages[i + 1].layers.front().f;
    }

    validate(td);
    return result;
}

int64_t param_count(const ArchSpec& spec) {
    validate(spec);
    int64_t total = 0;
    int64_t c = spec.in_c;
    for (size_t i = 0; i < spec.stages.size(); ++i) {
        for (const auto& l : spec.stages[i].layers) {
            const int64_t k2 = static_cast<int64_t>(l.k) * l.k;
            if (l.kind == LayerSpec::Kind::conv) {
                total += k2 * c * l.f + l.f;
                if (l.bn) total += 2 * l.f;
                c = l.f;
            } else {
                // Residual pair: conv(k, stride s) + conv(k, stride 1), each
                // batch-normalized, plus a biased 1x1 projection when the
                // shortcut changes shape.
                total += k2 * c * l.f + l.f + 2 * l.f;
                total += k2 * static_cast<int64_t>(l.f) * l.f + l.f + 2 * l.f;
                if (l.s != 1 || c != l.f) total += c * l.f + l.f;
                c = l.f;
            }
        }
        if (i < spec.transitions.size() && spec.transitions[i].kind == Transition::Kind::merge) {
            const int64_t cout = spec.transitions[i].merge_f;
            total += merge_param_count(c, spec.in_c, cout);
            c = cout;
        }
    }
    total += c * spec.classes + spec.classes;  // head: GAP + 1x1 conv
    return total;
}

std::string print_arch(const ArchSpec& spec) {
    std::ostringstream os;
    os << "name " << spec.name << "\n";
    os << "kind " << (spec.kind == NetKind::bottom_up ? "bu" : "td") << "\n";
    os << "input " << spec.in_c << " " << spec.in_h << " " << spec.in_w << "\n";
    os << "classes " << spec.classes << "\n";
    for (size_t i = 0; i < spec.stages.size(); ++i) {
        if (i > 0) {
            const Transition& tr = spec.transitions[i - 1];
            if (tr.kind == Transition::Kind::pool2)
                os << "pool2\n";
            else
                os << "merge " << tr.merge_f << "\n";
        }
        for (const auto& l : spec.stages[i].layers) {
            if (l.kind == LayerSpec::Kind::conv) {
                os << "conv " << l.k << " " << l.s << " " << l.f;
                if (l.bn) os << " bn";
                if (l.relu) os << " relu";
                os << "\n";
            } else {
                os << "res " << l.k << " " << l.s << " " << l.f << "\n";
            }
        }
    }
    os << "head\n";
    return os.str();
}

namespace {

[[noreturn]] void parse_fail(size_t line, size_t col, const std::string& msg) {
    throw std::invalid_argument("arch parse error at line " + std::to_string(line) + ", column " +
                                std::to_string(col) + ": " + msg);
}

struct Splitter {
    std::vector<std::string> tokens;
    std::vector<size_t> cols;  // 1-based column of each token
};

Splitter split_tokens(const std::string& line) {
    Splitter s;
    size_t i = 0;
    while (i < line.size()) {
        while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
        if (i >= line.size() || line[i] == '#') break;
        size_t start = i;
        while (i < line.size() && !std::isspace(static_cast<unsigned char>(line[i]))) ++i;
        s.tokens.push_back(line.substr(start, i - start));
        s.cols.push_back(start + 1);
    }
    return s;
}

int parse_int(const std::string& tok, size_t line, size_t col) {
    try {
        size_t used = 0;
        const int v = std::stoi(tok, &used);
        if (used != tok.size()) throw std::invalid_argument("");
        return v;
    } catch (...) {
        parse_fail(line, col, "expected an integer, got '" + tok + "'");
    }
}

}  // namespace

ArchSpec parse_arch(const std::string& text) {
    ArchSpec spec;
    bool saw_name = false, saw_kind = false, saw_input = false, saw_classes = false,
         saw_head = false;
    bool stage_open = false;

    std::istringstream is(text);
    std::string line;
    size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        Splitter sp = split_tokens(line);
        if (sp.tokens.empty()) continue;
        const std::string& kw = sp.tokens[0];
        auto need = [&](size_t n, const char* what) {
            if (sp.tokens.size() < n)
                parse_fail(lineno, sp.cols[0], std::string("'") + kw + "' needs " + what);
        };
        if (saw_head) parse_fail(lineno, sp.cols[0], "content after 'head'");
        if (kw == "name") {
            need(2, "a value");
            spec.name = sp.tokens[1];
            saw_name = true;
        } else if (kw == "kind") {
            need(2, "bu or td");
            if (sp.tokens[1] == "bu")
                spec.kind = NetKind::bottom_up;
            else if (sp.tokens[1] == "td")
                spec.kind = NetKind::top_down;
            else
                parse_fail(lineno, sp.cols[1], "kind must be 'bu' or 'td'");
            saw_kind = true;
        } else if (kw == "input") {
            need(4, "C H W");
            spec.in_c = parse_int(sp.tokens[1], lineno, sp.cols[1]);
            spec.in_h = parse_int(sp.tokens[2], lineno, sp.cols[2]);
            spec.in_w = parse_int(sp.tokens[3], lineno, sp.cols[3]);
            saw_input = true;
        } else if (kw == "classes") {
            need(2, "K");
            spec.classes = parse_int(sp.tokens[1], lineno, sp.cols[1]);
            saw_classes = true;
        } else if (kw == "conv" || kw == "res") {
            need(4, "k s f");
            LayerSpec l;
            l.kind = (kw == "conv") ? LayerSpec::Kind::conv : LayerSpec::Kind::res;
            l.k = parse_int(sp.tokens[1], lineno, sp.cols[1]);
            l.s = parse_int(sp.tokens[2], lineno, sp.cols[2]);
            l.f = parse_int(sp.tokens[3], lineno, sp.cols[3]);
            for (size_t i = 4; i < sp.tokens.size(); ++i) {
                if (sp.tokens[i] == "bn" && l.kind == LayerSpec::Kind::conv)
                    l.bn = true;
                else if (sp.tokens[i] == "relu" && l.kind == LayerSpec::Kind::conv)
                    l.relu = true;
                else
                    parse_fail(lineno, sp.cols[i], "unknown flag '" + sp.tokens[i] + "'");
            }
            if (!stage_open) {
                spec.stages.emplace_back();
                stage_open = true;
            }
            spec.stages.back().layers.push_back(l);
        } else if (kw == "pool2" || kw == "merge") {
            if (!stage_open) parse_fail(lineno, sp.cols[0], "transition before any layer");
            Transition tr;
            if (kw == "pool2") {
                tr.kind = Transition::Kind::pool2;
            } else {
                need(2, "an output width");
                tr.kind = Transition::Kind::merge;
                tr.merge_f = parse_int(sp.tokens[1], lineno, sp.cols[1]);
            }
            spec.transitions.push_back(tr);
            stage_open = false;  // next layer line opens the following stage
        } else if (kw == "head") {
            saw_head = true;
        } else {
            parse_fail(lineno, sp.cols[0], "unknown directive '" + kw + "'");
        }
    }
    if (!saw_name) parse_fail(lineno + 1, 1, "missing 'name'");
    if (!saw_kind) parse_fail(lineno + 1, 1, "missing 'kind'");
    if (!saw_input) parse_fail(lineno + 1, 1, "missing 'input'");
    if (!saw_classes) parse_fail(lineno + 1, 1, "missing 'classes'");
    if (!saw_head) parse_fail(lineno + 1, 1, "missing 'head'");
    validate(spec);
    return spec;
}

ArchSpec builtin_spec(const std::string& name) {
    auto conv = [](int k, int f) {
        LayerSpec l;
        l.kind = LayerSpec::Kind::conv;
        l.k = k;
        l.s = 1;
        l.f = f;
        l.bn = true;
        l.relu = true;
        return l;
    };
    auto res = [](int k, int s, int f) {
        LayerSpec l;
        l.kind = LayerSpec::Kind::res;
        l.k = k;
        l.s = s;
        l.f = f;
        return l;
    };
    auto pool = []() {
        Transition t;
        t.kind = Transition::Kind::pool2;
        return t;
    };

    ArchSpec spec;
    if (name == "lenetfc") {
        // Fully convolutional LeNet-family baseline: three conv stages
        // separated by mean pools, GAP head.
        spec.name = "lenetfc";
        spec.in_c = 1;
        spec.in_h = spec.in_w = 28;
        spec.classes = 10;
        spec.stages.resize(3);
        spec.stages[0].layers = {conv(5, 6)};
        spec.stages[1].layers = {conv(5, 16)};
        spec.stages[2].layers = {conv(3, 32)};
        spec.transitions = {pool(), pool()};
    } else if (name == "nin_light" || name == "nin") {
        // Network-in-network: stages of one spatial conv followed by two
        // 1x1 convs; the light variant divides all widths by 4.
        const int d = (name == "nin_light") ? 4 : 1;
        spec.name = name;
        spec.in_c = 3;
        spec.in_h = spec.in_w = 32;
        spec.classes = 10;
        spec.stages.resize(3);
        spec.stages[0].layers = {conv(5, 192 / d), conv(1, 160 / d), conv(1, 96 / d)};
        spec.stages[1].layers = {conv(5, 192 / d), conv(1, 192 / d), conv(1, 192 / d)};
        spec.stages[2].layers = {conv(3, 192 / d), conv(1, 192 / d)};
        spec.transitions = {pool(), pool()};
    } else if (name == "resnet32") {
        // Depth-32 residual chain: one stem conv, three groups of five
        // residual pairs at widths 16/32/64 with stride-2 group entries.
        // Shipped for parameter accounting and receptive-field analysis;
        // not mirrorable (stride-based downsampling).
        spec.name = "resnet32";
        spec.in_c = 3;
        spec.in_h = spec.in_w = 32;
        spec.classes = 10;
        spec.stages.resize(1);
        auto& layers = spec.stages[0].layers;
        layers.push_back(conv(3, 16));
        for (int g = 0; g < 3; ++g) {
            const int f = 16 << g;
            for (int b = 0; b < 5; ++b) layers.push_back(res(3, (g > 0 && b == 0) ? 2 : 1, f));
        }
    } else {
        throw std::invalid_argument("unknown builtin spec '" + name +
                                    "' (available: lenetfc, nin_light, nin, resnet32)");
    }
    validate(spec);
    return spec;
}

std::vector<std::string> builtin_names() { return {"lenetfc", "nin_light", "nin", "resnet32"}; }

}  // namespace topdown

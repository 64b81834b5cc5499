#include "topdown/erf.hpp"

#include <algorithm>
#include <sstream>

#include "topdown/arch.hpp"

namespace topdown {

ErfState erf_step(const ErfState& state, int k, int s) {
    if (k < 1 || s < 1) throw std::invalid_argument("erf_step: k and s must be >= 1");
    return erf_step_sym(state, SigmaAffine(Rational(k)), Rational(s));
}

ErfState erf_step_sym(const ErfState& state, const SigmaAffine& k, const Rational& s) {
    ErfState next;
    // r' = r + (k - 1) * m
    SigmaAffine km1{k.a - Rational(1), k.b};
    next.r = state.r + km1 * state.m;
    next.m = state.m * s;
    return next;
}

ErfSet erf_set_step(const ErfSet& s, const SigmaAffine& k, const Rational& stride) {
    ErfSet next;
    next.m = s.m * stride;
    SigmaAffine km1{k.a - Rational(1), k.b};
    for (const auto& r : s.rs) next.rs.push_back(r + km1 * s.m);
    return next;
}

namespace {

void sort_dedupe(std::vector<SigmaAffine>& rs) {
    std::sort(rs.begin(), rs.end(), [](const SigmaAffine& x, const SigmaAffine& y) {
        if (x.b != y.b) return x.b < y.b;
        return x.a < y.a;
    });
    rs.erase(std::unique(rs.begin(), rs.end()), rs.end());
}

}  // namespace

ErfSet erf_set_union(const ErfSet& a, const ErfSet& b) {
    if (a.m != b.m)
        throw std::invalid_argument("erf_set_union: cumulative strides differ (" + a.m.str() +
                                    " vs " + b.m.str() + ")");
    ErfSet out;
    out.m = a.m;
    out.rs = a.rs;
    out.rs.insert(out.rs.end(), b.rs.begin(), b.rs.end());
    sort_dedupe(out.rs);
    return out;
}

namespace {

const SigmaAffine kBlurWindow{Rational(1), Rational(6)};  // k = 6*sigma + 1

// Pyramid-branch reconstruction for one octave: a stride-2 window (k=2)
// followed by the blur window at the reduced resolution. Reproduces the
// documented input-level receptive fields of the blurred pyramid.
ErfSet pyramid_prefix(int octaves, std::vector<ErfRow>* rows, const std::string& branch) {
    ErfSet s;
    s.rs = {SigmaAffine(Rational(1))};
    for (int i = 0; i < octaves; ++i) {
        s = erf_set_step(s, SigmaAffine(Rational(2)), Rational(2));
        if (rows) rows->push_back({branch + ".down2", s.rs, s.m});
        s = erf_set_step(s, kBlurWindow, Rational(1));
        if (rows) rows->push_back({branch + ".blur", s.rs, s.m});
    }
    return s;
}

void stage_rows(const ArchSpec& spec, size_t stage_idx, ErfSet& s, std::vector<ErfRow>* rows) {
    const StageSpec& st = spec.stages[stage_idx];
    for (size_t li = 0; li < st.layers.size(); ++li) {
        const LayerSpec& l = st.layers[li];
        const std::string label =
            "stage" + std::to_string(stage_idx + 1) + ".layer" + std::to_string(li + 1);
        if (l.kind == LayerSpec::Kind::conv) {
            s = erf_set_step(s, SigmaAffine(Rational(l.k)), Rational(l.s));
            if (rows) rows->push_back({label + ".conv" + std::to_string(l.k), s.rs, s.m});
        } else {
            // Residual pair: union of the shortcut path and the two-conv path.
            ErfSet conv_path = erf_set_step(s, SigmaAffine(Rational(l.k)), Rational(l.s));
            conv_path = erf_set_step(conv_path, SigmaAffine(Rational(l.k)), Rational(1));
            ErfSet skip = erf_set_step(s, SigmaAffine(Rational(1)), Rational(l.s));
            s = erf_set_union(conv_path, skip);
            if (rows) rows->push_back({label + ".res" + std::to_string(l.k), s.rs, s.m});
        }
    }
}

}  // namespace

std::vector<ErfRow> erf_report(const ArchSpec& spec) {
    validate(spec);
    std::vector<ErfRow> rows;

    if (spec.kind == NetKind::bottom_up) {
        ErfSet s;
        s.rs = {SigmaAffine(Rational(1))};
        for (size_t i = 0; i < spec.stages.size(); ++i) {
            stage_rows(spec, i, s, &rows);
            if (i < spec.transitions.size()) {
                s = erf_set_step(s, SigmaAffine(Rational(2)), Rational(2));
                rows.push_back({"pool2", s.rs, s.m});
            }
        }
        return rows;
    }

    // Top-down: the trunk starts at the lowest pyramid level; each merge
    // unions in a fresh higher-resolution branch. Receptive fields are
    // measured in full-resolution input pixels throughout.
    const int n = static_cast<int>(spec.stages.size());
    ErfSet trunk = pyramid_prefix(n - 1, &rows, "input" + std::to_string(n - 1));
    for (int i = 0; i < n; ++i) {
        stage_rows(spec, static_cast<size_t>(i), trunk, &rows);
        if (i < n - 1) {
            const std::string label = "merge" + std::to_string(i + 1);
            // Nearest upsample: a k=2 window with stride 1/2.
            trunk = erf_set_step(trunk, SigmaAffine(Rational(2)), Rational(1, 2));
            rows.push_back({label + ".upsample", trunk.rs, trunk.m});
            // The 1x1 projection leaves r unchanged; the high branch enters
            // here: the reported set (before the trailing 3x3) is the bound.
            const int branch_octaves = n - 2 - i;
            ErfSet branch = pyramid_prefix(branch_octaves, nullptr,
                                           "input" + std::to_string(branch_octaves));
            trunk = erf_set_union(trunk, branch);
            rows.push_back({label + ".join", trunk.rs, trunk.m});
            trunk = erf_set_step(trunk, SigmaAffine(Rational(3)), Rational(1));
            rows.push_back({label + ".conv3", trunk.rs, trunk.m});
        }
    }
    return rows;
}

std::string erf_table_text(const std::vector<ErfRow>& rows) {
    size_t width = 5;
    for (const auto& r : rows) width = std::max(width, r.layer.size());
    std::ostringstream os;
    os << "layer";
    os << std::string(width - 5, ' ') << "  r (input pixels; s = blur sigma)  m\n";
    for (const auto& r : rows) {
        os << r.layer << std::string(width - r.layer.size(), ' ') << "  ";
        std::string rs = "{";
        for (size_t i = 0; i < r.rs.size(); ++i) {
            if (i) rs += ", ";
            rs += r.rs[i].str();
        }
        rs += "}";
        os << rs << "  " << r.m.str() << "\n";
    }
    return os.str();
}

}  // namespace topdown

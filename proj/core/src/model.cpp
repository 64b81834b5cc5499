#include "topdown/model.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

#include "topdown/ops.hpp"

namespace topdown {

namespace {

template <typename T>
Tensor<T> he_uniform(Rng& rng, const Shape& shape, int64_t fan_in) {
    Tensor<T> w = Tensor<T>::zeros(shape);
    const T bound = static_cast<T>(std::sqrt(6.0 / static_cast<double>(fan_in)));
    auto& v = w.vec();
    for (auto& x : v) x = static_cast<T>(rng.uniform(-bound, bound));
    return w;
}

// Builder state shared by the per-layer emitters.
template <typename T>
struct Builder {
    Model<T>& m;
    Rng rng;

    int add_param(const std::string& name, Tensor<T> t) {
        t.set_requires_grad(true);
        m.names.push_back(name);
        m.params.push_back(std::move(t));
        return static_cast<int>(m.params.size()) - 1;
    }
    int add_stats(int64_t channels) {
        m.stats.push_back(BnStats<T>{Tensor<T>::zeros({channels}), Tensor<T>::filled({channels}, T(1))});
        return static_cast<int>(m.stats.size()) - 1;
    }
    // conv + optional bn/relu; returns the new channel count.
    int emit_conv(const std::string& prefix, const LayerSpec& l, int c) {
        PlanOp conv;
        conv.kind = PlanOp::Kind::conv;
        conv.k = l.k;
        conv.stride = l.s;
        conv.pad = l.k / 2;
        conv.p = {add_param(prefix + ".weight", he_uniform<T>(rng, {l.f, c, l.k, l.k}, int64_t(l.k) * l.k * c)),
                  add_param(prefix + ".bias", Tensor<T>::zeros({l.f}))};
        m.plan.push_back(conv);
        if (l.bn) {
            PlanOp bn;
            bn.kind = PlanOp::Kind::bn;
            bn.p = {add_param(prefix + ".bn.gamma", Tensor<T>::filled({l.f}, T(1))),
                    add_param(prefix + ".bn.beta", Tensor<T>::zeros({l.f}))};
            bn.st = {add_stats(l.f)};
            m.plan.push_back(bn);
        }
        if (l.relu) {
            PlanOp act;
            act.kind = PlanOp::Kind::relu;
            m.plan.push_back(act);
        }
        return l.f;
    }
    int emit_res(const std::string& prefix, const LayerSpec& l, int c) {
        PlanOp res;
        res.kind = PlanOp::Kind::res;
        res.k = l.k;
        res.stride = l.s;
        res.pad = l.k / 2;
        res.p = {add_param(prefix + ".conv1.weight", he_uniform<T>(rng, {l.f, c, l.k, l.k}, int64_t(l.k) * l.k * c)),
                 add_param(prefix + ".conv1.bias", Tensor<T>::zeros({l.f})),
                 add_param(prefix + ".bn1.gamma", Tensor<T>::filled({l.f}, T(1))),
                 add_param(prefix + ".bn1.beta", Tensor<T>::zeros({l.f})),
                 add_param(prefix + ".conv2.weight", he_uniform<T>(rng, {l.f, l.f, l.k, l.k}, int64_t(l.k) * l.k * l.f)),
                 add_param(prefix + ".conv2.bias", Tensor<T>::zeros({l.f})),
                 add_param(prefix + ".bn2.gamma", Tensor<T>::filled({l.f}, T(1))),
                 add_param(prefix + ".bn2.beta", Tensor<T>::zeros({l.f}))};
        res.st = {add_stats(l.f), add_stats(l.f)};
        if (l.s != 1 || c != l.f) {
            res.p.push_back(add_param(prefix + ".proj.weight", he_uniform<T>(rng, {l.f, c, 1, 1}, c)));
            res.p.push_back(add_param(prefix + ".proj.bias", Tensor<T>::zeros({l.f})));
        }
        m.plan.push_back(res);
        return l.f;
    }
    void emit_merge(const std::string& prefix, int low_c, int high_c, int out_c, int branch) {
        PlanOp op;
        op.kind = PlanOp::Kind::merge;
        op.branch = branch;
        op.p = {add_param(prefix + ".conv1x1.weight", he_uniform<T>(rng, {high_c, low_c, 1, 1}, low_c)),
                add_param(prefix + ".conv1x1.bias", Tensor<T>::zeros({high_c})),
                add_param(prefix + ".conv3x3.weight",
                          he_uniform<T>(rng, {out_c, 2 * high_c, 3, 3}, int64_t(9) * 2 * high_c)),
                add_param(prefix + ".conv3x3.bias", Tensor<T>::zeros({out_c}))};
        m.plan.push_back(op);
    }
};

}  // namespace

template <typename T>
Model<T> instantiate(const ArchSpec& spec, uint64_t seed) {
    validate(spec);
    Model<T> m;
    m.spec = spec;
    Builder<T> b{m, Rng(seed)};

    const int n = static_cast<int>(spec.stages.size());
    const bool td = spec.kind == NetKind::top_down;
    m.arity = td ? n : 1;
    m.input_extents.clear();
    for (int i = 0; i < m.arity; ++i)
        m.input_extents.push_back({spec.in_h >> i, spec.in_w >> i});

    PlanOp in;
    in.branch = m.arity - 1;
    m.plan.push_back(in);

    int c = spec.in_c;
    for (int s = 0; s < n; ++s) {
        const auto& stage = spec.stages[s];
        for (size_t l = 0; l < stage.layers.size(); ++l) {
            std::ostringstream prefix;
            prefix << "stage" << (s + 1) << ".layer" << (l + 1);
            const LayerSpec& layer = stage.layers[l];
            c = layer.kind == LayerSpec::Kind::res ? b.emit_res(prefix.str(), layer, c)
                                                   : b.emit_conv(prefix.str(), layer, c);
        }
        if (s + 1 < n) {
            const Transition& t = spec.transitions[s];
            if (t.kind == Transition::Kind::pool2) {
                PlanOp pool;
                pool.kind = PlanOp::Kind::pool2;
                m.plan.push_back(pool);
            } else {
                // The incoming pyramid level has the same channel count as
                // the lowest-resolution input.
                const int high_c = spec.in_c;
                b.emit_merge("merge" + std::to_string(s + 1), c, high_c, t.merge_f,
                             m.arity - 2 - s);
                c = t.merge_f;
            }
        }
    }
    PlanOp gap;
    gap.kind = PlanOp::Kind::gap;
    m.plan.push_back(gap);

    PlanOp head;
    head.kind = PlanOp::Kind::head;
    head.k = 1;
    head.p = {b.add_param("head.weight", he_uniform<T>(b.rng, {spec.classes, c, 1, 1}, c)),
              b.add_param("head.bias", Tensor<T>::zeros({spec.classes}))};
    m.plan.push_back(head);
    return m;
}

template <typename T>
int Model<T>::param_index(const std::string& name) const {
    for (size_t i = 0; i < names.size(); ++i)
        if (names[i] == name) return static_cast<int>(i);
    throw std::invalid_argument("model has no parameter named '" + name + "'");
}

template <typename T>
std::vector<int> Model<T>::stage_boundary_points() const {
    std::vector<int> pts = {0};
    for (size_t i = 0; i + 1 < plan.size(); ++i) {
        const auto next = plan[i + 1].kind;
        if (next == PlanOp::Kind::pool2 || next == PlanOp::Kind::merge || next == PlanOp::Kind::gap)
            pts.push_back(static_cast<int>(i));
    }
    return pts;
}

template <typename T>
int Model<T>::last_conv_point() const {
    return stage_boundary_points().back();
}

template <typename T>
std::pair<int, int> Model<T>::extent_at(int point) const {
    if (point < 0 || point >= static_cast<int>(plan.size()))
        throw std::invalid_argument("capture point " + std::to_string(point) + " out of range");
    auto conv_out = [](int x, int k, int s, int p) { return (x + 2 * p - k) / s + 1; };
    int h = 0, w = 0;
    for (int i = 0; i <= point; ++i) {
        const PlanOp& op = plan[i];
        switch (op.kind) {
            case PlanOp::Kind::input:
                h = input_extents[op.branch].first;
                w = input_extents[op.branch].second;
                break;
            case PlanOp::Kind::conv:
            case PlanOp::Kind::res:
                h = conv_out(h, op.k, op.stride, op.pad);
                w = conv_out(w, op.k, op.stride, op.pad);
                break;
            case PlanOp::Kind::pool2:
                h /= 2;
                w /= 2;
                break;
            case PlanOp::Kind::merge:
                h *= 2;
                w *= 2;
                break;
            case PlanOp::Kind::gap:
            case PlanOp::Kind::head:
                h = 1;
                w = 1;
                break;
            case PlanOp::Kind::bn:
            case PlanOp::Kind::relu:
                break;
        }
    }
    return {h, w};
}

namespace {

template <typename T>
void check_inputs(const Model<T>& m, const std::vector<Tensor<T>>& inputs) {
    if (static_cast<int>(inputs.size()) != m.arity) {
        std::ostringstream os;
        os << "model '" << m.spec.name << "' expects " << m.arity << " input"
           << (m.arity == 1 ? "" : "s (pyramid, highest resolution first)") << ", got "
           << inputs.size();
        throw std::invalid_argument(os.str());
    }
    int64_t batch = -1;
    for (int i = 0; i < m.arity; ++i) {
        const auto& s = inputs[i].shape();
        if (s.size() != 4)
            throw std::invalid_argument("input " + std::to_string(i) + " must be rank-4 NCHW, got " +
                                        shape_str(s));
        if (batch < 0) batch = s[0];
        const auto [eh, ew] = m.input_extents[i];
        if (s[0] != batch || s[1] != m.spec.in_c || s[2] != eh || s[3] != ew) {
            std::ostringstream os;
            os << "input " << i << " has shape " << shape_str(s) << "; expected ladder:";
            for (int j = 0; j < m.arity; ++j)
                os << " [" << batch << "," << m.spec.in_c << "," << m.input_extents[j].first << ","
                   << m.input_extents[j].second << "]";
            throw std::invalid_argument(os.str());
        }
    }
}

template <typename T>
Tensor<T> run_res(Model<T>& m, const PlanOp& op, const Tensor<T>& x, bool train) {
    const auto& P = m.params;
    Tensor<T> t = conv2d(x, P[op.p[0]], P[op.p[1]], op.stride, op.pad);
    t = batch_norm(t, P[op.p[2]], P[op.p[3]], m.stats[op.st[0]].mean, m.stats[op.st[0]].var, train);
    t = relu(t);
    t = conv2d(t, P[op.p[4]], P[op.p[5]], 1, op.pad);
    t = batch_norm(t, P[op.p[6]], P[op.p[7]], m.stats[op.st[1]].mean, m.stats[op.st[1]].var, train);
    Tensor<T> skip = op.p.size() > 8 ? conv2d(x, P[op.p[8]], P[op.p[9]], op.stride, 0) : x;
    return relu(add(t, skip));
}

}  // namespace

template <typename T>
Tensor<T> forward_captures(Model<T>& m, const std::vector<Tensor<T>>& inputs, bool train,
                           const std::vector<int>& points, std::vector<Tensor<T>>* captured) {
    check_inputs(m, inputs);
    if (captured) captured->assign(points.size(), Tensor<T>{});
    Tensor<T> cur;
    for (size_t i = 0; i < m.plan.size(); ++i) {
        const PlanOp& op = m.plan[i];
        const auto& P = m.params;
        switch (op.kind) {
            case PlanOp::Kind::input:
                cur = inputs[op.branch];
                break;
            case PlanOp::Kind::conv:
                cur = conv2d(cur, P[op.p[0]], P[op.p[1]], op.stride, op.pad);
                break;
            case PlanOp::Kind::bn:
                cur = batch_norm(cur, P[op.p[0]], P[op.p[1]], m.stats[op.st[0]].mean,
                                 m.stats[op.st[0]].var, train);
                break;
            case PlanOp::Kind::relu:
                cur = relu(cur);
                break;
            case PlanOp::Kind::pool2:
                cur = avg_pool2(cur);
                break;
            case PlanOp::Kind::merge: {
                MergeBlock<T> block{P[op.p[0]], P[op.p[1]], P[op.p[2]], P[op.p[3]]};
                cur = merge(cur, inputs[op.branch], block);
                break;
            }
            case PlanOp::Kind::res:
                cur = run_res(m, op, cur, train);
                break;
            case PlanOp::Kind::gap:
                cur = global_avg_pool(cur);
                break;
            case PlanOp::Kind::head:
                cur = conv2d(cur, P[op.p[0]], P[op.p[1]], 1, 0);
                cur = reshape(cur, {cur.shape()[0], cur.shape()[1]});
                break;
        }
        if (captured)
            for (size_t j = 0; j < points.size(); ++j)
                if (points[j] == static_cast<int>(i)) (*captured)[j] = cur;
    }
    return cur;
}

template <typename T>
Tensor<T> forward(Model<T>& m, const std::vector<Tensor<T>>& inputs, bool train) {
    return forward_captures<T>(m, inputs, train, {}, nullptr);
}

template struct Model<float>;
template struct Model<double>;
template Model<float> instantiate<float>(const ArchSpec&, uint64_t);
template Model<double> instantiate<double>(const ArchSpec&, uint64_t);
template Tensor<float> forward<float>(Model<float>&, const std::vector<Tensor<float>>&, bool);
template Tensor<double> forward<double>(Model<double>&, const std::vector<Tensor<double>>&, bool);
template Tensor<float> forward_captures<float>(Model<float>&, const std::vector<Tensor<float>>&, bool,
                                               const std::vector<int>&, std::vector<Tensor<float>>*);
template Tensor<double> forward_captures<double>(Model<double>&, const std::vector<Tensor<double>>&,
                                                 bool, const std::vector<int>&,
                                                 std::vector<Tensor<double>>*);

}  // namespace topdown

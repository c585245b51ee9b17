#include "cdqn/approx.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>

#include "cdqn/rng.hpp"

namespace cdqn::approx {

namespace {

struct LayerDims {
    int in, out;
};

// rebuilt into a thread-local scratch; callers must not hold the reference
// across another layer_dims call
const std::vector<LayerDims>& layer_dims(const Architecture& a) {
    thread_local std::vector<LayerDims> dims;
    dims.clear();
    int in = a.n_features;
    for (int h : a.hidden) {
        dims.push_back({in, h});
        in = h;
    }
    dims.push_back({in, a.n_actions});
    return dims;
}

}  // namespace

std::size_t Architecture::n_params() const {
    std::size_t n = 0;
    for (auto [in, out] : layer_dims(*this)) n += static_cast<std::size_t>(in) * out + (bias ? out : 0);
    return n;
}

void Architecture::validate() const {
    if (n_features < 1) throw std::invalid_argument("arch.n_features must be >= 1");
    if (n_actions < 1) throw std::invalid_argument("arch.n_actions must be >= 1");
    for (int h : hidden)
        if (h < 1) throw std::invalid_argument("arch.hidden widths must be >= 1");
}

Mlp::Mlp(Architecture arch, std::uint64_t seed) : arch_(std::move(arch)) {
    arch_.validate();
    params_.assign(arch_.n_params(), 0.0);
    std::mt19937_64 eng(rng::splitmix64(seed));
    std::normal_distribution<double> normal(0.0, 1.0);
    std::size_t p = 0;
    for (auto [in, out] : layer_dims(arch_)) {
        double scale = std::sqrt(2.0 / in);
        for (int i = 0; i < in * out; ++i) params_[p++] = scale * normal(eng);
        if (arch_.bias) p += out;  // biases start at zero
    }
}

Mlp Mlp::with_params(Architecture arch, std::vector<double> params) {
    arch.validate();
    if (params.size() != arch.n_params())
        throw std::invalid_argument("Mlp::with_params: parameter count mismatch");
    Mlp m(arch, 0);
    m.params_ = std::move(params);
    return m;
}

void Mlp::set_params(std::span<const double> p) {
    if (p.size() != params_.size())
        throw std::invalid_argument("Mlp::set_params: parameter count mismatch");
    std::copy(p.begin(), p.end(), params_.begin());
}

namespace {

void forward_impl(const Architecture& arch, const double* params,
                  std::span<const double> features, std::span<double> result) {
    thread_local std::vector<double> cur, next;
    cur.assign(features.begin(), features.end());
    std::size_t p = 0;
    const auto& dims = layer_dims(arch);
    for (std::size_t l = 0; l < dims.size(); ++l) {
        auto [in, out] = dims[l];
        next.assign(out, 0.0);
        const double* w = params + p;
        for (int o = 0; o < out; ++o) {
            double acc = 0.0;
            const double* row = w + static_cast<std::size_t>(o) * in;
            for (int i = 0; i < in; ++i) acc += row[i] * cur[i];
            next[o] = acc;
        }
        p += static_cast<std::size_t>(in) * out;
        if (arch.bias) {
            for (int o = 0; o < out; ++o) next[o] += params[p + o];
            p += out;
        }
        if (l + 1 < dims.size())
            for (double& x : next) x = x > 0.0 ? x : 0.0;
        cur.swap(next);
    }
    std::copy(cur.begin(), cur.end(), result.begin());
}

}  // namespace

std::vector<double> Mlp::forward(std::span<const double> features) const {
    if (static_cast<int>(features.size()) != arch_.n_features)
        throw std::invalid_argument("Mlp::forward: feature dimension mismatch");
    std::vector<double> out(arch_.n_actions);
    forward_impl(arch_, params_.data(), features, out);
    return out;
}

std::vector<double> Mlp::forward_using(std::span<const double> params,
                                       std::span<const double> features) const {
    if (params.size() != params_.size())
        throw std::invalid_argument("Mlp::forward_using: parameter count mismatch");
    if (static_cast<int>(features.size()) != arch_.n_features)
        throw std::invalid_argument("Mlp::forward_using: feature dimension mismatch");
    std::vector<double> out(arch_.n_actions);
    forward_impl(arch_, params.data(), features, out);
    return out;
}

void Mlp::forward_into(std::span<const double> params, std::span<const double> features,
                       std::span<double> out) const {
    if (params.size() != params_.size())
        throw std::invalid_argument("Mlp::forward_into: parameter count mismatch");
    if (static_cast<int>(features.size()) != arch_.n_features)
        throw std::invalid_argument("Mlp::forward_into: feature dimension mismatch");
    if (static_cast<int>(out.size()) != arch_.n_actions)
        throw std::invalid_argument("Mlp::forward_into: output buffer size mismatch");
    forward_impl(arch_, params.data(), features, out);
}

void Mlp::backward(std::span<const double> features, std::span<const double> out_grad,
                   std::span<double> grad) const {
    if (static_cast<int>(features.size()) != arch_.n_features)
        throw std::invalid_argument("Mlp::backward: feature dimension mismatch");
    if (static_cast<int>(out_grad.size()) != arch_.n_actions)
        throw std::invalid_argument("Mlp::backward: output gradient dimension mismatch");
    if (grad.size() != params_.size())
        throw std::invalid_argument("Mlp::backward: gradient buffer size mismatch");

    const auto& dims = layer_dims(arch_);
    // forward pass, keeping post-activation values of every layer in one
    // flat scratch buffer
    thread_local std::vector<double> acts;
    thread_local std::vector<std::size_t> act_off, offsets;
    thread_local std::vector<double> delta, prev;
    act_off.assign(dims.size() + 1, 0);
    offsets.assign(dims.size(), 0);
    std::size_t total_act = features.size();
    for (std::size_t l = 0; l < dims.size(); ++l) {
        act_off[l + 1] = total_act;
        total_act += dims[l].out;
    }
    acts.assign(total_act, 0.0);
    std::copy(features.begin(), features.end(), acts.begin());

    std::size_t p = 0;
    for (std::size_t l = 0; l < dims.size(); ++l) {
        auto [in, out] = dims[l];
        offsets[l] = p;
        const double* w = params_.data() + p;
        const double* x = acts.data() + act_off[l];
        double* y = acts.data() + act_off[l + 1];
        for (int o = 0; o < out; ++o) {
            double acc = 0.0;
            const double* row = w + static_cast<std::size_t>(o) * in;
            for (int i = 0; i < in; ++i) acc += row[i] * x[i];
            y[o] = acc;
        }
        p += static_cast<std::size_t>(in) * out;
        if (arch_.bias) {
            for (int o = 0; o < out; ++o) y[o] += params_[p + o];
            p += out;
        }
        if (l + 1 < dims.size())
            for (int o = 0; o < out; ++o) y[o] = y[o] > 0.0 ? y[o] : 0.0;
    }

    // backward pass
    delta.assign(out_grad.begin(), out_grad.end());
    for (std::size_t li = dims.size(); li-- > 0;) {
        auto [in, out] = dims[li];
        const double* y = acts.data() + act_off[li + 1];
        if (li + 1 < dims.size())  // rectifier mask of this layer's output
            for (int o = 0; o < out; ++o)
                if (y[o] <= 0.0) delta[o] = 0.0;
        const double* w = params_.data() + offsets[li];
        double* gw = grad.data() + offsets[li];
        const double* x = acts.data() + act_off[li];
        for (int o = 0; o < out; ++o) {
            double d = delta[o];
            if (d != 0.0) {
                double* grow = gw + static_cast<std::size_t>(o) * in;
                for (int i = 0; i < in; ++i) grow[i] += d * x[i];
            }
        }
        if (arch_.bias) {
            double* gb = gw + static_cast<std::size_t>(in) * out;
            for (int o = 0; o < out; ++o) gb[o] += delta[o];
        }
        if (li > 0) {
            prev.assign(in, 0.0);
            for (int o = 0; o < out; ++o) {
                double d = delta[o];
                if (d != 0.0) {
                    const double* row = w + static_cast<std::size_t>(o) * in;
                    for (int i = 0; i < in; ++i) prev[i] += d * row[i];
                }
            }
            delta.swap(prev);
        }
    }
}

void Mlp::save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("Mlp::save: cannot open " + path);
    out << "mlp-checkpoint v1\n";
    out << arch_.n_features << ' ' << arch_.n_actions << ' ' << (arch_.bias ? 1 : 0) << ' '
        << arch_.hidden.size();
    for (int h : arch_.hidden) out << ' ' << h;
    out << '\n' << params_.size() << '\n';
    char buf[40];
    for (double v : params_) {
        std::snprintf(buf, sizeof buf, "%a", v);  // hexfloat, exact roundtrip
        out << buf << '\n';
    }
}

Mlp Mlp::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("Mlp::load: cannot open " + path);
    std::string magic, version;
    in >> magic >> version;
    if (magic != "mlp-checkpoint" || version != "v1")
        throw std::runtime_error("Mlp::load: unrecognized checkpoint format");
    Architecture a;
    int bias = 0;
    std::size_t n_hidden = 0, n_params = 0;
    in >> a.n_features >> a.n_actions >> bias >> n_hidden;
    a.bias = bias != 0;
    a.hidden.resize(n_hidden);
    for (auto& h : a.hidden) in >> h;
    in >> n_params;
    std::vector<double> params(n_params);
    for (auto& v : params) {
        std::string tok;
        in >> tok;
        v = std::strtod(tok.c_str(), nullptr);
    }
    if (!in) throw std::runtime_error("Mlp::load: truncated checkpoint");
    return with_params(std::move(a), std::move(params));
}

void AdamConfig::validate() const {
    if (!(lr > 0.0)) throw std::invalid_argument("opt.lr must be > 0");
    if (!(beta1 >= 0.0 && beta1 < 1.0)) throw std::invalid_argument("opt.beta1 must lie in [0,1)");
    if (!(beta2 >= 0.0 && beta2 < 1.0)) throw std::invalid_argument("opt.beta2 must lie in [0,1)");
    if (!(eps_a > 0.0)) throw std::invalid_argument("opt.eps_a must be > 0");
    if (!(clip_norm > 0.0)) throw std::invalid_argument("opt.clip_norm must be > 0");
}

Adam::Adam(AdamConfig cfg, std::size_t n_params)
    : cfg_(cfg), m_(n_params, 0.0), v_(n_params, 0.0) {
    cfg_.validate();
}

void Adam::step(std::span<double> params, std::span<double> grad) {
    if (params.size() != m_.size() || grad.size() != m_.size())
        throw std::invalid_argument("Adam::step: size mismatch");
    double norm2 = 0.0;
    for (double g : grad) norm2 += g * g;
    double norm = std::sqrt(norm2);
    if (std::isfinite(cfg_.clip_norm) && norm > cfg_.clip_norm) {
        double scale = cfg_.clip_norm / norm;
        for (double& g : grad) g *= scale;
    }
    ++t_;
    double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < m_.size(); ++i) {
        m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * grad[i];
        v_[i] = cfg_.beta2 * v_[i] + (1.0 - cfg_.beta2) * grad[i] * grad[i];
        double mhat = m_[i] / c1;
        double vhat = v_[i] / c2;
        params[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps_a);
    }
}

FeatureMap one_hot_map(const mdp::MdpSpec& mdp) {
    FeatureMap fm;
    fm.n_features = mdp.n_states();
    fm.n_actions = mdp.n_action_ids();
    fm.write_features = [n = mdp.n_states()](State s, std::span<double> buf) {
        std::fill(buf.begin(), buf.end(), 0.0);
        buf[static_cast<std::size_t>(s)] = 1.0;
    };
    fm.legal_actions = [&mdp](State s) { return mdp.actions(s); };
    return fm;
}

double max_q(const Mlp& model, const FeatureMap& fm, State s) {
    std::vector<double> feat(fm.n_features);
    fm.write_features(s, feat);
    auto out = model.forward(feat);
    auto legal = fm.legal_actions(s);
    if (legal.empty()) throw std::invalid_argument("max_q: state has no legal actions");
    double m = out[legal[0]];
    for (Action a : legal) m = std::max(m, out[a]);
    return m;
}

Action argmax_action(const Mlp& model, const FeatureMap& fm, State s) {
    std::vector<double> feat(fm.n_features);
    fm.write_features(s, feat);
    auto out = model.forward(feat);
    auto legal = fm.legal_actions(s);
    if (legal.empty()) throw std::invalid_argument("argmax_action: state has no legal actions");
    Action best = legal[0];
    for (Action a : legal)
        if (out[a] > out[best]) best = a;
    return best;
}

double q_value(const Mlp& model, const FeatureMap& fm, State s, Action a) {
    std::vector<double> feat(fm.n_features);
    fm.write_features(s, feat);
    return model.forward(feat)[a];
}

void semi_gradient_step(Mlp& model, const Transition& t, const FeatureMap& fm,
                        double gamma, double alpha) {
    double boot = t.terminal ? 0.0 : max_q(model, fm, t.s_next);
    double delta = t.r + gamma * boot - q_value(model, fm, t.s, t.a);
    std::vector<double> feat(fm.n_features);
    fm.write_features(t.s, feat);
    std::vector<double> out_grad(model.arch().n_actions, 0.0);
    out_grad[t.a] = 1.0;
    std::vector<double> grad(model.n_params(), 0.0);
    model.backward(feat, out_grad, grad);
    auto p = model.params();
    for (std::size_t i = 0; i < p.size(); ++i) p[i] += alpha * delta * grad[i];
}

}  // namespace cdqn::approx

#include "cdqn/losses.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace cdqn::losses {

void LossSpec::validate() const {
    if (shape == LossShape::TransformedHuber && !(eps_T > 0.0))
        throw std::invalid_argument("loss.eps_T must be > 0 for the transformed shape");
}

double transform(double x, double eps_T) {
    double s = x < 0.0 ? -1.0 : 1.0;
    return s * (std::sqrt(std::abs(x) + 1.0) - 1.0) + eps_T * x;
}

double inverse_transform(double f, double eps_T) {
    if (f == 0.0) return 0.0;  // odd function, exact at the origin
    double s = f < 0.0 ? -1.0 : 1.0;
    double root = (std::sqrt(1.0 + 4.0 * eps_T * (std::abs(f) + 1.0 + eps_T)) - 1.0) /
                  (2.0 * eps_T);
    return s * (root * root - 1.0);
}

namespace {

double transform_slope(double x, double eps_T) {
    return 0.5 / std::sqrt(std::abs(x) + 1.0) + eps_T;
}

// 1/2-scaled squared / Huber branch shapes and their derivatives.
double rho(double d, LossShape shape) {
    if (shape == LossShape::Squared) return 0.5 * d * d;
    double ad = std::abs(d);
    return ad < 1.0 ? 0.5 * d * d : ad - 0.5;
}

double rho_prime(double d, LossShape shape) {
    if (shape == LossShape::Squared) return d;
    return std::clamp(d, -1.0, 1.0);
}

// Everything needed to evaluate and differentiate both branches of one
// transition: prediction, both targets, and the bootstrap bookkeeping.
struct SampleEval {
    double pred = 0.0;           // online Q(s,a); raw net output under transform
    double y_dqn = 0.0;          // target-network bootstrap target
    double y_msbe = 0.0;         // online bootstrap target
    mdp::Action a_msbe = 0;      // online argmax at s' (for the MSBE target grad)
    double msbe_chain = 0.0;     // d y_msbe / d f(s', a_msbe)
    bool terminal = false;

    double d_dqn() const { return pred - y_dqn; }
    double d_msbe() const { return pred - y_msbe; }
};

mdp::Action select_argmax(std::span<const double> out, std::span<const mdp::Action> legal) {
    mdp::Action best = legal[0];
    for (mdp::Action a : legal)
        if (out[a] > out[best]) best = a;
    return best;
}

SampleEval evaluate_sample(const Transition& t, const Mlp& online, const TargetNetwork& target,
                           const LossSpec& spec, double gamma, const FeatureMap& fm) {
    SampleEval e;
    e.terminal = t.terminal;
    const bool transformed = spec.shape == LossShape::TransformedHuber;

    thread_local std::vector<double> feat, head, online_next, target_next;
    feat.resize(fm.n_features);
    head.resize(online.arch().n_actions);
    fm.write_features(t.s, feat);
    online.forward_into(online.params(), feat, head);
    e.pred = head[t.a];

    if (t.terminal) {
        double base = transformed ? transform(t.r, spec.eps_T) : t.r;
        e.y_dqn = base;
        e.y_msbe = base;
        return e;
    }

    online_next.resize(online.arch().n_actions);
    target_next.resize(online.arch().n_actions);
    fm.write_features(t.s_next, feat);
    online.forward_into(online.params(), feat, online_next);
    online.forward_into(target.params, feat, target_next);
    auto legal = fm.legal_actions(t.s_next);
    if (legal.empty())
        throw std::invalid_argument("losses: non-terminal next state has no legal actions");

    mdp::Action a_online = select_argmax(online_next, legal);
    mdp::Action a_dqn = spec.double_q ? a_online : select_argmax(target_next, legal);
    e.a_msbe = a_online;

    if (!transformed) {
        e.y_dqn = t.r + gamma * target_next[a_dqn];
        e.y_msbe = t.r + gamma * online_next[a_online];
        e.msbe_chain = gamma;
    } else {
        double u_dqn = t.r + gamma * inverse_transform(target_next[a_dqn], spec.eps_T);
        e.y_dqn = transform(u_dqn, spec.eps_T);
        double q_next = inverse_transform(online_next[a_online], spec.eps_T);
        double u = t.r + gamma * q_next;
        e.y_msbe = transform(u, spec.eps_T);
        // dT(u)/df_next = T'(u) * gamma / T'(T^-1(f_next))
        e.msbe_chain = transform_slope(u, spec.eps_T) * gamma / transform_slope(q_next, spec.eps_T);
    }
    return e;
}

Branch active_branch(const SampleEval& e, LossKind kind, LossShape shape) {
    switch (kind) {
        case LossKind::DQN: return Branch::Dqn;
        case LossKind::MSBE: return Branch::Msbe;
        case LossKind::CDQN:
        default:
            return rho(e.d_dqn(), shape) >= rho(e.d_msbe(), shape) ? Branch::Dqn : Branch::Msbe;
    }
}

}  // namespace

double bellman_target(const Transition& t, const Mlp& online, const TargetNetwork& target,
                      const LossSpec& spec, double gamma, const FeatureMap& fm) {
    spec.validate();
    return evaluate_sample(t, online, target, spec, gamma, fm).y_dqn;
}

SampleLoss per_sample_loss(const Transition& t, const Mlp& online, const TargetNetwork& target,
                           const LossSpec& spec, double gamma, const FeatureMap& fm) {
    spec.validate();
    SampleEval e = evaluate_sample(t, online, target, spec, gamma, fm);
    Branch b = active_branch(e, spec.kind, spec.shape);
    double d = b == Branch::Dqn ? e.d_dqn() : e.d_msbe();
    return {rho(d, spec.shape), b};
}

double priority_magnitude(const Transition& t, const Mlp& online, const TargetNetwork& target,
                          const LossSpec& spec, double gamma, const FeatureMap& fm) {
    spec.validate();
    SampleEval e = evaluate_sample(t, online, target, spec, gamma, fm);
    switch (spec.kind) {
        case LossKind::DQN: return std::abs(e.d_dqn());
        case LossKind::MSBE: return std::abs(e.d_msbe());
        case LossKind::CDQN:
        default: return std::max(std::abs(e.d_dqn()), std::abs(e.d_msbe()));
    }
}

double batch_loss_and_grad(std::span<const BatchItem> batch, const Mlp& online,
                           const TargetNetwork& target, const LossSpec& spec, double gamma,
                           const FeatureMap& fm, std::span<double> grad, BatchStats* stats) {
    spec.validate();
    if (batch.empty()) throw std::invalid_argument("batch_loss_and_grad: empty batch");
    if (grad.size() != online.n_params())
        throw std::invalid_argument("batch_loss_and_grad: gradient buffer size mismatch");
    std::fill(grad.begin(), grad.end(), 0.0);

    if (stats) {
        stats->priority.clear();
        stats->branch.clear();
        stats->mean_reported_mse = 0.0;
        stats->dqn_branch_fraction = 0.0;
    }

    const double inv_n = 1.0 / static_cast<double>(batch.size());
    std::vector<double> feat(fm.n_features);
    std::vector<double> out_grad(online.arch().n_actions);
    double loss_sum = 0.0;
    int dqn_count = 0;

    for (const BatchItem& item : batch) {
        SampleEval e = evaluate_sample(item.t, online, target, spec, gamma, fm);
        Branch b = active_branch(e, spec.kind, spec.shape);
        double d = b == Branch::Dqn ? e.d_dqn() : e.d_msbe();
        loss_sum += item.is_weight * rho(d, spec.shape);
        if (b == Branch::Dqn) ++dqn_count;

        double coef = item.is_weight * inv_n * rho_prime(d, spec.shape);
        if (coef != 0.0) {
            fm.write_features(item.t.s, feat);
            std::fill(out_grad.begin(), out_grad.end(), 0.0);
            out_grad[item.t.a] = coef;
            online.backward(feat, out_grad, grad);
            if (b == Branch::Msbe && !e.terminal) {
                fm.write_features(item.t.s_next, feat);
                std::fill(out_grad.begin(), out_grad.end(), 0.0);
                out_grad[e.a_msbe] = -coef * e.msbe_chain;
                online.backward(feat, out_grad, grad);
            }
        }
        if (stats) {
            double mag_d = std::abs(e.d_dqn()), mag_m = std::abs(e.d_msbe());
            double mag = spec.kind == LossKind::DQN    ? mag_d
                         : spec.kind == LossKind::MSBE ? mag_m
                                                       : std::max(mag_d, mag_m);
            stats->priority.push_back(mag);
            stats->branch.push_back(b);
            stats->mean_reported_mse += d * d * inv_n;
        }
    }
    if (stats) stats->dqn_branch_fraction = dqn_count * inv_n;
    return loss_sum * inv_n;
}

TargetTracker::TargetTracker(const Mlp& online) {
    target_.params.assign(online.params().begin(), online.params().end());
    target_.version = 0;
}

void TargetTracker::record_pre_step(const Mlp& online) {
    prev_step_params_.emplace(online.params().begin(), online.params().end());
    fresh_ = true;
}

bool TargetTracker::update() {
    if (!prev_step_params_)
        throw std::logic_error("TargetTracker::update called before any optimizer step");
    if (!fresh_) return false;
    target_.params = *prev_step_params_;
    ++target_.version;
    fresh_ = false;
    return true;
}

}  // namespace cdqn::losses

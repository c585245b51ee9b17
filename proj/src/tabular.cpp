#include "cdqn/tabular.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

#include "cdqn/rng.hpp"

namespace cdqn::tabular {

void LearnerConfig::validate() const {
    if (!(alpha > 0.0 && alpha <= 1.0))
        throw std::invalid_argument("learner.alpha must lie in (0,1]");
    if (!(gamma >= 0.0 && gamma <= 1.0))
        throw std::invalid_argument("learner.gamma must lie in [0,1]");
}

double q_table_update(QTable& q, const Transition& t, const LearnerConfig& cfg) {
    double boot = t.terminal ? 0.0 : q.max_over_actions(t.s_next);
    double delta = cfg.alpha * (t.r + cfg.gamma * boot - q.value(t.s, t.a));
    q.add(t.s, t.a, delta);
    return delta;
}

void rg_update(QTable& q, const Transition& t, const LearnerConfig& cfg) {
    if (t.terminal) {
        double delta = t.r - q.value(t.s, t.a);
        q.add(t.s, t.a, cfg.alpha * delta);
        return;
    }
    static thread_local std::vector<int> ties;
    q.argmax_indices(t.s_next, ties);
    double boot = q.at_index(t.s_next, ties[0]);
    double delta = t.r + cfg.gamma * boot - q.value(t.s, t.a);
    q.add(t.s, t.a, cfg.alpha * delta);
    if (cfg.rule == UpdateRule::RGTieSplit && ties.size() > 1) {
        double share = -cfg.gamma / static_cast<double>(ties.size()) * cfg.alpha * delta;
        for (int k : ties) q.at_index(t.s_next, k) += share;
    } else {
        q.at_index(t.s_next, ties[0]) += -cfg.gamma * cfg.alpha * delta;
    }
}

double msbe(const QTable& q, std::span<const Transition> dataset, double gamma) {
    if (dataset.empty()) throw std::invalid_argument("msbe: empty dataset");
    double sum = 0.0;
    for (const Transition& t : dataset) {
        double target = t.r;
        if (!t.terminal) target += gamma * q.max_over_actions(t.s_next);
        double d = q.value(t.s, t.a) - target;
        sum += d * d;
    }
    return sum / static_cast<double>(dataset.size());
}

double q_distance(const QTable& q, const QTable& q_star) {
    if (!q.same_layout(q_star))
        throw std::invalid_argument("q_distance: index sets differ");
    double sum = 0.0;
    auto a = q.flat(), b = q_star.flat();
    for (std::size_t i = 0; i < a.size(); ++i) {
        double d = a[i] - b[i];
        sum += d * d;
    }
    return sum;
}

std::vector<long long> log_spaced_points(long long n_max, int per_decade) {
    if (per_decade < 1) throw std::invalid_argument("log_spaced_points: per_decade must be >= 1");
    std::vector<long long> pts{0};
    if (n_max <= 0) return pts;
    double step = 1.0 / per_decade;
    for (double e = 0.0;; e += step) {
        long long v = static_cast<long long>(std::llround(std::pow(10.0, e)));
        if (v > n_max) break;
        if (v != pts.back()) pts.push_back(v);
    }
    if (pts.back() != n_max) pts.push_back(n_max);
    return pts;
}

Curves run_random_sampling(const MdpSpec& mdp, const LearnerConfig& cfg,
                           long long n_updates, std::span<const long long> eval_points,
                           const QTable& q_star, std::uint64_t seed,
                           double stop_when_q_distance_leq) {
    cfg.validate();
    QTable q(mdp, 0.0);
    const auto& pairs = mdp.legal_pairs();
    const auto dataset = mdp.all_transitions();

    auto sample_eng = rng::engine(seed, 0);
    std::uniform_int_distribution<std::size_t> pick(0, pairs.size() - 1);
    std::uint64_t eval_counter = 0;

    Curves out;
    auto log_point = [&](long long idx) {
        out.index.push_back(idx);
        out.msbe.push_back(msbe(q, dataset, cfg.gamma));
        out.q_distance.push_back(q_distance(q, q_star));
        out.greedy_return.push_back(
            rollout(mdp, q, 0.0, rng::substream(seed, 1'000'000 + eval_counter++))
                .undiscounted_return);
        return stop_when_q_distance_leq >= 0.0 &&
               out.q_distance.back() <= stop_when_q_distance_leq;
    };

    std::size_t next_eval = 0;
    for (long long u = 0; u <= n_updates; ++u) {
        while (next_eval < eval_points.size() && eval_points[next_eval] == u)
            if (log_point(eval_points[next_eval++])) return out;
        if (u == n_updates) break;
        auto [s, k] = pairs[pick(sample_eng)];
        Transition t = mdp.transition_at(s, k);
        if (cfg.rule == UpdateRule::QTable)
            q_table_update(q, t, cfg);
        else
            rg_update(q, t, cfg);
    }
    return out;
}

long long steps_to_threshold(const Curves& curves, double threshold) {
    for (std::size_t i = 0; i < curves.index.size(); ++i)
        if (curves.q_distance[i] <= threshold) return curves.index[i];
    return -1;
}

OnlineResult run_online(const MdpSpec& mdp, const LearnerConfig& cfg, double epsilon,
                        long long n_episodes, std::span<const long long> eval_episodes,
                        std::uint64_t seed, ActingTies ties_mode) {
    cfg.validate();
    if (epsilon < 0.0 || epsilon > 1.0)
        throw std::invalid_argument("run_online: epsilon must lie in [0,1]");

    QTable q(mdp, 0.0);
    auto act_eng = rng::engine(seed, 2);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::vector<int> ties;
    std::uint64_t eval_counter = 0;
    const long long max_steps = 10LL * mdp.n_states();

    OnlineResult out;
    auto eval_greedy = [&]() {
        return rollout(mdp, q, 0.0, rng::substream(seed, 3'000'000 + eval_counter++))
            .undiscounted_return;
    };
    auto log_point = [&](long long ep) {
        out.curves.index.push_back(ep);
        out.curves.greedy_return.push_back(eval_greedy());
    };

    std::size_t next_eval = 0;
    for (long long ep = 0; ep <= n_episodes; ++ep) {
        while (next_eval < eval_episodes.size() && eval_episodes[next_eval] == ep)
            log_point(eval_episodes[next_eval++]);
        if (ep == n_episodes) break;
        mdp::State s = mdp.start_state();
        for (long long step = 0; step < max_steps && !mdp.is_terminal(s); ++step) {
            int n = mdp.n_actions(s);
            int k;
            if (epsilon > 0.0 && unit(act_eng) < epsilon) {
                k = std::uniform_int_distribution<int>(0, n - 1)(act_eng);
            } else if (ties_mode == ActingTies::FirstIndex) {
                q.argmax_indices(s, ties);
                k = ties[0];
            } else {
                q.argmax_indices(s, ties);
                k = ties.size() == 1
                        ? ties[0]
                        : ties[std::uniform_int_distribution<std::size_t>(0, ties.size() - 1)(
                              act_eng)];
            }
            Transition t = mdp.transition_at(s, k);
            if (cfg.rule == UpdateRule::QTable)
                q_table_update(q, t, cfg);
            else
                rg_update(q, t, cfg);
            s = t.s_next;
        }
    }
    out.final_greedy_return = (!out.curves.index.empty() && out.curves.index.back() == n_episodes)
                                  ? out.curves.greedy_return.back()
                                  : eval_greedy();
    out.final_q = std::move(q);
    return out;
}

}  // namespace cdqn::tabular

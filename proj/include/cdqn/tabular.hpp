#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "cdqn/mdp.hpp"

namespace cdqn::tabular {

using mdp::MdpSpec;
using mdp::QTable;
using mdp::Transition;

enum class UpdateRule { QTable, RG, RGTieSplit };

struct LearnerConfig {
    UpdateRule rule = UpdateRule::QTable;
    double alpha = 0.5;
    double gamma = 0.9;

    void validate() const;
};

/// One Q-table step on (s, a): dQ = alpha * (r + gamma * max_a' Q(s',a') - Q(s,a)).
/// Terminal next-states bootstrap with r only. Returns the applied delta.
double q_table_update(QTable& q, const Transition& t, const LearnerConfig& cfg);

/// One residual-gradient step: dQ(s,a) = alpha * delta and
/// dQ(s',a*) = -gamma * alpha * delta for the max-achieving next entry.
/// Under RGTieSplit a tied max at s' splits -gamma/m * alpha * delta over the
/// m tied entries, leaving the policy at s' unchanged.
void rg_update(QTable& q, const Transition& t, const LearnerConfig& cfg);

/// Mean squared Bellman error over the dataset (terminal targets are r).
double msbe(const QTable& q, std::span<const Transition> dataset, double gamma);

/// Squared distance sum_(s,a) (Q - Q*)^2; layouts must agree.
double q_distance(const QTable& q, const QTable& q_star);

struct Curves {
    std::vector<long long> index;  // update count (or episode count)
    std::vector<double> msbe;
    std::vector<double> q_distance;
    std::vector<double> greedy_return;
};

/// Log-spaced evaluation grid {0, 1, ..., n_max} with per_decade points per
/// decade, always including 0 and n_max.
std::vector<long long> log_spaced_points(long long n_max, int per_decade = 30);

/// Random-sampling protocol: at each step draw a legal (s,a) uniformly,
/// regenerate its transition from the MDP, apply the configured rule.
/// Metrics are logged at the given update counts; Q starts at zero. A
/// non-negative stop_when_q_distance_leq truncates the run at the first
/// logged point at or below that distance.
Curves run_random_sampling(const MdpSpec& mdp, const LearnerConfig& cfg,
                           long long n_updates, std::span<const long long> eval_points,
                           const QTable& q_star, std::uint64_t seed,
                           double stop_when_q_distance_leq = -1.0);

/// First logged index whose q_distance is <= threshold, or -1 if never.
long long steps_to_threshold(const Curves& curves, double threshold);

struct OnlineResult {
    Curves curves;           // index = episodes completed, greedy_return filled
    QTable final_q;
    double final_greedy_return = 0.0;
};

/// How the acting policy resolves exactly tied greedy values. Evaluation
/// rollouts always use the uniform-random rule; the acting default is the
/// plain first-maximal-index argmax.
enum class ActingTies { FirstIndex, Random };

/// Online protocol: interact by epsilon-greedy from the start state, update
/// on every observed transition, evaluate the greedy policy's return at the
/// given episode counts. Q starts at zero.
OnlineResult run_online(const MdpSpec& mdp, const LearnerConfig& cfg, double epsilon,
                        long long n_episodes, std::span<const long long> eval_episodes,
                        std::uint64_t seed, ActingTies ties = ActingTies::FirstIndex);

}  // namespace cdqn::tabular

#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cdqn/mdp.hpp"

namespace cdqn::schedule {

using mdp::Episode;

/// Splits a nonnegative reward sequence into a constant-level sub-episode
/// (the minimum nonzero level at every nonzero position) and the remainder.
/// Throws on an all-zero episode.
struct DecomposeResult {
    Episode level;
    Episode remainder;
};
DecomposeResult decompose_sequence(const Episode& e);

/// Return-weighted average number of steps to the next reward for a
/// constant-level episode: lhat = sum_i R_i l_i / sum_i R_i with
/// l_i = (index of next nonzero at or after i) - i + 1 and R_i the suffix
/// sum. Suffixes with zero weight are skipped.
double episode_lhat(const Episode& e);

/// Reward-frequency estimate over a set of episodes: per episode, decompose
/// the absolute rewards into constant levels, average lhat weighted by each
/// level's return, invert, then combine episodes by a sqrt(return)-weighted
/// root mean square. Returns nullopt when every episode has zero return.
std::optional<double> estimate_frequency(std::span<const Episode> episodes);

/// gamma = clip(1 - f / c_gamma, 0.99, 0.9998); no observed reward gives
/// 0.9998 directly.
double gamma_from_frequency(std::optional<double> f, double c_gamma);

struct Normalization {
    double mu = 0.0;       // mean discounted return over all states
    double sigma = 1.0;    // normalization scale (floored, > 0)
    double mu_r = 0.0;     // per-step reward mean estimate
    double sigma_r = 0.0;  // per-step reward std estimate
};

/// Estimators from the episode set; episodes with zero return are excluded
/// and at least one must remain. gamma must lie in [0,1); f > 0 sets the
/// reference discount gamma_0 = 1 - f/2 used for sigma.
Normalization estimate_normalization(std::span<const Episode> episodes, double gamma,
                                     double f);

/// r_hat = (r - (1-gamma) mu) / sigma, with the extra terminal correction
/// -gamma*mu/sigma folded in so terminal steps see (r - mu) / sigma.
double normalize_reward(double r, bool terminal, double gamma, double mu, double sigma);

struct GammaReport {
    bool reward_observed = false;
    double f = 0.0;
    double gamma = 0.9998;
    double c_gamma = 10.0;
    Normalization norm;

    std::string summary() const;
};

/// Full pipeline: frequency, discount, and normalization constants.
GammaReport build_gamma_report(std::span<const Episode> episodes, double c_gamma);

/// Exploration schedule: 1 during warmup, exponential decay to 0.1, linear
/// decay to 0.01, then constant. scale shrinks every breakpoint
/// proportionally for desk-size budgets.
struct EpsilonSchedule {
    double scale = 1.0;
    double at(double j) const;
};

/// Schedule value at agent step j for the full-size budget (scale 1).
double epsilon_at(double j);

}  // namespace cdqn::schedule

#include "cdqn/schedule.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <stdexcept>

namespace cdqn::schedule {

DecomposeResult decompose_sequence(const Episode& e) {
    double r_min = std::numeric_limits<double>::infinity();
    for (double r : e.rewards)
        if (r != 0.0) r_min = std::min(r_min, r);
    if (!std::isfinite(r_min))
        throw std::invalid_argument("decompose_sequence: all-zero episode");
    // the minimum is taken over the nonzero entries; a zero minimum would
    // never drain the sequence
    DecomposeResult out;
    out.level.rewards.reserve(e.rewards.size());
    out.remainder.rewards.reserve(e.rewards.size());
    for (double r : e.rewards) {
        double lvl = r != 0.0 ? r_min : 0.0;
        out.level.rewards.push_back(lvl);
        out.remainder.rewards.push_back(r - lvl);
    }
    return out;
}

double episode_lhat(const Episode& e) {
    const auto& r = e.rewards;
    const std::size_t n = r.size();
    if (n == 0) throw std::invalid_argument("episode_lhat: empty episode");

    // l_i computed right-to-left; R_i is the suffix sum
    double num = 0.0, den = 0.0, suffix = 0.0;
    std::ptrdiff_t next_nonzero = -1;
    for (std::size_t ii = n; ii-- > 0;) {
        if (r[ii] != 0.0) next_nonzero = static_cast<std::ptrdiff_t>(ii);
        suffix += r[ii];
        if (suffix == 0.0) continue;  // reward-free suffix carries no weight
        if (next_nonzero < 0)
            throw std::invalid_argument("episode_lhat: weighted suffix without a future reward");
        double l_i = static_cast<double>(next_nonzero - static_cast<std::ptrdiff_t>(ii)) + 1.0;
        num += suffix * l_i;
        den += suffix;
    }
    if (den == 0.0) throw std::invalid_argument("episode_lhat: zero-return episode");
    return num / den;
}

std::optional<double> estimate_frequency(std::span<const Episode> episodes) {
    if (episodes.empty()) throw std::invalid_argument("estimate_frequency: no episodes");
    double weighted_sq = 0.0, weight_sum = 0.0;
    for (const Episode& raw : episodes) {
        Episode abs_ep;
        abs_ep.rewards.reserve(raw.rewards.size());
        for (double r : raw.rewards) abs_ep.rewards.push_back(std::abs(r));
        double total = abs_ep.total_return();
        if (total == 0.0) continue;  // zero-return episodes drop out (w_k = 0)
        double w_k = std::sqrt(total);

        double num = 0.0, den = 0.0;
        Episode rest = abs_ep;
        while (rest.total_return() != 0.0) {
            DecomposeResult d = decompose_sequence(rest);
            double level_return = d.level.total_return();
            num += level_return * episode_lhat(d.level);
            den += level_return;
            rest = std::move(d.remainder);
        }
        double l_k = num / den;
        double f_k = 1.0 / l_k;
        weighted_sq += w_k * f_k * f_k;
        weight_sum += w_k;
    }
    if (weight_sum == 0.0) return std::nullopt;
    return std::sqrt(weighted_sq / weight_sum);
}

double gamma_from_frequency(std::optional<double> f, double c_gamma) {
    if (!(c_gamma > 0.0)) throw std::invalid_argument("schedule.c_gamma must be > 0");
    if (!f) return 0.9998;
    if (!(*f > 0.0)) throw std::invalid_argument("gamma_from_frequency: f must be > 0");
    return std::clamp(1.0 - *f / c_gamma, 0.99, 0.9998);
}

Normalization estimate_normalization(std::span<const Episode> episodes, double gamma,
                                     double f) {
    if (!(gamma >= 0.0 && gamma < 1.0))
        throw std::invalid_argument("estimate_normalization: gamma must lie in [0,1)");
    if (!(f > 0.0)) throw std::invalid_argument("estimate_normalization: f must be > 0");

    double q_sum = 0.0;
    long long q_count = 0;
    std::vector<double> q0, t_len;
    for (const Episode& e : episodes) {
        if (e.rewards.empty() || e.total_return() == 0.0) continue;
        double q = 0.0;
        for (std::size_t i = e.rewards.size(); i-- > 0;) {
            q = e.rewards[i] + gamma * q;
            q_sum += q;
            ++q_count;
        }
        q0.push_back(q);
        t_len.push_back(static_cast<double>(e.rewards.size()));
    }
    if (q0.empty())
        throw std::invalid_argument("estimate_normalization: no episode has nonzero return");

    Normalization out;
    out.mu = q_sum / static_cast<double>(q_count);

    const double n_ep = static_cast<double>(q0.size());
    double mu_r = 0.0;
    for (std::size_t k = 0; k < q0.size(); ++k)
        mu_r += q0[k] * (1.0 - gamma) / (1.0 - std::pow(gamma, t_len[k]));
    mu_r /= n_ep;
    out.mu_r = mu_r;

    std::vector<double> devs(q0.size());
    for (std::size_t k = 0; k < q0.size(); ++k) {
        double horizon = (1.0 - std::pow(gamma, t_len[k])) / (1.0 - gamma);
        devs[k] = (q0[k] - horizon * mu_r) *
                  std::sqrt((1.0 - gamma * gamma) / (1.0 - std::pow(gamma, 2.0 * t_len[k])));
    }
    double mean_dev = 0.0;
    for (double d : devs) mean_dev += d;
    mean_dev /= n_ep;
    double var = 0.0;
    for (double d : devs) var += (d - mean_dev) * (d - mean_dev);
    out.sigma_r = std::sqrt(var / n_ep);

    // constant-reward episode sets leave only rounding residue in the spread
    if (out.sigma_r <= 1e-12 * std::max(1.0, std::abs(out.mu_r))) {
        out.sigma_r = 0.0;
        out.sigma = 1.0;
        return out;
    }
    double gamma0 = 1.0 - 0.5 * f;
    double scale = 0.0;
    for (double t : t_len)
        scale += std::sqrt((1.0 - std::pow(gamma0, 2.0 * t)) / (1.0 - gamma0 * gamma0));
    out.sigma = std::max(out.sigma_r * scale / n_ep, 1e-6);
    return out;
}

double normalize_reward(double r, bool terminal, double gamma, double mu, double sigma) {
    if (!(sigma > 0.0)) throw std::invalid_argument("normalize_reward: sigma must be > 0");
    double r_hat = (r - (1.0 - gamma) * mu) / sigma;
    if (terminal) r_hat -= gamma * mu / sigma;
    return r_hat;
}

std::string GammaReport::summary() const {
    char buf[256];
    std::snprintf(buf, sizeof buf,
                  "reward_observed=%d f=%.10g gamma=%.6g c_gamma=%.6g mu=%.10g sigma=%.10g "
                  "mu_r=%.10g sigma_r=%.10g",
                  reward_observed ? 1 : 0, f, gamma, c_gamma, norm.mu, norm.sigma, norm.mu_r,
                  norm.sigma_r);
    return buf;
}

GammaReport build_gamma_report(std::span<const Episode> episodes, double c_gamma) {
    GammaReport rep;
    rep.c_gamma = c_gamma;
    auto f = estimate_frequency(episodes);
    rep.gamma = gamma_from_frequency(f, c_gamma);
    if (f) {
        rep.reward_observed = true;
        rep.f = *f;
        rep.norm = estimate_normalization(episodes, rep.gamma, rep.f);
    }
    return rep;
}

double EpsilonSchedule::at(double j) const {
    if (j < 0.0) throw std::invalid_argument("epsilon schedule: step must be >= 0");
    if (!(scale > 0.0)) throw std::invalid_argument("epsilon schedule: scale must be > 0");
    const double warmup = 5e4 * scale;
    const double exp_end = 1e6 * scale;
    const double lin_end = 4e7 * scale;
    if (j <= warmup) return 1.0;
    if (j <= exp_end) return std::pow(0.1, j / exp_end);
    if (j <= lin_end) return 0.1 + (0.01 - 0.1) * (j - exp_end) / (lin_end - exp_end);
    return 0.01;
}

double epsilon_at(double j) { return EpsilonSchedule{1.0}.at(j); }

}  // namespace cdqn::schedule

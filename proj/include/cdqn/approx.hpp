#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "cdqn/mdp.hpp"

namespace cdqn::approx {

using mdp::Action;
using mdp::State;
using mdp::Transition;

struct Architecture {
    int n_features = 1;
    std::vector<int> hidden;  // empty = linear model
    int n_actions = 1;
    bool bias = true;

    std::size_t n_params() const;
    void validate() const;
};

/// Feed-forward value model Q(s, .) with rectified-linear hidden layers and a
/// linear head; parameters live in one flat vector. The derivative of the
/// rectifier at 0 is taken as 0.
class Mlp {
  public:
    /// Fan-in-scaled normal weight init, zero biases.
    Mlp(Architecture arch, std::uint64_t seed);
    static Mlp with_params(Architecture arch, std::vector<double> params);

    const Architecture& arch() const { return arch_; }
    std::size_t n_params() const { return params_.size(); }
    std::span<const double> params() const { return params_; }
    std::span<double> params() { return params_; }
    void set_params(std::span<const double> p);

    /// Per-action values; pure (no side effects).
    std::vector<double> forward(std::span<const double> features) const;

    /// Forward pass with an alternative parameter vector of the same
    /// architecture (used for target-network snapshots).
    std::vector<double> forward_using(std::span<const double> params,
                                      std::span<const double> features) const;

    /// Allocation-free forward into a caller buffer of size n_actions;
    /// params may be the model's own or a same-shape snapshot.
    void forward_into(std::span<const double> params, std::span<const double> features,
                      std::span<double> out) const;

    /// Accumulates d(out_grad . output(features)) / d(params) into grad.
    void backward(std::span<const double> features, std::span<const double> out_grad,
                  std::span<double> grad) const;

    void save(const std::string& path) const;
    static Mlp load(const std::string& path);

  private:
    Architecture arch_;
    std::vector<double> params_;
};

/// Adaptive-moment optimizer state. eps_a is added to the denominator after
/// the square root. Gradients whose l2 norm exceeds clip_norm are rescaled
/// to clip_norm before the moment update.
struct AdamConfig {
    double lr = 6.25e-5;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps_a = 1.5e-4;
    double clip_norm = std::numeric_limits<double>::infinity();

    void validate() const;
};

class Adam {
  public:
    Adam(AdamConfig cfg, std::size_t n_params);

    /// Clips grad in place, then applies one bias-corrected update.
    void step(std::span<double> params, std::span<double> grad);
    long long step_count() const { return t_; }
    const AdamConfig& config() const { return cfg_; }

  private:
    AdamConfig cfg_;
    std::vector<double> m_, v_;
    long long t_ = 0;
};

/// State -> feature vector plus the legal action set, shared by the losses
/// and trainer layers. The callbacks must outlive the map's users.
struct FeatureMap {
    int n_features = 0;
    int n_actions = 0;
    std::function<void(State, std::span<double>)> write_features;
    std::function<std::span<const Action>(State)> legal_actions;
};

/// One-hot encoding over the states of an MDP; the map holds a reference,
/// the MDP must outlive it.
FeatureMap one_hot_map(const mdp::MdpSpec& mdp);

/// Greedy values over the legal actions of s.
double max_q(const Mlp& model, const FeatureMap& fm, State s);
Action argmax_action(const Mlp& model, const FeatureMap& fm, State s);
double q_value(const Mlp& model, const FeatureMap& fm, State s, Action a);

/// TD(0) step on one transition: dtheta = alpha * grad Q(s,a) * delta with
/// the bootstrapped target held constant.
void semi_gradient_step(Mlp& model, const Transition& t, const FeatureMap& fm,
                        double gamma, double alpha);

}  // namespace cdqn::approx

#pragma once

#include <optional>
#include <span>
#include <vector>

#include "cdqn/approx.hpp"
#include "cdqn/mdp.hpp"

namespace cdqn::losses {

using approx::FeatureMap;
using approx::Mlp;
using mdp::Transition;

enum class LossKind { DQN, MSBE, CDQN };
enum class LossShape { Squared, Huber, TransformedHuber };
enum class Branch { Dqn, Msbe };

struct LossSpec {
    LossKind kind = LossKind::DQN;
    LossShape shape = LossShape::Squared;
    bool double_q = false;
    double eps_T = 0.01;

    void validate() const;
};

/// Immutable bootstrap snapshot; replaced wholesale on update.
struct TargetNetwork {
    std::vector<double> params;
    long long version = 0;
};

/// Value-squashing transform T(x) = sign(x)(sqrt(|x|+1)-1) + eps_T*x and its
/// closed-form inverse; both are total on the reals.
double transform(double x, double eps_T);
double inverse_transform(double f, double eps_T);

/// Bootstrapped regression target of the target-network branch. Terminal
/// transitions give r (T(r) in the transformed shape). double_q selects the
/// bootstrap action with the online network instead of the target network.
double bellman_target(const Transition& t, const Mlp& online, const TargetNetwork& target,
                      const LossSpec& spec, double gamma, const FeatureMap& fm);

struct SampleLoss {
    double loss = 0.0;
    Branch branch = Branch::Dqn;
};

/// Per-sample loss value. kind=DQN bootstraps through the target snapshot
/// (constant in differentiation); kind=MSBE bootstraps through the online
/// network; kind=CDQN is the pointwise max of the two (ties report Dqn).
/// Squared and Huber values follow the 1/2-scaled convention, so they agree
/// for residuals below 1.
SampleLoss per_sample_loss(const Transition& t, const Mlp& online, const TargetNetwork& target,
                           const LossSpec& spec, double gamma, const FeatureMap& fm);

/// |residual| of the DQN form, the online-bootstrapped form, or their max
/// for kind=CDQN; measured in the transformed space for TransformedHuber.
double priority_magnitude(const Transition& t, const Mlp& online, const TargetNetwork& target,
                          const LossSpec& spec, double gamma, const FeatureMap& fm);

struct BatchItem {
    Transition t;
    double is_weight = 1.0;
};

struct BatchStats {
    std::vector<double> priority;   // |delta| per item, for replay updates
    std::vector<Branch> branch;     // active branch per item
    double mean_reported_mse = 0.0; // unscaled squared error, for logging
    double dqn_branch_fraction = 0.0;
};

/// Mean of w_i * loss_i and its exact gradient; for CDQN the gradient flows
/// through the active branch of each sample. grad must be sized to the
/// online parameter count and is overwritten.
double batch_loss_and_grad(std::span<const BatchItem> batch, const Mlp& online,
                           const TargetNetwork& target, const LossSpec& spec, double gamma,
                           const FeatureMap& fm, std::span<double> grad,
                           BatchStats* stats = nullptr);

/// Tracks the one-step-old online parameters so target updates never copy
/// the exact current parameters (the max-loss gradient is undefined there).
class TargetTracker {
  public:
    explicit TargetTracker(const Mlp& online);

    /// Call immediately before each optimizer step.
    void record_pre_step(const Mlp& online);

    /// Advances the target to the previous-step snapshot. Returns false
    /// (no-op) if no optimizer step happened since the last update; throws
    /// if called before any step was recorded.
    bool update();

    const TargetNetwork& target() const { return target_; }

  private:
    TargetNetwork target_;
    std::optional<std::vector<double>> prev_step_params_;
    bool fresh_ = false;
};

}  // namespace cdqn::losses

#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "cdqn/approx.hpp"
#include "cdqn/losses.hpp"
#include "cdqn/replay.hpp"
#include "cdqn/schedule.hpp"

namespace cdqn::trainer {

using approx::AdamConfig;
using losses::LossSpec;

struct TrainOptions {
    LossSpec loss;
    double gamma = 0.99;
    std::vector<int> hidden = {64, 64};
    AdamConfig adam;
    replay::ReplayConfig replay;
    replay::SamplerConfig sampler;
    long long n_steps = 20000;
    int batch_size = 32;
    int target_period = 100;    // optimizer steps between target updates
    int train_freq = 1;         // env steps per gradient step
    long long learn_start = 500;
    int eval_every = 500;
    int eval_rollouts = 3;
    double eps_scale = 1.0;  // multiplier on the n_steps/5e7 schedule scale
    std::uint64_t seed = 0;

    // Discount/normalization pipeline: estimate gamma and reward scaling
    // from random-policy episodes before training.
    bool use_gamma_pipeline = false;
    double c_gamma = 10.0;
    long long pipeline_steps = 2000;

    void validate() const;
};

struct TrainResult {
    std::vector<long long> step;
    std::vector<double> loss;            // reported (unscaled) squared error
    std::vector<double> greedy_return;
    std::vector<double> dqn_branch_fraction;
    std::vector<double> epsilon;
    double final_greedy_return = 0.0;
    double early_max_loss = 0.0;  // max reported loss in the first quarter
    double late_max_loss = 0.0;   // max reported loss afterwards
    std::optional<schedule::GammaReport> gamma_report;
};

/// Online epsilon-greedy training with prioritized replay and a
/// previous-step target network. The exploration schedule's breakpoints are
/// scaled down by n_steps relative to the full-size budget.
TrainResult train(const mdp::MdpSpec& env, const TrainOptions& opt);

}  // namespace cdqn::trainer

#include "cdqn/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

#include "cdqn/rng.hpp"

namespace cdqn::trainer {

void TrainOptions::validate() const {
    loss.validate();
    adam.validate();
    replay.validate();
    sampler.validate();
    if (!(gamma >= 0.0 && gamma <= 1.0))
        throw std::invalid_argument("train.gamma must lie in [0,1]");
    if (n_steps < 1) throw std::invalid_argument("train.n_steps must be >= 1");
    if (batch_size < 1) throw std::invalid_argument("train.batch_size must be >= 1");
    if (target_period < 1) throw std::invalid_argument("train.target_period must be >= 1");
    if (train_freq < 1) throw std::invalid_argument("train.train_freq must be >= 1");
    if (use_gamma_pipeline && pipeline_steps < 1)
        throw std::invalid_argument("train.pipeline_steps must be >= 1");
}

namespace {

using mdp::State;
using mdp::Transition;

// greedy over legal actions with uniform random tie-breaks
int greedy_index(const approx::Mlp& model, const approx::FeatureMap& fm, State s,
                 std::span<const mdp::Action> legal, std::mt19937_64& eng,
                 std::vector<double>& feat) {
    fm.write_features(s, feat);
    auto out = model.forward(feat);
    double best = out[legal[0]];
    for (mdp::Action a : legal) best = std::max(best, out[a]);
    static thread_local std::vector<int> ties;
    ties.clear();
    for (std::size_t k = 0; k < legal.size(); ++k)
        if (out[legal[k]] == best) ties.push_back(static_cast<int>(k));
    return ties.size() == 1
               ? ties[0]
               : ties[std::uniform_int_distribution<std::size_t>(0, ties.size() - 1)(eng)];
}

double greedy_rollout_return(const mdp::MdpSpec& env, const approx::Mlp& model,
                             const approx::FeatureMap& fm, std::uint64_t seed) {
    std::mt19937_64 eng(rng::splitmix64(seed));
    std::vector<double> feat(fm.n_features);
    State s = env.start_state();
    double ret = 0.0;
    const long long cap = 10LL * env.n_states();
    for (long long i = 0; i < cap && !env.is_terminal(s); ++i) {
        int k = greedy_index(model, fm, s, env.actions(s), eng, feat);
        Transition t = env.transition_at(s, k);
        ret += t.r;
        s = t.s_next;
    }
    return ret;
}

}  // namespace

TrainResult train(const mdp::MdpSpec& env, const TrainOptions& opt) {
    opt.validate();
    TrainResult out;

    const approx::FeatureMap fm = approx::one_hot_map(env);
    auto act_eng = rng::engine(opt.seed, 21);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::vector<double> feat(fm.n_features);

    double gamma = opt.gamma;
    double mu = 0.0, sigma = 1.0;
    bool normalize = false;
    if (opt.use_gamma_pipeline) {
        // random-policy episodes; truncated ones are dropped from the estimators
        std::vector<mdp::Episode> episodes;
        auto pipe_eng = rng::engine(opt.seed, 22);
        long long steps = 0;
        while (steps < opt.pipeline_steps) {
            mdp::QTable zero(env, 0.0);
            auto ro = mdp::rollout(env, zero, 1.0, pipe_eng());
            steps += static_cast<long long>(ro.episode.length());
            if (!ro.truncated) episodes.push_back(std::move(ro.episode));
        }
        if (episodes.empty())
            throw std::runtime_error("train: gamma pipeline collected no complete episode");
        auto report = schedule::build_gamma_report(episodes, opt.c_gamma);
        gamma = report.gamma;
        if (report.reward_observed) {
            mu = report.norm.mu;
            sigma = report.norm.sigma;
            normalize = true;
        }
        out.gamma_report = report;
    }

    approx::Mlp online(
        approx::Architecture{fm.n_features, opt.hidden, fm.n_actions, true},
        rng::substream(opt.seed, 23));
    approx::Adam adam(opt.adam, online.n_params());
    losses::TargetTracker tracker(online);
    replay::PrioritizedReplay buffer(opt.replay, opt.sampler, rng::substream(opt.seed, 24));

    schedule::EpsilonSchedule eps_schedule{opt.eps_scale * static_cast<double>(opt.n_steps) /
                                           5e7};
    std::vector<losses::BatchItem> batch;
    std::vector<replay::PrioritySampler::PriorityUpdate> updates;
    std::vector<double> grad(online.n_params());
    losses::BatchStats stats;

    double last_loss = 0.0, last_frac = 0.0;
    std::uint64_t eval_counter = 0;
    State s = env.start_state();
    long long episode_steps = 0;
    const long long episode_cap = 10LL * env.n_states();

    auto evaluate = [&](long long step, double eps_now) {
        double ret = 0.0;
        for (int i = 0; i < opt.eval_rollouts; ++i)
            ret += greedy_rollout_return(env, online, fm,
                                         rng::substream(opt.seed, 25'000'000 + eval_counter++));
        ret /= opt.eval_rollouts;
        out.step.push_back(step);
        out.loss.push_back(last_loss);
        out.greedy_return.push_back(ret);
        out.dqn_branch_fraction.push_back(last_frac);
        out.epsilon.push_back(eps_now);
    };

    for (long long j = 0; j < opt.n_steps; ++j) {
        double eps = eps_schedule.at(static_cast<double>(j));
        int k;
        if (unit(act_eng) < eps) {
            k = std::uniform_int_distribution<int>(0, env.n_actions(s) - 1)(act_eng);
        } else {
            k = greedy_index(online, fm, s, env.actions(s), act_eng, feat);
        }
        Transition t = env.transition_at(s, k);
        ++episode_steps;
        bool truncate = !t.terminal && episode_steps >= episode_cap;
        if (normalize) t.r = schedule::normalize_reward(t.r, t.terminal, gamma, mu, sigma);
        buffer.push(t);
        if (t.terminal || truncate) {
            s = env.start_state();
            episode_steps = 0;
        } else {
            s = t.s_next;
        }

        if (j >= opt.learn_start && j % opt.train_freq == 0 &&
            buffer.memory().size() >= static_cast<std::size_t>(opt.batch_size)) {
            buffer.sampler().set_beta(
                replay::beta_at(static_cast<double>(j) / static_cast<double>(opt.n_steps)));
            auto samples = buffer.sample_batch(opt.batch_size);
            batch.clear();
            for (const auto& smp : samples) batch.push_back({smp.t, smp.is_weight});
            double l = losses::batch_loss_and_grad(batch, online, tracker.target(), opt.loss,
                                                   gamma, fm, grad, &stats);
            (void)l;
            tracker.record_pre_step(online);
            adam.step(online.params(), grad);
            updates.clear();
            for (std::size_t i = 0; i < samples.size(); ++i)
                updates.push_back({samples[i].slot, samples[i].stamp, stats.priority[i]});
            buffer.update_priorities(updates);
            if (adam.step_count() % opt.target_period == 0) tracker.update();

            last_loss = stats.mean_reported_mse;
            last_frac = stats.dqn_branch_fraction;
            if (j < opt.n_steps / 4)
                out.early_max_loss = std::max(out.early_max_loss, last_loss);
            else
                out.late_max_loss = std::max(out.late_max_loss, last_loss);
        }
        if (j % opt.eval_every == 0) evaluate(j, eps);
    }
    evaluate(opt.n_steps, eps_schedule.at(static_cast<double>(opt.n_steps)));
    out.final_greedy_return = out.greedy_return.back();
    return out;
}

}  // namespace cdqn::trainer

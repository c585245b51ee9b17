#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "cdqn/mdp.hpp"

namespace cdqn::replay {

using mdp::Transition;

/// Binary tree of partial sums over leaf priorities; parents are recomputed
/// from their children on every update, so internal sums stay exact.
class SumTree {
  public:
    explicit SumTree(std::size_t n_leaves);

    void set(std::size_t i, double p);
    double get(std::size_t i) const;
    double total() const;
    std::size_t n_leaves() const { return n_; }

    /// Leaf whose cumulative-priority interval contains mass in [0, total).
    std::size_t find_prefix(double mass) const;

  private:
    std::size_t n_, base_;
    std::vector<double> tree_;
};

enum class ReplaceStrategy { Fifo, RandomReplace };

struct ReplayConfig {
    std::size_t capacity = 10000;
    ReplaceStrategy strategy = ReplaceStrategy::Fifo;
    double discard_prob = 0.0;

    void validate() const;
};

/// Capacity-bounded transition store with episode linkage. Each slot carries
/// a generation stamp so stale slot references can be detected after
/// eviction; predecessor links are nulled when either side is overwritten.
class ReplayMemory {
  public:
    ReplayMemory(ReplayConfig cfg, std::uint64_t seed);

    struct PushResult {
        bool accepted = false;
        std::size_t slot = 0;
    };
    PushResult push(const Transition& t);

    std::size_t size() const { return size_; }
    std::size_t capacity() const { return cfg_.capacity; }
    const ReplayConfig& config() const { return cfg_; }
    const Transition& at(std::size_t slot) const { return slots_[slot]; }
    std::uint64_t stamp(std::size_t slot) const { return stamps_[slot]; }
    std::optional<std::size_t> predecessor(std::size_t slot) const;
    long long total_pushed() const { return total_pushed_; }

  private:
    ReplayConfig cfg_;
    std::vector<Transition> slots_;
    std::vector<std::uint64_t> stamps_;
    std::vector<std::ptrdiff_t> pred_, succ_;  // -1 = none
    std::size_t size_ = 0, fifo_head_ = 0;
    long long total_pushed_ = 0;
    std::ptrdiff_t last_slot_ = -1;  // previous accepted push, for linkage
    std::mt19937_64 eng_;

    void break_links(std::size_t slot);
};

struct SamplerConfig {
    double alpha_p = 0.6;   // priority exponent
    double eps_p = 1e-10;   // vanishing additive constant
    double c_p = 10.0;      // lower-bound ratio (> 1)
    double beta = 0.4;      // importance-sampling exponent, annealed externally

    void validate() const;
};

/// Lower-bounded prioritized sampler over replay slots. New transitions
/// enter at the maximum priority computed so far (100 before any gradient
/// step); updates apply p = max((|delta|+eps_p)^alpha, p_mean/c_p) and raise
/// the stored predecessor to at least (|delta|/2+eps_p)^alpha.
class PrioritySampler {
  public:
    PrioritySampler(SamplerConfig cfg, std::size_t capacity);

    void on_push(std::size_t slot);

    struct Sample {
        std::size_t slot = 0;
        std::uint64_t stamp = 0;
        Transition t{};
        double is_weight = 1.0;
    };
    /// Stratified proportional sampling; w_i = ((sum p / N) / p_i)^beta,
    /// capped at 2 * c_p. Memory must be non-empty.
    std::vector<Sample> sample_batch(const ReplayMemory& mem, int batch_size,
                                     std::uint64_t seed);

    struct PriorityUpdate {
        std::size_t slot = 0;
        std::uint64_t stamp = 0;
        double delta_abs = 0.0;
    };
    /// Stale items (stamp mismatch) are skipped silently.
    void update_priorities(const ReplayMemory& mem, std::span<const PriorityUpdate> items);

    double priority(std::size_t slot) const { return tree_.get(slot); }
    double total_priority() const { return tree_.total(); }
    double max_seen_priority() const;
    double beta() const { return cfg_.beta; }
    void set_beta(double beta);
    const SamplerConfig& config() const { return cfg_; }

  private:
    SamplerConfig cfg_;
    SumTree tree_;
    std::optional<double> max_seen_;
};

/// Importance-sampling exponent schedule: linear 0.4 -> 1 over progress.
double beta_at(double progress);

/// Memory + sampler bound together the way the trainer uses them.
class PrioritizedReplay {
  public:
    PrioritizedReplay(ReplayConfig mem_cfg, SamplerConfig sampler_cfg, std::uint64_t seed);

    bool push(const Transition& t);
    std::vector<PrioritySampler::Sample> sample_batch(int batch_size);
    void update_priorities(std::span<const PrioritySampler::PriorityUpdate> items);

    ReplayMemory& memory() { return mem_; }
    const ReplayMemory& memory() const { return mem_; }
    PrioritySampler& sampler() { return sampler_; }

  private:
    ReplayMemory mem_;
    PrioritySampler sampler_;
    std::uint64_t seed_;
    std::uint64_t draw_counter_ = 0;
};

}  // namespace cdqn::replay

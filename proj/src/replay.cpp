#include "cdqn/replay.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "cdqn/rng.hpp"

namespace cdqn::replay {

SumTree::SumTree(std::size_t n_leaves) : n_(n_leaves) {
    if (n_leaves == 0) throw std::invalid_argument("SumTree: need at least one leaf");
    base_ = 1;
    while (base_ < n_) base_ <<= 1;
    tree_.assign(2 * base_, 0.0);
}

void SumTree::set(std::size_t i, double p) {
    if (i >= n_) throw std::out_of_range("SumTree::set: leaf out of range");
    if (!(p >= 0.0)) throw std::invalid_argument("SumTree::set: priority must be >= 0");
    std::size_t node = base_ + i;
    tree_[node] = p;
    while (node > 1) {
        node >>= 1;
        tree_[node] = tree_[2 * node] + tree_[2 * node + 1];
    }
}

double SumTree::get(std::size_t i) const {
    if (i >= n_) throw std::out_of_range("SumTree::get: leaf out of range");
    return tree_[base_ + i];
}

double SumTree::total() const { return tree_[1]; }

std::size_t SumTree::find_prefix(double mass) const {
    std::size_t node = 1;
    while (node < base_) {
        double left = tree_[2 * node];
        // the right-subtree guard keeps rounding from stranding us on a
        // zero-priority leaf when mass lands on a boundary
        if (mass < left || tree_[2 * node + 1] == 0.0) {
            node = 2 * node;
        } else {
            mass -= left;
            node = 2 * node + 1;
        }
    }
    std::size_t leaf = node - base_;
    return std::min(leaf, n_ - 1);
}

void ReplayConfig::validate() const {
    if (capacity == 0) throw std::invalid_argument("replay.capacity must be >= 1");
    if (!(discard_prob >= 0.0 && discard_prob < 1.0))
        throw std::invalid_argument("replay.discard_prob must lie in [0,1)");
}

ReplayMemory::ReplayMemory(ReplayConfig cfg, std::uint64_t seed)
    : cfg_(cfg),
      slots_(cfg.capacity),
      stamps_(cfg.capacity, 0),
      pred_(cfg.capacity, -1),
      succ_(cfg.capacity, -1),
      eng_(rng::splitmix64(seed)) {
    cfg_.validate();
}

void ReplayMemory::break_links(std::size_t slot) {
    if (pred_[slot] >= 0) succ_[pred_[slot]] = -1;
    if (succ_[slot] >= 0) pred_[succ_[slot]] = -1;
    pred_[slot] = -1;
    succ_[slot] = -1;
    if (last_slot_ == static_cast<std::ptrdiff_t>(slot)) last_slot_ = -1;
}

ReplayMemory::PushResult ReplayMemory::push(const Transition& t) {
    if (cfg_.discard_prob > 0.0 &&
        std::uniform_real_distribution<double>(0.0, 1.0)(eng_) < cfg_.discard_prob) {
        // a dropped transition also breaks the episode chain for its successor
        last_slot_ = -1;
        return {false, 0};
    }
    std::size_t slot;
    if (size_ < cfg_.capacity) {
        slot = size_++;
    } else if (cfg_.strategy == ReplaceStrategy::Fifo) {
        slot = fifo_head_;
        fifo_head_ = (fifo_head_ + 1) % cfg_.capacity;
    } else {
        slot = std::uniform_int_distribution<std::size_t>(0, cfg_.capacity - 1)(eng_);
    }
    break_links(slot);
    slots_[slot] = t;
    ++stamps_[slot];
    ++total_pushed_;
    if (last_slot_ >= 0) {
        const Transition& prev = slots_[last_slot_];
        if (!prev.terminal && prev.s_next == t.s) {
            pred_[slot] = last_slot_;
            succ_[last_slot_] = static_cast<std::ptrdiff_t>(slot);
        }
    }
    last_slot_ = t.terminal ? -1 : static_cast<std::ptrdiff_t>(slot);
    return {true, slot};
}

std::optional<std::size_t> ReplayMemory::predecessor(std::size_t slot) const {
    if (pred_[slot] < 0) return std::nullopt;
    return static_cast<std::size_t>(pred_[slot]);
}

void SamplerConfig::validate() const {
    if (!(alpha_p > 0.0 && alpha_p <= 1.0))
        throw std::invalid_argument("sampler.alpha_p must lie in (0,1]");
    if (!(eps_p > 0.0)) throw std::invalid_argument("sampler.eps_p must be > 0");
    if (!(c_p > 1.0)) throw std::invalid_argument("sampler.c_p must be > 1");
    if (!(beta >= 0.0 && beta <= 1.0))
        throw std::invalid_argument("sampler.beta must lie in [0,1]");
}

PrioritySampler::PrioritySampler(SamplerConfig cfg, std::size_t capacity)
    : cfg_(cfg), tree_(capacity) {
    cfg_.validate();
}

void PrioritySampler::on_push(std::size_t slot) {
    tree_.set(slot, max_seen_.value_or(100.0));
}

double PrioritySampler::max_seen_priority() const { return max_seen_.value_or(100.0); }

void PrioritySampler::set_beta(double beta) {
    if (!(beta >= 0.0 && beta <= 1.0))
        throw std::invalid_argument("sampler.beta must lie in [0,1]");
    cfg_.beta = beta;
}

std::vector<PrioritySampler::Sample> PrioritySampler::sample_batch(const ReplayMemory& mem,
                                                                   int batch_size,
                                                                   std::uint64_t seed) {
    if (mem.size() == 0) throw std::invalid_argument("sample_batch: empty memory");
    if (batch_size < 1) throw std::invalid_argument("sample_batch: batch_size must be >= 1");
    double total = tree_.total();
    if (!(total > 0.0)) throw std::logic_error("sample_batch: total priority is zero");

    std::mt19937_64 eng(rng::splitmix64(seed));
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const double n = static_cast<double>(mem.size());
    const double mean_p = total / n;
    const double w_cap = 2.0 * cfg_.c_p;

    std::vector<Sample> out;
    out.reserve(batch_size);
    const double seg = total / batch_size;
    for (int j = 0; j < batch_size; ++j) {
        double mass = (j + unit(eng)) * seg;
        std::size_t slot = tree_.find_prefix(std::min(mass, std::nextafter(total, 0.0)));
        double p = tree_.get(slot);
        double w = std::pow(mean_p / p, cfg_.beta);
        out.push_back({slot, mem.stamp(slot), mem.at(slot), std::min(w, w_cap)});
    }
    return out;
}

void PrioritySampler::update_priorities(const ReplayMemory& mem,
                                        std::span<const PriorityUpdate> items) {
    if (mem.size() == 0) return;
    const double mean_p = tree_.total() / static_cast<double>(mem.size());
    const double floor_p = mean_p / cfg_.c_p;
    for (const PriorityUpdate& item : items) {
        if (item.slot >= mem.capacity() || mem.stamp(item.slot) != item.stamp) continue;
        double computed = std::pow(item.delta_abs + cfg_.eps_p, cfg_.alpha_p);
        double p = std::max(computed, floor_p);
        tree_.set(item.slot, p);
        max_seen_ = std::max(max_seen_.value_or(0.0), p);
        if (auto pred = mem.predecessor(item.slot)) {
            double bound = std::pow(0.5 * item.delta_abs + cfg_.eps_p, cfg_.alpha_p);
            if (tree_.get(*pred) < bound) tree_.set(*pred, bound);
        }
    }
}

double beta_at(double progress) {
    if (!(progress >= 0.0 && progress <= 1.0))
        throw std::invalid_argument("beta_at: progress must lie in [0,1]");
    return 0.4 + 0.6 * progress;
}

PrioritizedReplay::PrioritizedReplay(ReplayConfig mem_cfg, SamplerConfig sampler_cfg,
                                     std::uint64_t seed)
    : mem_(mem_cfg, rng::substream(seed, 11)),
      sampler_(sampler_cfg, mem_cfg.capacity),
      seed_(seed) {}

bool PrioritizedReplay::push(const Transition& t) {
    auto res = mem_.push(t);
    if (res.accepted) sampler_.on_push(res.slot);
    return res.accepted;
}

std::vector<PrioritySampler::Sample> PrioritizedReplay::sample_batch(int batch_size) {
    return sampler_.sample_batch(mem_, batch_size, rng::substream(seed_, 13 + draw_counter_++));
}

void PrioritizedReplay::update_priorities(
    std::span<const PrioritySampler::PriorityUpdate> items) {
    sampler_.update_priorities(mem_, items);
}

}  // namespace cdqn::replay

#include "cdqn/mdp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <stdexcept>

namespace cdqn::mdp {

double Episode::total_return() const {
    return std::accumulate(rewards.begin(), rewards.end(), 0.0);
}

int ActionLayout::index_of(State s, Action a) const {
    const auto& list = actions[s];
    for (std::size_t k = 0; k < list.size(); ++k)
        if (list[k] == a) return static_cast<int>(k);
    return -1;
}

MdpSpec::MdpSpec(std::shared_ptr<const ActionLayout> layout, std::vector<State> next,
                 std::vector<double> reward, std::vector<char> terminal, State start,
                 std::string name)
    : layout_(std::move(layout)),
      next_(std::move(next)),
      reward_(std::move(reward)),
      terminal_(std::move(terminal)),
      start_(start),
      name_(std::move(name)) {
    for (State s = 0; s < n_states(); ++s)
        for (int k = 0; k < n_actions(s); ++k) legal_pairs_.emplace_back(s, k);
}

State MdpSpec::next(State s, Action a) const {
    int k = layout_->index_of(s, a);
    if (k < 0) throw std::invalid_argument("MdpSpec::next: illegal action");
    return next_at(s, k);
}

double MdpSpec::reward(State s, Action a) const {
    int k = layout_->index_of(s, a);
    if (k < 0) throw std::invalid_argument("MdpSpec::reward: illegal action");
    return reward_at(s, k);
}

Transition MdpSpec::transition(State s, Action a) const {
    int k = layout_->index_of(s, a);
    if (k < 0) throw std::invalid_argument("MdpSpec::transition: illegal action");
    return transition_at(s, k);
}

Transition MdpSpec::transition_at(State s, int k) const {
    State sn = next_at(s, k);
    return Transition{s, layout_->actions[s][k], reward_at(s, k), sn, is_terminal(sn)};
}

std::vector<Transition> MdpSpec::all_transitions() const {
    std::vector<Transition> out;
    out.reserve(legal_pairs_.size());
    for (auto [s, k] : legal_pairs_) out.push_back(transition_at(s, k));
    return out;
}

int MdpSpec::max_actions() const {
    int m = 0;
    for (State s = 0; s < n_states(); ++s) m = std::max(m, n_actions(s));
    return m;
}

int MdpSpec::n_action_ids() const {
    int m = -1;
    for (State s = 0; s < n_states(); ++s)
        for (Action a : actions(s)) m = std::max(m, a);
    return m + 1;
}

QTable::QTable(const MdpSpec& mdp, double init)
    : layout_(mdp.layout()), v_(static_cast<std::size_t>(layout_->total), init) {}

double QTable::value(State s, Action a) const {
    int k = layout_->index_of(s, a);
    if (k < 0) throw std::invalid_argument("QTable::value: illegal (s,a)");
    return at_index(s, k);
}

void QTable::set(State s, Action a, double v) {
    int k = layout_->index_of(s, a);
    if (k < 0) throw std::invalid_argument("QTable::set: illegal (s,a)");
    at_index(s, k) = v;
}

void QTable::add(State s, Action a, double dv) {
    int k = layout_->index_of(s, a);
    if (k < 0) throw std::invalid_argument("QTable::add: illegal (s,a)");
    at_index(s, k) += dv;
}

double QTable::max_over_actions(State s) const {
    const auto& list = layout_->actions[s];
    if (list.empty()) throw std::invalid_argument("QTable::max_over_actions: terminal state");
    double m = at_index(s, 0);
    for (std::size_t k = 1; k < list.size(); ++k) m = std::max(m, at_index(s, static_cast<int>(k)));
    return m;
}

void QTable::argmax_indices(State s, std::vector<int>& out) const {
    out.clear();
    const auto& list = layout_->actions[s];
    double m = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < list.size(); ++k) {
        double v = at_index(s, static_cast<int>(k));
        if (v > m) {
            m = v;
            out.clear();
            out.push_back(static_cast<int>(k));
        } else if (v == m) {
            out.push_back(static_cast<int>(k));
        }
    }
}

namespace {

// Grid actions. Cells are indexed s = row * width + col, row 0 = bottom.
enum GridAction : Action { kUp = 0, kDown = 1, kLeft = 2, kRight = 3 };

struct Builder {
    ActionLayout layout;
    std::vector<State> next;
    std::vector<double> reward;
    std::vector<char> terminal;

    explicit Builder(int n_states) {
        layout.actions.resize(n_states);
        layout.offset.assign(n_states, 0);
        terminal.assign(n_states, 0);
    }
    void add(State s, Action a, State sn, double r) {
        layout.actions[s].push_back(a);
        next.push_back(sn);
        reward.push_back(r);
    }
    MdpSpec finish(State start, std::string name) {
        int off = 0;
        for (std::size_t s = 0; s < layout.actions.size(); ++s) {
            layout.offset[s] = off;
            off += static_cast<int>(layout.actions[s].size());
        }
        layout.total = off;
        // add() above appends in state order, so storage is already aligned
        return MdpSpec(std::make_shared<const ActionLayout>(std::move(layout)),
                       std::move(next), std::move(reward), std::move(terminal), start,
                       std::move(name));
    }
};

}  // namespace

MdpSpec build_cliff_walking(int width, int height) {
    if (width < 2 || height < 2)
        throw std::invalid_argument("build_cliff_walking: width and height must be >= 2");
    const int n = width * height;
    Builder b(n);

    auto cell = [width](int col, int row) { return row * width + col; };
    const State start = cell(0, 0);
    const State goal = cell(width - 1, 0);
    auto is_cliff = [&](int col, int row) { return row == 0 && col > 0 && col < width - 1; };

    for (int row = 0; row < height; ++row)
        for (int col = 0; col < width; ++col) {
            State s = cell(col, row);
            if (s == goal || is_cliff(col, row)) {
                b.terminal[s] = 1;
                continue;
            }
            auto try_move = [&](Action a, int nc, int nr) {
                if (nc < 0 || nc >= width || nr < 0 || nr >= height) return;
                State sn = cell(nc, nr);
                double r = -1.0;
                if (sn == goal) r = 0.0;
                else if (is_cliff(nc, nr)) r = -100.0;
                b.add(s, a, sn, r);
            };
            try_move(kUp, col, row + 1);
            try_move(kDown, col, row - 1);
            try_move(kLeft, col - 1, row);
            try_move(kRight, col + 1, row);
        }
    return b.finish(start, "cliff_walking");
}

MdpSpec build_one_way_cliff(int length) {
    if (length < 1) throw std::invalid_argument("build_one_way_cliff: length must be >= 1");
    // states 0..length-1 are cells, length is the goal, length+1 the "up" sink
    const State goal = length;
    const State sink = length + 1;
    Builder b(length + 2);
    b.terminal[goal] = 1;
    b.terminal[sink] = 1;
    for (State s = 0; s < length; ++s) {
        b.add(s, kUp, sink, -1.0);
        b.add(s, kRight, s + 1, 2.0);
    }
    return b.finish(0, "one_way_cliff");
}

MdpSpec build_cycle_chain(int n, std::span<const double> rewards) {
    if (n < 2) throw std::invalid_argument("build_cycle_chain: n must be >= 2");
    if (static_cast<int>(rewards.size()) != n)
        throw std::invalid_argument("build_cycle_chain: need one reward per state");
    Builder b(n);
    for (State s = 0; s < n; ++s) b.add(s, 0, (s + 1) % n, rewards[s]);
    return b.finish(0, "cycle_chain");
}

double bellman_residual(const MdpSpec& mdp, const QTable& q, double gamma) {
    double worst = 0.0;
    for (auto [s, k] : mdp.legal_pairs()) {
        State sn = mdp.next_at(s, k);
        double target = mdp.reward_at(s, k);
        if (!mdp.is_terminal(sn)) target += gamma * q.max_over_actions(sn);
        worst = std::max(worst, std::abs(q.at_index(s, k) - target));
    }
    return worst;
}

QTable value_iteration(const MdpSpec& mdp, double gamma, double tol, long long max_iters) {
    if (gamma < 0.0 || gamma > 1.0)
        throw std::invalid_argument("value_iteration: gamma must lie in [0,1]");
    if (tol <= 0.0) throw std::invalid_argument("value_iteration: tol must be > 0");
    if (max_iters <= 0)
        // path-length sweeps for reward propagation plus a tolerance-driven
        // tail for the geometric contraction
        max_iters = 10LL * mdp.n_states() * std::max(1, mdp.n_states()) +
                    1000LL * static_cast<long long>(std::ceil(-std::log10(tol)));

    QTable q(mdp, 0.0);
    QTable q_new(mdp, 0.0);
    for (long long it = 0; it < max_iters; ++it) {
        double residual = 0.0;
        for (auto [s, k] : mdp.legal_pairs()) {
            State sn = mdp.next_at(s, k);
            double target = mdp.reward_at(s, k);
            if (!mdp.is_terminal(sn)) target += gamma * q.max_over_actions(sn);
            residual = std::max(residual, std::abs(q.at_index(s, k) - target));
            q_new.at_index(s, k) = target;
        }
        std::swap(q, q_new);
        if (residual <= tol) return q_new;  // pre-update table satisfies the bound
    }
    throw std::runtime_error(
        "value_iteration: no fixed point within the iteration cap (improper gamma=1 instance?)");
}

RolloutResult rollout(const MdpSpec& mdp, const QTable& q, double epsilon,
                      std::uint64_t seed, long long max_steps) {
    if (epsilon < 0.0 || epsilon > 1.0)
        throw std::invalid_argument("rollout: epsilon must lie in [0,1]");
    if (max_steps <= 0) max_steps = 10LL * mdp.n_states();

    std::mt19937_64 eng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    RolloutResult out;
    std::vector<int> ties;
    State s = mdp.start_state();
    for (long long step = 0; step < max_steps; ++step) {
        if (mdp.is_terminal(s)) break;
        int n = mdp.n_actions(s);
        int k;
        if (epsilon > 0.0 && unit(eng) < epsilon) {
            k = static_cast<int>(std::uniform_int_distribution<int>(0, n - 1)(eng));
        } else {
            q.argmax_indices(s, ties);
            k = ties.size() == 1
                    ? ties[0]
                    : ties[std::uniform_int_distribution<std::size_t>(0, ties.size() - 1)(eng)];
        }
        Transition t = mdp.transition_at(s, k);
        out.episode.rewards.push_back(t.r);
        out.undiscounted_return += t.r;
        s = t.s_next;
        if (t.terminal) return out;
    }
    out.truncated = !mdp.is_terminal(s);
    return out;
}

}  // namespace cdqn::mdp

#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace cdqn::mdp {

using State = int;
using Action = int;

/// One step of experience: (s, a, r, s'), with a terminal flag for s'.
struct Transition {
    State s;
    Action a;
    double r;
    State s_next;
    bool terminal;
};

/// Ordered reward sequence of one episode.
struct Episode {
    std::vector<double> rewards;

    std::size_t length() const { return rewards.size(); }
    double total_return() const;
};

/// Per-state legal action lists plus flat offsets; shared between an MdpSpec
/// and every QTable built for it, so index sets can be compared cheaply.
struct ActionLayout {
    std::vector<std::vector<Action>> actions;  // actions[s] = legal action ids
    std::vector<int> offset;                   // offset[s] into flat storage
    int total = 0;

    int index_of(State s, Action a) const;  // -1 if illegal
};

/// Deterministic tabular MDP. Terminal states carry no legal actions;
/// next/reward are defined exactly for legal (s, a).
class MdpSpec {
  public:
    MdpSpec(std::shared_ptr<const ActionLayout> layout, std::vector<State> next,
            std::vector<double> reward, std::vector<char> terminal, State start,
            std::string name);

    int n_states() const { return static_cast<int>(terminal_.size()); }
    std::span<const Action> actions(State s) const { return layout_->actions[s]; }
    int n_actions(State s) const { return static_cast<int>(layout_->actions[s].size()); }
    bool is_terminal(State s) const { return terminal_[s] != 0; }
    State start_state() const { return start_; }
    const std::string& name() const { return name_; }

    State next(State s, Action a) const;
    double reward(State s, Action a) const;
    State next_at(State s, int k) const { return next_[layout_->offset[s] + k]; }
    double reward_at(State s, int k) const { return reward_[layout_->offset[s] + k]; }

    Transition transition(State s, Action a) const;
    Transition transition_at(State s, int k) const;

    /// All legal (state, action-index) pairs, flattened.
    const std::vector<std::pair<State, int>>& legal_pairs() const { return legal_pairs_; }
    /// All transitions of the MDP, one per legal pair.
    std::vector<Transition> all_transitions() const;

    std::shared_ptr<const ActionLayout> layout() const { return layout_; }

    /// Max number of actions over all states (0 if every state is terminal).
    int max_actions() const;

    /// Size of the action-id space: 1 + the largest legal action id. Value
    /// models index their output heads by action id.
    int n_action_ids() const;

  private:
    std::shared_ptr<const ActionLayout> layout_;
    std::vector<State> next_;
    std::vector<double> reward_;
    std::vector<char> terminal_;
    State start_;
    std::string name_;
    std::vector<std::pair<State, int>> legal_pairs_;
};

/// Dense Q values over the legal (s, a) pairs of one layout.
class QTable {
  public:
    QTable() = default;
    explicit QTable(const MdpSpec& mdp, double init = 0.0);

    double value(State s, Action a) const;
    void set(State s, Action a, double v);
    void add(State s, Action a, double dv);

    double at_index(State s, int k) const { return v_[layout_->offset[s] + k]; }
    double& at_index(State s, int k) { return v_[layout_->offset[s] + k]; }

    int n_states() const { return static_cast<int>(layout_->actions.size()); }
    std::span<const Action> actions(State s) const { return layout_->actions[s]; }
    std::size_t n_entries() const { return v_.size(); }
    std::span<const double> flat() const { return v_; }

    /// Max Q over the legal actions of s; s must be non-terminal.
    double max_over_actions(State s) const;
    /// Action-list indices achieving the max (ties collected in order).
    void argmax_indices(State s, std::vector<int>& out) const;

    bool same_layout(const QTable& other) const { return layout_ == other.layout_; }
    const ActionLayout& layout() const { return *layout_; }

  private:
    std::shared_ptr<const ActionLayout> layout_;
    std::vector<double> v_;
};

/// Grid task: start lower-left, goal lower-right, cliff cells on the bottom
/// row strictly between them. Entering white costs -1, cliff -100 (terminal),
/// goal 0 (terminal). Actions that would leave the grid are not legal.
MdpSpec build_cliff_walking(int width, int height);

/// Chain task: at every cell, move right for +2 or move up for -1 and
/// terminate; the goal after `length` right-moves is terminal.
MdpSpec build_one_way_cliff(int length);

/// Single-action cycle s_0 -> s_1 -> ... -> s_{n-1} -> s_0 with the given
/// per-edge rewards; no terminal state.
MdpSpec build_cycle_chain(int n, std::span<const double> rewards);

/// Solves the Bellman equation by Q-iteration until the sup-norm residual
/// is <= tol. For gamma = 1 an iteration cap (default 10 * n_states^2)
/// guards against improper instances; exceeding it throws.
QTable value_iteration(const MdpSpec& mdp, double gamma, double tol,
                       long long max_iters = 0);

/// Sup-norm Bellman residual of q on mdp at discount gamma.
double bellman_residual(const MdpSpec& mdp, const QTable& q, double gamma);

struct RolloutResult {
    Episode episode;
    double undiscounted_return = 0.0;
    bool truncated = false;
};

/// Runs the epsilon-greedy policy from the start state. Greedy ties are
/// broken uniformly at random. Truncates (non-terminally) at max_steps;
/// max_steps <= 0 selects the default 10 * n_states.
RolloutResult rollout(const MdpSpec& mdp, const QTable& q, double epsilon,
                      std::uint64_t seed, long long max_steps = 0);

}  // namespace cdqn::mdp

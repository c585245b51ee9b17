#include <doctest.h>

#include <cmath>
#include <set>

#include "cdqn/mdp.hpp"
#include "cdqn/rng.hpp"

using namespace cdqn;
using mdp::Action;
using mdp::State;

namespace {
// grid action ids used by the builders
constexpr Action kUp = 0, kDown = 1, kLeft = 2, kRight = 3;
}  // namespace

TEST_CASE("cliff walking layout matches the task description") {
    auto env = mdp::build_cliff_walking(10, 4);
    CHECK(env.n_states() == 40);
    CHECK(env.start_state() == 0);

    int cliff_cells = 0, non_terminal = 0;
    for (State s = 0; s < env.n_states(); ++s) {
        if (env.is_terminal(s)) {
            CHECK(env.n_actions(s) == 0);
            if (s != 9) ++cliff_cells;  // goal is the lower-right corner
        } else {
            ++non_terminal;
        }
    }
    CHECK(cliff_cells == 8);
    CHECK(non_terminal == 40 - 8 - 1);

    // start: up is white (-1), right enters the cliff (-100, terminal)
    CHECK(env.reward(0, kUp) == -1.0);
    CHECK(env.reward(0, kRight) == -100.0);
    CHECK(env.is_terminal(env.next(0, kRight)));
    // moving into the goal from above costs nothing
    State above_goal = 1 * 10 + 9;
    CHECK(env.reward(above_goal, kDown) == 0.0);
    CHECK(env.is_terminal(env.next(above_goal, kDown)));
    // wall moves are excluded from the action set
    CHECK(env.n_actions(0) == 2);  // corner: up, right
    CHECK_THROWS(env.next(0, kLeft));
}

TEST_CASE("smallest cliff grid has no interior cliff cells") {
    auto env = mdp::build_cliff_walking(2, 2);
    int cliff = 0;
    for (State s = 0; s < env.n_states(); ++s)
        if (env.is_terminal(s) && s != 1) ++cliff;
    CHECK(cliff == 0);
    CHECK_THROWS_AS(mdp::build_cliff_walking(1, 4), std::invalid_argument);
    CHECK_THROWS_AS(mdp::build_cliff_walking(10, 1), std::invalid_argument);
}

TEST_CASE("doubled-width cliff grid") {
    auto env = mdp::build_cliff_walking(20, 4);
    CHECK(env.n_states() == 80);
    int cliff = 0;
    for (State s = 0; s < env.n_states(); ++s)
        if (env.is_terminal(s) && s != 19) ++cliff;
    CHECK(cliff == 18);
}

TEST_CASE("one-way cliff structure and oracle values") {
    CHECK_THROWS_AS(mdp::build_one_way_cliff(0), std::invalid_argument);

    auto tiny = mdp::build_one_way_cliff(1);
    CHECK(tiny.n_actions(0) == 2);
    auto q1 = mdp::value_iteration(tiny, 1.0, 1e-12);
    CHECK(mdp::rollout(tiny, q1, 0.0, 7).undiscounted_return == doctest::Approx(2.0));

    auto env = mdp::build_one_way_cliff(8);
    auto q = mdp::value_iteration(env, 1.0, 1e-12);
    for (State i = 0; i < 8; ++i) {
        CHECK(q.value(i, kRight) == doctest::Approx(2.0 * (8 - i)));
        CHECK(q.value(i, kUp) == doctest::Approx(-1.0));
    }

    // the "always up" policy ends immediately with -1
    mdp::QTable up_biased(env, 0.0);
    for (State i = 0; i < 8; ++i) up_biased.set(i, kUp, 1.0);
    CHECK(mdp::rollout(env, up_biased, 0.0, 3).undiscounted_return == doctest::Approx(-1.0));
}

TEST_CASE("cycle chain construction and the 2-state Bellman solution") {
    CHECK_THROWS_AS(mdp::build_cycle_chain(1, std::vector<double>{0.0}), std::invalid_argument);
    CHECK_THROWS_AS(mdp::build_cycle_chain(3, std::vector<double>{0.0}), std::invalid_argument);

    auto c3 = mdp::build_cycle_chain(3, std::vector<double>{0.0, 0.0, 1.0});
    CHECK(c3.n_states() == 3);
    CHECK(c3.next(2, 0) == 0);
    CHECK(c3.reward(2, 0) == 1.0);

    auto zeros = mdp::build_cycle_chain(5, std::vector<double>(5, 0.0));
    auto qz = mdp::value_iteration(zeros, 0.9, 1e-12);
    for (State s = 0; s < 5; ++s) CHECK(qz.value(s, 0) == doctest::Approx(0.0));

    // Q*(s0) = 1 + 0.5 Q*(s1), Q*(s1) = 0.5 Q*(s0) -> 4/3 and 2/3
    auto c2 = mdp::build_cycle_chain(2, std::vector<double>{1.0, 0.0});
    auto q2 = mdp::value_iteration(c2, 0.5, 1e-12);
    CHECK(q2.value(0, 0) == doctest::Approx(4.0 / 3.0).epsilon(1e-9));
    CHECK(q2.value(1, 0) == doctest::Approx(2.0 / 3.0).epsilon(1e-9));
}

TEST_CASE("value iteration meets its residual contract") {
    auto env = mdp::build_cliff_walking(10, 4);
    for (double gamma : {0.9, 0.95, 1.0}) {
        auto q = mdp::value_iteration(env, gamma, 1e-10);
        CHECK(mdp::bellman_residual(env, q, gamma) <= 1e-10);
    }
    auto q = mdp::value_iteration(env, 0.9, 1e-10);
    CHECK(std::isfinite(q.value(0, kUp)));

    // the optimal path is unique: up, along the row above the cliff, down
    for (std::uint64_t seed : {1ull, 2ull, 3ull, 4ull}) {
        auto ro = mdp::rollout(env, q, 0.0, seed);
        CHECK(ro.undiscounted_return == doctest::Approx(-10.0));
        CHECK(ro.episode.length() == 11);
    }
}

TEST_CASE("value iteration rejects improper gamma=1 instances") {
    auto cyc = mdp::build_cycle_chain(3, std::vector<double>{1.0, 0.0, 0.0});
    CHECK_THROWS_AS(mdp::value_iteration(cyc, 1.0, 1e-8), std::runtime_error);
    CHECK_THROWS(mdp::value_iteration(cyc, 0.9, 0.0));
    CHECK_THROWS(mdp::value_iteration(cyc, 1.5, 1e-8));
}

TEST_CASE("rollout follows epsilon-greedy semantics") {
    auto env = mdp::build_one_way_cliff(8);
    auto q_star = mdp::value_iteration(env, 1.0, 1e-12);

    SUBCASE("greedy on the oracle reaches the optimum for every seed") {
        for (std::uint64_t seed = 0; seed < 16; ++seed)
            CHECK(mdp::rollout(env, q_star, 0.0, seed).undiscounted_return ==
                  doctest::Approx(16.0));
    }
    SUBCASE("all-tied zero table flips a fair coin each step") {
        int right_first = 0;
        const int n = 4000;
        for (int seed = 0; seed < n; ++seed) {
            auto ro = mdp::rollout(env, mdp::QTable(env, 0.0), 0.0, seed);
            if (ro.episode.rewards.front() == 2.0) ++right_first;
        }
        // 3-sigma band around n/2
        CHECK(std::abs(right_first - n / 2) < 3.0 * std::sqrt(n * 0.25));
    }
    SUBCASE("epsilon=1 is the uniform random policy") {
        int right_first = 0;
        const int n = 4000;
        for (int seed = 0; seed < n; ++seed) {
            auto ro = mdp::rollout(env, q_star, 1.0, seed);
            if (ro.episode.rewards.front() == 2.0) ++right_first;
        }
        CHECK(std::abs(right_first - n / 2) < 3.0 * std::sqrt(n * 0.25));
    }
    SUBCASE("max_steps truncates") {
        auto cyc = mdp::build_cycle_chain(4, std::vector<double>(4, 1.0));
        auto ro = mdp::rollout(cyc, mdp::QTable(cyc, 0.0), 0.0, 1, 7);
        CHECK(ro.episode.length() == 7);
        CHECK(ro.truncated);
    }
    CHECK_THROWS(mdp::rollout(env, q_star, 1.5, 0));
}

TEST_CASE("action-id space covers sparse ids") {
    auto env = mdp::build_one_way_cliff(3);
    CHECK(env.max_actions() == 2);
    CHECK(env.n_action_ids() == 4);  // ids are {up=0, right=3}
}

#include <doctest.h>

#include <cmath>
#include <random>

#include "cdqn/fvi.hpp"
#include "cdqn/losses.hpp"
#include "cdqn/rng.hpp"

using namespace cdqn;
using approx::Architecture;
using approx::Mlp;
using losses::Branch;
using losses::LossKind;
using losses::LossShape;
using losses::LossSpec;
using losses::TargetNetwork;

namespace {

// two states, two always-legal actions, one-hot features; a linear no-bias
// model then *is* a table: Q(s,a) = W[a][s]
const std::vector<mdp::Action> kBothActions{0, 1};

approx::FeatureMap table_map() {
    approx::FeatureMap fm;
    fm.n_features = 2;
    fm.n_actions = 2;
    fm.write_features = [](mdp::State s, std::span<double> buf) {
        buf[0] = s == 0 ? 1.0 : 0.0;
        buf[1] = s == 1 ? 1.0 : 0.0;
    };
    fm.legal_actions = [](mdp::State) { return std::span<const mdp::Action>(kBothActions); };
    return fm;
}

// params = {Q(0,a0), Q(1,a0), Q(0,a1), Q(1,a1)}
Mlp table_model(double q00, double q10, double q01, double q11) {
    return Mlp::with_params(Architecture{2, {}, 2, false}, {q00, q10, q01, q11});
}

TargetNetwork snapshot(const Mlp& m) {
    return TargetNetwork{{m.params().begin(), m.params().end()}, 0};
}

}  // namespace

TEST_CASE("value transform and its inverse") {
    CHECK(losses::transform(0.0, 0.01) == 0.0);
    CHECK(losses::inverse_transform(0.0, 0.01) == 0.0);
    CHECK(losses::transform(3.0, 0.01) == doctest::Approx(1.03).epsilon(1e-12));
    CHECK(losses::inverse_transform(1.03, 0.01) == doctest::Approx(3.0).epsilon(1e-9));
    // odd symmetry
    CHECK(losses::transform(-3.0, 0.01) == doctest::Approx(-1.03).epsilon(1e-12));
    // sampled round trip (the full acceptance grid covers [-1e6, 1e6])
    for (double x : {-1e6, -12345.6789, -1.0, 1e-9, 0.5, 777.0, 1e6}) {
        double back = losses::inverse_transform(losses::transform(x, 0.01), 0.01);
        CHECK(std::abs(back - x) <= 1e-9 * std::max(1.0, std::abs(x)));
    }
}

TEST_CASE("bellman_target selects the bootstrap per the double-Q flag") {
    auto fm = table_map();
    auto online = table_model(0.0, 9.0, 0.0, 0.0);    // online argmax at s'=1 is action 0
    auto target = snapshot(table_model(0.0, 1.0, 0.0, 5.0));  // target outputs (1,5) at s'=1
    mdp::Transition t{0, 0, 1.0, 1, false};

    LossSpec spec{LossKind::DQN, LossShape::Squared, false, 0.01};
    CHECK(losses::bellman_target(t, online, target, spec, 0.9, fm) == doctest::Approx(5.5));

    spec.double_q = true;
    CHECK(losses::bellman_target(t, online, target, spec, 0.9, fm) == doctest::Approx(1.9));

    mdp::Transition term{0, 0, -3.0, 1, true};
    spec.double_q = false;
    CHECK(losses::bellman_target(term, online, target, spec, 0.9, fm) == doctest::Approx(-3.0));

    // transformed shape: y = T(r + gamma * T^-1(f_target(s', a*)))
    spec.shape = LossShape::TransformedHuber;
    double f_next = 5.0;
    double expect = losses::transform(1.0 + 0.9 * losses::inverse_transform(f_next, 0.01), 0.01);
    CHECK(losses::bellman_target(t, online, target, spec, 0.9, fm) == doctest::Approx(expect));
    CHECK(losses::bellman_target(term, online, target, spec, 0.9, fm) ==
          doctest::Approx(losses::transform(-3.0, 0.01)));
}

TEST_CASE("per-sample loss across kinds and shapes") {
    auto fm = table_map();

    SUBCASE("equal parameters make all three kinds coincide") {
        auto online = table_model(0.4, -1.0, 2.0, 0.3);
        auto target = snapshot(online);
        mdp::Transition t{0, 1, 0.7, 1, false};
        for (auto shape : {LossShape::Squared, LossShape::Huber, LossShape::TransformedHuber}) {
            double dqn = losses::per_sample_loss(t, online, target,
                                                 {LossKind::DQN, shape, false, 0.01}, 0.9, fm)
                             .loss;
            double msbe = losses::per_sample_loss(t, online, target,
                                                  {LossKind::MSBE, shape, false, 0.01}, 0.9, fm)
                              .loss;
            auto cdqn = losses::per_sample_loss(t, online, target,
                                                {LossKind::CDQN, shape, false, 0.01}, 0.9, fm);
            CHECK(dqn == doctest::Approx(msbe));
            CHECK(cdqn.loss == doctest::Approx(dqn));
            CHECK(cdqn.branch == Branch::Dqn);  // exact tie goes to the DQN branch
        }
    }
    SUBCASE("Huber values at residuals 0.5 and 3") {
        // terminal target r = 0, so the residual is just Q(s,a)
        auto target = snapshot(table_model(0.0, 0.0, 0.0, 0.0));
        mdp::Transition t{0, 0, 0.0, 1, true};
        auto half = table_model(0.5, 0.0, 0.0, 0.0);
        CHECK(losses::per_sample_loss(t, half, target, {LossKind::DQN, LossShape::Huber}, 0.9, fm)
                  .loss == doctest::Approx(0.125));
        auto three = table_model(3.0, 0.0, 0.0, 0.0);
        CHECK(losses::per_sample_loss(t, three, target, {LossKind::DQN, LossShape::Huber}, 0.9, fm)
                  .loss == doctest::Approx(2.5));
        // squared and Huber agree below unit residual
        CHECK(losses::per_sample_loss(t, half, target, {LossKind::DQN, LossShape::Squared}, 0.9,
                                      fm)
                  .loss == doctest::Approx(0.125));
    }
    SUBCASE("the max branch wins and reports itself") {
        // gamma=1, pred 0, r 0: d_dqn = -V_target(s'), d_msbe = -V_online(s')
        double d_dqn = std::sqrt(2.0), d_msbe = std::sqrt(0.4);
        auto online = table_model(0.0, -d_msbe, 0.0, -10.0);
        auto target = snapshot(table_model(0.0, -d_dqn, 0.0, -10.0));
        mdp::Transition t{0, 0, 0.0, 1, false};
        auto res = losses::per_sample_loss(t, online, target,
                                           {LossKind::CDQN, LossShape::Squared}, 1.0, fm);
        CHECK(res.loss == doctest::Approx(1.0));
        CHECK(res.branch == Branch::Dqn);
    }
    SUBCASE("CDQN dominates both branches pointwise on random instances") {
        std::mt19937_64 eng(3);
        std::normal_distribution<double> normal(0.0, 2.0);
        for (int trial = 0; trial < 50; ++trial) {
            auto online = table_model(normal(eng), normal(eng), normal(eng), normal(eng));
            auto target = snapshot(table_model(normal(eng), normal(eng), normal(eng), normal(eng)));
            mdp::Transition t{0, eng() % 2 == 0 ? 0 : 1, normal(eng), 1, trial % 5 == 0};
            for (auto shape : {LossShape::Squared, LossShape::Huber, LossShape::TransformedHuber}) {
                double dqn = losses::per_sample_loss(t, online, target,
                                                     {LossKind::DQN, shape, false, 0.01}, 0.95, fm)
                                 .loss;
                double msbe =
                    losses::per_sample_loss(t, online, target,
                                            {LossKind::MSBE, shape, false, 0.01}, 0.95, fm)
                        .loss;
                double cdqn =
                    losses::per_sample_loss(t, online, target,
                                            {LossKind::CDQN, shape, false, 0.01}, 0.95, fm)
                        .loss;
                CHECK(cdqn >= dqn - 1e-15);
                CHECK(cdqn >= msbe - 1e-15);
            }
        }
    }
}

TEST_CASE("priority magnitudes") {
    auto fm = table_map();
    SUBCASE("equal parameters collapse the two magnitudes") {
        auto online = table_model(1.0, 2.0, -1.0, 0.5);
        auto target = snapshot(online);
        mdp::Transition t{0, 0, 0.3, 1, false};
        double d = losses::priority_magnitude(t, online, target,
                                              {LossKind::DQN, LossShape::Squared}, 0.9, fm);
        double m = losses::priority_magnitude(t, online, target,
                                              {LossKind::MSBE, LossShape::Squared}, 0.9, fm);
        double c = losses::priority_magnitude(t, online, target,
                                              {LossKind::CDQN, LossShape::Squared}, 0.9, fm);
        CHECK(d == doctest::Approx(m));
        CHECK(c == doctest::Approx(d));
    }
    SUBCASE("CDQN takes the larger magnitude") {
        auto online = table_model(0.0, -0.7, 0.0, -10.0);
        auto target = snapshot(table_model(0.0, -0.2, 0.0, -10.0));
        mdp::Transition t{0, 0, 0.0, 1, false};
        CHECK(losses::priority_magnitude(t, online, target, {LossKind::CDQN, LossShape::Squared},
                                         1.0, fm) == doctest::Approx(0.7));
    }
    SUBCASE("terminal transitions use |Q - r| for every kind") {
        auto online = table_model(2.0, 0.0, 0.0, 0.0);
        auto target = snapshot(table_model(-5.0, 0.0, 0.0, 0.0));
        mdp::Transition t{0, 0, 0.5, 1, true};
        for (auto kind : {LossKind::DQN, LossKind::MSBE, LossKind::CDQN})
            CHECK(losses::priority_magnitude(t, online, target, {kind, LossShape::Squared}, 0.9,
                                             fm) == doctest::Approx(1.5));
    }
}

TEST_CASE("batch loss combines importance weights") {
    auto fm = table_map();
    auto target = snapshot(table_model(0.0, 0.0, 0.0, 0.0));
    LossSpec spec{LossKind::DQN, LossShape::Squared, false, 0.01};

    SUBCASE("all-zero weights zero everything") {
        auto online = table_model(1.0, 2.0, 3.0, 4.0);
        std::vector<losses::BatchItem> batch{{{0, 0, 0.0, 1, true}, 0.0},
                                             {{1, 1, 1.0, 0, true}, 0.0}};
        std::vector<double> grad(online.n_params());
        double loss = losses::batch_loss_and_grad(batch, online, target, spec, 0.9, fm, grad);
        CHECK(loss == 0.0);
        for (double g : grad) CHECK(g == 0.0);
    }
    SUBCASE("a single unit-weight sample reproduces the per-sample loss") {
        auto online = table_model(1.3, 0.0, 0.0, 0.0);
        std::vector<losses::BatchItem> batch{{{0, 0, 0.0, 1, true}, 1.0}};
        std::vector<double> grad(online.n_params());
        double loss = losses::batch_loss_and_grad(batch, online, target, spec, 0.9, fm, grad);
        CHECK(loss ==
              doctest::Approx(
                  losses::per_sample_loss(batch[0].t, online, target, spec, 0.9, fm).loss));
        // d/dQ(0,a0) of (1/2)(Q - 0)^2 = Q = 1.3
        CHECK(grad[0] == doctest::Approx(1.3));
    }
    SUBCASE("weights (2, 2/3) on losses (1, 3) average to 2") {
        // terminal residuals sqrt(2) and sqrt(6) give 1/2 d^2 = 1 and 3
        auto online = table_model(std::sqrt(2.0), std::sqrt(6.0), 0.0, 0.0);
        std::vector<losses::BatchItem> batch{{{0, 0, 0.0, 1, true}, 2.0},
                                             {{1, 0, 0.0, 0, true}, 2.0 / 3.0}};
        std::vector<double> grad(online.n_params());
        double loss = losses::batch_loss_and_grad(batch, online, target, spec, 0.9, fm, grad);
        CHECK(loss == doctest::Approx(2.0));
        CHECK_THROWS(losses::batch_loss_and_grad(std::vector<losses::BatchItem>{}, online,
                                                 target, spec, 0.9, fm, grad));
    }
    SUBCASE("stats report priorities, branches and the unscaled error") {
        auto online = table_model(2.0, 0.0, 0.0, 0.0);
        std::vector<losses::BatchItem> batch{{{0, 0, 0.0, 1, true}, 1.0}};
        std::vector<double> grad(online.n_params());
        losses::BatchStats stats;
        losses::batch_loss_and_grad(batch, online, target,
                                    {LossKind::CDQN, LossShape::Squared}, 0.9, fm, grad, &stats);
        CHECK(stats.priority.size() == 1);
        CHECK(stats.priority[0] == doctest::Approx(2.0));
        CHECK(stats.mean_reported_mse == doctest::Approx(4.0));  // unscaled d^2
        CHECK(stats.dqn_branch_fraction == doctest::Approx(1.0));
    }
}

TEST_CASE("batch gradients match finite differences through the active branch") {
    auto fm = table_map();
    std::mt19937_64 eng(17);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (auto kind : {LossKind::DQN, LossKind::MSBE, LossKind::CDQN}) {
        for (auto shape : {LossShape::Squared, LossShape::Huber, LossShape::TransformedHuber}) {
            auto online = table_model(normal(eng), normal(eng), normal(eng), normal(eng));
            auto target = snapshot(table_model(normal(eng), normal(eng), normal(eng), normal(eng)));
            LossSpec spec{kind, shape, false, 0.01};
            std::vector<losses::BatchItem> batch{{{0, 0, 0.4, 1, false}, 1.3},
                                                 {{1, 1, -0.2, 0, false}, 0.7},
                                                 {{0, 1, 1.0, 1, true}, 1.0}};
            std::vector<double> analytic(online.n_params());
            losses::batch_loss_and_grad(batch, online, target, spec, 0.9, fm, analytic);

            auto p = online.params();
            std::vector<double> scratch(online.n_params());
            double h = 1e-6;
            for (std::size_t i = 0; i < p.size(); ++i) {
                double keep = p[i];
                p[i] = keep + h;
                double up =
                    losses::batch_loss_and_grad(batch, online, target, spec, 0.9, fm, scratch);
                p[i] = keep - h;
                double dn =
                    losses::batch_loss_and_grad(batch, online, target, spec, 0.9, fm, scratch);
                p[i] = keep;
                CHECK(analytic[i] == doctest::Approx((up - dn) / (2 * h)).epsilon(1e-5));
            }
        }
    }
}

TEST_CASE("target tracker replays the previous-step parameters") {
    auto fm = table_map();
    Mlp online = table_model(1.0, 1.0, 1.0, 1.0);
    losses::TargetTracker tracker(online);
    CHECK(tracker.target().version == 0);
    CHECK_THROWS_AS(tracker.update(), std::logic_error);

    approx::Adam adam({.lr = 0.1, .eps_a = 1e-3}, online.n_params());
    std::vector<double> grad{1.0, 0.0, 0.0, 0.0};

    auto theta0 = std::vector<double>(online.params().begin(), online.params().end());
    tracker.record_pre_step(online);
    adam.step(online.params(), grad);

    // after step 1, the target becomes theta_0 (one step behind)
    CHECK(tracker.update());
    CHECK(tracker.target().version == 1);
    CHECK(tracker.target().params == theta0);
    CHECK(tracker.target().params != std::vector<double>(online.params().begin(),
                                                         online.params().end()));

    // no optimizer step since: a second update is a no-op
    CHECK_FALSE(tracker.update());
    CHECK(tracker.target().version == 1);

    auto theta1 = std::vector<double>(online.params().begin(), online.params().end());
    grad = {0.0, 1.0, 0.0, 0.0};
    tracker.record_pre_step(online);
    adam.step(online.params(), grad);
    CHECK(tracker.update());
    CHECK(tracker.target().version == 2);
    CHECK(tracker.target().params == theta1);
}

TEST_CASE("target-iteration chains are non-increasing for CDQN on a fixed dataset") {
    // tabular parameterization on a small fixed MDP
    auto env = mdp::build_cliff_walking(4, 3);
    auto fm = approx::one_hot_map(env);
    Mlp model(Architecture{fm.n_features, {}, fm.n_actions, false}, 0);
    std::fill(model.params().begin(), model.params().end(), 0.0);
    std::vector<losses::BatchItem> dataset;
    for (const auto& t : env.all_transitions()) dataset.push_back({t, 1.0});

    fvi::OuterOptions opt;
    opt.n_outer = 12;
    opt.inner.grad_tol = 1e-9;
    opt.slack = 1e-8;
    auto res = fvi::run_fvi(model, dataset, {LossKind::CDQN, LossShape::Squared}, 0.9, fm, opt);
    CHECK(res.non_increasing);
    CHECK(res.losses.front() >= res.losses.back());

    SUBCASE("relaxed update schedule preserves the property") {
        Mlp m2(Architecture{fm.n_features, {}, fm.n_actions, false}, 0);
        std::fill(m2.params().begin(), m2.params().end(), 0.0);
        fvi::OuterOptions ropt = opt;
        ropt.relaxed = true;
        ropt.relaxed_steps = 25;
        ropt.n_outer = 30;
        auto r2 = fvi::run_fvi(m2, dataset, {LossKind::CDQN, LossShape::Squared}, 0.9, fm, ropt);
        CHECK(r2.non_increasing);
    }
}

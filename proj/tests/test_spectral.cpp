#include <doctest.h>

#include <cmath>
#include <numbers>
#include <stdexcept>

#include "cdqn/spectral.hpp"

using namespace cdqn;
using spectral::HessianKind;

TEST_CASE("trajectory Hessian entries and tiny spectra") {
    auto h1 = spectral::trajectory_hessian(1);
    CHECK(h1.at(0, 0) == 4.0);
    CHECK(spectral::condition_number(spectral::analytic_eigs(HessianKind::Trajectory, 1)) ==
          doctest::Approx(1.0));

    auto h3 = spectral::trajectory_hessian(3);
    CHECK(h3.at(0, 1) == -2.0);
    CHECK(h3.at(1, 0) == -2.0);
    CHECK(h3.at(0, 2) == 0.0);
    auto eigs = spectral::numeric_eigs(h3, 1e-13);
    double r2 = std::sqrt(2.0);
    CHECK(eigs[0] == doctest::Approx(4.0 - 2.0 * r2).epsilon(1e-12));
    CHECK(eigs[1] == doctest::Approx(4.0).epsilon(1e-12));
    CHECK(eigs[2] == doctest::Approx(4.0 + 2.0 * r2).epsilon(1e-12));

    auto e2 = spectral::numeric_eigs(spectral::trajectory_hessian(2), 1e-13);
    CHECK(e2[0] == doctest::Approx(2.0));
    CHECK(e2[1] == doctest::Approx(6.0));
    CHECK(spectral::condition_number(e2) == doctest::Approx(3.0));
    CHECK_THROWS(spectral::trajectory_hessian(0));
}

TEST_CASE("cycle Hessian structure") {
    auto h = spectral::cycle_hessian(4, 0.0);
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) CHECK(h.at(i, j) == (i == j ? 2.0 : 0.0));
    CHECK(spectral::condition_number(spectral::numeric_eigs(h, 1e-13)) == doctest::Approx(1.0));

    auto h5 = spectral::cycle_hessian(5, 0.9);
    CHECK(h5.at(0, 0) == doctest::Approx(2.0 * (1.0 + 0.81)));
    CHECK(h5.at(0, 1) == doctest::Approx(-1.8));
    CHECK(h5.at(0, 4) == doctest::Approx(-1.8));  // wrap-around
    CHECK(h5.at(0, 2) == 0.0);

    // n=2 folds both neighbours onto one entry
    auto h2 = spectral::cycle_hessian(2, 0.5);
    CHECK(h2.at(0, 1) == doctest::Approx(-2.0));
    CHECK_THROWS(spectral::cycle_hessian(1, 0.5));
    CHECK_THROWS(spectral::cycle_hessian(4, 1.0));
}

TEST_CASE("closed-form spectra match the numeric solver") {
    SUBCASE("trajectory") {
        for (int n : {10, 16, 64}) {
            auto numeric = spectral::numeric_eigs(spectral::trajectory_hessian(n), 1e-13);
            auto analytic = spectral::analytic_eigs(HessianKind::Trajectory, n);
            for (int k = 0; k < n; ++k)
                CHECK(std::abs(numeric[k] - analytic[k]) <= 1e-10 * std::abs(analytic[k]));
        }
        auto a10 = spectral::analytic_eigs(HessianKind::Trajectory, 10);
        CHECK(a10.front() == doctest::Approx(4.0 - 4.0 * std::cos(std::numbers::pi / 11.0)));
    }
    SUBCASE("cycle") {
        auto numeric = spectral::numeric_eigs(spectral::cycle_hessian(32, 0.9), 1e-13);
        auto analytic = spectral::analytic_eigs(HessianKind::Cycle, 32, 0.9);
        for (int k = 0; k < 32; ++k)
            CHECK(std::abs(numeric[k] - analytic[k]) <= 1e-10 * std::abs(analytic[k]));

        auto a6 = spectral::analytic_eigs(HessianKind::Cycle, 6, 0.5);
        for (int k = 0; k < 6; ++k) {
            double expected = 2.5 - 2.0 * std::cos(2.0 * k * std::numbers::pi / 6.0);
            bool found = false;
            for (double v : a6) found = found || std::abs(v - expected) < 1e-12;
            CHECK(found);
        }
    }
    SUBCASE("diagonal input is returned exactly") {
        spectral::SymmetricMatrix d(3);
        d.set(0, 0, 3.0);
        d.set(1, 1, -1.0);
        d.set(2, 2, 7.0);
        auto e = spectral::numeric_eigs(d, 1e-13);
        CHECK(e[0] == -1.0);
        CHECK(e[1] == 3.0);
        CHECK(e[2] == 7.0);
    }
    SUBCASE("sweep cap reports non-convergence") {
        CHECK_THROWS_AS(spectral::numeric_eigs(spectral::trajectory_hessian(64), 1e-13, 1),
                        std::runtime_error);
        CHECK_THROWS(spectral::numeric_eigs(spectral::trajectory_hessian(4), 0.0));
    }
}

TEST_CASE("standing waves are eigenvectors of the trajectory Hessian") {
    const int n = 16;
    auto h = spectral::trajectory_hessian(n);
    for (int k = 1; k <= n; ++k) {
        double lambda = 4.0 - 4.0 * std::cos(k * std::numbers::pi / (n + 1));
        std::vector<double> v(n), hv(n, 0.0);
        double norm = 0.0;
        for (int j = 0; j < n; ++j) {
            v[j] = std::sin((j + 1) * k * std::numbers::pi / (n + 1));
            norm += v[j] * v[j];
        }
        norm = std::sqrt(norm);
        double resid = 0.0;
        for (int i = 0; i < n; ++i) {
            for (int j = 0; j < n; ++j) hv[i] += h.at(i, j) * v[j];
            resid += (hv[i] - lambda * v[i]) * (hv[i] - lambda * v[i]);
        }
        CHECK(std::sqrt(resid) <= 1e-9 * norm);
    }
}

TEST_CASE("trajectory condition number follows the closed form") {
    for (int n : {2, 8, 32, 128, 512}) {
        auto eigs = spectral::numeric_eigs(spectral::trajectory_hessian(n), 1e-13);
        double c = std::cos(std::numbers::pi / (n + 1));
        CHECK(spectral::condition_number(eigs) ==
              doctest::Approx((1.0 + c) / (1.0 - c)).epsilon(1e-9));
    }
}

TEST_CASE("cycle condition number is monotone within parity and reaches the limit") {
    const double gamma = 0.9;
    double limit = std::pow((1.0 + gamma) / (1.0 - gamma), 2.0);
    double prev_even = 0.0, prev_odd = 0.0;
    for (int n = 3; n <= 257; ++n) {
        double kappa =
            spectral::condition_number(spectral::analytic_eigs(HessianKind::Cycle, n, gamma));
        CHECK(kappa <= limit * (1.0 + 1e-12));
        if (n % 2 == 0) {
            CHECK(kappa >= prev_even - 1e-9);
            prev_even = kappa;
        } else {
            CHECK(kappa >= prev_odd - 1e-9);
            prev_odd = kappa;
        }
    }
    double kappa_big =
        spectral::condition_number(spectral::analytic_eigs(HessianKind::Cycle, 4096, gamma));
    CHECK(kappa_big == doctest::Approx(limit).epsilon(1e-9));
}

TEST_CASE("condition number and scaling exponent edge cases") {
    std::vector<double> ident{1.0, 1.0, 1.0};
    CHECK(spectral::condition_number(ident) == doctest::Approx(1.0));
    std::vector<double> singular{0.0, 2.0};
    CHECK_THROWS(spectral::condition_number(singular));

    // exact power law recovers its exponent
    std::vector<double> ns, ks;
    for (int n : {8, 16, 32, 64}) {
        ns.push_back(n);
        ks.push_back(3.0 * n * n);
    }
    CHECK(spectral::scaling_exponent(ns, ks) == doctest::Approx(2.0).epsilon(1e-12));
    std::vector<double> two{1.0, 2.0};
    CHECK_THROWS(spectral::scaling_exponent(two, two));
}

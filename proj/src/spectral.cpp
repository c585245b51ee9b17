#include "cdqn/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace cdqn::spectral {

SymmetricMatrix trajectory_hessian(int n) {
    if (n < 1) throw std::invalid_argument("trajectory_hessian: n must be >= 1");
    SymmetricMatrix h(n);
    for (int i = 0; i < n; ++i) {
        h.set(i, i, 4.0);
        if (i + 1 < n) h.set(i, i + 1, -2.0);
    }
    return h;
}

SymmetricMatrix cycle_hessian(int n, double gamma) {
    if (n < 2) throw std::invalid_argument("cycle_hessian: n must be >= 2");
    if (gamma < 0.0 || gamma >= 1.0)
        throw std::invalid_argument("cycle_hessian: gamma must lie in [0,1)");
    SymmetricMatrix h(n);
    double diag = 2.0 * (1.0 + gamma * gamma);
    for (int i = 0; i < n; ++i) {
        h.set(i, i, diag);
        h.set(i, (i + 1) % n, h.at(i, (i + 1) % n) - 2.0 * gamma);
    }
    // n == 2 folds both neighbours onto the same entry, giving -4*gamma there
    return h;
}

std::vector<double> analytic_eigs(HessianKind kind, int n, double gamma) {
    std::vector<double> eigs;
    eigs.reserve(n);
    if (kind == HessianKind::Trajectory) {
        for (int k = 1; k <= n; ++k)
            eigs.push_back(4.0 - 4.0 * std::cos(k * std::numbers::pi / (n + 1)));
    } else {
        double diag = 2.0 * (1.0 + gamma * gamma);
        for (int k = 0; k < n; ++k)
            eigs.push_back(diag - 4.0 * gamma * std::cos(2.0 * k * std::numbers::pi / n));
    }
    std::sort(eigs.begin(), eigs.end());
    return eigs;
}

namespace {

double off_diagonal_norm(const SymmetricMatrix& m) {
    double sum = 0.0;
    int n = m.n();
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            if (i != j) sum += m.at(i, j) * m.at(i, j);
    return std::sqrt(sum);
}

}  // namespace

std::vector<double> numeric_eigs(const SymmetricMatrix& m, double tol, int max_sweeps) {
    if (tol <= 0.0) throw std::invalid_argument("numeric_eigs: tol must be > 0");
    const int n = m.n();
    SymmetricMatrix a = m;
    double* A = a.data().data();
    auto at = [&](int i, int j) -> double& { return A[static_cast<std::size_t>(i) * n + j]; };

    if (n == 1) return {at(0, 0)};

    for (int sweep = 0; sweep < max_sweeps; ++sweep) {
        if (off_diagonal_norm(a) <= tol) {
            std::vector<double> eigs(n);
            for (int i = 0; i < n; ++i) eigs[i] = at(i, i);
            std::sort(eigs.begin(), eigs.end());
            return eigs;
        }
        for (int p = 0; p < n - 1; ++p) {
            for (int q = p + 1; q < n; ++q) {
                double apq = at(p, q);
                if (apq == 0.0) continue;
                double theta = (at(q, q) - at(p, p)) / (2.0 * apq);
                double t = (theta >= 0.0 ? 1.0 : -1.0) /
                           (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                double c = 1.0 / std::sqrt(t * t + 1.0);
                double s = t * c;
                double tau = s / (1.0 + c);

                double app = at(p, p), aqq = at(q, q);
                at(p, p) = app - t * apq;
                at(q, q) = aqq + t * apq;
                at(p, q) = 0.0;
                at(q, p) = 0.0;
                for (int i = 0; i < n; ++i) {
                    if (i == p || i == q) continue;
                    double aip = at(i, p), aiq = at(i, q);
                    double nip = aip - s * (aiq + tau * aip);
                    double niq = aiq + s * (aip - tau * aiq);
                    at(i, p) = nip;
                    at(p, i) = nip;
                    at(i, q) = niq;
                    at(q, i) = niq;
                }
            }
        }
    }
    throw std::runtime_error("numeric_eigs: Jacobi sweeps did not converge");
}

double condition_number(std::span<const double> eigs) {
    if (eigs.empty()) throw std::invalid_argument("condition_number: empty spectrum");
    double lo = std::abs(eigs[0]), hi = std::abs(eigs[0]);
    for (double e : eigs) {
        lo = std::min(lo, std::abs(e));
        hi = std::max(hi, std::abs(e));
    }
    if (lo == 0.0) throw std::invalid_argument("condition_number: singular matrix");
    return hi / lo;
}

double scaling_exponent(std::span<const double> ns, std::span<const double> kappas) {
    if (ns.size() != kappas.size() || ns.size() < 3)
        throw std::invalid_argument("scaling_exponent: need >= 3 matching points");
    double mx = 0.0, my = 0.0;
    const auto n = static_cast<double>(ns.size());
    for (std::size_t i = 0; i < ns.size(); ++i) {
        mx += std::log(ns[i]);
        my += std::log(kappas[i]);
    }
    mx /= n;
    my /= n;
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t i = 0; i < ns.size(); ++i) {
        double dx = std::log(ns[i]) - mx;
        sxy += dx * (std::log(kappas[i]) - my);
        sxx += dx * dx;
    }
    return sxy / sxx;
}

}  // namespace cdqn::spectral

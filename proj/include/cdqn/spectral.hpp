#pragma once

#include <span>
#include <vector>

namespace cdqn::spectral {

/// Dense symmetric matrix; symmetry is maintained by set().
class SymmetricMatrix {
  public:
    explicit SymmetricMatrix(int n) : n_(n), a_(static_cast<std::size_t>(n) * n, 0.0) {}

    int n() const { return n_; }
    double at(int i, int j) const { return a_[static_cast<std::size_t>(i) * n_ + j]; }
    void set(int i, int j, double v) {
        a_[static_cast<std::size_t>(i) * n_ + j] = v;
        a_[static_cast<std::size_t>(j) * n_ + i] = v;
    }
    std::span<const double> data() const { return a_; }
    std::span<double> data() { return a_; }

  private:
    int n_;
    std::vector<double> a_;
};

enum class HessianKind { Trajectory, Cycle };

/// Curvature of the terminated-trajectory squared-Bellman-error objective
/// (with the anchoring Q^2 term at the first step): tridiagonal, diagonal 4,
/// off-diagonal -2. The uniform 1/N prefactor of the mean loss is omitted
/// throughout this module since condition numbers are scale-invariant.
SymmetricMatrix trajectory_hessian(int n);

/// Curvature of the cyclic objective sum_t (Q_t - r_t - gamma Q_{t+1})^2:
/// circulant with diagonal 2(1+gamma^2) and -2*gamma on the +-1 offsets
/// (wrap-around included). Requires n >= 2 and 0 <= gamma < 1.
SymmetricMatrix cycle_hessian(int n, double gamma);

/// Closed-form spectra, sorted ascending.
/// Trajectory: 4 - 4 cos(k pi / (n+1)), k = 1..n.
/// Cycle: 2(1+gamma^2) - 4 gamma cos(2 k pi / n), k = 0..n-1 (the circulant
/// spectrum; paired sine/cosine eigenvectors appear as coincident values).
std::vector<double> analytic_eigs(HessianKind kind, int n, double gamma = 0.0);

/// Full spectrum by cyclic Jacobi rotations; sweeps until the off-diagonal
/// Frobenius norm falls below tol (throws if the sweep cap is exceeded).
/// Returned values are sorted ascending.
std::vector<double> numeric_eigs(const SymmetricMatrix& m, double tol,
                                 int max_sweeps = 60);

/// |lambda_max| / |lambda_min|; throws on a zero eigenvalue.
double condition_number(std::span<const double> eigs);

/// Least-squares slope of log(kappa) against log(n); needs >= 3 points.
double scaling_exponent(std::span<const double> ns, std::span<const double> kappas);

}  // namespace cdqn::spectral

#pragma once

#include <span>
#include <vector>

#include "cdqn/losses.hpp"

namespace cdqn::fvi {

using approx::FeatureMap;
using approx::Mlp;
using losses::BatchItem;
using losses::LossSpec;
using losses::TargetNetwork;

struct InnerOptions {
    double grad_tol = 1e-8;
    long long max_iters = 50000;
};

struct InnerResult {
    double loss = 0.0;       // batch loss at the returned parameters
    double grad_norm = 0.0;  // gradient norm at the returned parameters
    bool at_kink = false;    // line search collapsed at a nonsmooth minimum
    bool converged = false;  // grad_norm <= grad_tol or at_kink
    long long iters = 0;
};

/// Minimizes the batch loss over the model parameters by spectral-step
/// gradient descent with a nonmonotone backtracking safeguard. The model is
/// left at the best parameters seen, so the loss never exceeds its starting
/// value. A step-size collapse at a nonsmooth point counts as converged.
InnerResult minimize_batch_loss(Mlp& model, std::span<const BatchItem> dataset,
                                const TargetNetwork& target, const LossSpec& spec,
                                double gamma, const FeatureMap& fm, const InnerOptions& opt);

struct OuterOptions {
    int n_outer = 25;
    InnerOptions inner;
    bool relaxed = false;      // flexible update period: a fixed short descent
    int relaxed_steps = 40;    // phase per target iterate instead of full
    double slack = 1e-7;       // minimization to grad_tol
};

struct OuterResult {
    std::vector<double> losses;  // L(theta_{i+1}; theta_i) per outer step
    std::vector<double> grad_norms;
    bool inner_ok = true;        // every inner phase converged (strict mode)
    bool non_increasing = true;  // losses[i+1] <= losses[i] + slack
    std::vector<double> final_params;
};

/// Target-iteration loop: each outer step starts the online parameters at
/// the current target, minimizes the loss against that frozen target, then
/// promotes the result to the next target.
OuterResult run_fvi(Mlp& model, std::span<const BatchItem> dataset, const LossSpec& spec,
                    double gamma, const FeatureMap& fm, const OuterOptions& opt);

}  // namespace cdqn::fvi

#include "cdqn/fvi.hpp"

#include <algorithm>
#include <cmath>

namespace cdqn::fvi {

namespace {

double norm2(std::span<const double> v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

}  // namespace

InnerResult minimize_batch_loss(Mlp& model, std::span<const BatchItem> dataset,
                                const TargetNetwork& target, const LossSpec& spec,
                                double gamma, const FeatureMap& fm,
                                const InnerOptions& opt) {
    const std::size_t n = model.n_params();
    std::vector<double> grad(n), prev_grad(n), prev_params(n);
    std::vector<double> best_params(model.params().begin(), model.params().end());

    auto eval = [&](std::span<double> g) {
        return losses::batch_loss_and_grad(dataset, model, target, spec, gamma, fm, g);
    };

    double loss = eval(grad);
    double best_loss = loss;
    double best_grad_norm = norm2(grad);

    InnerResult res;
    double step = 1.0;
    long long last_improvement = 0;
    long long tiny_steps = 0;        // consecutive accepted steps below 1e-10
    double marked_loss = best_loss;  // best at the last improvement mark
    for (long long it = 0; it < opt.max_iters; ++it) {
        double gnorm = norm2(grad);
        if (gnorm <= opt.grad_tol) {
            best_params.assign(model.params().begin(), model.params().end());
            best_loss = loss;
            best_grad_norm = gnorm;
            res.converged = true;
            res.iters = it;
            break;
        }
        // loss-stationary along a kink: either the trailing window makes
        // no measurable progress, or the accepted steps have collapsed
        if (it - last_improvement > 2000 || tiny_steps > 100) {
            res.at_kink = true;
            res.converged = true;
            res.iters = it;
            break;
        }
        prev_params.assign(model.params().begin(), model.params().end());
        prev_grad = grad;

        double trial = step;
        bool accepted = false;
        for (int bt = 0; bt < 60; ++bt) {
            auto p = model.params();
            for (std::size_t i = 0; i < n; ++i) p[i] = prev_params[i] - trial * prev_grad[i];
            double new_loss = eval(grad);
            if (new_loss <= loss - 1e-4 * trial * gnorm * gnorm) {
                loss = new_loss;
                accepted = true;
                break;
            }
            trial *= 0.5;
            if (trial < 1e-18) break;
        }
        if (!accepted) {
            model.set_params(prev_params);
            res.at_kink = true;   // no descent along -grad at any scale
            res.converged = true;
            res.iters = it;
            break;
        }
        if (loss < marked_loss - 1e-13 * (1.0 + std::abs(marked_loss))) {
            last_improvement = it;
            marked_loss = loss;
        }
        tiny_steps = trial < 1e-10 ? tiny_steps + 1 : 0;
        if (loss < best_loss) {
            best_loss = loss;
            best_params.assign(model.params().begin(), model.params().end());
            best_grad_norm = norm2(grad);
        }

        // spectral (Barzilai-Borwein) step for the next iteration
        double sy = 0.0, yy = 0.0;
        auto p = model.params();
        for (std::size_t i = 0; i < n; ++i) {
            double s = p[i] - prev_params[i];
            double y = grad[i] - prev_grad[i];
            sy += s * y;
            yy += y * y;
        }
        step = (sy > 0.0 && yy > 0.0) ? std::clamp(sy / yy, 1e-12, 1e3) : trial * 2.0;
        res.iters = it + 1;
    }

    model.set_params(best_params);
    res.loss = best_loss;
    res.grad_norm = best_grad_norm;
    if (!res.converged && res.grad_norm <= opt.grad_tol) res.converged = true;
    return res;
}

OuterResult run_fvi(Mlp& model, std::span<const BatchItem> dataset, const LossSpec& spec,
                    double gamma, const FeatureMap& fm, const OuterOptions& opt) {
    OuterResult out;
    TargetNetwork target{{model.params().begin(), model.params().end()}, 0};
    for (int i = 0; i < opt.n_outer; ++i) {
        model.set_params(target.params);
        InnerOptions inner = opt.inner;
        if (opt.relaxed) {
            inner.max_iters = opt.relaxed_steps;
            inner.grad_tol = 0.0;  // descend for a fixed phase, no tolerance
        }
        InnerResult r = minimize_batch_loss(model, dataset, target, spec, gamma, fm, inner);
        out.losses.push_back(r.loss);
        out.grad_norms.push_back(r.grad_norm);
        if (!opt.relaxed && !r.converged) out.inner_ok = false;
        target.params.assign(model.params().begin(), model.params().end());
        ++target.version;
    }
    for (std::size_t i = 1; i < out.losses.size(); ++i)
        if (out.losses[i] > out.losses[i - 1] + opt.slack) out.non_increasing = false;
    out.final_params.assign(model.params().begin(), model.params().end());
    return out;
}

}  // namespace cdqn::fvi

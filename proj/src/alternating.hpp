#pragma once

// Shared alternating-maximization loop for the linear and dual encoders.
//
// An encoder model provides:
//   ResponseStats stats() const;
//   Matrix& sigma();
//   void update_encoder(const Decoder&, const StudentMarginal&, double gamma);

#include <cmath>
#include <string>

#include "vib/ib_core.hpp"

namespace vib::detail {

template <typename Model>
FitTrace alternate(const PairedDataset& data, const BottleneckConfig& cfg, Model& model, Decoder& dec,
                   StudentMarginal& marg, bool fresh_marginal, const StepObserver& observer) {
    const bool gaussian = cfg.marginal == MarginalKind::gaussian;
    FitTrace trace;
    ResponseStats stats = model.stats();
    if (fresh_marginal || marg.kind != cfg.marginal || marg.Xi.rows() != data.size())
        marg = initial_marginal(cfg.marginal, stats.r2(model.sigma()));

    auto evaluate = [&]() {
        const double v = objective(data, stats, model.sigma(), dec, marg, cfg.gamma).value;
        if (!std::isfinite(v)) {
            const auto parts = objective(data, stats, model.sigma(), dec, marg, cfg.gamma);
            throw NumericalError("non-finite objective (relevance " + std::to_string(parts.relevance) +
                                 ", compression " + std::to_string(parts.compression) + ") at cycle " +
                                 std::to_string(trace.iterations));
        }
        return v;
    };
    auto observe = [&](int it, UpdateStep step) {
        if (observer) observer(it, step, evaluate());
    };

    double previous = 0.0;
    for (int it = 1; it <= cfg.max_iters; ++it) {
        dec = update_decoder(data, stats, model.sigma(), &trace.pd_repairs);
        observe(it, UpdateStep::decoder);

        marg = update_marginal(stats.r2(model.sigma()), marg);
        observe(it, UpdateStep::marginal);

        if (!gaussian) {
            marg = solve_nu(marg, &trace.nu_clamps);
            observe(it, UpdateStep::nu);
        }

        model.sigma() = gaussian ? update_sigma_gaussian(dec, marg.omega2, cfg.gamma)
                                 : update_sigma(dec, marg, cfg.gamma);
        observe(it, UpdateStep::sigma);

        model.update_encoder(dec, marg, cfg.gamma);
        stats = model.stats();
        const double value = evaluate();
        if (observer) observer(it, UpdateStep::encoder, value);

        trace.objective.push_back(value);
        trace.iterations = it;
        if (it > 1) {
            const double change = std::abs(value - previous) / std::max(std::abs(previous), 1e-3);
            if (change < cfg.rel_tol) {
                trace.converged = true;
                break;
            }
        }
        previous = value;
    }

    // Leave decoder and marginal optimal for the final encoder.
    dec = update_decoder(data, stats, model.sigma(), &trace.pd_repairs);
    marg = update_marginal(stats.r2(model.sigma()), marg);
    if (!gaussian) marg = solve_nu(marg, &trace.nu_clamps);
    return trace;
}

}  // namespace vib::detail

#include "cmr/grad_check.hpp"

#include <algorithm>
#include <cmath>

#include "cmr/errors.hpp"

namespace cmr {

namespace {

// The losses checked here are piecewise smooth (ReLU units, hinge terms).
// A central difference straddling a kink measures the average of two
// one-sided slopes, not the analytic derivative of the active piece. When a
// parameter disagrees at the requested h, the step is shrunk until the
// interval no longer crosses the kink: a genuinely wrong gradient keeps
// disagreeing at every h, a kink artifact vanishes.
constexpr int kMaxShrinks = 4;
constexpr double kShrinkFactor = 16.0;
constexpr double kAcceptEarly = 1e-6;

double rel_error(double analytic, double numeric) {
    const double denom =
        std::max({std::fabs(analytic), std::fabs(numeric), 1e-8});
    return std::fabs(analytic - numeric) / denom;
}

}  // namespace

GradCheckReport finite_diff_check(std::vector<ParamSlot> params,
                                  const std::function<double()>& loss_fn,
                                  const std::function<void()>& grad_fn,
                                  double h) {
    if (h <= 0.0) throw NumericError("finite_diff_check: h must be positive");

    const double l0 = loss_fn();
    const double l1 = loss_fn();
    if (l0 != l1) {
        throw NumericError("finite_diff_check: loss_fn is not deterministic (" +
                           std::to_string(l0) + " vs " + std::to_string(l1) + ")");
    }

    grad_fn();
    // Snapshot analytic gradients before perturbation runs can overwrite them.
    std::vector<std::vector<double>> analytic;
    analytic.reserve(params.size());
    for (const ParamSlot& slot : params) {
        analytic.emplace_back(slot.grads.begin(), slot.grads.end());
    }

    GradCheckReport report;
    for (std::size_t s = 0; s < params.size(); ++s) {
        ParamSlot& slot = params[s];
        for (std::size_t i = 0; i < slot.values.size(); ++i) {
            const double saved = slot.values[i];
            const double ga = analytic[s][i];

            double best_rel = 0.0;
            double best_numeric = 0.0;
            double step = h;
            for (int attempt = 0; attempt <= kMaxShrinks; ++attempt) {
                slot.values[i] = saved + step;
                const double lp = loss_fn();
                slot.values[i] = saved - step;
                const double lm = loss_fn();
                slot.values[i] = saved;

                const double numeric = (lp - lm) / (2.0 * step);
                const double rel = rel_error(ga, numeric);
                if (attempt == 0 || rel < best_rel) {
                    best_rel = rel;
                    best_numeric = numeric;
                }
                if (best_rel <= kAcceptEarly) break;
                step /= kShrinkFactor;
            }

            ++report.params_checked;
            if (best_rel > report.max_rel_error) {
                report.max_rel_error = best_rel;
                report.worst_param = slot.name;
                report.worst_index = i;
                report.worst_analytic = ga;
                report.worst_numeric = best_numeric;
            }
        }
    }
    return report;
}

}  // namespace cmr

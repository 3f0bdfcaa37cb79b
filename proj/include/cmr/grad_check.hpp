#pragma once

#include <functional>
#include <string>
#include <vector>

#include "cmr/optimizer.hpp"

namespace cmr {

struct GradCheckReport {
    double max_rel_error = 0.0;
    std::string worst_param;
    std::size_t worst_index = 0;
    double worst_analytic = 0.0;
    double worst_numeric = 0.0;
    std::size_t params_checked = 0;
};

// Central-difference verification of analytic gradients.
//
//   loss_fn  — pure evaluation of the loss at the current parameter values
//   grad_fn  — computes analytic gradients into the slots' grad spans
//
// For every parameter scalar, compares the analytic gradient against
// (L(θ+h) − L(θ−h)) / 2h with relative error
// |g_a − g_n| / max(|g_a|, |g_n|, 1e-8). Parameters whose difference
// interval straddles a ReLU/hinge kink are re-measured at smaller steps;
// the best estimate per parameter is reported.
//
// loss_fn must be deterministic; two identical evaluations are compared
// up front and a mismatch throws NumericError.
GradCheckReport finite_diff_check(std::vector<ParamSlot> params,
                                  const std::function<double()>& loss_fn,
                                  const std::function<void()>& grad_fn,
                                  double h);

}  // namespace cmr

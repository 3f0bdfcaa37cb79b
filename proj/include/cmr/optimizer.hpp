#pragma once

#include <span>
#include <string>
#include <vector>

namespace cmr {

// A named view over one parameter tensor and its gradient. Networks expose
// their parameters as a flat list of these.
struct ParamSlot {
    std::string name;
    std::span<double> values;
    std::span<double> grads;
};

enum class OptimizerKind { SGD, Adam };

// Optimizer with per-parameter state. Adam keeps bias-corrected first and
// second moments; moment buffers are allocated on the first step and
// shape-checked afterwards.
struct OptimizerState {
    OptimizerKind kind = OptimizerKind::Adam;
    double learning_rate = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    long step_count = 0;

    std::vector<std::vector<double>> m;  // first moments, parallel to slots
    std::vector<std::vector<double>> v;  // second moments

    void reset_moments();

    // One update over all slots. Throws NumericError on NaN gradients,
    // naming the offending tensor.
    void step(std::vector<ParamSlot>& params);
};

}  // namespace cmr

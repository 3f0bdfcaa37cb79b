#include "cmr/optimizer.hpp"

#include <cmath>

#include "cmr/errors.hpp"

namespace cmr {

void OptimizerState::reset_moments() {
    m.clear();
    v.clear();
    step_count = 0;
}

void OptimizerState::step(std::vector<ParamSlot>& params) {
    for (const ParamSlot& slot : params) {
        for (double g : slot.grads) {
            if (std::isnan(g)) {
                throw NumericError("optimizer_step: NaN gradient in tensor '" +
                                   slot.name + "'");
            }
        }
    }

    if (kind == OptimizerKind::SGD) {
        for (ParamSlot& slot : params) {
            for (std::size_t i = 0; i < slot.values.size(); ++i) {
                slot.values[i] -= learning_rate * slot.grads[i];
            }
        }
        ++step_count;
        return;
    }

    if (m.empty()) {
        for (const ParamSlot& slot : params) {
            m.emplace_back(slot.values.size(), 0.0);
            v.emplace_back(slot.values.size(), 0.0);
        }
    }
    if (m.size() != params.size()) {
        throw DimensionError("optimizer_step: slot count changed mid-run");
    }

    ++step_count;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step_count));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step_count));
    for (std::size_t s = 0; s < params.size(); ++s) {
        ParamSlot& slot = params[s];
        if (m[s].size() != slot.values.size()) {
            throw DimensionError("optimizer_step: moment shape mismatch for '" +
                                 slot.name + "'");
        }
        for (std::size_t i = 0; i < slot.values.size(); ++i) {
            const double g = slot.grads[i];
            m[s][i] = beta1 * m[s][i] + (1.0 - beta1) * g;
            v[s][i] = beta2 * v[s][i] + (1.0 - beta2) * g * g;
            const double mhat = m[s][i] / bc1;
            const double vhat = v[s][i] / bc2;
            slot.values[i] -= learning_rate * mhat / (std::sqrt(vhat) + epsilon);
        }
    }
}

}  // namespace cmr

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "hetreg/model.hpp"

namespace hetreg {

/// theta <- theta - lr * g. Throws DivergenceError on non-finite gradients.
void sgd_step(std::vector<std::span<double>> params, const ParamGrads& grads, double lr);

/// Adam with bias correction; epsilon sits outside the square root:
/// theta <- theta - lr * m_hat / (sqrt(v_hat) + eps).
struct AdamState {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::int64_t step_count = 0;
    std::vector<std::vector<double>> m;
    std::vector<std::vector<double>> v;

    static AdamState create(const std::vector<std::span<double>>& params, double lr);

    /// One update. Throws DivergenceError on non-finite gradients; state is
    /// untouched when that happens.
    void step(std::vector<std::span<double>> params, const ParamGrads& grads);
};

}  // namespace hetreg

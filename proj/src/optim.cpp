#include "hetreg/optim.hpp"

#include <cmath>
#include <string>

#include "hetreg/errors.hpp"

namespace hetreg {

namespace {

void check_congruent(const std::vector<std::span<double>>& params, const ParamGrads& grads) {
    if (params.size() != grads.arrays.size()) {
        throw ShapeError("optimizer: parameter/gradient array count mismatch");
    }
    for (std::size_t a = 0; a < params.size(); ++a) {
        if (params[a].size() != grads.arrays[a].size()) {
            throw ShapeError("optimizer: array " + std::to_string(a) + " size mismatch");
        }
    }
}

void check_finite(const ParamGrads& grads) {
    for (std::size_t a = 0; a < grads.arrays.size(); ++a) {
        const auto& g = grads.arrays[a];
        for (std::size_t i = 0; i < g.size(); ++i) {
            if (!std::isfinite(g[i])) {
                throw DivergenceError("non-finite gradient (array " + std::to_string(a) +
                                          ", entry " + std::to_string(i) + ", value " +
                                          std::to_string(g[i]) + ")",
                                      a, i);
            }
        }
    }
}

}  // namespace

void sgd_step(std::vector<std::span<double>> params, const ParamGrads& grads, double lr) {
    if (!(lr > 0.0)) throw ConfigError("sgd: lr must be positive");
    check_congruent(params, grads);
    check_finite(grads);
    for (std::size_t a = 0; a < params.size(); ++a) {
        auto p = params[a];
        const auto& g = grads.arrays[a];
        for (std::size_t i = 0; i < p.size(); ++i) {
            p[i] -= lr * g[i];
        }
    }
}

AdamState AdamState::create(const std::vector<std::span<double>>& params, double lr) {
    AdamState state;
    state.lr = lr;
    state.m.reserve(params.size());
    state.v.reserve(params.size());
    for (const auto& p : params) {
        state.m.emplace_back(p.size(), 0.0);
        state.v.emplace_back(p.size(), 0.0);
    }
    return state;
}

void AdamState::step(std::vector<std::span<double>> params, const ParamGrads& grads) {
    check_congruent(params, grads);
    if (m.size() != params.size()) {
        throw ShapeError("adam: state not created for these parameters");
    }
    check_finite(grads);
    ++step_count;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step_count));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step_count));
    for (std::size_t a = 0; a < params.size(); ++a) {
        auto p = params[a];
        const auto& g = grads.arrays[a];
        auto& ma = m[a];
        auto& va = v[a];
        for (std::size_t i = 0; i < p.size(); ++i) {
            ma[i] = beta1 * ma[i] + (1.0 - beta1) * g[i];
            va[i] = beta2 * va[i] + (1.0 - beta2) * g[i] * g[i];
            const double m_hat = ma[i] / bc1;
            const double v_hat = va[i] / bc2;
            p[i] -= lr * m_hat / (std::sqrt(v_hat) + eps);
        }
    }
}

}  // namespace hetreg

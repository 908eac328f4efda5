#include "hetreg/activation.hpp"

#include <cmath>
#include <limits>

#include "hetreg/errors.hpp"
#include "hetreg/simd_math.hpp"

namespace hetreg {

Activation activation_from_string(std::string_view name) {
    if (name == "tanh") return Activation::Tanh;
    if (name == "relu") return Activation::Relu;
    if (name == "softplus") return Activation::Softplus;
    throw ConfigError("unknown activation: " + std::string(name));
}

std::string to_string(Activation kind) {
    switch (kind) {
        case Activation::Tanh: return "tanh";
        case Activation::Relu: return "relu";
        case Activation::Softplus: return "softplus";
    }
    return "?";
}

double softplus(double x) {
    const double value = std::fmax(x, 0.0) + std::log1p(std::exp(-std::fabs(x)));
    // Strictly positive even where exp(-|x|) underflows.
    return std::fmax(value, std::numeric_limits<double>::min());
}

double softplus_inv(double y) {
    // x = y + log(1 - exp(-y)), stable for both small and large y.
    return y + std::log(-std::expm1(-y));
}

double logistic(double x) {
    if (x >= 0.0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

Matrix activate(Activation kind, const Matrix& x) {
    Matrix out = x;
    double* p = out.data();
    const std::size_t n = out.size();
    switch (kind) {
        case Activation::Tanh:
            detail::tanh_inplace(p, n);
            break;
        case Activation::Relu:
            for (std::size_t i = 0; i < n; ++i) p[i] = p[i] > 0.0 ? p[i] : 0.0;
            break;
        case Activation::Softplus:
            for (std::size_t i = 0; i < n; ++i) p[i] = softplus(p[i]);
            break;
    }
    return out;
}

Matrix activation_derivative(Activation kind, const Matrix& x) {
    Matrix out = x;
    double* p = out.data();
    const std::size_t n = out.size();
    switch (kind) {
        case Activation::Tanh:
            detail::tanh_inplace(p, n);
            for (std::size_t i = 0; i < n; ++i) p[i] = 1.0 - p[i] * p[i];
            break;
        case Activation::Relu:
            for (std::size_t i = 0; i < n; ++i) p[i] = p[i] > 0.0 ? 1.0 : 0.0;
            break;
        case Activation::Softplus:
            for (std::size_t i = 0; i < n; ++i) p[i] = logistic(p[i]);
            break;
    }
    return out;
}

}  // namespace hetreg

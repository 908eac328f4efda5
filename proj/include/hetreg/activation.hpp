#pragma once

#include <string>
#include <string_view>

#include "hetreg/matrix.hpp"

namespace hetreg {

enum class Activation { Tanh, Relu, Softplus };

Activation activation_from_string(std::string_view name);
std::string to_string(Activation kind);

/// Numerically stable softplus: max(x,0) + log1p(exp(-|x|)). Strictly
/// positive and overflow-free for any finite x.
double softplus(double x);

/// Inverse of softplus for y > 0.
double softplus_inv(double y);

/// Logistic sigmoid, the softplus derivative.
double logistic(double x);

/// Elementwise activation.
Matrix activate(Activation kind, const Matrix& x);

/// Elementwise derivative at pre-activation x. Conventions: relu'(0) = 0.
Matrix activation_derivative(Activation kind, const Matrix& x);

}  // namespace hetreg

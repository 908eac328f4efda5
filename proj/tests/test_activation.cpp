#include <doctest.h>

#include <cmath>

#include "hetreg/activation.hpp"

using namespace hetreg;

namespace {

Matrix scalar(double v) {
    return Matrix::from_rows({{v}});
}

}  // namespace

TEST_CASE("softplus closed forms and stability") {
    CHECK(activate(Activation::Softplus, scalar(0.0))(0, 0) ==
          doctest::Approx(std::log(2.0)).epsilon(1e-15));
    // Large input must not overflow: softplus(50) = 50 + log1p(e^-50).
    const double at50 = activate(Activation::Softplus, scalar(50.0))(0, 0);
    CHECK(at50 == doctest::Approx(50.0 + std::log1p(std::exp(-50.0))).epsilon(1e-15));
    CHECK(std::isfinite(activate(Activation::Softplus, scalar(1e6))(0, 0)));
    CHECK(activate(Activation::Softplus, scalar(-1e6))(0, 0) > 0.0);
}

TEST_CASE("softplus matches ln(1+e^x) to 1e-12 relative on |x| <= 30") {
    // Extended-precision reference for the whole range (log1pl keeps the tiny
    // addend's precision); the double naive formula is additionally checked
    // where it is itself trustworthy.
    for (int i = 0; i <= 600; ++i) {
        const double x = -30.0 + 0.1 * i;
        const double stable = softplus(x);
        const double reference =
            static_cast<double>(log1pl(expl(static_cast<long double>(x))));
        CHECK(std::fabs(stable - reference) <= 1e-12 * std::fabs(reference));
        if (x >= -5.0) {
            const double naive = std::log(1.0 + std::exp(x));
            CHECK(std::fabs(stable - naive) <= 1e-12 * std::fabs(naive));
        }
        CHECK(stable > 0.0);
    }
}

TEST_CASE("softplus_inv inverts softplus") {
    for (double y : {1e-6, 0.01, 0.5, 1.0, 3.0, 40.0}) {
        CHECK(softplus(softplus_inv(y)) == doctest::Approx(y).epsilon(1e-12));
    }
}

TEST_CASE("relu and tanh pointwise values") {
    CHECK(activate(Activation::Relu, scalar(-3.0))(0, 0) == 0.0);
    CHECK(activate(Activation::Relu, scalar(3.0))(0, 0) == 3.0);
    CHECK(activate(Activation::Tanh, scalar(0.0))(0, 0) == 0.0);
}

TEST_CASE("derivative conventions at notable points") {
    CHECK(activation_derivative(Activation::Tanh, scalar(0.0))(0, 0) == 1.0);
    CHECK(activation_derivative(Activation::Softplus, scalar(0.0))(0, 0) == 0.5);
    CHECK(activation_derivative(Activation::Relu, scalar(0.0))(0, 0) == 0.0);
}

TEST_CASE("derivatives match central finite differences on a grid") {
    const double h = 1e-6;
    for (auto kind : {Activation::Tanh, Activation::Relu, Activation::Softplus}) {
        for (int i = 0; i < 1000; ++i) {
            const double x = -10.0 + 20.0 * static_cast<double>(i) / 999.0;
            if (kind == Activation::Relu && std::fabs(x) < 2.0 * h) continue;
            const double fd = (activate(kind, scalar(x + h))(0, 0) -
                               activate(kind, scalar(x - h))(0, 0)) /
                              (2.0 * h);
            const double analytic = activation_derivative(kind, scalar(x))(0, 0);
            CHECK(std::fabs(analytic - fd) < 1e-6);
        }
    }
}

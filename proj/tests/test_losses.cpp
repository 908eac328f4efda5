#include <doctest.h>

#include <cmath>
#include <functional>

#include "hetreg/errors.hpp"
#include "hetreg/losses.hpp"
#include "hetreg/rng.hpp"

using namespace hetreg;

namespace {

constexpr double kHalfLog2Pi = 0.91893853320467274178;

GaussianPrediction point(double mean, double variance) {
    GaussianPrediction pred;
    pred.mean = Matrix(1, 1, mean);
    pred.variance = Matrix(1, 1, variance);
    return pred;
}

Matrix target1(double y) {
    return Matrix(1, 1, y);
}

// Central finite differences of a scalar loss value in mean and variance,
// evaluated in extended precision so oracle noise stays far below the 1e-6
// tolerances being checked.
struct HeadFd {
    double d_mean;
    double d_variance;
};

HeadFd head_fd(const std::function<long double(long double, long double)>& value, double mu,
               double var) {
    const long double h_mu = 1e-6L * std::fmax(1.0, std::fabs(mu));
    const long double h_var = 1e-6L * var;
    HeadFd fd;
    fd.d_mean = static_cast<double>(
        (value(mu + h_mu, var) - value(mu - h_mu, var)) / (2.0L * h_mu));
    fd.d_variance = static_cast<double>(
        (value(mu, var + h_var) - value(mu, var - h_var)) / (2.0L * h_var));
    return fd;
}

double rel_err(double analytic, double reference) {
    return std::fabs(analytic - reference) /
           std::fmax(std::fmax(std::fabs(analytic), std::fabs(reference)), 1e-9);
}

}  // namespace

TEST_CASE("nll frozen scalar examples") {
    {
        const auto r = nll(point(0.0, 1.0), target1(0.0));
        CHECK(r.per_sample_loss[0] == doctest::Approx(kHalfLog2Pi).epsilon(1e-12));
    }
    {
        const auto r = nll(point(0.0, 1.0), target1(1.0));
        CHECK(r.per_sample_loss[0] == doctest::Approx(0.5 + kHalfLog2Pi).epsilon(1e-12));
        CHECK(r.d_mean(0, 0) == doctest::Approx(-1.0).epsilon(1e-12));
        CHECK(r.d_variance(0, 0) == doctest::Approx(0.0));
    }
    {
        const auto r = nll(point(1.0, 4.0), target1(3.0));
        // 0.5*ln4 + 4/8 + 0.5*ln(2pi)
        CHECK(r.per_sample_loss[0] ==
              doctest::Approx(std::log(2.0) + 0.5 + kHalfLog2Pi).epsilon(1e-12));
        CHECK(r.per_sample_loss[0] == doctest::Approx(2.1120857).epsilon(1e-7));
        CHECK(r.d_mean(0, 0) == doctest::Approx(-0.5).epsilon(1e-12));
        CHECK(r.d_variance(0, 0) == doctest::Approx(0.0));
    }
}

TEST_CASE("nll rejects nonpositive variance") {
    CHECK_THROWS_AS(nll(point(0.0, 0.0), target1(0.0)), ConfigError);
    CHECK_THROWS_AS(nll(point(0.0, -1.0), target1(0.0)), ConfigError);
}

TEST_CASE("beta-nll frozen scalar examples") {
    {
        const auto r = beta_nll(point(1.0, 4.0), target1(3.0), 0.5, 0.5);
        CHECK(r.per_sample_loss[0] ==
              doctest::Approx(2.0 * (std::log(2.0) + 0.5 + kHalfLog2Pi)).epsilon(1e-12));
        CHECK(r.per_sample_loss[0] == doctest::Approx(4.2241714).epsilon(1e-7));
        CHECK(r.d_mean(0, 0) == doctest::Approx(-1.0).epsilon(1e-12));
        CHECK(r.d_variance(0, 0) == doctest::Approx(0.0));
    }
    {
        const auto r = beta_nll(point(1.0, 4.0), target1(3.0), 1.0, 1.0);
        CHECK(r.per_sample_loss[0] ==
              doctest::Approx(4.0 * (std::log(2.0) + 0.5 + kHalfLog2Pi)).epsilon(1e-12));
        CHECK(r.per_sample_loss[0] == doctest::Approx(8.4483428).epsilon(1e-7));
        // beta=1 mean gradient equals the MSE gradient mu - y.
        CHECK(r.d_mean(0, 0) == doctest::Approx(-2.0).epsilon(1e-12));
    }
    CHECK_THROWS_AS(beta_nll(point(0.0, 1.0), target1(0.0), -0.1, 0.0), ConfigError);
    CHECK_THROWS_AS(beta_nll(point(0.0, 1.0), target1(0.0), 0.0, 2.5), ConfigError);
}

TEST_CASE("beta-nll at beta=0 is the nll, values and gradients, 1000 random inputs") {
    SeededRng rng(404);
    for (int i = 0; i < 1000; ++i) {
        const double mu = 2.0 * rng.normal();
        const double y = 2.0 * rng.normal();
        const double var = std::exp(rng.uniform(std::log(0.01), std::log(100.0)));
        const auto a = nll(point(mu, var), target1(y));
        const auto b = beta_nll(point(mu, var), target1(y), 0.0, 0.0);
        CHECK(rel_err(b.per_sample_loss[0], a.per_sample_loss[0]) < 1e-12);
        CHECK(rel_err(b.d_mean(0, 0), a.d_mean(0, 0)) < 1e-12);
        CHECK(rel_err(b.d_variance(0, 0), a.d_variance(0, 0)) < 1e-12);
    }
}

TEST_CASE("beta-nll at beta_mean=1 matches the mse mean gradient exactly") {
    SeededRng rng(405);
    for (int i = 0; i < 1000; ++i) {
        const double mu = 2.0 * rng.normal();
        const double y = 2.0 * rng.normal();
        const double var = std::exp(rng.uniform(std::log(0.01), std::log(100.0)));
        const auto b = beta_nll(point(mu, var), target1(y), 1.0, 1.0);
        const auto m = mse(point(mu, var), target1(y));
        CHECK(rel_err(b.d_mean(0, 0), m.d_mean(0, 0)) < 1e-12);
    }
}

TEST_CASE("mse values and gradients") {
    CHECK(mse(point(2.0, 1.0), target1(2.0)).per_sample_loss[0] == 0.0);
    const auto r = mse(point(0.0, 1.0), target1(2.0));
    CHECK(r.per_sample_loss[0] == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(r.d_mean(0, 0) == doctest::Approx(-2.0).epsilon(1e-12));
    CHECK(r.d_variance(0, 0) == 0.0);
    CHECK(mse(point(1.0, 1.0), target1(3.0)).per_sample_loss[0] ==
          doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("fixed variance nll") {
    {
        const auto r = fixed_var_nll(point(0.0, 7.0), target1(0.0), 1.0);
        CHECK(r.per_sample_loss[0] == doctest::Approx(kHalfLog2Pi).epsilon(1e-12));
        CHECK(r.d_variance(0, 0) == 0.0);
    }
    {
        // With sigma2 = 1 the mean gradient is exactly the MSE one.
        const auto fixed = fixed_var_nll(point(0.7, 3.0), target1(-1.2), 1.0);
        const auto squared = mse(point(0.7, 3.0), target1(-1.2));
        CHECK(fixed.d_mean(0, 0) == squared.d_mean(0, 0));
    }
    {
        const auto r = fixed_var_nll(point(1.0, 1.0), target1(3.0), 4.0);
        CHECK(r.per_sample_loss[0] ==
              doctest::Approx(0.5 * std::log(4.0) + 0.5 + kHalfLog2Pi).epsilon(1e-12));
        CHECK(r.per_sample_loss[0] == doctest::Approx(2.1120857).epsilon(1e-7));
        CHECK(r.d_mean(0, 0) == doctest::Approx(-0.5).epsilon(1e-12));
    }
    CHECK_THROWS_AS(fixed_var_nll(point(0.0, 1.0), target1(0.0), 0.0), ConfigError);
    CHECK_THROWS_AS(fixed_var_nll(point(0.0, 1.0), target1(0.0), -2.0), ConfigError);
}

TEST_CASE("moment matching (std form) frozen examples and fd oracle") {
    {
        const auto r = moment_matching_std(point(2.0, 1.0), target1(2.0));
        CHECK(r.per_sample_loss[0] == doctest::Approx(1.0).epsilon(1e-12));
    }
    {
        const auto r = moment_matching_std(point(0.0, 1.0), target1(2.0));
        CHECK(r.per_sample_loss[0] == doctest::Approx(5.0).epsilon(1e-12));
    }
    {
        const double mu = 0.3, var = 0.7, y = 1.1;
        const auto r = moment_matching_std(point(mu, var), target1(y));
        const auto value = [y](long double m, long double v) {
            const long double res = y - m;
            const long double gap = fabsl(res) - sqrtl(v);
            return res * res + gap * gap;
        };
        const HeadFd fd = head_fd(value, mu, var);
        CHECK(std::fabs(r.d_mean(0, 0) - fd.d_mean) < 1e-6);
        CHECK(std::fabs(r.d_variance(0, 0) - fd.d_variance) < 1e-6);
    }
}

TEST_CASE("moment matching (variance form) frozen examples") {
    {
        const double s = 2.5;
        const auto r = moment_matching_var(point(1.0, s), target1(1.0), true);
        CHECK(r.per_sample_loss[0] == doctest::Approx(0.25 * s * s).epsilon(1e-12));
        CHECK(r.d_variance(0, 0) == doctest::Approx(0.5 * s).epsilon(1e-12));
    }
    {
        const auto r = moment_matching_var(point(0.0, 1.0), target1(2.0), true);
        CHECK(r.per_sample_loss[0] == doctest::Approx(4.25).epsilon(1e-12));
    }
    {
        // With the detach convention the gradients coincide with
        // beta-nll(beta_mean=1, beta_var=2).
        const auto mm = moment_matching_var(point(1.0, 4.0), target1(3.0), true);
        const auto bn = beta_nll(point(1.0, 4.0), target1(3.0), 1.0, 2.0);
        CHECK(mm.d_mean(0, 0) == doctest::Approx(-2.0).epsilon(1e-12));
        CHECK(mm.d_variance(0, 0) == doctest::Approx(0.0));
        CHECK(mm.d_mean(0, 0) == bn.d_mean(0, 0));
        CHECK(mm.d_variance(0, 0) == bn.d_variance(0, 0));
    }
}

TEST_CASE("beta-nll(1,2) gradients equal variance moment matching under detach, randomized") {
    SeededRng rng(406);
    for (int i = 0; i < 1000; ++i) {
        const double mu = 2.0 * rng.normal();
        const double y = 2.0 * rng.normal();
        const double var = std::exp(rng.uniform(std::log(0.01), std::log(100.0)));
        const auto mm = moment_matching_var(point(mu, var), target1(y), true);
        const auto bn = beta_nll(point(mu, var), target1(y), 1.0, 2.0);
        CHECK(rel_err(bn.d_mean(0, 0), mm.d_mean(0, 0)) < 1e-12);
        CHECK(rel_err(bn.d_variance(0, 0), mm.d_variance(0, 0)) < 1e-12);
    }
    // Without the detach the mean gradients genuinely differ.
    const auto loose = moment_matching_var(point(0.0, 1.0), target1(2.0), false);
    const auto tied = moment_matching_var(point(0.0, 1.0), target1(2.0), true);
    CHECK(loose.d_mean(0, 0) != tied.d_mean(0, 0));
    CHECK(loose.d_variance(0, 0) == tied.d_variance(0, 0));
}

TEST_CASE("analytic head gradients match finite differences across the family") {
    SeededRng rng(407);
    double worst = 0.0;
    for (int i = 0; i < 400; ++i) {
        const double mu = 2.0 * rng.normal();
        double y = 2.0 * rng.normal();
        while (std::fabs(y - mu) < 1e-3) y += 0.1;  // keep off the |res| kink
        const double var = std::exp(rng.uniform(std::log(0.01), std::log(100.0)));
        const double beta = rng.uniform(0.0, 2.0);

        {  // NLL
            const auto r = nll(point(mu, var), target1(y));
            const HeadFd fd = head_fd(
                [y](long double m, long double v) {
                    const long double res = y - m;
                    return 0.5L * logl(v) + res * res / (2.0L * v) + kHalfLog2Pi;
                },
                mu, var);
            worst = std::fmax(worst, rel_err(r.d_mean(0, 0), fd.d_mean));
            worst = std::fmax(worst, rel_err(r.d_variance(0, 0), fd.d_variance));
        }
        {  // beta-NLL with the weight frozen at its evaluation value
            const auto r = beta_nll(point(mu, var), target1(y), beta, beta);
            const double frozen_weight = std::pow(var, beta);
            const HeadFd fd = head_fd(
                [y, frozen_weight](long double m, long double v) {
                    const long double res = y - m;
                    return frozen_weight *
                           (0.5L * logl(v) + res * res / (2.0L * v) + kHalfLog2Pi);
                },
                mu, var);
            worst = std::fmax(worst, rel_err(r.d_mean(0, 0), fd.d_mean));
            worst = std::fmax(worst, rel_err(r.d_variance(0, 0), fd.d_variance));
        }
        {  // MSE
            const auto r = mse(point(mu, var), target1(y));
            const HeadFd fd = head_fd(
                [y](long double m, long double) {
                    const long double res = y - m;
                    return 0.5L * res * res;
                },
                mu, var);
            worst = std::fmax(worst, rel_err(r.d_mean(0, 0), fd.d_mean));
        }
        {  // moment matching, both forms
            const auto r = moment_matching_std(point(mu, var), target1(y));
            const HeadFd fd = head_fd(
                [y](long double m, long double v) {
                    const long double res = y - m;
                    const long double gap = fabsl(res) - sqrtl(v);
                    return res * res + gap * gap;
                },
                mu, var);
            worst = std::fmax(worst, rel_err(r.d_mean(0, 0), fd.d_mean));
            worst = std::fmax(worst, rel_err(r.d_variance(0, 0), fd.d_variance));

            const auto rv = moment_matching_var(point(mu, var), target1(y), false);
            const HeadFd fdv = head_fd(
                [y](long double m, long double v) {
                    const long double res = y - m;
                    const long double gap = res * res - v;
                    return 0.5L * res * res + 0.25L * gap * gap;
                },
                mu, var);
            worst = std::fmax(worst, rel_err(rv.d_mean(0, 0), fdv.d_mean));
            worst = std::fmax(worst, rel_err(rv.d_variance(0, 0), fdv.d_variance));
        }
    }
    CHECK(worst < 1e-6);
}

TEST_CASE("nll variance gradient changes sign exactly at the squared residual") {
    const double y = 1.7, mu = 0.2;
    const double res2 = (y - mu) * (y - mu);
    CHECK(nll(point(mu, 0.5 * res2), target1(y)).d_variance(0, 0) < 0.0);
    CHECK(nll(point(mu, 2.0 * res2), target1(y)).d_variance(0, 0) > 0.0);
    CHECK(nll(point(mu, res2), target1(y)).d_variance(0, 0) == doctest::Approx(0.0));
}

TEST_CASE("include_constant moves values by the constant and never the gradients") {
    SeededRng rng(408);
    for (int i = 0; i < 100; ++i) {
        const double mu = rng.normal(), y = rng.normal();
        const double var = std::exp(rng.uniform(std::log(0.01), std::log(100.0)));
        const auto with = nll(point(mu, var), target1(y), true);
        const auto without = nll(point(mu, var), target1(y), false);
        CHECK(with.per_sample_loss[0] - without.per_sample_loss[0] ==
              doctest::Approx(kHalfLog2Pi).epsilon(1e-12));
        CHECK(with.d_mean(0, 0) == without.d_mean(0, 0));
        CHECK(with.d_variance(0, 0) == without.d_variance(0, 0));

        // For beta-nll the constant rides inside the detached weight.
        const double beta = rng.uniform(0.0, 2.0);
        const auto bw = beta_nll(point(mu, var), target1(y), beta, beta, true);
        const auto bo = beta_nll(point(mu, var), target1(y), beta, beta, false);
        CHECK(bw.per_sample_loss[0] - bo.per_sample_loss[0] ==
              doctest::Approx(std::pow(var, beta) * kHalfLog2Pi).epsilon(1e-11));
        CHECK(bw.d_mean(0, 0) == bo.d_mean(0, 0));
        CHECK(bw.d_variance(0, 0) == bo.d_variance(0, 0));
    }
}

TEST_CASE("multivariate targets sum per-dimension terms") {
    GaussianPrediction pred;
    pred.mean = Matrix::from_rows({{0.0, 1.0, -2.0}});
    pred.variance = Matrix::from_rows({{1.0, 4.0, 0.25}});
    const Matrix y = Matrix::from_rows({{1.0, 3.0, -2.5}});

    const auto joint = nll(pred, y);
    double expected = 0.0;
    for (std::size_t d = 0; d < 3; ++d) {
        expected += nll(point(pred.mean(0, d), pred.variance(0, d)), target1(y(0, d)))
                        .per_sample_loss[0];
    }
    CHECK(joint.per_sample_loss[0] == doctest::Approx(expected).epsilon(1e-12));

    // Per-dimension weights for beta-nll, then the sum across dimensions.
    const auto b = beta_nll(pred, y, 0.5, 0.5);
    double expected_b = 0.0;
    for (std::size_t d = 0; d < 3; ++d) {
        expected_b += beta_nll(point(pred.mean(0, d), pred.variance(0, d)), target1(y(0, d)),
                               0.5, 0.5)
                          .per_sample_loss[0];
    }
    CHECK(b.per_sample_loss[0] == doctest::Approx(expected_b).epsilon(1e-12));
}

TEST_CASE("compute_loss dispatches on the configured loss") {
    LossSpec spec;
    spec.kind = LossKind::BetaNll;
    spec.beta_mean = 0.5;  // beta_var defaults to beta_mean
    const auto via_spec = compute_loss(spec, point(1.0, 4.0), target1(3.0));
    const auto direct = beta_nll(point(1.0, 4.0), target1(3.0), 0.5, 0.5);
    CHECK(via_spec.per_sample_loss[0] == direct.per_sample_loss[0]);
    CHECK(via_spec.d_mean(0, 0) == direct.d_mean(0, 0));
    CHECK(via_spec.d_variance(0, 0) == direct.d_variance(0, 0));

    spec.beta_var = 2.0;
    const auto split = compute_loss(spec, point(1.0, 4.0), target1(3.0));
    const auto split_direct = beta_nll(point(1.0, 4.0), target1(3.0), 0.5, 2.0);
    CHECK(split.d_variance(0, 0) == split_direct.d_variance(0, 0));
}

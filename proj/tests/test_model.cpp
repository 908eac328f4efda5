#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "hetreg/checkpoint.hpp"
#include "hetreg/errors.hpp"
#include "hetreg/model.hpp"

using namespace hetreg;

namespace {

MlpConfig tiny_config(std::size_t input_dim, std::vector<std::size_t> hidden,
                      Activation act, std::size_t output_dim) {
    MlpConfig config;
    config.input_dim = input_dim;
    config.hidden_sizes = std::move(hidden);
    config.activation = act;
    config.output_dim = output_dim;
    return config;
}

ProbabilisticMlp one_unit_net() {
    // 1 -> [1 tanh] -> (mean, var), all weights pinned for hand computation.
    std::vector<Layer> trunk(1);
    trunk[0].w = Matrix::from_rows({{0.7}});
    trunk[0].b = {0.3};
    Layer mean_head{Matrix::from_rows({{1.1}}), {-0.2}};
    Layer var_head{Matrix::from_rows({{0.9}}), {0.1}};
    return ProbabilisticMlp::from_parts(tiny_config(1, {1}, Activation::Tanh, 1),
                                        std::move(trunk), std::move(mean_head),
                                        std::move(var_head));
}

// Scalarized objective used by the finite-difference oracle: with fixed
// (d_mean, d_variance), S = sum_b sum_d (d_mean*mean + d_variance*variance).
double scalarized(const ProbabilisticMlp& model, const Matrix& x, const Matrix& d_mean,
                  const Matrix& d_variance) {
    const GaussianPrediction pred = model.predict(x);
    double s = 0.0;
    for (std::size_t i = 0; i < pred.mean.size(); ++i) {
        s += d_mean.data()[i] * pred.mean.data()[i] +
             d_variance.data()[i] * pred.variance.data()[i];
    }
    return s;
}

double max_backward_fd_error(ProbabilisticMlp& model, const Matrix& x, const Matrix& d_mean,
                             const Matrix& d_variance) {
    const auto [pred, trace] = model.forward(x);
    const ParamGrads grads = model.backward(trace, d_mean, d_variance);
    auto params = model.param_views();
    const double h = 1e-5;
    double worst = 0.0;
    for (std::size_t a = 0; a < params.size(); ++a) {
        for (std::size_t i = 0; i < params[a].size(); ++i) {
            const double orig = params[a][i];
            params[a][i] = orig + h;
            const double s_plus = scalarized(model, x, d_mean, d_variance);
            params[a][i] = orig - h;
            const double s_minus = scalarized(model, x, d_mean, d_variance);
            params[a][i] = orig;
            const double fd = (s_plus - s_minus) / (2.0 * h);
            const double denom = std::fmax(std::fmax(std::fabs(fd), std::fabs(grads.arrays[a][i])),
                                           1e-8);
            worst = std::fmax(worst, std::fabs(fd - grads.arrays[a][i]) / denom);
        }
    }
    return worst;
}

}  // namespace

TEST_CASE("init: zero biases except the variance head, unit initial variance") {
    SeededRng rng(11);
    const auto model = ProbabilisticMlp::init(tiny_config(1, {2}, Activation::Tanh, 1), rng);
    CHECK(model.trunk()[0].b[0] == 0.0);
    CHECK(model.trunk()[0].b[1] == 0.0);
    CHECK(model.mean_head().b[0] == 0.0);
    CHECK(model.var_head().b[0] == doctest::Approx(0.5413248546129181).epsilon(1e-12));

    const GaussianPrediction pred = model.predict(Matrix(1, 1, 0.0));
    CHECK(pred.variance(0, 0) >= 0.99);
    CHECK(pred.variance(0, 0) <= 1.01);
    CHECK(pred.mean(0, 0) == 0.0);  // zero features through a zero-bias linear head
}

TEST_CASE("init: same seed gives identical parameters, Glorot bounds hold") {
    const auto config = tiny_config(3, {8, 5}, Activation::Relu, 2);
    SeededRng rng_a(99), rng_b(99);
    const auto a = ProbabilisticMlp::init(config, rng_a);
    const auto b = ProbabilisticMlp::init(config, rng_b);
    CHECK(a == b);

    const double limit0 = std::sqrt(6.0 / (3 + 8));
    for (std::size_t i = 0; i < a.trunk()[0].w.size(); ++i) {
        CHECK(std::fabs(a.trunk()[0].w.data()[i]) <= limit0);
    }
}

TEST_CASE("fan-in-uniform init draws weights and biases within 1/sqrt(fan_in)") {
    const auto config = tiny_config(4, {8}, Activation::Tanh, 2);
    SeededRng rng_a(7), rng_b(7);
    const auto a = ProbabilisticMlp::init(config, rng_a, InitScheme::FanInUniform);
    const auto b = ProbabilisticMlp::init(config, rng_b, InitScheme::FanInUniform);
    CHECK(a == b);

    const double bound0 = 1.0 / std::sqrt(4.0);
    bool some_bias_nonzero = false;
    for (std::size_t i = 0; i < a.trunk()[0].w.size(); ++i) {
        CHECK(std::fabs(a.trunk()[0].w.data()[i]) <= bound0);
    }
    for (double bias : a.trunk()[0].b) {
        CHECK(std::fabs(bias) <= bound0);
        some_bias_nonzero = some_bias_nonzero || bias != 0.0;
    }
    CHECK(some_bias_nonzero);
    const double bound1 = 1.0 / std::sqrt(8.0);
    for (std::size_t i = 0; i < a.mean_head().w.size(); ++i) {
        CHECK(std::fabs(a.mean_head().w.data()[i]) <= bound1);
    }
}

TEST_CASE("init rejects invalid configs") {
    SeededRng rng(1);
    MlpConfig bad = tiny_config(1, {}, Activation::Tanh, 1);
    CHECK_THROWS_AS(ProbabilisticMlp::init(bad, rng), ConfigError);
    bad = tiny_config(1, {4}, Activation::Tanh, 1);
    bad.variance_floor = 2000.0;  // above ceiling
    CHECK_THROWS_AS(ProbabilisticMlp::init(bad, rng), ConfigError);
    bad = tiny_config(1, {4}, Activation::Softplus, 1);  // trunk must be tanh/relu
    CHECK_THROWS_AS(ProbabilisticMlp::init(bad, rng), ConfigError);
}

TEST_CASE("forward matches a pencil-and-paper pass on a pinned one-unit net") {
    const auto model = one_unit_net();
    Matrix x(1, 1);
    x(0, 0) = 0.5;
    const GaussianPrediction pred = model.predict(x);

    const double z1 = 0.7 * 0.5 + 0.3;
    const double hid = std::tanh(z1);
    const double mean = 1.1 * hid - 0.2;
    const double var_pre = 0.9 * hid + 0.1;
    const double var = std::fmax(var_pre, 0.0) + std::log1p(std::exp(-std::fabs(var_pre))) + 1e-8;
    CHECK(pred.mean(0, 0) == doctest::Approx(mean).epsilon(1e-15));
    CHECK(pred.variance(0, 0) == doctest::Approx(var).epsilon(1e-15));
}

TEST_CASE("forward: empty batch, determinism, ceiling clamp") {
    SeededRng rng(3);
    const auto model = ProbabilisticMlp::init(tiny_config(2, {4}, Activation::Tanh, 1), rng);
    const GaussianPrediction empty = model.predict(Matrix(0, 2));
    CHECK(empty.mean.rows() == 0);
    CHECK(empty.variance.rows() == 0);

    Matrix x = Matrix::from_rows({{0.3, -1.2}, {2.0, 0.1}});
    const auto a = model.predict(x);
    const auto b = model.predict(x);
    CHECK(a.mean == b.mean);
    CHECK(a.variance == b.variance);

    // Variance pre-activation pushed far above the ceiling clamps to exactly 1000.
    std::vector<Layer> trunk(1);
    trunk[0].w = Matrix::from_rows({{1.0}});
    trunk[0].b = {0.0};
    Layer mean_head{Matrix::from_rows({{1.0}}), {0.0}};
    Layer var_head{Matrix::from_rows({{0.0}}), {1e6}};
    const auto clamped = ProbabilisticMlp::from_parts(tiny_config(1, {1}, Activation::Relu, 1),
                                                      std::move(trunk), std::move(mean_head),
                                                      std::move(var_head));
    CHECK(clamped.predict(Matrix(1, 1, 1.0)).variance(0, 0) == 1000.0);
}

TEST_CASE("predicted variance stays inside [floor, ceiling] for extreme inputs") {
    SeededRng rng(17);
    const auto model = ProbabilisticMlp::init(tiny_config(1, {8, 8}, Activation::Tanh, 1), rng);
    for (double x : {-1e6, -3.0, 0.0, 5.0, 1e6}) {
        const double v = model.predict(Matrix(1, 1, x)).variance(0, 0);
        CHECK(v >= 1e-8);
        CHECK(v <= 1000.0);
    }
}

TEST_CASE("backward: zero head gradients give zero parameter gradients") {
    SeededRng rng(5);
    auto model = ProbabilisticMlp::init(tiny_config(2, {3}, Activation::Tanh, 2), rng);
    Matrix x = Matrix::from_rows({{0.4, 0.6}});
    const auto [pred, trace] = model.forward(x);
    const ParamGrads grads = model.backward(trace, Matrix(1, 2), Matrix(1, 2));
    for (const auto& arr : grads.arrays) {
        for (double g : arr) CHECK(g == 0.0);
    }
}

TEST_CASE("backward matches the hand-derived chain rule on the one-unit net") {
    auto model = one_unit_net();
    Matrix x(1, 1);
    x(0, 0) = 0.5;
    const auto [pred, trace] = model.forward(x);
    Matrix d_mean(1, 1, 1.0);
    Matrix d_var(1, 1, 0.0);
    const ParamGrads grads = model.backward(trace, d_mean, d_var);

    const double hid = std::tanh(0.7 * 0.5 + 0.3);
    const double dz = 1.1 * (1.0 - hid * hid);
    CHECK(grads.arrays[0][0] == doctest::Approx(0.5 * dz).epsilon(1e-12));  // trunk w
    CHECK(grads.arrays[1][0] == doctest::Approx(dz).epsilon(1e-12));        // trunk b
    CHECK(grads.arrays[2][0] == doctest::Approx(hid).epsilon(1e-12));       // mean w
    CHECK(grads.arrays[3][0] == doctest::Approx(1.0).epsilon(1e-12));       // mean b
    CHECK(grads.arrays[4][0] == 0.0);                                       // var w
    CHECK(grads.arrays[5][0] == 0.0);                                       // var b
}

namespace {

// Smallest |pre-activation| across the trunk; relu batches this close to the
// kink would make finite differences meaningless, so such draws are rerolled.
double min_abs_preactivation(const ProbabilisticMlp& model, const Matrix& x) {
    double lo = std::numeric_limits<double>::infinity();
    Matrix h = x;
    for (const Layer& layer : model.trunk()) {
        Matrix z = matmul(h, layer.w);
        add_row_vector(z, layer.b);
        for (std::size_t i = 0; i < z.size(); ++i) {
            lo = std::fmin(lo, std::fabs(z.data()[i]));
        }
        h = activate(model.config().activation, z);
    }
    return lo;
}

}  // namespace

TEST_CASE("backward matches finite differences over 100 random models") {
    SeededRng meta(8675309);
    double worst = 0.0;
    for (int instance = 0; instance < 100; ++instance) {
        const std::size_t input_dim = 1 + static_cast<std::size_t>(meta.next_u64() % 3);
        const std::size_t d_out = (instance % 2 == 0) ? 1 : 3;
        const Activation act = (instance % 4 < 2) ? Activation::Tanh : Activation::Relu;
        const std::size_t width = 2 + static_cast<std::size_t>(meta.next_u64() % 6);
        auto model = ProbabilisticMlp::init(tiny_config(input_dim, {width, width}, act, d_out),
                                            meta);
        const std::size_t batch = 1 + static_cast<std::size_t>(meta.next_u64() % 4);
        Matrix x(batch, input_dim);
        for (int attempt = 0; attempt < 100; ++attempt) {
            for (std::size_t i = 0; i < x.size(); ++i) x.data()[i] = meta.normal();
            if (act == Activation::Tanh || min_abs_preactivation(model, x) > 1e-3) break;
        }
        Matrix d_mean(batch, d_out), d_var(batch, d_out);
        for (std::size_t i = 0; i < d_mean.size(); ++i) {
            d_mean.data()[i] = meta.normal();
            d_var.data()[i] = meta.normal();
        }
        worst = std::fmax(worst, max_backward_fd_error(model, x, d_mean, d_var));
    }
    CHECK(worst < 1e-5);
}

TEST_CASE("backward propagates zero gradient where the variance ceiling clamps") {
    std::vector<Layer> trunk(1);
    trunk[0].w = Matrix::from_rows({{1.0}});
    trunk[0].b = {0.0};
    Layer mean_head{Matrix::from_rows({{0.0}}), {0.0}};
    Layer var_head{Matrix::from_rows({{5.0}}), {2000.0}};  // saturated
    auto model = ProbabilisticMlp::from_parts(tiny_config(1, {1}, Activation::Relu, 1),
                                              std::move(trunk), std::move(mean_head),
                                              std::move(var_head));
    const auto [pred, trace] = model.forward(Matrix(1, 1, 1.0));
    CHECK(pred.variance(0, 0) == 1000.0);
    const ParamGrads grads = model.backward(trace, Matrix(1, 1, 0.0), Matrix(1, 1, 1.0));
    for (const auto& arr : grads.arrays) {
        for (double g : arr) CHECK(g == 0.0);
    }
}

TEST_CASE("backward error contracts") {
    SeededRng rng(4);
    auto model = ProbabilisticMlp::init(tiny_config(1, {3}, Activation::Tanh, 1), rng);
    const auto [pred, trace] = model.forward(Matrix(2, 1, 0.5));
    CHECK_THROWS_AS(model.backward(trace, Matrix(2, 2), Matrix(2, 2)), ShapeError);
    CHECK_THROWS_AS(model.backward(trace, Matrix(3, 1), Matrix(3, 1)), TraceError);

    SeededRng rng2(4);
    auto other = ProbabilisticMlp::init(tiny_config(1, {3, 3}, Activation::Tanh, 1), rng2);
    CHECK_THROWS_AS(other.backward(trace, Matrix(2, 1), Matrix(2, 1)), TraceError);
}

TEST_CASE("feature_jacobian: identity map, known derivative, constant features") {
    // Identity trunk via relu on positive inputs.
    std::vector<Layer> trunk(1);
    trunk[0].w = Matrix::from_rows({{1.0, 0.0}, {0.0, 1.0}});
    trunk[0].b = {0.0, 0.0};
    Layer mean_head{Matrix(2, 1, 0.0), {0.0}};
    Layer var_head{Matrix(2, 1, 0.0), {0.0}};
    const auto identity_net = ProbabilisticMlp::from_parts(
        tiny_config(2, {2}, Activation::Relu, 1), std::move(trunk), std::move(mean_head),
        std::move(var_head));
    const double point[2] = {0.5, 0.7};
    const Matrix jac = identity_net.feature_jacobian(std::span<const double>(point, 2));
    CHECK(std::fabs(jac(0, 0) - 1.0) < 1e-6);
    CHECK(std::fabs(jac(1, 1) - 1.0) < 1e-6);
    CHECK(std::fabs(jac(0, 1)) < 1e-6);
    CHECK(std::fabs(jac(1, 0)) < 1e-6);

    // f(x) = tanh(2x): derivative at 0 is 2.
    std::vector<Layer> trunk2(1);
    trunk2[0].w = Matrix::from_rows({{2.0}});
    trunk2[0].b = {0.0};
    const auto tanh2x = ProbabilisticMlp::from_parts(
        tiny_config(1, {1}, Activation::Tanh, 1), std::move(trunk2),
        Layer{Matrix(1, 1, 0.0), {0.0}}, Layer{Matrix(1, 1, 0.0), {0.0}});
    const double zero = 0.0;
    CHECK(std::fabs(tanh2x.feature_jacobian(std::span<const double>(&zero, 1))(0, 0) - 2.0) <
          1e-6);

    // Constant features: zero weights.
    std::vector<Layer> trunk3(1);
    trunk3[0].w = Matrix(1, 4, 0.0);
    trunk3[0].b = {0.1, 0.2, 0.3, 0.4};
    const auto constant_net = ProbabilisticMlp::from_parts(
        tiny_config(1, {4}, Activation::Tanh, 1), std::move(trunk3),
        Layer{Matrix(4, 1, 0.0), {0.0}}, Layer{Matrix(4, 1, 0.0), {0.0}});
    const double at = 0.3;
    const Matrix jz = constant_net.feature_jacobian(std::span<const double>(&at, 1));
    for (std::size_t i = 0; i < jz.size(); ++i) CHECK(jz.data()[i] == 0.0);
}

TEST_CASE("checkpoint round trip is bit exact") {
    SeededRng rng(123);
    const auto model = ProbabilisticMlp::init(tiny_config(2, {5, 3}, Activation::Relu, 2), rng);
    WhitenStats stats;
    stats.input_mean = {0.125, -3.75};
    stats.input_std = {1.5, 0.25};
    stats.target_mean = {10.0, 1e-7};
    stats.target_std = {2.0, 3.0};

    const auto path = std::filesystem::temp_directory_path() / "hetreg_ckpt_test.txt";
    save_checkpoint(path, model, &stats);
    const LoadedCheckpoint loaded = load_checkpoint(path);
    CHECK(loaded.model == model);
    REQUIRE(loaded.stats.has_value());
    CHECK(loaded.stats->input_mean == stats.input_mean);
    CHECK(loaded.stats->input_std == stats.input_std);
    CHECK(loaded.stats->target_mean == stats.target_mean);
    CHECK(loaded.stats->target_std == stats.target_std);

    Matrix x = Matrix::from_rows({{0.2, -0.9}, {1.4, 0.0}});
    const auto a = model.predict(x);
    const auto b = loaded.model.predict(x);
    CHECK(a.mean == b.mean);
    CHECK(a.variance == b.variance);
    std::filesystem::remove(path);
}

#include "hetreg/model.hpp"

#include <cmath>

#include "hetreg/errors.hpp"

namespace hetreg {

void MlpConfig::validate() const {
    if (input_dim < 1) throw ConfigError("input_dim must be >= 1");
    if (output_dim < 1) throw ConfigError("output_dim must be >= 1");
    if (hidden_sizes.empty()) throw ConfigError("hidden_sizes must be non-empty");
    for (std::size_t h : hidden_sizes) {
        if (h < 1) throw ConfigError("hidden layer sizes must be >= 1");
    }
    if (activation != Activation::Tanh && activation != Activation::Relu) {
        throw ConfigError("trunk activation must be tanh or relu");
    }
    if (!(variance_floor > 0.0) || !(variance_floor < variance_ceiling)) {
        throw ConfigError("need 0 < variance_floor < variance_ceiling");
    }
}

InitScheme init_scheme_from_string(std::string_view name) {
    if (name == "glorot") return InitScheme::GlorotZeroBias;
    if (name == "fan-in") return InitScheme::FanInUniform;
    throw ConfigError("unknown init scheme: " + std::string(name));
}

std::string to_string(InitScheme scheme) {
    return scheme == InitScheme::GlorotZeroBias ? "glorot" : "fan-in";
}

namespace {

Layer draw_layer(std::size_t fan_in, std::size_t fan_out, SeededRng& rng, InitScheme scheme) {
    Layer layer;
    layer.w = Matrix(fan_in, fan_out);
    layer.b.assign(fan_out, 0.0);
    if (scheme == InitScheme::GlorotZeroBias) {
        const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
        double* p = layer.w.data();
        for (std::size_t i = 0; i < layer.w.size(); ++i) {
            p[i] = rng.uniform(-limit, limit);
        }
    } else {
        const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
        double* p = layer.w.data();
        for (std::size_t i = 0; i < layer.w.size(); ++i) {
            p[i] = rng.uniform(-bound, bound);
        }
        for (auto& b : layer.b) b = rng.uniform(-bound, bound);
    }
    return layer;
}

void check_layer(const Layer& layer, std::size_t fan_in, std::size_t fan_out,
                 const std::string& name) {
    if (layer.w.rows() != fan_in || layer.w.cols() != fan_out || layer.b.size() != fan_out) {
        throw ConfigError("layer " + name + " shape does not chain with config");
    }
}

}  // namespace

ProbabilisticMlp ProbabilisticMlp::init(const MlpConfig& config, SeededRng& rng,
                                        InitScheme scheme) {
    config.validate();
    ProbabilisticMlp model;
    model.config_ = config;
    std::size_t fan_in = config.input_dim;
    for (std::size_t h : config.hidden_sizes) {
        model.trunk_.push_back(draw_layer(fan_in, h, rng, scheme));
        fan_in = h;
    }
    model.mean_head_ = draw_layer(fan_in, config.output_dim, rng, scheme);
    model.var_head_ = draw_layer(fan_in, config.output_dim, rng, scheme);
    if (scheme == InitScheme::GlorotZeroBias) {
        // softplus(bias) = 1, so zero features predict unit variance.
        const double var_bias = softplus_inv(1.0);
        for (auto& b : model.var_head_.b) b = var_bias;
    }
    return model;
}

ProbabilisticMlp ProbabilisticMlp::from_parts(MlpConfig config, std::vector<Layer> trunk,
                                              Layer mean_head, Layer var_head) {
    config.validate();
    if (trunk.size() != config.hidden_sizes.size()) {
        throw ConfigError("trunk layer count does not match config");
    }
    std::size_t fan_in = config.input_dim;
    for (std::size_t l = 0; l < trunk.size(); ++l) {
        check_layer(trunk[l], fan_in, config.hidden_sizes[l], "trunk" + std::to_string(l));
        fan_in = config.hidden_sizes[l];
    }
    check_layer(mean_head, fan_in, config.output_dim, "mean");
    check_layer(var_head, fan_in, config.output_dim, "var");
    ProbabilisticMlp model;
    model.config_ = std::move(config);
    model.trunk_ = std::move(trunk);
    model.mean_head_ = std::move(mean_head);
    model.var_head_ = std::move(var_head);
    return model;
}

void ProbabilisticMlp::forward_impl(const Matrix& x, GaussianPrediction& pred,
                                    ForwardTrace* trace) const {
    if (x.cols() != config_.input_dim) {
        throw ShapeError("forward: input has " + std::to_string(x.cols()) +
                         " columns, model expects " + std::to_string(config_.input_dim));
    }
    if (trace) {
        trace->input = x;
        trace->hidden_act.clear();
        trace->hidden_act.reserve(trunk_.size());
    }
    Matrix h = x;
    for (const Layer& layer : trunk_) {
        Matrix z = matmul(h, layer.w);
        add_row_vector(z, layer.b);
        h = activate(config_.activation, z);
        if (trace) trace->hidden_act.push_back(h);
    }
    pred.mean = matmul(h, mean_head_.w);
    add_row_vector(pred.mean, mean_head_.b);

    Matrix var_pre = matmul(h, var_head_.w);
    add_row_vector(var_pre, var_head_.b);
    pred.variance = var_pre;
    double* v = pred.variance.data();
    for (std::size_t i = 0; i < pred.variance.size(); ++i) {
        v[i] = std::fmin(softplus(v[i]) + config_.variance_floor, config_.variance_ceiling);
    }
    if (trace) trace->var_preact = std::move(var_pre);
}

std::pair<GaussianPrediction, ForwardTrace> ProbabilisticMlp::forward(const Matrix& x) const {
    GaussianPrediction pred;
    ForwardTrace trace;
    forward_impl(x, pred, &trace);
    return {std::move(pred), std::move(trace)};
}

GaussianPrediction ProbabilisticMlp::predict(const Matrix& x) const {
    GaussianPrediction pred;
    forward_impl(x, pred, nullptr);
    return pred;
}

Matrix ProbabilisticMlp::features(const Matrix& x) const {
    if (x.cols() != config_.input_dim) {
        throw ShapeError("features: input column mismatch");
    }
    Matrix h = x;
    for (const Layer& layer : trunk_) {
        Matrix z = matmul(h, layer.w);
        add_row_vector(z, layer.b);
        h = activate(config_.activation, z);
    }
    return h;
}

ParamGrads ProbabilisticMlp::backward(const ForwardTrace& trace, const Matrix& d_mean,
                                      const Matrix& d_variance) const {
    const std::size_t batch = trace.batch_size();
    const std::size_t d_out = config_.output_dim;
    if (trace.hidden_act.size() != trunk_.size() ||
        trace.hidden_act.back().cols() != config_.hidden_sizes.back() ||
        trace.var_preact.rows() != batch) {
        throw TraceError("backward: trace does not match this model");
    }
    if (d_mean.cols() != d_out || !d_mean.same_shape(d_variance)) {
        throw ShapeError("backward: head gradients must both be batch x output_dim");
    }
    if (d_mean.rows() != batch) {
        throw TraceError("backward: trace batch size does not match head gradients");
    }

    ParamGrads grads;
    grads.arrays.resize(2 * trunk_.size() + 4);

    const Matrix& feats = trace.hidden_act.back();

    // Variance head: chain through softplus; zero where the ceiling clamp is active.
    Matrix d_var_pre = d_variance;
    for (std::size_t i = 0; i < batch; ++i) {
        const double* zrow = trace.var_preact.row(i);
        double* grow = d_var_pre.row(i);
        for (std::size_t j = 0; j < d_out; ++j) {
            const double unclamped = softplus(zrow[j]) + config_.variance_floor;
            grow[j] = unclamped < config_.variance_ceiling ? grow[j] * logistic(zrow[j]) : 0.0;
        }
    }

    auto assign_matrix = [](std::vector<double>& dst, const Matrix& src) {
        dst.assign(src.data(), src.data() + src.size());
    };

    const std::size_t n_layers = trunk_.size();
    assign_matrix(grads.arrays[2 * n_layers + 0], matmul_at_b(feats, d_mean));
    grads.arrays[2 * n_layers + 1] = column_sums(d_mean);
    assign_matrix(grads.arrays[2 * n_layers + 2], matmul_at_b(feats, d_var_pre));
    grads.arrays[2 * n_layers + 3] = column_sums(d_var_pre);

    Matrix d_h = matmul_a_bt(d_mean, mean_head_.w);
    {
        const Matrix d_h_var = matmul_a_bt(d_var_pre, var_head_.w);
        double* a = d_h.data();
        const double* b = d_h_var.data();
        for (std::size_t i = 0; i < d_h.size(); ++i) a[i] += b[i];
    }

    for (std::size_t l = n_layers; l-- > 0;) {
        // Activation derivative from the cached activation value:
        // tanh' = 1 - a^2, relu' = [a > 0].
        Matrix dz = std::move(d_h);
        const Matrix& act = trace.hidden_act[l];
        double* g = dz.data();
        const double* a = act.data();
        if (config_.activation == Activation::Tanh) {
            for (std::size_t i = 0; i < dz.size(); ++i) g[i] *= 1.0 - a[i] * a[i];
        } else {
            for (std::size_t i = 0; i < dz.size(); ++i) g[i] = a[i] > 0.0 ? g[i] : 0.0;
        }
        const Matrix& prev = l == 0 ? trace.input : trace.hidden_act[l - 1];
        assign_matrix(grads.arrays[2 * l], matmul_at_b(prev, dz));
        grads.arrays[2 * l + 1] = column_sums(dz);
        if (l > 0) d_h = matmul_a_bt(dz, trunk_[l].w);
    }
    return grads;
}

Matrix ProbabilisticMlp::feature_jacobian(std::span<const double> x, double step) const {
    if (x.size() != config_.input_dim) {
        throw ShapeError("feature_jacobian: input length mismatch");
    }
    const std::size_t m = config_.input_dim;
    const std::size_t f_dim = config_.hidden_sizes.back();
    Matrix point(1, m);
    for (std::size_t j = 0; j < m; ++j) point(0, j) = x[j];

    Matrix jac(f_dim, m);
    for (std::size_t j = 0; j < m; ++j) {
        const double orig = point(0, j);
        point(0, j) = orig + step;
        const Matrix f_plus = features(point);
        point(0, j) = orig - step;
        const Matrix f_minus = features(point);
        point(0, j) = orig;
        for (std::size_t i = 0; i < f_dim; ++i) {
            jac(i, j) = (f_plus(0, i) - f_minus(0, i)) / (2.0 * step);
        }
    }
    return jac;
}

std::vector<std::span<double>> ProbabilisticMlp::param_views() {
    std::vector<std::span<double>> views;
    views.reserve(2 * trunk_.size() + 4);
    for (Layer& layer : trunk_) {
        views.emplace_back(layer.w.data(), layer.w.size());
        views.emplace_back(layer.b.data(), layer.b.size());
    }
    for (Layer* head : {&mean_head_, &var_head_}) {
        views.emplace_back(head->w.data(), head->w.size());
        views.emplace_back(head->b.data(), head->b.size());
    }
    return views;
}

std::vector<std::span<const double>> ProbabilisticMlp::param_views() const {
    std::vector<std::span<const double>> views;
    views.reserve(2 * trunk_.size() + 4);
    for (const Layer& layer : trunk_) {
        views.emplace_back(layer.w.data(), layer.w.size());
        views.emplace_back(layer.b.data(), layer.b.size());
    }
    for (const Layer* head : {&mean_head_, &var_head_}) {
        views.emplace_back(head->w.data(), head->w.size());
        views.emplace_back(head->b.data(), head->b.size());
    }
    return views;
}

std::vector<std::string> ProbabilisticMlp::param_names() const {
    std::vector<std::string> names;
    for (std::size_t l = 0; l < trunk_.size(); ++l) {
        names.push_back("trunk" + std::to_string(l) + ".w");
        names.push_back("trunk" + std::to_string(l) + ".b");
    }
    names.insert(names.end(), {"mean.w", "mean.b", "var.w", "var.b"});
    return names;
}

bool ProbabilisticMlp::operator==(const ProbabilisticMlp& other) const {
    auto a = param_views();
    auto b = other.param_views();
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a[i].size() != b[i].size()) return false;
        for (std::size_t j = 0; j < a[i].size(); ++j) {
            if (a[i][j] != b[i][j]) return false;
        }
    }
    return true;
}

}  // namespace hetreg

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "hetreg/activation.hpp"
#include "hetreg/matrix.hpp"
#include "hetreg/rng.hpp"

namespace hetreg {

/// Weight initialization families. GlorotZeroBias draws weights uniform in
/// +-sqrt(6/(fan_in+fan_out)) with zero biases and a variance-head bias
/// giving unit initial variance. FanInUniform draws every weight and bias
/// uniform in +-1/sqrt(fan_in), the convention of common deep-learning
/// linear layers; the replication presets use it.
enum class InitScheme { GlorotZeroBias, FanInUniform };

InitScheme init_scheme_from_string(std::string_view name);
std::string to_string(InitScheme scheme);

struct MlpConfig {
    std::size_t input_dim = 1;
    std::vector<std::size_t> hidden_sizes{50};
    Activation activation = Activation::Tanh;  // trunk: tanh or relu
    std::size_t output_dim = 1;
    double variance_floor = 1e-8;
    double variance_ceiling = 1000.0;

    void validate() const;  // throws ConfigError
};

/// Predicted per-sample Gaussian parameters, batch × output_dim each.
/// Variance entries always lie in [variance_floor, variance_ceiling].
struct GaussianPrediction {
    Matrix mean;
    Matrix variance;
};

/// Cached forward-pass quantities for backprop: input batch, per-layer
/// activations (the last one is the feature map), and the variance-head
/// pre-activation.
struct ForwardTrace {
    Matrix input;
    std::vector<Matrix> hidden_act;
    Matrix var_preact;
    std::size_t batch_size() const { return input.rows(); }
};

/// One gradient array per parameter array, flattened row-major, in the same
/// order as ProbabilisticMlp::param_views().
struct ParamGrads {
    std::vector<std::vector<double>> arrays;
};

struct Layer {
    Matrix w;               // fan_in × fan_out
    std::vector<double> b;  // fan_out
};

/// MLP trunk with a linear mean head and a softplus variance head:
/// variance = min(softplus(pre) + floor, ceiling).
class ProbabilisticMlp {
public:
    /// Glorot-uniform weights, zero biases; the variance-head bias is set so
    /// that zero features map to a predicted variance of ~1. FanInUniform
    /// instead draws all weights and biases uniform in +-1/sqrt(fan_in).
    static ProbabilisticMlp init(const MlpConfig& config, SeededRng& rng,
                                 InitScheme scheme = InitScheme::GlorotZeroBias);

    /// Reassembles a model from explicit parts (checkpoint loading). Throws
    /// ConfigError if shapes do not chain.
    static ProbabilisticMlp from_parts(MlpConfig config, std::vector<Layer> trunk,
                                       Layer mean_head, Layer var_head);

    const MlpConfig& config() const { return config_; }

    std::pair<GaussianPrediction, ForwardTrace> forward(const Matrix& x) const;

    /// Forward without trace capture (evaluation path).
    GaussianPrediction predict(const Matrix& x) const;

    /// Exact gradients of sum_batch sum_dim (d_mean ⊙ mean + d_variance ⊙ variance)
    /// w.r.t. every parameter. Where the variance ceiling clamp is active the
    /// gradient is zero; the additive floor passes gradient 1 through softplus.
    ParamGrads backward(const ForwardTrace& trace, const Matrix& d_mean,
                        const Matrix& d_variance) const;

    /// Central-difference Jacobian of the last-hidden-layer features w.r.t.
    /// the input, feature_dim × input_dim.
    Matrix feature_jacobian(std::span<const double> x, double step = 1e-4) const;

    /// Last-hidden-layer features for a batch.
    Matrix features(const Matrix& x) const;

    std::vector<std::span<double>> param_views();
    std::vector<std::span<const double>> param_views() const;
    std::vector<std::string> param_names() const;

    const std::vector<Layer>& trunk() const { return trunk_; }
    const Layer& mean_head() const { return mean_head_; }
    const Layer& var_head() const { return var_head_; }

    bool operator==(const ProbabilisticMlp& other) const;

private:
    ProbabilisticMlp() = default;

    void forward_impl(const Matrix& x, GaussianPrediction& pred, ForwardTrace* trace) const;

    MlpConfig config_;
    std::vector<Layer> trunk_;
    Layer mean_head_;
    Layer var_head_;
};

}  // namespace hetreg

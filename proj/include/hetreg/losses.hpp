#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "hetreg/matrix.hpp"
#include "hetreg/model.hpp"

namespace hetreg {

enum class LossKind { Nll, BetaNll, Mse, FixedVarNll, MomentMatchingStd, MomentMatchingVar };

LossKind loss_kind_from_string(std::string_view name);
std::string to_string(LossKind kind);

struct LossSpec {
    LossKind kind = LossKind::Nll;
    // BetaNll only. beta_var defaults to beta_mean when left negative.
    double beta_mean = 0.0;
    double beta_var = -1.0;
    // FixedVarNll only.
    double fixed_variance = 1.0;
    // Adds 0.5*ln(2pi) per dimension to reported NLL-family values. Never
    // affects gradients.
    bool include_constant = true;
    // MomentMatchingVar only: exclude the mean's appearance inside the
    // variance term from differentiation.
    bool mm_detach_mean = true;

    double effective_beta_var() const { return beta_var < 0.0 ? beta_mean : beta_var; }
    void validate() const;  // throws ConfigError
    std::string label() const;
};

/// Per-sample loss values (summed over output dimensions) and analytic
/// head-level gradients d(per-sample loss)/d_mean, d(per-sample loss)/d_variance.
/// Averaging over the batch is the caller's job.
struct LossBatchResult {
    std::vector<double> per_sample_loss;
    Matrix d_mean;
    Matrix d_variance;
};

LossBatchResult nll(const GaussianPrediction& pred, const Matrix& target,
                    bool include_constant = true);

/// Beta-weighted NLL: each dimension's NLL term is multiplied by the detached
/// factor variance^beta. Gradients use beta_mean for the mean and beta_var
/// for the variance; the reported value uses beta_mean's weight.
LossBatchResult beta_nll(const GaussianPrediction& pred, const Matrix& target,
                         double beta_mean, double beta_var, bool include_constant = true);

LossBatchResult mse(const GaussianPrediction& pred, const Matrix& target);

LossBatchResult fixed_var_nll(const GaussianPrediction& pred, const Matrix& target,
                              double sigma2, bool include_constant = true);

/// Squared-error fits to the first moment and the residual standard
/// deviation: (y-mean)^2 + (|y-mean| - sqrt(variance))^2 per dimension.
LossBatchResult moment_matching_std(const GaussianPrediction& pred, const Matrix& target);

/// Variance-form moment matching: 0.5*(y-mean)^2 + 0.25*((y-mean)^2 - variance)^2
/// per dimension. With detach_mean_in_var_term the squared residual inside the
/// second term contributes no mean gradient.
LossBatchResult moment_matching_var(const GaussianPrediction& pred, const Matrix& target,
                                    bool detach_mean_in_var_term);

LossBatchResult compute_loss(const LossSpec& spec, const GaussianPrediction& pred,
                             const Matrix& target);

}  // namespace hetreg

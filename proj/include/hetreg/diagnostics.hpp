#pragma once

#include <cstddef>
#include <filesystem>
#include <vector>

#include "hetreg/data.hpp"
#include "hetreg/matrix.hpp"
#include "hetreg/model.hpp"

namespace hetreg {

/// Per-point scalar summary of how much the feature Jacobian varies inside an
/// L2-ball of the given radius: the mean over entries of the entrywise
/// population variance of J over the ball.
struct JacobianVarianceReport {
    std::vector<double> v;
    double radius = 0.0;
    std::vector<std::size_t> ball_sizes;
};

JacobianVarianceReport jacobian_variance(const ProbabilisticMlp& model, const Dataset& data,
                                         double radius);

/// Core computation over precomputed Jacobians; lets analytic Jacobians stand
/// in for the network's numeric ones.
JacobianVarianceReport jacobian_variance_from_jacobians(const Matrix& points,
                                                        const std::vector<Matrix>& jacobians,
                                                        double radius);

/// Per-point sampling probability proportional to the inverse predicted
/// variance (mean across dimensions for multivariate targets), normalized to
/// sum 1.
struct SamplingProbabilityReport {
    std::vector<double> p;
    double normalizer = 0.0;
    double uniform = 0.0;  // 1/N reference
};

SamplingProbabilityReport effective_sampling_distribution(const Matrix& pred_variance);

/// Histogram of per-sample absolute residuals (L2 norm across dimensions)
/// over log10-spaced bins from 1e-8 up to the maximum residual. Zero
/// residuals are clamped into the lowest bin, so counts always sum to N.
struct ResidualHistogram {
    std::vector<double> bin_edges;        // bin k covers [edges[k], edges[k+1])
    std::vector<std::size_t> counts;
    std::vector<double> residuals;
};

ResidualHistogram residual_histogram(const Matrix& pred_mean, const Matrix& targets,
                                     std::size_t bins_per_decade);

struct Metrics {
    double rmse = 0.0;
    double mean_ll = 0.0;  // mean per-sample Gaussian log-likelihood, constant included
    std::size_t n = 0;
};

/// Predictions mapped back to the original target scale: means through the
/// affine inverse, variances scaled by the squared target std.
GaussianPrediction predict_original_scale(const ProbabilisticMlp& model,
                                          const Matrix& inputs_original,
                                          const WhitenStats& stats);

/// RMSE pools squared residuals over all sample-dimension pairs; mean_ll sums
/// the Gaussian log-density over dimensions and averages over samples. Both
/// are reported in the original target scale.
Metrics evaluate(const ProbabilisticMlp& model, const Dataset& original_scale_data,
                 const WhitenStats& stats);

void write_jacvar_csv(const std::filesystem::path& path, const Dataset& data,
                      const JacobianVarianceReport& report);
void write_sampling_csv(const std::filesystem::path& path,
                        const SamplingProbabilityReport& report);
void write_residuals_csv(const std::filesystem::path& path, const ResidualHistogram& hist);

}  // namespace hetreg

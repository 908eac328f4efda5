#include "hetreg/diagnostics.hpp"

#include <cmath>
#include <fstream>
#include <numbers>

#include "hetreg/errors.hpp"
#include "hetreg/textio.hpp"

namespace hetreg {

JacobianVarianceReport jacobian_variance(const ProbabilisticMlp& model, const Dataset& data,
                                         double radius) {
    std::vector<Matrix> jacobians;
    jacobians.reserve(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) {
        jacobians.push_back(model.feature_jacobian(
            std::span<const double>(data.inputs.row(i), data.input_dim())));
    }
    return jacobian_variance_from_jacobians(data.inputs, jacobians, radius);
}

JacobianVarianceReport jacobian_variance_from_jacobians(const Matrix& points,
                                                        const std::vector<Matrix>& jacobians,
                                                        double radius) {
    if (!(radius > 0.0)) throw ConfigError("jacobian_variance: radius must be positive");
    const std::size_t n = points.rows();
    if (jacobians.size() != n) throw ShapeError("jacobian_variance: one Jacobian per point");
    const std::size_t entries = n == 0 ? 0 : jacobians[0].size();

    JacobianVarianceReport report;
    report.radius = radius;
    report.v.resize(n);
    report.ball_sizes.resize(n);

    const double r2 = radius * radius;
    std::vector<std::size_t> ball;
    std::vector<double> mean(entries);
    for (std::size_t i = 0; i < n; ++i) {
        ball.clear();
        for (std::size_t j = 0; j < n; ++j) {
            double dist2 = 0.0;
            for (std::size_t k = 0; k < points.cols(); ++k) {
                const double d = points(i, k) - points(j, k);
                dist2 += d * d;
            }
            if (dist2 <= r2) ball.push_back(j);
        }
        report.ball_sizes[i] = ball.size();

        std::fill(mean.begin(), mean.end(), 0.0);
        for (std::size_t j : ball) {
            const double* jac = jacobians[j].data();
            for (std::size_t k = 0; k < entries; ++k) mean[k] += jac[k];
        }
        const double inv = 1.0 / static_cast<double>(ball.size());
        for (double& m : mean) m *= inv;

        double total = 0.0;
        for (std::size_t j : ball) {
            const double* jac = jacobians[j].data();
            for (std::size_t k = 0; k < entries; ++k) {
                const double d = jac[k] - mean[k];
                total += d * d;
            }
        }
        report.v[i] = entries == 0 ? 0.0 : total * inv / static_cast<double>(entries);
    }
    return report;
}

SamplingProbabilityReport effective_sampling_distribution(const Matrix& pred_variance) {
    const std::size_t n = pred_variance.rows();
    const std::size_t dims = pred_variance.cols();
    if (n == 0) throw ConfigError("effective_sampling_distribution: empty input");
    SamplingProbabilityReport report;
    report.p.resize(n);
    report.uniform = 1.0 / static_cast<double>(n);
    double z = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double mean_var = 0.0;
        const double* row = pred_variance.row(i);
        for (std::size_t d = 0; d < dims; ++d) {
            if (!(row[d] > 0.0)) {
                throw ConfigError("effective_sampling_distribution: variances must be positive");
            }
            mean_var += row[d];
        }
        mean_var /= static_cast<double>(dims);
        report.p[i] = 1.0 / mean_var;
        z += report.p[i];
    }
    report.normalizer = z;
    for (double& p : report.p) p /= z;
    return report;
}

ResidualHistogram residual_histogram(const Matrix& pred_mean, const Matrix& targets,
                                     std::size_t bins_per_decade) {
    if (!pred_mean.same_shape(targets)) {
        throw ShapeError("residual_histogram: shape mismatch");
    }
    if (bins_per_decade < 1) throw ConfigError("residual_histogram: bins_per_decade >= 1");
    const std::size_t n = pred_mean.rows();
    const std::size_t dims = pred_mean.cols();

    ResidualHistogram hist;
    hist.residuals.resize(n);
    double max_res = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double sq = 0.0;
        for (std::size_t d = 0; d < dims; ++d) {
            const double r = targets(i, d) - pred_mean(i, d);
            sq += r * r;
        }
        hist.residuals[i] = std::sqrt(sq);
        max_res = std::fmax(max_res, hist.residuals[i]);
    }

    const double lo = 1e-8;
    const double bpd = static_cast<double>(bins_per_decade);
    std::size_t n_bins = 1;
    if (max_res > lo) {
        n_bins = static_cast<std::size_t>(std::floor(bpd * std::log10(max_res / lo) + 1e-9)) + 1;
    }
    hist.bin_edges.resize(n_bins + 1);
    for (std::size_t k = 0; k <= n_bins; ++k) {
        hist.bin_edges[k] = lo * std::pow(10.0, static_cast<double>(k) / bpd);
    }
    hist.counts.assign(n_bins, 0);
    for (double res : hist.residuals) {
        std::size_t bin = 0;
        if (res > lo) {
            const double idx = std::floor(bpd * std::log10(res / lo) + 1e-9);
            bin = std::min(static_cast<std::size_t>(std::fmax(idx, 0.0)), n_bins - 1);
        }
        ++hist.counts[bin];
    }
    return hist;
}

GaussianPrediction predict_original_scale(const ProbabilisticMlp& model,
                                          const Matrix& inputs_original,
                                          const WhitenStats& stats) {
    GaussianPrediction pred = model.predict(stats.whiten_inputs(inputs_original));
    pred.mean = stats.unwhiten_targets(pred.mean);
    pred.variance = stats.unwhiten_target_variance(pred.variance);
    return pred;
}

Metrics evaluate(const ProbabilisticMlp& model, const Dataset& original_scale_data,
                 const WhitenStats& stats) {
    const std::size_t n = original_scale_data.size();
    if (n == 0) throw ConfigError("evaluate: empty dataset");
    const std::size_t dims = original_scale_data.target_dim();
    const GaussianPrediction pred =
        predict_original_scale(model, original_scale_data.inputs, stats);

    constexpr double kHalfLog2Pi = 0.91893853320467274178;
    double sq_sum = 0.0;
    double ll_sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double* y = original_scale_data.targets.row(i);
        const double* mu = pred.mean.row(i);
        const double* var = pred.variance.row(i);
        for (std::size_t d = 0; d < dims; ++d) {
            const double res = y[d] - mu[d];
            sq_sum += res * res;
            ll_sum -= 0.5 * std::log(var[d]) + res * res / (2.0 * var[d]) + kHalfLog2Pi;
        }
    }
    Metrics m;
    m.n = n;
    m.rmse = std::sqrt(sq_sum / static_cast<double>(n * dims));
    m.mean_ll = ll_sum / static_cast<double>(n);
    return m;
}

void write_jacvar_csv(const std::filesystem::path& path, const Dataset& data,
                      const JacobianVarianceReport& report) {
    std::ofstream file(path);
    if (!file) throw IoError("write_jacvar_csv: cannot open " + path.string());
    for (std::size_t j = 0; j < data.input_dim(); ++j) file << "x" << j << ",";
    file << "v\n";
    for (std::size_t i = 0; i < data.size(); ++i) {
        for (std::size_t j = 0; j < data.input_dim(); ++j) {
            file << format_double(data.inputs(i, j)) << ",";
        }
        file << format_double(report.v[i]) << "\n";
    }
}

void write_sampling_csv(const std::filesystem::path& path,
                        const SamplingProbabilityReport& report) {
    std::ofstream file(path);
    if (!file) throw IoError("write_sampling_csv: cannot open " + path.string());
    file << "index,p\n";
    for (std::size_t i = 0; i < report.p.size(); ++i) {
        file << i << "," << format_double(report.p[i]) << "\n";
    }
}

void write_residuals_csv(const std::filesystem::path& path, const ResidualHistogram& hist) {
    std::ofstream file(path);
    if (!file) throw IoError("write_residuals_csv: cannot open " + path.string());
    file << "bin_lo,bin_hi,count\n";
    for (std::size_t k = 0; k < hist.counts.size(); ++k) {
        file << format_double(hist.bin_edges[k]) << "," << format_double(hist.bin_edges[k + 1])
             << "," << hist.counts[k] << "\n";
    }
}

}  // namespace hetreg

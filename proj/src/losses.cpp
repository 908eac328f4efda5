#include "hetreg/losses.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

#include "hetreg/errors.hpp"

namespace hetreg {

namespace {

constexpr double kHalfLog2Pi = 0.91893853320467274178;  // 0.5 * ln(2*pi)

struct Shapes {
    std::size_t batch;
    std::size_t dims;
};

Shapes check_shapes(const GaussianPrediction& pred, const Matrix& target) {
    if (!pred.mean.same_shape(pred.variance) || !pred.mean.same_shape(target)) {
        throw ShapeError("loss: mean, variance, and target must share shape");
    }
    return {pred.mean.rows(), pred.mean.cols()};
}

void check_variance_positive(const GaussianPrediction& pred) {
    const double* v = pred.variance.data();
    for (std::size_t i = 0; i < pred.variance.size(); ++i) {
        if (!(v[i] > 0.0)) {
            throw ConfigError("loss: nonpositive predicted variance (model must floor it)");
        }
    }
}

LossBatchResult make_result(std::size_t batch, std::size_t dims) {
    LossBatchResult r;
    r.per_sample_loss.assign(batch, 0.0);
    r.d_mean = Matrix(batch, dims);
    r.d_variance = Matrix(batch, dims);
    return r;
}

double sign_of(double x) {
    if (x > 0.0) return 1.0;
    if (x < 0.0) return -1.0;
    return 0.0;
}

}  // namespace

LossKind loss_kind_from_string(std::string_view name) {
    if (name == "nll") return LossKind::Nll;
    if (name == "beta-nll") return LossKind::BetaNll;
    if (name == "mse") return LossKind::Mse;
    if (name == "fixed-var-nll") return LossKind::FixedVarNll;
    if (name == "mm-std") return LossKind::MomentMatchingStd;
    if (name == "mm-var") return LossKind::MomentMatchingVar;
    throw ConfigError("unknown loss: " + std::string(name));
}

std::string to_string(LossKind kind) {
    switch (kind) {
        case LossKind::Nll: return "nll";
        case LossKind::BetaNll: return "beta-nll";
        case LossKind::Mse: return "mse";
        case LossKind::FixedVarNll: return "fixed-var-nll";
        case LossKind::MomentMatchingStd: return "mm-std";
        case LossKind::MomentMatchingVar: return "mm-var";
    }
    return "?";
}

void LossSpec::validate() const {
    if (kind == LossKind::BetaNll) {
        const double bv = effective_beta_var();
        if (beta_mean < 0.0 || beta_mean > 2.0 || bv < 0.0 || bv > 2.0) {
            throw ConfigError("beta-nll: betas must lie in [0, 2]");
        }
    }
    if (kind == LossKind::FixedVarNll && !(fixed_variance > 0.0)) {
        throw ConfigError("fixed-var-nll: fixed_variance must be positive");
    }
}

std::string LossSpec::label() const {
    std::ostringstream os;
    os << to_string(kind);
    if (kind == LossKind::BetaNll) {
        os << "(beta=" << beta_mean;
        if (effective_beta_var() != beta_mean) os << ",beta_var=" << effective_beta_var();
        os << ")";
    } else if (kind == LossKind::FixedVarNll) {
        os << "(sigma2=" << fixed_variance << ")";
    }
    return os.str();
}

LossBatchResult nll(const GaussianPrediction& pred, const Matrix& target, bool include_constant) {
    const auto [batch, dims] = check_shapes(pred, target);
    check_variance_positive(pred);
    LossBatchResult r = make_result(batch, dims);
    for (std::size_t i = 0; i < batch; ++i) {
        const double* mu = pred.mean.row(i);
        const double* var = pred.variance.row(i);
        const double* y = target.row(i);
        double* dm = r.d_mean.row(i);
        double* dv = r.d_variance.row(i);
        double loss = 0.0;
        for (std::size_t d = 0; d < dims; ++d) {
            const double res = y[d] - mu[d];
            loss += 0.5 * std::log(var[d]) + res * res / (2.0 * var[d]);
            if (include_constant) loss += kHalfLog2Pi;
            dm[d] = (mu[d] - y[d]) / var[d];
            dv[d] = 0.5 * (var[d] - res * res) / (var[d] * var[d]);
        }
        r.per_sample_loss[i] = loss;
    }
    return r;
}

LossBatchResult beta_nll(const GaussianPrediction& pred, const Matrix& target,
                         double beta_mean, double beta_var, bool include_constant) {
    if (beta_mean < 0.0 || beta_mean > 2.0 || beta_var < 0.0 || beta_var > 2.0) {
        throw ConfigError("beta-nll: betas must lie in [0, 2]");
    }
    const auto [batch, dims] = check_shapes(pred, target);
    check_variance_positive(pred);
    LossBatchResult r = make_result(batch, dims);
    for (std::size_t i = 0; i < batch; ++i) {
        const double* mu = pred.mean.row(i);
        const double* var = pred.variance.row(i);
        const double* y = target.row(i);
        double* dm = r.d_mean.row(i);
        double* dv = r.d_variance.row(i);
        double loss = 0.0;
        for (std::size_t d = 0; d < dims; ++d) {
            const double res = y[d] - mu[d];
            // The weight is a detached constant: it scales value and gradient
            // but is never differentiated through.
            const double weight = beta_mean == 0.0 ? 1.0 : std::pow(var[d], beta_mean);
            double core = 0.5 * std::log(var[d]) + res * res / (2.0 * var[d]);
            if (include_constant) core += kHalfLog2Pi;
            loss += weight * core;
            dm[d] = (mu[d] - y[d]) * std::pow(var[d], beta_mean - 1.0);
            dv[d] = 0.5 * (var[d] - res * res) * std::pow(var[d], beta_var - 2.0);
        }
        r.per_sample_loss[i] = loss;
    }
    return r;
}

LossBatchResult mse(const GaussianPrediction& pred, const Matrix& target) {
    const auto [batch, dims] = check_shapes(pred, target);
    LossBatchResult r = make_result(batch, dims);
    for (std::size_t i = 0; i < batch; ++i) {
        const double* mu = pred.mean.row(i);
        const double* y = target.row(i);
        double* dm = r.d_mean.row(i);
        double loss = 0.0;
        for (std::size_t d = 0; d < dims; ++d) {
            const double res = y[d] - mu[d];
            loss += 0.5 * res * res;
            dm[d] = mu[d] - y[d];
        }
        r.per_sample_loss[i] = loss;
    }
    return r;
}

LossBatchResult fixed_var_nll(const GaussianPrediction& pred, const Matrix& target,
                              double sigma2, bool include_constant) {
    if (!(sigma2 > 0.0)) throw ConfigError("fixed-var-nll: sigma2 must be positive");
    const auto [batch, dims] = check_shapes(pred, target);
    LossBatchResult r = make_result(batch, dims);
    const double log_term = 0.5 * std::log(sigma2);
    for (std::size_t i = 0; i < batch; ++i) {
        const double* mu = pred.mean.row(i);
        const double* y = target.row(i);
        double* dm = r.d_mean.row(i);
        double loss = 0.0;
        for (std::size_t d = 0; d < dims; ++d) {
            const double res = y[d] - mu[d];
            loss += log_term + res * res / (2.0 * sigma2);
            if (include_constant) loss += kHalfLog2Pi;
            dm[d] = (mu[d] - y[d]) / sigma2;
        }
        r.per_sample_loss[i] = loss;
    }
    return r;
}

LossBatchResult moment_matching_std(const GaussianPrediction& pred, const Matrix& target) {
    const auto [batch, dims] = check_shapes(pred, target);
    check_variance_positive(pred);
    LossBatchResult r = make_result(batch, dims);
    for (std::size_t i = 0; i < batch; ++i) {
        const double* mu = pred.mean.row(i);
        const double* var = pred.variance.row(i);
        const double* y = target.row(i);
        double* dm = r.d_mean.row(i);
        double* dv = r.d_variance.row(i);
        double loss = 0.0;
        for (std::size_t d = 0; d < dims; ++d) {
            const double res = y[d] - mu[d];
            const double sd = std::sqrt(var[d]);
            const double gap = std::fabs(res) - sd;
            loss += res * res + gap * gap;
            // mean appears in both terms; sign(0) := 0 at the |.| kink
            dm[d] = -2.0 * res - 2.0 * gap * sign_of(res);
            dv[d] = -gap / sd;  // 2*gap * d(-sd)/d(var) = -gap/sd
        }
        r.per_sample_loss[i] = loss;
    }
    return r;
}

LossBatchResult moment_matching_var(const GaussianPrediction& pred, const Matrix& target,
                                    bool detach_mean_in_var_term) {
    const auto [batch, dims] = check_shapes(pred, target);
    LossBatchResult r = make_result(batch, dims);
    for (std::size_t i = 0; i < batch; ++i) {
        const double* mu = pred.mean.row(i);
        const double* var = pred.variance.row(i);
        const double* y = target.row(i);
        double* dm = r.d_mean.row(i);
        double* dv = r.d_variance.row(i);
        double loss = 0.0;
        for (std::size_t d = 0; d < dims; ++d) {
            const double res = y[d] - mu[d];
            const double gap = res * res - var[d];
            loss += 0.5 * res * res + 0.25 * gap * gap;
            dm[d] = mu[d] - y[d];
            if (!detach_mean_in_var_term) dm[d] += -gap * res;
            dv[d] = 0.5 * (var[d] - res * res);
        }
        r.per_sample_loss[i] = loss;
    }
    return r;
}

LossBatchResult compute_loss(const LossSpec& spec, const GaussianPrediction& pred,
                             const Matrix& target) {
    switch (spec.kind) {
        case LossKind::Nll:
            return nll(pred, target, spec.include_constant);
        case LossKind::BetaNll:
            return beta_nll(pred, target, spec.beta_mean, spec.effective_beta_var(),
                            spec.include_constant);
        case LossKind::Mse:
            return mse(pred, target);
        case LossKind::FixedVarNll:
            return fixed_var_nll(pred, target, spec.fixed_variance, spec.include_constant);
        case LossKind::MomentMatchingStd:
            return moment_matching_std(pred, target);
        case LossKind::MomentMatchingVar:
            return moment_matching_var(pred, target, spec.mm_detach_mean);
    }
    throw ConfigError("compute_loss: bad loss kind");
}

}  // namespace hetreg

#include "hetreg/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include "hetreg/errors.hpp"
#include "hetreg/textio.hpp"

namespace hetreg {

namespace {

// Inclusive endpoints, step (b-a)/(n-1).
std::vector<double> linspace(double a, double b, std::size_t n) {
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        out[i] = a + (b - a) * static_cast<double>(i) / static_cast<double>(n - 1);
    }
    return out;
}

Matrix take_rows(const Matrix& src, const std::vector<std::size_t>& order, std::size_t begin,
                 std::size_t count) {
    Matrix out(count, src.cols());
    for (std::size_t i = 0; i < count; ++i) {
        const double* from = src.row(order[begin + i]);
        std::copy(from, from + src.cols(), out.row(i));
    }
    return out;
}

}  // namespace

Dataset gen_homoscedastic_sine(std::size_t n, std::uint64_t seed) {
    if (n < 2) throw ConfigError("gen_homoscedastic_sine: need n >= 2");
    Dataset data;
    data.name = "sine-homo";
    data.inputs = Matrix(n, 1);
    data.targets = Matrix(n, 1);
    data.true_mean = Matrix(n, 1);
    data.true_std = Matrix(n, 1);
    SeededRng rng(seed);
    const auto xs = linspace(0.0, 12.0, n);
    for (std::size_t i = 0; i < n; ++i) {
        const double x = xs[i];
        const double mean = 0.4 * std::sin(2.0 * std::numbers::pi * x);
        data.inputs(i, 0) = x;
        (*data.true_mean)(i, 0) = mean;
        (*data.true_std)(i, 0) = 0.01;
        data.targets(i, 0) = mean + 0.01 * rng.normal();
    }
    return data;
}

Dataset gen_heteroscedastic_sine(std::size_t n, std::uint64_t seed) {
    if (n < 2) throw ConfigError("gen_heteroscedastic_sine: need n >= 2");
    Dataset data;
    data.name = "sine-het";
    data.inputs = Matrix(n, 1);
    data.targets = Matrix(n, 1);
    data.true_mean = Matrix(n, 1);
    data.true_std = Matrix(n, 1);
    SeededRng rng(seed);
    const auto xs = linspace(0.0, 10.0, n);
    for (std::size_t i = 0; i < n; ++i) {
        const double x = xs[i];
        const double mean = x * std::sin(x);
        const double xi1 = rng.normal();
        const double xi2 = rng.normal();
        data.inputs(i, 0) = x;
        (*data.true_mean)(i, 0) = mean;
        (*data.true_std)(i, 0) = 0.3 * std::sqrt(1.0 + x * x);
        data.targets(i, 0) = mean + x * 0.3 * xi1 + 0.3 * xi2;
    }
    return data;
}

Dataset load_csv(const std::filesystem::path& path, std::size_t input_dim,
                 std::size_t target_dim) {
    std::ifstream file(path);
    if (!file) throw ParseError("load_csv: cannot open " + path.string());
    const std::size_t n_cols = input_dim + target_dim;

    std::string line;
    if (!std::getline(file, line)) throw ParseError("load_csv: missing header row");

    std::vector<std::vector<double>> rows;
    std::size_t row_number = 0;
    while (std::getline(file, line)) {
        ++row_number;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<double> values;
        values.reserve(n_cols);
        std::size_t start = 0;
        const std::string context = "load_csv: row " + std::to_string(row_number);
        while (true) {
            const std::size_t comma = line.find(',', start);
            const std::string_view token =
                std::string_view(line).substr(start, comma == std::string::npos
                                                         ? std::string::npos
                                                         : comma - start);
            values.push_back(parse_double(token, context));
            if (comma == std::string::npos) break;
            start = comma + 1;
        }
        if (values.size() != n_cols) {
            throw ParseError(context + ": expected " + std::to_string(n_cols) +
                             " columns, found " + std::to_string(values.size()));
        }
        rows.push_back(std::move(values));
    }

    Dataset data;
    data.name = path.stem().string();
    data.inputs = Matrix(rows.size(), input_dim);
    data.targets = Matrix(rows.size(), target_dim);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        for (std::size_t j = 0; j < input_dim; ++j) data.inputs(i, j) = rows[i][j];
        for (std::size_t j = 0; j < target_dim; ++j) data.targets(i, j) = rows[i][input_dim + j];
    }
    return data;
}

void save_csv(const Dataset& data, const std::filesystem::path& path) {
    std::ofstream file(path);
    if (!file) throw IoError("save_csv: cannot open " + path.string());
    for (std::size_t j = 0; j < data.input_dim(); ++j) {
        file << (j ? "," : "") << "x" << j;
    }
    for (std::size_t j = 0; j < data.target_dim(); ++j) {
        file << ",y" << j;
    }
    file << "\n";
    for (std::size_t i = 0; i < data.size(); ++i) {
        for (std::size_t j = 0; j < data.input_dim(); ++j) {
            file << (j ? "," : "") << format_double(data.inputs(i, j));
        }
        for (std::size_t j = 0; j < data.target_dim(); ++j) {
            file << "," << format_double(data.targets(i, j));
        }
        file << "\n";
    }
    if (!file) throw IoError("save_csv: write failed for " + path.string());
}

std::array<Dataset, 3> split_dataset(const Dataset& data, SplitFractions fractions,
                                     std::uint64_t seed) {
    const double sum = fractions.train + fractions.val + fractions.test;
    if (fractions.train < 0.0 || fractions.val < 0.0 || fractions.test < 0.0 ||
        std::fabs(sum - 1.0) > 1e-9) {
        throw ConfigError("split: fractions must be nonnegative and sum to 1");
    }
    const std::size_t n = data.size();
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    SeededRng rng(seed);
    for (std::size_t i = n; i > 1; --i) {
        const std::size_t j = static_cast<std::size_t>(rng.next_u64() % i);
        std::swap(order[i - 1], order[j]);
    }

    const auto n_val = static_cast<std::size_t>(
        std::llround(fractions.val * static_cast<double>(n)));
    const auto n_test = static_cast<std::size_t>(
        std::llround(fractions.test * static_cast<double>(n)));
    if (n_val + n_test > n) throw ConfigError("split: rounded counts exceed dataset size");
    const std::size_t n_train = n - n_val - n_test;

    auto slice = [&](std::size_t begin, std::size_t count, const char* suffix) {
        Dataset part;
        part.name = data.name.empty() ? suffix : data.name + "/" + suffix;
        part.inputs = take_rows(data.inputs, order, begin, count);
        part.targets = take_rows(data.targets, order, begin, count);
        if (data.true_mean) part.true_mean = take_rows(*data.true_mean, order, begin, count);
        if (data.true_std) part.true_std = take_rows(*data.true_std, order, begin, count);
        return part;
    };
    return {slice(0, n_train, "train"), slice(n_train, n_val, "val"),
            slice(n_train + n_val, n_test, "test")};
}

namespace {

void fit_columns(const Matrix& m, std::vector<double>& mean, std::vector<double>& std,
                 const char* what) {
    const std::size_t n = m.rows(), c = m.cols();
    mean.assign(c, 0.0);
    std.assign(c, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const double* row = m.row(i);
        for (std::size_t j = 0; j < c; ++j) mean[j] += row[j];
    }
    for (std::size_t j = 0; j < c; ++j) mean[j] /= static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double* row = m.row(i);
        for (std::size_t j = 0; j < c; ++j) {
            const double d = row[j] - mean[j];
            std[j] += d * d;
        }
    }
    for (std::size_t j = 0; j < c; ++j) {
        std[j] = std::sqrt(std[j] / static_cast<double>(n));
        if (!(std[j] > 0.0)) {
            throw ConfigError(std::string("whiten: constant ") + what + " column " +
                              std::to_string(j));
        }
    }
}

Matrix affine_columns(const Matrix& m, const std::vector<double>& mean,
                      const std::vector<double>& std, bool forward) {
    if (m.cols() != mean.size()) throw ShapeError("whiten: column count mismatch");
    Matrix out = m;
    for (std::size_t i = 0; i < out.rows(); ++i) {
        double* row = out.row(i);
        for (std::size_t j = 0; j < out.cols(); ++j) {
            row[j] = forward ? (row[j] - mean[j]) / std[j] : row[j] * std[j] + mean[j];
        }
    }
    return out;
}

}  // namespace

WhitenStats WhitenStats::fit(const Dataset& train) {
    if (train.size() == 0) throw ConfigError("whiten: empty training split");
    WhitenStats stats;
    fit_columns(train.inputs, stats.input_mean, stats.input_std, "input");
    fit_columns(train.targets, stats.target_mean, stats.target_std, "target");
    return stats;
}

Matrix WhitenStats::whiten_inputs(const Matrix& x) const {
    return affine_columns(x, input_mean, input_std, true);
}

Matrix WhitenStats::whiten_targets(const Matrix& y) const {
    return affine_columns(y, target_mean, target_std, true);
}

Matrix WhitenStats::unwhiten_targets(const Matrix& y) const {
    return affine_columns(y, target_mean, target_std, false);
}

Matrix WhitenStats::unwhiten_target_variance(const Matrix& var) const {
    if (var.cols() != target_std.size()) throw ShapeError("whiten: variance column mismatch");
    Matrix out = var;
    for (std::size_t i = 0; i < out.rows(); ++i) {
        double* row = out.row(i);
        for (std::size_t j = 0; j < out.cols(); ++j) {
            row[j] *= target_std[j] * target_std[j];
        }
    }
    return out;
}

Dataset WhitenStats::whiten(const Dataset& data) const {
    Dataset out;
    out.name = data.name;
    out.inputs = whiten_inputs(data.inputs);
    out.targets = whiten_targets(data.targets);
    // Ground-truth noise columns stay in original scale; they describe the
    // generator, not the model's view.
    out.true_mean = data.true_mean;
    out.true_std = data.true_std;
    return out;
}

BatchIterator::BatchIterator(const Dataset& data, std::size_t batch_size, std::uint64_t seed)
    : data_(&data), batch_size_(batch_size), seed_(seed) {
    if (data.size() == 0) throw ConfigError("BatchIterator: empty dataset");
    if (batch_size < 1) throw ConfigError("BatchIterator: batch_size must be >= 1");
    reshuffle();
}

void BatchIterator::reshuffle() {
    const std::size_t n = data_->size();
    order_.resize(n);
    for (std::size_t i = 0; i < n; ++i) order_[i] = i;
    SeededRng rng(SeededRng::derive(seed_, epoch_));
    for (std::size_t i = n; i > 1; --i) {
        const std::size_t j = static_cast<std::size_t>(rng.next_u64() % i);
        std::swap(order_[i - 1], order_[j]);
    }
    cursor_ = 0;
}

std::pair<Matrix, Matrix> BatchIterator::next() {
    const std::size_t n = data_->size();
    if (cursor_ >= n) {
        ++epoch_;
        reshuffle();
    }
    const std::size_t count = std::min(batch_size_, n - cursor_);
    Matrix x = take_rows(data_->inputs, order_, cursor_, count);
    Matrix y = take_rows(data_->targets, order_, cursor_, count);
    cursor_ += count;
    return {std::move(x), std::move(y)};
}

}  // namespace hetreg

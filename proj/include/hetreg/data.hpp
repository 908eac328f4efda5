#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "hetreg/matrix.hpp"
#include "hetreg/rng.hpp"

namespace hetreg {

struct Dataset {
    Matrix inputs;   // N × M
    Matrix targets;  // N × D
    // Ground-truth noise model, present for synthetic generators only.
    std::optional<Matrix> true_mean;
    std::optional<Matrix> true_std;
    std::string name;

    std::size_t size() const { return inputs.rows(); }
    std::size_t input_dim() const { return inputs.cols(); }
    std::size_t target_dim() const { return targets.cols(); }
};

/// y = 0.4 sin(2 pi x) + xi, xi ~ N(0, 0.01^2); n points uniformly spaced on
/// [0, 12] inclusive.
Dataset gen_homoscedastic_sine(std::size_t n, std::uint64_t seed);

/// y = x sin(x) + 0.3 x xi1 + 0.3 xi2; n points uniformly spaced on [0, 10];
/// true noise std is 0.3 sqrt(1 + x^2).
Dataset gen_heteroscedastic_sine(std::size_t n, std::uint64_t seed);

/// CSV with header x0..x{M-1},y0..y{D-1}; rows kept in file order. Parse
/// errors carry the 1-based data row number.
Dataset load_csv(const std::filesystem::path& path, std::size_t input_dim,
                 std::size_t target_dim);

/// Writes the documented CSV schema (inputs and targets only).
void save_csv(const Dataset& data, const std::filesystem::path& path);

struct SplitFractions {
    double train = 0.8;
    double val = 0.1;
    double test = 0.1;
};

/// Seeded random permutation, then contiguous slices. Counts for val and test
/// are rounded; train takes the remainder. Fractions must be nonnegative and
/// sum to 1 within 1e-9.
std::array<Dataset, 3> split_dataset(const Dataset& data, SplitFractions fractions,
                                     std::uint64_t seed);

/// Per-column affine normalization fitted on the training split (population
/// standard deviation). Constant columns are rejected.
struct WhitenStats {
    std::vector<double> input_mean, input_std;
    std::vector<double> target_mean, target_std;

    static WhitenStats fit(const Dataset& train);

    Matrix whiten_inputs(const Matrix& x) const;
    Matrix whiten_targets(const Matrix& y) const;
    Matrix unwhiten_targets(const Matrix& y) const;
    /// Variances scale by the squared target std per dimension.
    Matrix unwhiten_target_variance(const Matrix& var) const;
    Dataset whiten(const Dataset& data) const;
};

/// Seeded mini-batch iterator; every epoch visits each sample exactly once
/// (last batch may be short) in an order that is a deterministic function of
/// (seed, epoch).
class BatchIterator {
public:
    BatchIterator(const Dataset& data, std::size_t batch_size, std::uint64_t seed);

    /// Next (X_batch, Y_batch) slice; reshuffles at epoch boundaries.
    std::pair<Matrix, Matrix> next();

    std::size_t epoch() const { return epoch_; }

private:
    void reshuffle();

    const Dataset* data_;
    std::size_t batch_size_;
    std::uint64_t seed_;
    std::size_t cursor_ = 0;
    std::size_t epoch_ = 0;
    std::vector<std::size_t> order_;
};

}  // namespace hetreg

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "hetreg/data.hpp"
#include "hetreg/diagnostics.hpp"
#include "hetreg/losses.hpp"
#include "hetreg/model.hpp"

namespace hetreg {

struct DatasetSpec {
    enum class Kind { SineHomo, SineHet, Csv };
    Kind kind = Kind::SineHomo;
    std::size_t n = 1000;  // generator sample count
    std::filesystem::path csv_path;
    std::size_t input_dim = 1;
    std::size_t target_dim = 1;

    std::string label() const;
};

enum class OptimizerKind { Sgd, Adam };

OptimizerKind optimizer_from_string(std::string_view name);
std::string to_string(OptimizerKind kind);

struct TrainConfig {
    DatasetSpec dataset;
    SplitFractions split{0.8, 0.1, 0.1};
    MlpConfig mlp;
    InitScheme init_scheme = InitScheme::GlorotZeroBias;
    LossSpec loss;
    OptimizerKind optimizer = OptimizerKind::Adam;
    double lr = 5e-4;
    // Whiten inputs and targets on the training split. The synthetic-sine
    // presets turn this off to train in raw coordinates.
    bool whiten = true;
    std::size_t batch_size = 100;
    std::size_t max_updates = 200000;
    std::size_t eval_every = 1000;
    // Number of evaluations without validation improvement before stopping;
    // 0 disables early stopping and the final parameters are kept.
    std::size_t early_stop_patience = 0;
    std::uint64_t seed = 0;
    std::filesystem::path out_dir = "out/run";
    // Updates at which to keep a copy of the model (diagnostics over time).
    std::vector<std::size_t> snapshot_updates;

    void validate() const;
};

struct CurveRow {
    std::size_t update;
    std::string split;  // "train" or "val"
    Metrics metrics;
};

struct TrainResult {
    std::vector<CurveRow> curve;
    std::size_t best_update = 0;
    double best_val_ll = -std::numeric_limits<double>::infinity();
    Metrics final_train{};
    std::optional<Metrics> final_val;
    std::optional<Metrics> final_test;
    bool diverged = false;
    std::size_t diverged_at = 0;
    double seconds = 0.0;
    // Best-validation model when early stopping is active, else the final one.
    std::optional<ProbabilisticMlp> model;
    WhitenStats stats;
    Dataset train_split, val_split, test_split;  // original scale
    std::vector<std::pair<std::size_t, ProbabilisticMlp>> snapshots;

    /// Smallest train RMSE seen across the evaluation curve.
    double min_train_rmse() const;
};

/// Deterministic function of the config: builds data, whitens on the train
/// split, trains with mini-batch gradients averaged over the batch, evaluates
/// every eval_every updates in the original scale, and applies early stopping
/// on validation mean log-likelihood. Optimizer divergence is recorded in the
/// result, not thrown.
TrainResult train_run(const TrainConfig& config);

/// Writes metrics.csv, manifest.json, and checkpoint.txt into out_dir.
void write_run_outputs(const TrainConfig& config, const TrainResult& result,
                       const std::filesystem::path& out_dir);

struct GridSpec {
    TrainConfig base;
    std::vector<double> learning_rates;
    std::vector<std::vector<std::size_t>> architectures;
    std::vector<LossSpec> losses;
    std::vector<std::uint64_t> seeds;

    void validate() const;
    std::vector<TrainConfig> expand() const;
};

struct GridRow {
    std::size_t index = 0;
    TrainConfig config;
    bool failed = false;
    std::string error;
    bool diverged = false;
    std::size_t diverged_at = 0;
    Metrics final_train{};
    std::optional<Metrics> final_val;
    std::optional<Metrics> final_test;
    double min_train_rmse = std::numeric_limits<double>::infinity();
    double best_val_ll = -std::numeric_limits<double>::infinity();
    double seconds = 0.0;
};

/// Runs every config in the grid; individual failures and divergences are
/// recorded per row and never abort the rest. Rows come back in grid order
/// regardless of worker scheduling.
std::vector<GridRow> grid_search(const GridSpec& spec, unsigned jobs = 1,
                                 const std::function<void(const GridRow&)>& on_done = {});

void write_grid_csv(const std::filesystem::path& path, const std::vector<GridRow>& rows);

/// Index of the best run per loss label, by validation mean log-likelihood
/// (falling back to min train RMSE when there is no validation split).
std::vector<std::size_t> best_per_loss(const std::vector<GridRow>& rows);

/// Fraction of points whose target lies within k predicted standard
/// deviations of the predicted mean, original scale.
double coverage_within_k_sigma(const ProbabilisticMlp& model, const WhitenStats& stats,
                               const Dataset& original_scale_data, double k);

/// Mean absolute relative error between the predicted std and the generator's
/// true std over points whose (1-D) input lies in [x_lo, x_hi].
double sigma_fit_error(const ProbabilisticMlp& model, const WhitenStats& stats,
                       const Dataset& original_scale_data, double x_lo, double x_hi);

struct PresetOptions {
    std::filesystem::path out_dir = "out";
    std::uint64_t seed = 0;
    std::optional<std::size_t> max_updates;
    unsigned jobs = 1;
    bool quiet = false;
};

std::vector<std::string> preset_names();

/// Wired experiments: pitfall (homoscedastic sine, NLL vs beta=0.5),
/// convergence_grid (lr × arch × beta sweep heatmaps), hetsine_calibration
/// (coverage table for beta in {0, 0.25, 0.5, 1}), diagnostics_trace
/// (Jacobian-variance and sampling-probability CSVs over training time).
void run_preset(const std::string& name, const PresetOptions& options);

/// Key=value config file (one pair per line, '#' comments). Unknown keys are
/// errors.
TrainConfig parse_train_config_file(const std::filesystem::path& path);
void apply_config_kv(TrainConfig& config, const std::string& key, const std::string& value);

std::string git_describe();

}  // namespace hetreg

#include "hetreg/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iostream>
#include <mutex>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "hetreg/checkpoint.hpp"
#include "hetreg/errors.hpp"
#include "hetreg/optim.hpp"
#include "hetreg/svg.hpp"
#include "hetreg/textio.hpp"

#ifndef HETREG_GIT_DESCRIBE
#define HETREG_GIT_DESCRIBE "unknown"
#endif

namespace hetreg {

namespace {

// Seed streams; one per independent random decision in a run.
enum Stream : std::uint64_t { kDataStream = 1, kSplitStream = 2, kInitStream = 3, kBatchStream = 4 };

using json = nlohmann::ordered_json;

}  // namespace

std::string DatasetSpec::label() const {
    switch (kind) {
        case Kind::SineHomo: return "sine-homo(n=" + std::to_string(n) + ")";
        case Kind::SineHet: return "sine-het(n=" + std::to_string(n) + ")";
        case Kind::Csv: return "csv(" + csv_path.string() + ")";
    }
    return "?";
}

OptimizerKind optimizer_from_string(std::string_view name) {
    if (name == "sgd") return OptimizerKind::Sgd;
    if (name == "adam") return OptimizerKind::Adam;
    throw ConfigError("unknown optimizer: " + std::string(name));
}

std::string to_string(OptimizerKind kind) {
    return kind == OptimizerKind::Sgd ? "sgd" : "adam";
}

void TrainConfig::validate() const {
    mlp.validate();
    loss.validate();
    if (!(lr > 0.0)) throw ConfigError("lr must be positive");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (eval_every < 1) throw ConfigError("eval_every must be >= 1");
    if (dataset.kind != DatasetSpec::Kind::Csv && dataset.n < 2) {
        throw ConfigError("generator datasets need n >= 2");
    }
    const double sum = split.train + split.val + split.test;
    if (split.train <= 0.0 || split.val < 0.0 || split.test < 0.0 ||
        std::fabs(sum - 1.0) > 1e-9) {
        throw ConfigError("split fractions must be nonnegative with positive train, sum 1");
    }
    if (early_stop_patience > 0 && split.val <= 0.0) {
        throw ConfigError("early stopping needs a validation split");
    }
}

double TrainResult::min_train_rmse() const {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& row : curve) {
        if (row.split == "train") best = std::min(best, row.metrics.rmse);
    }
    return best;
}

namespace {

Dataset build_dataset(const DatasetSpec& spec, std::uint64_t seed) {
    switch (spec.kind) {
        case DatasetSpec::Kind::SineHomo:
            return gen_homoscedastic_sine(spec.n, seed);
        case DatasetSpec::Kind::SineHet:
            return gen_heteroscedastic_sine(spec.n, seed);
        case DatasetSpec::Kind::Csv:
            return load_csv(spec.csv_path, spec.input_dim, spec.target_dim);
    }
    throw ConfigError("bad dataset kind");
}

}  // namespace

TrainResult train_run(const TrainConfig& config) {
    config.validate();
    const auto t0 = std::chrono::steady_clock::now();

    const Dataset full = build_dataset(config.dataset, SeededRng::derive(config.seed, kDataStream));
    TrainResult result;
    {
        auto parts = split_dataset(full, config.split, SeededRng::derive(config.seed, kSplitStream));
        result.train_split = std::move(parts[0]);
        result.val_split = std::move(parts[1]);
        result.test_split = std::move(parts[2]);
    }
    if (config.whiten) {
        result.stats = WhitenStats::fit(result.train_split);
    } else {
        // Identity statistics: the model trains in raw coordinates and every
        // downstream scale conversion becomes a no-op.
        result.stats.input_mean.assign(full.input_dim(), 0.0);
        result.stats.input_std.assign(full.input_dim(), 1.0);
        result.stats.target_mean.assign(full.target_dim(), 0.0);
        result.stats.target_std.assign(full.target_dim(), 1.0);
    }
    const Dataset train_whitened = result.stats.whiten(result.train_split);

    MlpConfig mlp_config = config.mlp;
    mlp_config.input_dim = full.input_dim();
    mlp_config.output_dim = full.target_dim();

    SeededRng init_rng(SeededRng::derive(config.seed, kInitStream));
    ProbabilisticMlp model = ProbabilisticMlp::init(mlp_config, init_rng, config.init_scheme);
    auto params = model.param_views();
    AdamState adam = AdamState::create(params, config.lr);
    BatchIterator batches(train_whitened, config.batch_size,
                          SeededRng::derive(config.seed, kBatchStream));

    const bool has_val = result.val_split.size() > 0;
    const bool early_stopping = config.early_stop_patience > 0;
    std::optional<ProbabilisticMlp> best_model;
    std::size_t evals_since_best = 0;
    std::vector<std::size_t> snapshot_schedule = config.snapshot_updates;
    std::sort(snapshot_schedule.begin(), snapshot_schedule.end());
    snapshot_schedule.erase(std::unique(snapshot_schedule.begin(), snapshot_schedule.end()),
                            snapshot_schedule.end());

    auto evaluate_now = [&](std::size_t update) {
        result.curve.push_back({update, "train", evaluate(model, result.train_split, result.stats)});
        if (has_val) {
            const Metrics val = evaluate(model, result.val_split, result.stats);
            result.curve.push_back({update, "val", val});
            if (val.mean_ll > result.best_val_ll) {
                result.best_val_ll = val.mean_ll;
                result.best_update = update;
                evals_since_best = 0;
                if (early_stopping) best_model = model;
            } else {
                ++evals_since_best;
            }
        }
    };

    auto take_snapshot = [&](std::size_t update) {
        if (std::binary_search(snapshot_schedule.begin(), snapshot_schedule.end(), update)) {
            result.snapshots.emplace_back(update, model);
        }
    };

    evaluate_now(0);
    take_snapshot(0);

    for (std::size_t update = 1; update <= config.max_updates; ++update) {
        auto [bx, by] = batches.next();
        const auto [pred, trace] = model.forward(bx);
        LossBatchResult loss = compute_loss(config.loss, pred, by);

        // Batch gradient = mean over per-sample gradients.
        const double scale = 1.0 / static_cast<double>(bx.rows());
        for (std::size_t i = 0; i < loss.d_mean.size(); ++i) {
            loss.d_mean.data()[i] *= scale;
            loss.d_variance.data()[i] *= scale;
        }
        const ParamGrads grads = model.backward(trace, loss.d_mean, loss.d_variance);
        try {
            if (config.optimizer == OptimizerKind::Adam) {
                adam.step(params, grads);
            } else {
                sgd_step(params, grads, config.lr);
            }
        } catch (const DivergenceError&) {
            result.diverged = true;
            result.diverged_at = update;
            break;
        }

        take_snapshot(update);
        if (update % config.eval_every == 0 || update == config.max_updates) {
            evaluate_now(update);
            if (early_stopping && evals_since_best >= config.early_stop_patience) {
                break;
            }
        }
    }

    if (early_stopping && best_model) {
        model = *best_model;
    }
    result.final_train = evaluate(model, result.train_split, result.stats);
    if (has_val) result.final_val = evaluate(model, result.val_split, result.stats);
    if (result.test_split.size() > 0) {
        result.final_test = evaluate(model, result.test_split, result.stats);
    }
    result.model = std::move(model);
    result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return result;
}

namespace {

json metrics_to_json(const Metrics& m) {
    return json{{"rmse", m.rmse}, {"mean_ll", m.mean_ll}, {"n", m.n}};
}

json config_to_json(const TrainConfig& config) {
    json mlp{{"input_dim", config.mlp.input_dim},
             {"hidden_sizes", config.mlp.hidden_sizes},
             {"activation", to_string(config.mlp.activation)},
             {"output_dim", config.mlp.output_dim},
             {"variance_floor", config.mlp.variance_floor},
             {"variance_ceiling", config.mlp.variance_ceiling},
             {"init", to_string(config.init_scheme)}};
    json loss{{"kind", to_string(config.loss.kind)},
              {"include_constant", config.loss.include_constant}};
    if (config.loss.kind == LossKind::BetaNll) {
        loss["beta_mean"] = config.loss.beta_mean;
        loss["beta_var"] = config.loss.effective_beta_var();
    }
    if (config.loss.kind == LossKind::FixedVarNll) {
        loss["fixed_variance"] = config.loss.fixed_variance;
    }
    if (config.loss.kind == LossKind::MomentMatchingVar) {
        loss["mm_detach_mean"] = config.loss.mm_detach_mean;
    }
    json dataset{{"kind", config.dataset.kind == DatasetSpec::Kind::SineHomo  ? "sine-homo"
                          : config.dataset.kind == DatasetSpec::Kind::SineHet ? "sine-het"
                                                                              : "csv"}};
    if (config.dataset.kind == DatasetSpec::Kind::Csv) {
        dataset["path"] = config.dataset.csv_path.string();
        dataset["input_dim"] = config.dataset.input_dim;
        dataset["target_dim"] = config.dataset.target_dim;
    } else {
        dataset["n"] = config.dataset.n;
    }
    return json{{"dataset", dataset},
                {"split", {config.split.train, config.split.val, config.split.test}},
                {"mlp", mlp},
                {"loss", loss},
                {"optimizer", to_string(config.optimizer)},
                {"whiten", config.whiten},
                {"lr", config.lr},
                {"batch_size", config.batch_size},
                {"max_updates", config.max_updates},
                {"eval_every", config.eval_every},
                {"early_stop_patience", config.early_stop_patience},
                {"seed", config.seed}};
}

void write_metrics_csv(const std::filesystem::path& path, const TrainResult& result) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open " + path.string());
    out << "update,split,rmse,mean_ll\n";
    for (const auto& row : result.curve) {
        out << row.update << "," << row.split << "," << format_double(row.metrics.rmse) << ","
            << format_double(row.metrics.mean_ll) << "\n";
    }
}

}  // namespace

void write_run_outputs(const TrainConfig& config, const TrainResult& result,
                       const std::filesystem::path& out_dir) {
    std::filesystem::create_directories(out_dir);
    write_metrics_csv(out_dir / "metrics.csv", result);

    json manifest;
    manifest["config"] = config_to_json(config);
    manifest["git_describe"] = git_describe();
    const std::size_t n_train = result.train_split.size();
    manifest["updates_per_epoch"] =
        (n_train + config.batch_size - 1) / std::max<std::size_t>(config.batch_size, 1);
    manifest["final"] = json{{"train", metrics_to_json(result.final_train)}};
    if (result.final_val) manifest["final"]["val"] = metrics_to_json(*result.final_val);
    if (result.final_test) manifest["final"]["test"] = metrics_to_json(*result.final_test);
    if (result.best_val_ll > -std::numeric_limits<double>::infinity()) {
        manifest["best_val_ll"] = result.best_val_ll;
        manifest["best_update"] = result.best_update;
    }
    manifest["min_train_rmse"] = result.min_train_rmse();
    manifest["diverged"] = result.diverged;
    if (result.diverged) manifest["diverged_at"] = result.diverged_at;
    manifest["wall_seconds"] = result.seconds;

    std::ofstream mf(out_dir / "manifest.json");
    if (!mf) throw IoError("cannot open manifest.json in " + out_dir.string());
    mf << manifest.dump(2) << "\n";

    if (result.model) {
        save_checkpoint(out_dir / "checkpoint.txt", *result.model, &result.stats);
    }
}

void GridSpec::validate() const {
    if (learning_rates.empty() || architectures.empty() || losses.empty() || seeds.empty()) {
        throw ConfigError("grid: every axis needs at least one value");
    }
}

std::vector<TrainConfig> GridSpec::expand() const {
    validate();
    std::vector<TrainConfig> configs;
    for (double lr : learning_rates) {
        for (const auto& arch : architectures) {
            for (const auto& loss : losses) {
                for (std::uint64_t seed : seeds) {
                    TrainConfig c = base;
                    c.lr = lr;
                    c.mlp.hidden_sizes = arch;
                    c.loss = loss;
                    c.seed = seed;
                    configs.push_back(std::move(c));
                }
            }
        }
    }
    return configs;
}

std::vector<GridRow> grid_search(const GridSpec& spec, unsigned jobs,
                                 const std::function<void(const GridRow&)>& on_done) {
    const std::vector<TrainConfig> configs = spec.expand();
    std::vector<GridRow> rows(configs.size());
    std::atomic<std::size_t> next{0};
    std::mutex done_mutex;

    auto worker = [&]() {
        while (true) {
            const std::size_t i = next.fetch_add(1);
            if (i >= configs.size()) return;
            GridRow& row = rows[i];
            row.index = i;
            row.config = configs[i];
            try {
                const TrainResult result = train_run(configs[i]);
                row.diverged = result.diverged;
                row.diverged_at = result.diverged_at;
                row.final_train = result.final_train;
                row.final_val = result.final_val;
                row.final_test = result.final_test;
                row.min_train_rmse = result.min_train_rmse();
                row.best_val_ll = result.best_val_ll;
                row.seconds = result.seconds;
            } catch (const std::exception& e) {
                row.failed = true;
                row.error = e.what();
            }
            if (on_done) {
                std::lock_guard<std::mutex> lock(done_mutex);
                on_done(row);
            }
        }
    };

    const unsigned n_workers =
        std::max(1u, std::min<unsigned>(jobs, static_cast<unsigned>(configs.size())));
    if (n_workers == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(n_workers);
        for (unsigned t = 0; t < n_workers; ++t) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    return rows;
}

namespace {

std::string arch_label(const std::vector<std::size_t>& hidden) {
    std::ostringstream os;
    os << hidden.size() << "x" << (hidden.empty() ? 0 : hidden[0]);
    bool uniform = true;
    for (std::size_t h : hidden) uniform = uniform && h == hidden[0];
    if (!uniform) {
        os.str("");
        for (std::size_t i = 0; i < hidden.size(); ++i) os << (i ? "-" : "") << hidden[i];
    }
    return os.str();
}

std::string opt_metric(const std::optional<Metrics>& m, bool rmse) {
    if (!m) return "";
    return format_double(rmse ? m->rmse : m->mean_ll);
}

}  // namespace

void write_grid_csv(const std::filesystem::path& path, const std::vector<GridRow>& rows) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open " + path.string());
    out << "index,loss,beta_mean,beta_var,lr,arch,activation,batch_size,max_updates,seed,"
           "diverged,diverged_at,error,final_train_rmse,final_train_ll,min_train_rmse,"
           "final_val_rmse,final_val_ll,best_val_ll,final_test_rmse,final_test_ll,seconds\n";
    for (const auto& row : rows) {
        const LossSpec& loss = row.config.loss;
        out << row.index << "," << to_string(loss.kind) << ",";
        if (loss.kind == LossKind::BetaNll) {
            out << format_double(loss.beta_mean) << "," << format_double(loss.effective_beta_var());
        } else {
            out << ",";
        }
        out << "," << format_double(row.config.lr) << "," << arch_label(row.config.mlp.hidden_sizes)
            << "," << to_string(row.config.mlp.activation) << "," << row.config.batch_size << ","
            << row.config.max_updates << "," << row.config.seed << "," << (row.diverged ? 1 : 0)
            << "," << (row.diverged ? std::to_string(row.diverged_at) : "") << "," << row.error
            << ",";
        if (row.failed) {
            out << ",,,,,,,," << format_double(row.seconds) << "\n";
            continue;
        }
        out << format_double(row.final_train.rmse) << "," << format_double(row.final_train.mean_ll)
            << "," << format_double(row.min_train_rmse) << "," << opt_metric(row.final_val, true)
            << "," << opt_metric(row.final_val, false) << ","
            << (row.best_val_ll > -std::numeric_limits<double>::infinity()
                    ? format_double(row.best_val_ll)
                    : "")
            << "," << opt_metric(row.final_test, true) << "," << opt_metric(row.final_test, false)
            << "," << format_double(row.seconds) << "\n";
    }
}

std::vector<std::size_t> best_per_loss(const std::vector<GridRow>& rows) {
    std::vector<std::string> seen;
    std::vector<std::size_t> best;
    for (const auto& row : rows) {
        if (row.failed) continue;
        const std::string label = row.config.loss.label();
        std::size_t slot = seen.size();
        for (std::size_t i = 0; i < seen.size(); ++i) {
            if (seen[i] == label) slot = i;
        }
        if (slot == seen.size()) {
            seen.push_back(label);
            best.push_back(row.index);
            continue;
        }
        const GridRow& cur = rows[best[slot]];
        const bool has_val = row.best_val_ll > -std::numeric_limits<double>::infinity();
        if (has_val ? row.best_val_ll > cur.best_val_ll
                    : row.min_train_rmse < cur.min_train_rmse) {
            best[slot] = row.index;
        }
    }
    return best;
}

double coverage_within_k_sigma(const ProbabilisticMlp& model, const WhitenStats& stats,
                               const Dataset& data, double k) {
    if (data.size() == 0) throw ConfigError("coverage: empty dataset");
    const GaussianPrediction pred = predict_original_scale(model, data.inputs, stats);
    std::size_t covered = 0;
    std::size_t total = 0;
    for (std::size_t i = 0; i < data.size(); ++i) {
        for (std::size_t d = 0; d < data.target_dim(); ++d) {
            const double sd = std::sqrt(pred.variance(i, d));
            if (std::fabs(data.targets(i, d) - pred.mean(i, d)) <= k * sd) ++covered;
            ++total;
        }
    }
    return static_cast<double>(covered) / static_cast<double>(total);
}

double sigma_fit_error(const ProbabilisticMlp& model, const WhitenStats& stats,
                       const Dataset& data, double x_lo, double x_hi) {
    if (!data.true_std) throw ConfigError("sigma_fit_error: dataset has no true_std");
    if (data.input_dim() != 1) throw ConfigError("sigma_fit_error: 1-D inputs only");
    const GaussianPrediction pred = predict_original_scale(model, data.inputs, stats);
    double total = 0.0;
    std::size_t count = 0;
    for (std::size_t i = 0; i < data.size(); ++i) {
        const double x = data.inputs(i, 0);
        if (x < x_lo || x > x_hi) continue;
        for (std::size_t d = 0; d < data.target_dim(); ++d) {
            const double truth = (*data.true_std)(i, d);
            const double got = std::sqrt(pred.variance(i, d));
            total += std::fabs(got - truth) / truth;
            ++count;
        }
    }
    if (count == 0) throw ConfigError("sigma_fit_error: no points in range");
    return total / static_cast<double>(count);
}

// ---------------------------------------------------------------------------
// Presets
// ---------------------------------------------------------------------------

namespace {

TrainConfig pitfall_base(const PresetOptions& options) {
    TrainConfig config;
    config.dataset.kind = DatasetSpec::Kind::SineHomo;
    config.dataset.n = 1000;
    config.split = {1.0, 0.0, 0.0};
    config.mlp.input_dim = 1;
    config.mlp.hidden_sizes = {128, 128};
    config.mlp.activation = Activation::Tanh;
    config.mlp.output_dim = 1;
    config.init_scheme = InitScheme::FanInUniform;
    config.whiten = false;
    config.loss.kind = LossKind::Nll;
    config.optimizer = OptimizerKind::Adam;
    config.lr = 5e-4;
    config.batch_size = 100;
    config.max_updates = options.max_updates.value_or(200000);
    config.eval_every = 1000;
    config.early_stop_patience = 0;
    config.seed = options.seed;
    return config;
}

std::vector<double> curve_x(const TrainResult& r, const std::string& split) {
    std::vector<double> x;
    for (const auto& row : r.curve) {
        if (row.split == split) x.push_back(static_cast<double>(row.update));
    }
    return x;
}

std::vector<double> curve_rmse(const TrainResult& r, const std::string& split) {
    std::vector<double> y;
    for (const auto& row : r.curve) {
        if (row.split == split) y.push_back(row.metrics.rmse);
    }
    return y;
}

void write_fit_plot(const std::filesystem::path& path, const std::string& title,
                    const TrainResult& result, double band_sigmas) {
    const Dataset& train = result.train_split;
    // Prediction over a dense input grid spanning the training inputs.
    double x_lo = train.inputs(0, 0), x_hi = x_lo;
    for (std::size_t i = 0; i < train.size(); ++i) {
        x_lo = std::min(x_lo, train.inputs(i, 0));
        x_hi = std::max(x_hi, train.inputs(i, 0));
    }
    const std::size_t grid_n = 600;
    Matrix grid(grid_n, 1);
    for (std::size_t i = 0; i < grid_n; ++i) {
        grid(i, 0) = x_lo + (x_hi - x_lo) * static_cast<double>(i) / (grid_n - 1);
    }
    const GaussianPrediction pred = predict_original_scale(*result.model, grid, result.stats);

    LineChartSpec spec;
    spec.title = title;
    spec.x_label = "x";
    spec.y_label = "y";

    BandSeries band;
    band.color = "#d95f02";
    for (std::size_t i = 0; i < grid_n; ++i) {
        const double sd = std::sqrt(pred.variance(i, 0));
        band.x.push_back(grid(i, 0));
        band.y_lo.push_back(pred.mean(i, 0) - band_sigmas * sd);
        band.y_hi.push_back(pred.mean(i, 0) + band_sigmas * sd);
    }
    spec.bands.push_back(std::move(band));

    Series data_dots;
    data_dots.label = "train data";
    data_dots.color = "#444444";
    data_dots.dots = true;
    for (std::size_t i = 0; i < train.size(); ++i) {
        data_dots.x.push_back(train.inputs(i, 0));
        data_dots.y.push_back(train.targets(i, 0));
    }
    spec.series.push_back(std::move(data_dots));

    Series mean_line;
    mean_line.label = "predicted mean";
    mean_line.color = "#d95f02";
    for (std::size_t i = 0; i < grid_n; ++i) {
        mean_line.x.push_back(grid(i, 0));
        mean_line.y.push_back(pred.mean(i, 0));
    }
    spec.series.push_back(std::move(mean_line));

    if (train.true_mean) {
        Series truth;
        truth.label = "true mean";
        truth.color = "#1b9e77";
        for (std::size_t i = 0; i < train.size(); ++i) {
            truth.x.push_back(train.inputs(i, 0));
            truth.y.push_back((*train.true_mean)(i, 0));
        }
        spec.series.push_back(std::move(truth));
    }
    write_line_chart(path, spec);
}

void preset_pitfall(const PresetOptions& options) {
    const auto dir = options.out_dir / "pitfall";
    std::filesystem::create_directories(dir);

    TrainConfig nll_config = pitfall_base(options);
    TrainConfig beta_config = nll_config;
    beta_config.loss.kind = LossKind::BetaNll;
    beta_config.loss.beta_mean = 0.5;

    struct Job {
        TrainConfig config;
        std::string name;
        TrainResult result;
    };
    std::vector<Job> jobs{{nll_config, "nll", {}}, {beta_config, "beta0.5", {}}};

    std::atomic<std::size_t> next{0};
    auto worker = [&]() {
        while (true) {
            const std::size_t i = next.fetch_add(1);
            if (i >= jobs.size()) return;
            jobs[i].result = train_run(jobs[i].config);
        }
    };
    if (options.jobs > 1) {
        std::thread other(worker);
        worker();
        other.join();
    } else {
        worker();
    }

    LineChartSpec curves;
    curves.title = "Homoscedastic sine: train RMSE over updates";
    curves.x_label = "updates";
    curves.y_label = "train RMSE";
    curves.log_x = true;
    curves.log_y = true;
    for (auto& job : jobs) {
        write_run_outputs(job.config, job.result, dir / job.name);
        write_fit_plot(dir / ("fit_" + job.name + ".svg"),
                       job.name + ": fit after " + std::to_string(job.config.max_updates) +
                           " updates",
                       job.result, 1.0);
        Series s;
        s.label = job.name == "nll" ? "NLL (beta=0)" : "beta-NLL (beta=0.5)";
        s.x = curve_x(job.result, "train");
        s.y = curve_rmse(job.result, "train");
        curves.series.push_back(std::move(s));
        if (!options.quiet) {
            std::cout << "pitfall/" << job.name << ": final train RMSE "
                      << job.result.final_train.rmse << "\n";
        }
    }
    write_line_chart(dir / "rmse_curves.svg", curves);
}

void preset_convergence_grid(const PresetOptions& options) {
    const auto dir = options.out_dir / "convergence_grid";
    std::filesystem::create_directories(dir);

    GridSpec grid;
    grid.base = pitfall_base(options);
    grid.learning_rates = {1e-4, 5e-4, 1e-3};
    grid.architectures = {{64, 64}, {128, 128}};
    LossSpec nll;
    LossSpec beta_half;
    beta_half.kind = LossKind::BetaNll;
    beta_half.beta_mean = 0.5;
    grid.losses = {nll, beta_half};
    grid.seeds = {options.seed, options.seed + 1};

    const auto rows = grid_search(grid, options.jobs, [&](const GridRow& row) {
        if (options.quiet) return;
        std::cout << "grid[" << row.index << "] " << row.config.loss.label() << " lr="
                  << row.config.lr << " arch=" << arch_label(row.config.mlp.hidden_sizes)
                  << " seed=" << row.config.seed << " -> min train RMSE " << row.min_train_rmse
                  << (row.diverged ? " (diverged)" : "") << "\n";
    });
    write_grid_csv(dir / "grid.csv", rows);

    json manifest;
    manifest["git_describe"] = git_describe();
    manifest["base_config"] = config_to_json(grid.base);
    for (const LossSpec& loss : grid.losses) {
        HeatmapSpec heat;
        heat.title = loss.label() + ": min train RMSE (mean over seeds)";
        for (const auto& arch : grid.architectures) heat.row_labels.push_back(arch_label(arch));
        for (double lr : grid.learning_rates) heat.col_labels.push_back("lr=" + format_double(lr));
        heat.values = Matrix(heat.row_labels.size(), heat.col_labels.size());
        for (std::size_t a = 0; a < grid.architectures.size(); ++a) {
            for (std::size_t l = 0; l < grid.learning_rates.size(); ++l) {
                double sum = 0.0;
                std::size_t count = 0;
                for (const auto& row : rows) {
                    if (row.failed) continue;
                    if (row.config.loss.label() != loss.label()) continue;
                    if (row.config.lr != grid.learning_rates[l]) continue;
                    if (row.config.mlp.hidden_sizes != grid.architectures[a]) continue;
                    sum += row.min_train_rmse;
                    ++count;
                }
                heat.values(a, l) = count ? sum / static_cast<double>(count)
                                          : std::numeric_limits<double>::quiet_NaN();
            }
        }
        const std::string stem = loss.kind == LossKind::Nll ? "beta0" : "beta0.5";
        const auto [vmin, vmax] = write_heatmap(dir / ("heatmap_" + stem + ".svg"), heat);
        manifest["heatmaps"][stem] = json{{"vmin", vmin}, {"vmax", vmax}};
    }
    std::ofstream mf(dir / "manifest.json");
    mf << manifest.dump(2) << "\n";
}

void preset_hetsine_calibration(const PresetOptions& options) {
    const auto dir = options.out_dir / "hetsine_calibration";
    std::filesystem::create_directories(dir);

    const std::vector<double> betas{0.0, 0.25, 0.5, 1.0};
    struct Job {
        double beta;
        TrainConfig config;
        TrainResult result;
    };
    std::vector<Job> jobs;
    for (double beta : betas) {
        TrainConfig config;
        config.dataset.kind = DatasetSpec::Kind::SineHet;
        config.dataset.n = 500;
        config.split = {0.8, 0.2, 0.0};
        config.mlp.hidden_sizes = {50};
        config.mlp.activation = Activation::Tanh;
        config.init_scheme = InitScheme::FanInUniform;
        config.whiten = false;
        config.loss.kind = LossKind::BetaNll;
        config.loss.beta_mean = beta;
        config.optimizer = OptimizerKind::Adam;
        config.lr = 1e-3;
        config.batch_size = 100;
        config.max_updates = options.max_updates.value_or(40000);
        config.eval_every = 500;
        config.early_stop_patience = 20;
        config.seed = options.seed;
        jobs.push_back({beta, config, {}});
    }

    std::atomic<std::size_t> next{0};
    auto worker = [&]() {
        while (true) {
            const std::size_t i = next.fetch_add(1);
            if (i >= jobs.size()) return;
            jobs[i].result = train_run(jobs[i].config);
        }
    };
    std::vector<std::thread> pool;
    for (unsigned t = 1; t < std::max(1u, options.jobs); ++t) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();

    std::ofstream table(dir / "calibration.csv");
    table << "beta,coverage_2sigma,sigma_mre_1_9,best_val_ll,final_train_rmse\n";

    LineChartSpec sigma_chart;
    sigma_chart.title = "Heteroscedastic sine: predicted std by beta";
    sigma_chart.x_label = "x";
    sigma_chart.y_label = "std";
    for (auto& job : jobs) {
        std::ostringstream name;
        name << "beta" << job.beta;
        write_run_outputs(job.config, job.result, dir / name.str());
        write_fit_plot(dir / ("fit_" + name.str() + ".svg"),
                       "beta=" + format_double(job.beta) + " fit (best validation model)",
                       job.result, 2.0);

        const double coverage = coverage_within_k_sigma(*job.result.model, job.result.stats,
                                                        job.result.train_split, 2.0);
        const double mre =
            sigma_fit_error(*job.result.model, job.result.stats, job.result.train_split, 1.0, 9.0);
        table << format_double(job.beta) << "," << format_double(coverage) << ","
              << format_double(mre) << "," << format_double(job.result.best_val_ll) << ","
              << format_double(job.result.final_train.rmse) << "\n";
        if (!options.quiet) {
            std::cout << "hetsine beta=" << job.beta << ": coverage " << coverage
                      << ", sigma MRE " << mre << "\n";
        }

        // Predicted std over the train inputs, sorted by x.
        const Dataset& train = job.result.train_split;
        const GaussianPrediction pred =
            predict_original_scale(*job.result.model, train.inputs, job.result.stats);
        std::vector<std::size_t> order(train.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            return train.inputs(a, 0) < train.inputs(b, 0);
        });
        Series s;
        s.label = "beta=" + format_double(job.beta);
        for (std::size_t i : order) {
            s.x.push_back(train.inputs(i, 0));
            s.y.push_back(std::sqrt(pred.variance(i, 0)));
        }
        sigma_chart.series.push_back(std::move(s));
    }
    {
        // True noise std for reference.
        const Dataset& train = jobs[0].result.train_split;
        std::vector<std::size_t> order(train.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            return train.inputs(a, 0) < train.inputs(b, 0);
        });
        Series truth;
        truth.label = "true std";
        truth.color = "#000000";
        for (std::size_t i : order) {
            truth.x.push_back(train.inputs(i, 0));
            truth.y.push_back((*train.true_std)(i, 0));
        }
        sigma_chart.series.push_back(std::move(truth));
    }
    write_line_chart(dir / "sigma_curves.svg", sigma_chart);
}

void preset_diagnostics_trace(const PresetOptions& options) {
    const auto dir = options.out_dir / "diagnostics_trace";
    std::filesystem::create_directories(dir);

    TrainConfig config = pitfall_base(options);
    for (std::size_t u : {1000ull, 3000ull, 10000ull, 30000ull, 100000ull, 200000ull}) {
        if (u <= config.max_updates) config.snapshot_updates.push_back(u);
    }
    if (config.snapshot_updates.empty() ||
        config.snapshot_updates.back() != config.max_updates) {
        config.snapshot_updates.push_back(config.max_updates);
    }

    const TrainResult result = train_run(config);
    write_run_outputs(config, result, dir / "run");

    const Dataset train_whitened = result.stats.whiten(result.train_split);
    // Radius: 1% of the bounding-box diagonal of the model's input space.
    double diag2 = 0.0;
    for (std::size_t j = 0; j < train_whitened.input_dim(); ++j) {
        double lo = train_whitened.inputs(0, j), hi = lo;
        for (std::size_t i = 0; i < train_whitened.size(); ++i) {
            lo = std::min(lo, train_whitened.inputs(i, j));
            hi = std::max(hi, train_whitened.inputs(i, j));
        }
        diag2 += (hi - lo) * (hi - lo);
    }
    const double radius = 0.01 * std::sqrt(diag2);

    LineChartSpec jac_chart;
    jac_chart.title = "Jacobian variance over training";
    jac_chart.x_label = "x";
    jac_chart.y_label = "mean of V(x)";
    LineChartSpec samp_chart;
    samp_chart.title = "Effective sampling probability over training";
    samp_chart.x_label = "x";
    samp_chart.y_label = "p";
    samp_chart.log_y = true;

    for (const auto& [update, snapshot] : result.snapshots) {
        const JacobianVarianceReport jac = jacobian_variance(snapshot, train_whitened, radius);
        const GaussianPrediction pred = snapshot.predict(train_whitened.inputs);
        const SamplingProbabilityReport samp = effective_sampling_distribution(pred.variance);
        const std::string tag = "_u" + std::to_string(update);
        write_jacvar_csv(dir / ("diag_jacvar" + tag + ".csv"), result.train_split, jac);
        write_sampling_csv(dir / ("diag_sampling" + tag + ".csv"), samp);

        Series jac_series;
        jac_series.label = std::to_string(update) + " updates";
        Series samp_series;
        samp_series.label = jac_series.label;
        for (std::size_t i = 0; i < result.train_split.size(); ++i) {
            jac_series.x.push_back(result.train_split.inputs(i, 0));
            jac_series.y.push_back(jac.v[i]);
            samp_series.x.push_back(result.train_split.inputs(i, 0));
            samp_series.y.push_back(samp.p[i]);
        }
        jac_chart.series.push_back(std::move(jac_series));
        samp_chart.series.push_back(std::move(samp_series));
        if (!options.quiet) {
            const double p_min = *std::min_element(samp.p.begin(), samp.p.end());
            std::cout << "diagnostics_trace @" << update << ": min p = " << p_min
                      << " (uniform " << samp.uniform << ")\n";
        }
    }
    {
        Series uniform_line;
        uniform_line.label = "uniform 1/N";
        uniform_line.color = "#000000";
        const double u = 1.0 / static_cast<double>(result.train_split.size());
        uniform_line.x = {result.train_split.inputs(0, 0),
                          result.train_split.inputs(result.train_split.size() - 1, 0)};
        uniform_line.y = {u, u};
        samp_chart.series.push_back(std::move(uniform_line));
    }
    write_line_chart(dir / "jacvar_trace.svg", jac_chart);
    write_line_chart(dir / "sampling_trace.svg", samp_chart);

    const GaussianPrediction final_pred =
        predict_original_scale(*result.model, result.train_split.inputs, result.stats);
    write_residuals_csv(dir / "diag_residuals.csv",
                        residual_histogram(final_pred.mean, result.train_split.targets, 4));

    json manifest;
    manifest["git_describe"] = git_describe();
    manifest["config"] = config_to_json(config);
    manifest["jacvar_radius_whitened"] = radius;
    manifest["snapshots"] = config.snapshot_updates;
    std::ofstream mf(dir / "manifest.json");
    mf << manifest.dump(2) << "\n";
}

}  // namespace

std::vector<std::string> preset_names() {
    return {"pitfall", "convergence_grid", "hetsine_calibration", "diagnostics_trace"};
}

void run_preset(const std::string& name, const PresetOptions& options) {
    if (name == "pitfall") {
        preset_pitfall(options);
    } else if (name == "convergence_grid") {
        preset_convergence_grid(options);
    } else if (name == "hetsine_calibration") {
        preset_hetsine_calibration(options);
    } else if (name == "diagnostics_trace") {
        preset_diagnostics_trace(options);
    } else {
        throw ConfigError("unknown preset: " + name);
    }
}

// ---------------------------------------------------------------------------
// Config files
// ---------------------------------------------------------------------------

namespace {

std::string trim(const std::string& s) {
    std::size_t a = 0, b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    return s.substr(a, b - a);
}

std::size_t parse_size(const std::string& value, const std::string& key) {
    try {
        return static_cast<std::size_t>(std::stoull(value));
    } catch (...) {
        throw ConfigError("config: bad integer for " + key + ": " + value);
    }
}

bool parse_bool(const std::string& value, const std::string& key) {
    if (value == "true" || value == "1") return true;
    if (value == "false" || value == "0") return false;
    throw ConfigError("config: bad boolean for " + key + ": " + value);
}

std::vector<std::string> split_commas(const std::string& value) {
    std::vector<std::string> parts;
    std::string cur;
    std::istringstream ss(value);
    while (std::getline(ss, cur, ',')) parts.push_back(trim(cur));
    return parts;
}

}  // namespace

void apply_config_kv(TrainConfig& config, const std::string& key, const std::string& value) {
    if (key == "dataset") {
        if (value == "sine-homo") {
            config.dataset.kind = DatasetSpec::Kind::SineHomo;
        } else if (value == "sine-het") {
            config.dataset.kind = DatasetSpec::Kind::SineHet;
        } else if (value == "csv") {
            config.dataset.kind = DatasetSpec::Kind::Csv;
        } else {
            throw ConfigError("config: unknown dataset: " + value);
        }
    } else if (key == "n") {
        config.dataset.n = parse_size(value, key);
    } else if (key == "csv") {
        config.dataset.csv_path = value;
        config.dataset.kind = DatasetSpec::Kind::Csv;
    } else if (key == "input_dim") {
        config.dataset.input_dim = parse_size(value, key);
        config.mlp.input_dim = config.dataset.input_dim;
    } else if (key == "target_dim") {
        config.dataset.target_dim = parse_size(value, key);
        config.mlp.output_dim = config.dataset.target_dim;
    } else if (key == "split") {
        const auto parts = split_commas(value);
        if (parts.size() != 3) throw ConfigError("config: split needs train,val,test");
        config.split.train = parse_double(parts[0], "split");
        config.split.val = parse_double(parts[1], "split");
        config.split.test = parse_double(parts[2], "split");
    } else if (key == "arch") {
        config.mlp.hidden_sizes.clear();
        for (const auto& part : split_commas(value)) {
            config.mlp.hidden_sizes.push_back(parse_size(part, key));
        }
    } else if (key == "activation") {
        config.mlp.activation = activation_from_string(value);
    } else if (key == "variance_floor") {
        config.mlp.variance_floor = parse_double(value, key);
    } else if (key == "variance_ceiling") {
        config.mlp.variance_ceiling = parse_double(value, key);
    } else if (key == "loss") {
        config.loss.kind = loss_kind_from_string(value);
    } else if (key == "beta") {
        config.loss.beta_mean = parse_double(value, key);
    } else if (key == "beta_var") {
        config.loss.beta_var = parse_double(value, key);
    } else if (key == "fixed_variance") {
        config.loss.fixed_variance = parse_double(value, key);
    } else if (key == "include_constant") {
        config.loss.include_constant = parse_bool(value, key);
    } else if (key == "mm_detach_mean") {
        config.loss.mm_detach_mean = parse_bool(value, key);
    } else if (key == "optimizer") {
        config.optimizer = optimizer_from_string(value);
    } else if (key == "whiten") {
        config.whiten = parse_bool(value, key);
    } else if (key == "init") {
        config.init_scheme = init_scheme_from_string(value);
    } else if (key == "lr") {
        config.lr = parse_double(value, key);
    } else if (key == "batch_size") {
        config.batch_size = parse_size(value, key);
    } else if (key == "max_updates") {
        config.max_updates = parse_size(value, key);
    } else if (key == "eval_every") {
        config.eval_every = parse_size(value, key);
    } else if (key == "patience") {
        config.early_stop_patience = parse_size(value, key);
    } else if (key == "seed") {
        config.seed = parse_size(value, key);
    } else if (key == "out_dir") {
        config.out_dir = value;
    } else {
        throw ConfigError("config: unknown key: " + key);
    }
}

TrainConfig parse_train_config_file(const std::filesystem::path& path) {
    std::ifstream file(path);
    if (!file) throw ConfigError("config: cannot open " + path.string());
    TrainConfig config;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(file, line)) {
        ++line_no;
        const std::size_t hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        line = trim(line);
        if (line.empty()) continue;
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("config: line " + std::to_string(line_no) + " is not key=value");
        }
        apply_config_kv(config, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    return config;
}

std::string git_describe() {
    return HETREG_GIT_DESCRIBE;
}

}  // namespace hetreg

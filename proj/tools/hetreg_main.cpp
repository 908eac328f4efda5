// Command-line front end: dataset generation, training runs, grid searches,
// wired experiment presets, post-hoc diagnostics, and SVG plots.

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "hetreg/checkpoint.hpp"
#include "hetreg/data.hpp"
#include "hetreg/diagnostics.hpp"
#include "hetreg/errors.hpp"
#include "hetreg/harness.hpp"
#include "hetreg/svg.hpp"
#include "hetreg/textio.hpp"

namespace {

using namespace hetreg;

constexpr int kExitOk = 0;
constexpr int kExitConfigError = 2;
constexpr int kExitDiverged = 3;

LossSpec parse_loss_token(const std::string& token) {
    LossSpec spec;
    const std::size_t colon = token.find(':');
    const std::string name = token.substr(0, colon);
    spec.kind = loss_kind_from_string(name);
    if (colon == std::string::npos) return spec;
    const std::string rest = token.substr(colon + 1);
    std::vector<std::string> parts;
    std::stringstream ss(rest);
    std::string part;
    while (std::getline(ss, part, ':')) parts.push_back(part);
    if (spec.kind == LossKind::BetaNll) {
        if (!parts.empty()) spec.beta_mean = parse_double(parts[0], "loss beta");
        if (parts.size() > 1) spec.beta_var = parse_double(parts[1], "loss beta_var");
    } else if (spec.kind == LossKind::FixedVarNll) {
        if (!parts.empty()) spec.fixed_variance = parse_double(parts[0], "loss sigma2");
    } else {
        throw ConfigError("loss " + name + " takes no parameters");
    }
    return spec;
}

std::vector<std::string> split_list(const std::string& value, char sep) {
    std::vector<std::string> out;
    std::string cur;
    std::stringstream ss(value);
    while (std::getline(ss, cur, sep)) {
        if (!cur.empty()) out.push_back(cur);
    }
    return out;
}

struct MetricsCsv {
    std::vector<std::size_t> updates;
    std::vector<double> rmse, mean_ll;
};

MetricsCsv read_metrics_csv(const std::string& path, const std::string& split) {
    std::ifstream file(path);
    if (!file) throw ConfigError("plot: cannot open " + path);
    std::string line;
    if (!std::getline(file, line)) throw ParseError("plot: empty metrics file " + path);
    MetricsCsv out;
    while (std::getline(file, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        const auto cells = split_list(line, ',');
        if (cells.size() != 4) continue;
        if (cells[1] != split) continue;
        out.updates.push_back(std::stoull(cells[0]));
        out.rmse.push_back(parse_double(cells[2], "plot rmse"));
        out.mean_ll.push_back(parse_double(cells[3], "plot mean_ll"));
    }
    return out;
}

int cmd_gen_data(const std::string& dataset, std::size_t n, std::uint64_t seed,
                 const std::string& out) {
    Dataset data;
    if (dataset == "sine-homo") {
        data = gen_homoscedastic_sine(n, seed);
    } else if (dataset == "sine-het") {
        data = gen_heteroscedastic_sine(n, seed);
    } else {
        throw ConfigError("gen-data: unknown dataset " + dataset);
    }
    save_csv(data, out);
    std::cout << "wrote " << data.size() << " rows to " << out << "\n";
    return kExitOk;
}

int cmd_train(const TrainConfig& config) {
    const TrainResult result = train_run(config);
    write_run_outputs(config, result, config.out_dir);
    std::cout << "train: final train RMSE " << result.final_train.rmse << ", mean LL "
              << result.final_train.mean_ll;
    if (result.final_val) std::cout << "; val RMSE " << result.final_val->rmse;
    if (result.final_test) std::cout << "; test RMSE " << result.final_test->rmse;
    std::cout << "\noutputs in " << config.out_dir.string() << "\n";
    if (result.diverged) {
        std::cout << "run diverged at update " << result.diverged_at << "\n";
        return kExitDiverged;
    }
    return kExitOk;
}

int cmd_diagnose(const std::string& checkpoint_path, const std::string& dataset,
                 std::size_t n, std::uint64_t seed, const std::string& csv,
                 std::size_t input_dim, std::size_t target_dim, double radius,
                 std::size_t bins_per_decade, const std::string& out_dir) {
    const LoadedCheckpoint loaded = load_checkpoint(checkpoint_path);
    if (!loaded.stats) {
        throw ConfigError("diagnose: checkpoint has no whitening stats");
    }
    Dataset data;
    if (!csv.empty()) {
        data = load_csv(csv, input_dim, target_dim);
    } else if (dataset == "sine-homo") {
        data = gen_homoscedastic_sine(n, seed);
    } else if (dataset == "sine-het") {
        data = gen_heteroscedastic_sine(n, seed);
    } else {
        throw ConfigError("diagnose: pick --csv or --dataset sine-homo|sine-het");
    }

    std::filesystem::create_directories(out_dir);
    const Dataset whitened = loaded.stats->whiten(data);

    double r = radius;
    if (!(r > 0.0)) {
        double diag2 = 0.0;
        for (std::size_t j = 0; j < whitened.input_dim(); ++j) {
            double lo = whitened.inputs(0, j), hi = lo;
            for (std::size_t i = 0; i < whitened.size(); ++i) {
                lo = std::min(lo, whitened.inputs(i, j));
                hi = std::max(hi, whitened.inputs(i, j));
            }
            diag2 += (hi - lo) * (hi - lo);
        }
        r = 0.01 * std::sqrt(diag2);
    }

    const auto jac = jacobian_variance(loaded.model, whitened, r);
    write_jacvar_csv(std::filesystem::path(out_dir) / "diag_jacvar.csv", data, jac);

    const GaussianPrediction pred = loaded.model.predict(whitened.inputs);
    const auto samp = effective_sampling_distribution(pred.variance);
    write_sampling_csv(std::filesystem::path(out_dir) / "diag_sampling.csv", samp);

    const GaussianPrediction pred_orig =
        predict_original_scale(loaded.model, data.inputs, *loaded.stats);
    write_residuals_csv(std::filesystem::path(out_dir) / "diag_residuals.csv",
                        residual_histogram(pred_orig.mean, data.targets, bins_per_decade));

    const double p_min = *std::min_element(samp.p.begin(), samp.p.end());
    std::cout << "diagnose: r=" << r << " (whitened units), min sampling p=" << p_min
              << " vs uniform " << samp.uniform << "\n"
              << "outputs in " << out_dir << "\n";
    return kExitOk;
}

int cmd_plot_metrics(const std::vector<std::string>& files, const std::string& labels_arg,
                     const std::string& metric, const std::string& split, bool log_x,
                     bool log_y, const std::string& out) {
    std::vector<std::string> labels = split_list(labels_arg, ',');
    LineChartSpec spec;
    spec.title = metric + " over updates";
    spec.x_label = "updates";
    spec.y_label = metric;
    spec.log_x = log_x;
    spec.log_y = log_y;
    for (std::size_t i = 0; i < files.size(); ++i) {
        const MetricsCsv csv = read_metrics_csv(files[i], split);
        Series s;
        s.label = i < labels.size() ? labels[i] : files[i];
        for (std::size_t k = 0; k < csv.updates.size(); ++k) {
            s.x.push_back(static_cast<double>(csv.updates[k]));
            s.y.push_back(metric == "mean_ll" ? csv.mean_ll[k] : csv.rmse[k]);
        }
        spec.series.push_back(std::move(s));
    }
    write_line_chart(out, spec);
    std::cout << "wrote " << out << "\n";
    return kExitOk;
}

int cmd_plot_grid(const std::string& grid_csv, const std::string& out_prefix) {
    std::ifstream file(grid_csv);
    if (!file) throw ConfigError("plot: cannot open " + grid_csv);
    std::string line;
    if (!std::getline(file, line)) throw ParseError("plot: empty grid file");
    const auto header = split_list(line, ',');
    std::map<std::string, std::size_t> col;
    for (std::size_t i = 0; i < header.size(); ++i) col[header[i]] = i;
    for (const char* need : {"loss", "beta_mean", "lr", "arch", "min_train_rmse"}) {
        if (!col.count(need)) throw ParseError(std::string("plot: grid csv lacks column ") + need);
    }

    struct Cell {
        double sum = 0.0;
        std::size_t count = 0;
    };
    std::map<std::string, std::map<std::pair<std::string, std::string>, Cell>> by_loss;
    std::set<std::string> archs, lrs;
    while (std::getline(file, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        std::vector<std::string> cells;
        std::string cur;
        std::stringstream ss(line);
        while (std::getline(ss, cur, ',')) cells.push_back(cur);
        if (cells.size() < header.size()) cells.resize(header.size());
        const std::string value = cells[col["min_train_rmse"]];
        if (value.empty()) continue;
        std::string loss = cells[col["loss"]];
        if (!cells[col["beta_mean"]].empty()) loss += ":" + cells[col["beta_mean"]];
        const std::string arch = cells[col["arch"]];
        const std::string lr = cells[col["lr"]];
        archs.insert(arch);
        lrs.insert(lr);
        Cell& c = by_loss[loss][{arch, lr}];
        c.sum += parse_double(value, "plot grid value");
        c.count += 1;
    }

    for (const auto& [loss, cells] : by_loss) {
        HeatmapSpec heat;
        heat.title = loss + ": min train RMSE";
        heat.row_labels.assign(archs.begin(), archs.end());
        heat.col_labels.assign(lrs.begin(), lrs.end());
        heat.values = Matrix(heat.row_labels.size(), heat.col_labels.size(),
                             std::numeric_limits<double>::quiet_NaN());
        for (std::size_t a = 0; a < heat.row_labels.size(); ++a) {
            for (std::size_t l = 0; l < heat.col_labels.size(); ++l) {
                const auto it = cells.find({heat.row_labels[a], heat.col_labels[l]});
                if (it != cells.end() && it->second.count > 0) {
                    heat.values(a, l) = it->second.sum / static_cast<double>(it->second.count);
                }
            }
        }
        std::string stem = loss;
        std::replace(stem.begin(), stem.end(), ':', '_');
        const std::string path = out_prefix + "_" + stem + ".svg";
        write_heatmap(path, heat);
        std::cout << "wrote " << path << "\n";
    }
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Heteroscedastic Gaussian regression engine"};
    app.require_subcommand(1);

    // ---- gen-data ----
    auto* gen = app.add_subcommand("gen-data", "Generate a synthetic dataset as CSV");
    std::string gen_dataset = "sine-homo";
    std::size_t gen_n = 1000;
    std::uint64_t gen_seed = 0;
    std::string gen_out = "data.csv";
    gen->add_option("--dataset", gen_dataset, "sine-homo or sine-het");
    gen->add_option("--n", gen_n, "number of samples");
    gen->add_option("--seed", gen_seed, "noise seed");
    gen->add_option("--out", gen_out, "output CSV path")->required();

    // ---- train ----
    auto* train = app.add_subcommand("train", "Run one training run");
    std::string train_config_path;
    std::vector<std::pair<std::string, std::string>> overrides;
    train->add_option("--config", train_config_path, "key=value config file");
    const auto add_override = [&](const std::string& flag, const std::string& key,
                                  const std::string& help) {
        train->add_option_function<std::string>(
            flag, [&overrides, key](const std::string& v) { overrides.emplace_back(key, v); },
            help);
    };
    add_override("--dataset", "dataset", "sine-homo | sine-het | csv");
    add_override("--n", "n", "generator sample count");
    add_override("--csv", "csv", "CSV dataset path");
    add_override("--input-dim", "input_dim", "CSV input columns");
    add_override("--target-dim", "target_dim", "CSV target columns");
    add_override("--split", "split", "train,val,test fractions");
    add_override("--loss", "loss", "nll|beta-nll|mse|fixed-var-nll|mm-std|mm-var");
    add_override("--beta", "beta", "beta for beta-nll");
    add_override("--beta-var", "beta_var", "separate variance beta");
    add_override("--fixed-variance", "fixed_variance", "sigma^2 for fixed-var-nll");
    add_override("--lr", "lr", "learning rate");
    add_override("--arch", "arch", "hidden sizes, e.g. 128,128");
    add_override("--activation", "activation", "tanh or relu");
    add_override("--optimizer", "optimizer", "adam or sgd");
    add_override("--whiten", "whiten", "true/false: whiten on the train split");
    add_override("--init", "init", "glorot or fan-in weight init");
    add_override("--batch-size", "batch_size", "mini-batch size");
    add_override("--max-updates", "max_updates", "gradient updates");
    add_override("--eval-every", "eval_every", "evaluation cadence");
    add_override("--patience", "patience", "early-stop patience (0 = off)");
    add_override("--seed", "seed", "run seed");
    add_override("--out-dir", "out_dir", "output directory");

    // ---- grid ----
    auto* grid = app.add_subcommand("grid", "Run a hyperparameter grid");
    std::string grid_config_path;
    std::string grid_lrs = "5e-4";
    std::string grid_archs = "128,128";
    std::string grid_losses = "nll";
    std::string grid_seeds = "0";
    std::string grid_out = "out/grid";
    unsigned grid_jobs = 1;
    grid->add_option("--config", grid_config_path, "base key=value config file");
    grid->add_option("--lrs", grid_lrs, "comma list of learning rates");
    grid->add_option("--archs", grid_archs, "semicolon list of archs, e.g. 64,64;128,128");
    grid->add_option("--losses", grid_losses,
                     "comma list, e.g. nll,beta-nll:0.5,mse,fixed-var-nll:1");
    grid->add_option("--seeds", grid_seeds, "comma list of seeds");
    grid->add_option("--jobs", grid_jobs, "parallel workers");
    grid->add_option("--out-dir", grid_out, "output directory");

    // ---- preset ----
    auto* preset = app.add_subcommand("preset", "Run a wired experiment preset");
    std::string preset_name;
    PresetOptions preset_options;
    std::size_t preset_max_updates = 0;
    preset->add_option("name", preset_name,
                       "pitfall | convergence_grid | hetsine_calibration | diagnostics_trace")
        ->required();
    std::string preset_out = "out";
    preset->add_option("--out-dir", preset_out, "output directory");
    preset->add_option("--seed", preset_options.seed, "base seed");
    preset->add_option("--max-updates", preset_max_updates, "override update budget");
    preset->add_option("--jobs", preset_options.jobs, "parallel workers");
    preset->add_flag("--quiet", preset_options.quiet, "suppress progress lines");

    // ---- diagnose ----
    auto* diagnose = app.add_subcommand("diagnose", "Diagnostics for a saved checkpoint");
    std::string diag_checkpoint, diag_dataset = "sine-homo", diag_csv, diag_out = "out/diag";
    std::size_t diag_n = 1000, diag_input_dim = 1, diag_target_dim = 1, diag_bins = 4;
    std::uint64_t diag_seed = 0;
    double diag_radius = 0.0;
    diagnose->add_option("--checkpoint", diag_checkpoint, "checkpoint.txt path")->required();
    diagnose->add_option("--dataset", diag_dataset, "sine-homo or sine-het");
    diagnose->add_option("--n", diag_n, "generator sample count");
    diagnose->add_option("--seed", diag_seed, "generator seed");
    diagnose->add_option("--csv", diag_csv, "CSV dataset path instead of a generator");
    diagnose->add_option("--input-dim", diag_input_dim, "CSV input columns");
    diagnose->add_option("--target-dim", diag_target_dim, "CSV target columns");
    diagnose->add_option("--r", diag_radius, "ball radius in whitened units (default 1% of diameter)");
    diagnose->add_option("--bins-per-decade", diag_bins, "residual histogram resolution");
    diagnose->add_option("--out-dir", diag_out, "output directory");

    // ---- plot ----
    auto* plot = app.add_subcommand("plot", "Render SVG charts from result CSVs");
    std::vector<std::string> plot_metrics_files;
    std::string plot_labels, plot_metric = "rmse", plot_split = "train";
    std::string plot_grid_csv, plot_out = "plot.svg";
    bool plot_log_x = false, plot_log_y = false;
    plot->add_option("--metrics", plot_metrics_files, "metrics.csv files to overlay");
    plot->add_option("--labels", plot_labels, "comma list of series labels");
    plot->add_option("--metric", plot_metric, "rmse or mean_ll");
    plot->add_option("--split", plot_split, "train or val");
    plot->add_flag("--log-x", plot_log_x, "log x axis");
    plot->add_flag("--log-y", plot_log_y, "log y axis");
    plot->add_option("--grid", plot_grid_csv, "grid.csv to render as heatmaps");
    plot->add_option("--out", plot_out, "output SVG path (prefix in grid mode)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) {
            return cmd_gen_data(gen_dataset, gen_n, gen_seed, gen_out);
        }
        if (train->parsed()) {
            TrainConfig config;
            if (!train_config_path.empty()) config = parse_train_config_file(train_config_path);
            for (const auto& [key, value] : overrides) apply_config_kv(config, key, value);
            config.validate();
            return cmd_train(config);
        }
        if (grid->parsed()) {
            GridSpec spec;
            if (!grid_config_path.empty()) spec.base = parse_train_config_file(grid_config_path);
            for (const auto& lr : split_list(grid_lrs, ',')) {
                spec.learning_rates.push_back(parse_double(lr, "grid lr"));
            }
            for (const auto& arch : split_list(grid_archs, ';')) {
                std::vector<std::size_t> sizes;
                for (const auto& part : split_list(arch, ',')) sizes.push_back(std::stoull(part));
                spec.architectures.push_back(std::move(sizes));
            }
            for (const auto& token : split_list(grid_losses, ',')) {
                spec.losses.push_back(parse_loss_token(token));
            }
            for (const auto& seed : split_list(grid_seeds, ',')) {
                spec.seeds.push_back(std::stoull(seed));
            }
            std::filesystem::create_directories(grid_out);
            const auto rows = grid_search(spec, grid_jobs, [](const GridRow& row) {
                std::cout << "grid[" << row.index << "] " << row.config.loss.label()
                          << " lr=" << row.config.lr << " seed=" << row.config.seed << " -> "
                          << (row.failed ? "failed: " + row.error
                              : row.diverged
                                  ? "diverged at " + std::to_string(row.diverged_at)
                                  : "min train RMSE " + format_double(row.min_train_rmse))
                          << "\n";
            });
            write_grid_csv(std::filesystem::path(grid_out) / "grid.csv", rows);
            std::cout << "best per loss:\n";
            for (std::size_t idx : best_per_loss(rows)) {
                const GridRow& row = rows[idx];
                std::cout << "  " << row.config.loss.label() << ": run " << idx << " (lr="
                          << row.config.lr << ", arch=" << row.config.mlp.hidden_sizes.size()
                          << "x" << row.config.mlp.hidden_sizes[0] << ", seed="
                          << row.config.seed << ")\n";
            }
            std::cout << "outputs in " << grid_out << "\n";
            return kExitOk;
        }
        if (preset->parsed()) {
            preset_options.out_dir = preset_out;
            if (preset_max_updates > 0) preset_options.max_updates = preset_max_updates;
            if (preset_options.jobs == 0) {
                preset_options.jobs = std::max(1u, std::thread::hardware_concurrency());
            }
            run_preset(preset_name, preset_options);
            std::cout << "preset outputs in " << (preset_options.out_dir / preset_name).string()
                      << "\n";
            return kExitOk;
        }
        if (diagnose->parsed()) {
            return cmd_diagnose(diag_checkpoint, diag_dataset, diag_n, diag_seed, diag_csv,
                                diag_input_dim, diag_target_dim, diag_radius, diag_bins,
                                diag_out);
        }
        if (plot->parsed()) {
            if (!plot_grid_csv.empty()) {
                std::string prefix = plot_out;
                const std::size_t dot = prefix.rfind(".svg");
                if (dot != std::string::npos) prefix.resize(dot);
                return cmd_plot_grid(plot_grid_csv, prefix);
            }
            if (plot_metrics_files.empty()) {
                throw ConfigError("plot: need --metrics or --grid");
            }
            return cmd_plot_metrics(plot_metrics_files, plot_labels, plot_metric, plot_split,
                                    plot_log_x, plot_log_y, plot_out);
        }
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfigError;
    } catch (const ParseError& e) {
        std::cerr << "parse error: " << e.what() << "\n";
        return kExitConfigError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return kExitOk;
}

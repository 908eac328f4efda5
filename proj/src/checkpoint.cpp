#include "hetreg/checkpoint.hpp"

#include <fstream>
#include <map>
#include <sstream>
#include <vector>

#include "hetreg/errors.hpp"
#include "hetreg/textio.hpp"

namespace hetreg {

namespace {

constexpr const char* kMagic = "hetreg-checkpoint 1 hexfloat";

void write_array(std::ofstream& out, const std::string& name, std::size_t rows,
                 std::size_t cols, const double* values) {
    out << "array " << name << " " << rows << " " << cols << "\n";
    for (std::size_t i = 0; i < rows; ++i) {
        for (std::size_t j = 0; j < cols; ++j) {
            out << (j ? " " : "") << format_double_hex(values[i * cols + j]);
        }
        out << "\n";
    }
}

struct NamedArray {
    std::size_t rows = 0, cols = 0;
    std::vector<double> values;
};

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const ProbabilisticMlp& model,
                     const WhitenStats* stats) {
    std::ofstream out(path);
    if (!out) throw IoError("save_checkpoint: cannot open " + path.string());
    const MlpConfig& cfg = model.config();
    out << kMagic << "\n";
    out << "input_dim " << cfg.input_dim << "\n";
    out << "hidden";
    for (std::size_t h : cfg.hidden_sizes) out << " " << h;
    out << "\n";
    out << "activation " << to_string(cfg.activation) << "\n";
    out << "output_dim " << cfg.output_dim << "\n";
    out << "variance_floor " << format_double_hex(cfg.variance_floor) << "\n";
    out << "variance_ceiling " << format_double_hex(cfg.variance_ceiling) << "\n";

    const auto views = model.param_views();
    const auto names = model.param_names();
    std::size_t fan_in = cfg.input_dim;
    std::vector<std::pair<std::size_t, std::size_t>> shapes;
    for (std::size_t h : cfg.hidden_sizes) {
        shapes.emplace_back(fan_in, h);
        shapes.emplace_back(1, h);
        fan_in = h;
    }
    for (int head = 0; head < 2; ++head) {
        shapes.emplace_back(fan_in, cfg.output_dim);
        shapes.emplace_back(1, cfg.output_dim);
    }
    for (std::size_t a = 0; a < views.size(); ++a) {
        write_array(out, names[a], shapes[a].first, shapes[a].second, views[a].data());
    }
    if (stats) {
        write_array(out, "whiten.input_mean", 1, stats->input_mean.size(),
                    stats->input_mean.data());
        write_array(out, "whiten.input_std", 1, stats->input_std.size(),
                    stats->input_std.data());
        write_array(out, "whiten.target_mean", 1, stats->target_mean.size(),
                    stats->target_mean.data());
        write_array(out, "whiten.target_std", 1, stats->target_std.size(),
                    stats->target_std.data());
    }
    out << "end\n";
    if (!out) throw IoError("save_checkpoint: write failed for " + path.string());
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("load_checkpoint: cannot open " + path.string());
    std::string line;
    if (!std::getline(in, line) || line != kMagic) {
        throw ParseError("load_checkpoint: bad magic line");
    }

    MlpConfig cfg;
    cfg.hidden_sizes.clear();
    std::map<std::string, NamedArray> arrays;
    std::vector<std::string> order;
    bool saw_end = false;

    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string key;
        ls >> key;
        if (key == "end") {
            saw_end = true;
            break;
        }
        if (key == "input_dim") {
            ls >> cfg.input_dim;
        } else if (key == "hidden") {
            std::size_t h;
            while (ls >> h) cfg.hidden_sizes.push_back(h);
        } else if (key == "activation") {
            std::string name;
            ls >> name;
            cfg.activation = activation_from_string(name);
        } else if (key == "output_dim") {
            ls >> cfg.output_dim;
        } else if (key == "variance_floor" || key == "variance_ceiling") {
            std::string token;
            ls >> token;
            const double v = parse_double(token, "load_checkpoint: " + key);
            (key == "variance_floor" ? cfg.variance_floor : cfg.variance_ceiling) = v;
        } else if (key == "array") {
            NamedArray arr;
            std::string name;
            ls >> name >> arr.rows >> arr.cols;
            if (!ls) throw ParseError("load_checkpoint: malformed array header: " + line);
            arr.values.reserve(arr.rows * arr.cols);
            for (std::size_t i = 0; i < arr.rows; ++i) {
                if (!std::getline(in, line)) {
                    throw ParseError("load_checkpoint: truncated array " + name);
                }
                std::istringstream row(line);
                std::string token;
                while (row >> token) {
                    arr.values.push_back(parse_double(token, "load_checkpoint: array " + name));
                }
            }
            if (arr.values.size() != arr.rows * arr.cols) {
                throw ParseError("load_checkpoint: array " + name + " has wrong value count");
            }
            order.push_back(name);
            arrays[name] = std::move(arr);
        } else {
            throw ParseError("load_checkpoint: unknown key: " + key);
        }
    }
    if (!saw_end) throw ParseError("load_checkpoint: missing end marker");

    auto get = [&](const std::string& name) -> const NamedArray& {
        auto it = arrays.find(name);
        if (it == arrays.end()) throw ParseError("load_checkpoint: missing array " + name);
        return it->second;
    };
    auto to_layer = [&](const std::string& stem) {
        const NamedArray& w = get(stem + ".w");
        const NamedArray& b = get(stem + ".b");
        Layer layer;
        layer.w = Matrix(w.rows, w.cols);
        std::copy(w.values.begin(), w.values.end(), layer.w.data());
        layer.b = b.values;
        return layer;
    };

    std::vector<Layer> trunk;
    for (std::size_t l = 0; l < cfg.hidden_sizes.size(); ++l) {
        trunk.push_back(to_layer("trunk" + std::to_string(l)));
    }
    LoadedCheckpoint loaded{
        ProbabilisticMlp::from_parts(cfg, std::move(trunk), to_layer("mean"), to_layer("var")),
        std::nullopt};

    if (arrays.count("whiten.input_mean")) {
        WhitenStats stats;
        stats.input_mean = get("whiten.input_mean").values;
        stats.input_std = get("whiten.input_std").values;
        stats.target_mean = get("whiten.target_mean").values;
        stats.target_std = get("whiten.target_std").values;
        loaded.stats = std::move(stats);
    }
    return loaded;
}

}  // namespace hetreg

#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "hetreg/matrix.hpp"

namespace hetreg {

struct Series {
    std::string label;
    std::string color;  // CSS color; picked from a default cycle when empty
    std::vector<double> x;
    std::vector<double> y;
    bool dots = false;  // scatter markers instead of a line
};

/// Shaded region between y_lo and y_hi, e.g. a +-2 sigma band.
struct BandSeries {
    std::string color;
    double opacity = 0.25;
    std::vector<double> x;
    std::vector<double> y_lo;
    std::vector<double> y_hi;
};

struct LineChartSpec {
    std::string title, x_label, y_label;
    bool log_x = false;
    bool log_y = false;
    std::vector<BandSeries> bands;
    std::vector<Series> series;
};

void write_line_chart(const std::filesystem::path& path, const LineChartSpec& spec);

struct HeatmapSpec {
    std::string title;
    std::vector<std::string> row_labels;
    std::vector<std::string> col_labels;
    Matrix values;  // row_labels.size() × col_labels.size()
    // Color range; computed from the data when unset.
    std::optional<double> vmin, vmax;
    bool lower_is_better = true;
};

/// Renders the grid and returns the (vmin, vmax) actually used for the color
/// scale so callers can record it.
std::pair<double, double> write_heatmap(const std::filesystem::path& path,
                                        const HeatmapSpec& spec);

}  // namespace hetreg

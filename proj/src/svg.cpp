#include "hetreg/svg.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

#include "hetreg/errors.hpp"

namespace hetreg {

namespace {

constexpr double kWidth = 760.0, kHeight = 480.0;
constexpr double kLeft = 70.0, kRight = 20.0, kTop = 40.0, kBottom = 55.0;

const char* kPalette[] = {"#d95f02", "#1b9e77", "#7570b3", "#e7298a",
                          "#66a61e", "#e6ab02", "#a6761d", "#666666"};

std::string fmt(double v) {
    std::ostringstream os;
    os << std::setprecision(6) << v;
    return os.str();
}

std::string esc(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            default: out += c;
        }
    }
    return out;
}

struct AxisRange {
    double lo = 0.0, hi = 1.0;
    bool log = false;

    double to_unit(double v) const {
        if (log) return (std::log10(v) - std::log10(lo)) / (std::log10(hi) - std::log10(lo));
        return (v - lo) / (hi - lo);
    }
};

void expand(double v, bool log, double& lo, double& hi) {
    if (!std::isfinite(v)) return;
    if (log && v <= 0.0) return;
    lo = std::min(lo, v);
    hi = std::max(hi, v);
}

AxisRange make_range(double lo, double hi, bool log) {
    if (lo > hi) {  // nothing plottable
        lo = log ? 0.1 : 0.0;
        hi = 1.0;
    }
    if (log) {
        if (lo == hi) {
            lo /= 10.0;
            hi *= 10.0;
        }
    } else {
        if (lo == hi) {
            lo -= 0.5;
            hi += 0.5;
        } else {
            const double pad = 0.04 * (hi - lo);
            lo -= pad;
            hi += pad;
        }
    }
    return {lo, hi, log};
}

std::vector<double> ticks_for(const AxisRange& r) {
    std::vector<double> ticks;
    if (r.log) {
        const int k0 = static_cast<int>(std::ceil(std::log10(r.lo) - 1e-9));
        const int k1 = static_cast<int>(std::floor(std::log10(r.hi) + 1e-9));
        for (int k = k0; k <= k1; ++k) ticks.push_back(std::pow(10.0, k));
        if (ticks.empty()) ticks = {r.lo, r.hi};
        return ticks;
    }
    const double span = r.hi - r.lo;
    const double raw = span / 5.0;
    const double mag = std::pow(10.0, std::floor(std::log10(raw)));
    double step = mag;
    for (double m : {1.0, 2.0, 5.0, 10.0}) {
        if (raw <= m * mag) {
            step = m * mag;
            break;
        }
    }
    const double first = std::ceil(r.lo / step) * step;
    for (double t = first; t <= r.hi + 1e-12 * span; t += step) ticks.push_back(t);
    return ticks;
}

std::string tick_label(double v, bool log) {
    std::ostringstream os;
    if (log) {
        const double e = std::log10(v);
        if (std::fabs(e - std::round(e)) < 1e-9) {
            os << "1e" << static_cast<int>(std::round(e));
            return os.str();
        }
    }
    os << std::setprecision(4) << v;
    return os.str();
}

}  // namespace

void write_line_chart(const std::filesystem::path& path, const LineChartSpec& spec) {
    double x_lo = std::numeric_limits<double>::infinity(), x_hi = -x_lo;
    double y_lo = x_lo, y_hi = -x_lo;
    for (const auto& s : spec.series) {
        for (double v : s.x) expand(v, spec.log_x, x_lo, x_hi);
        for (double v : s.y) expand(v, spec.log_y, y_lo, y_hi);
    }
    for (const auto& b : spec.bands) {
        for (double v : b.x) expand(v, spec.log_x, x_lo, x_hi);
        for (double v : b.y_lo) expand(v, spec.log_y, y_lo, y_hi);
        for (double v : b.y_hi) expand(v, spec.log_y, y_lo, y_hi);
    }
    const AxisRange xr = make_range(x_lo, x_hi, spec.log_x);
    const AxisRange yr = make_range(y_lo, y_hi, spec.log_y);

    const double plot_w = kWidth - kLeft - kRight;
    const double plot_h = kHeight - kTop - kBottom;
    auto px = [&](double v) { return kLeft + xr.to_unit(v) * plot_w; };
    auto py = [&](double v) { return kTop + (1.0 - yr.to_unit(v)) * plot_h; };
    auto plottable = [&](double x, double y) {
        return std::isfinite(x) && std::isfinite(y) && (!spec.log_x || x > 0.0) &&
               (!spec.log_y || y > 0.0);
    };

    std::ofstream out(path);
    if (!out) throw IoError("write_line_chart: cannot open " + path.string());
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\""
        << kHeight << "\" viewBox=\"0 0 " << kWidth << " " << kHeight << "\">\n";
    out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    out << "<text x=\"" << kWidth / 2 << "\" y=\"22\" text-anchor=\"middle\" "
        << "font-family=\"sans-serif\" font-size=\"15\">" << esc(spec.title) << "</text>\n";

    // grid + ticks
    out << "<g font-family=\"sans-serif\" font-size=\"11\" fill=\"#333\">\n";
    for (double t : ticks_for(xr)) {
        const double x = px(t);
        out << "<line x1=\"" << fmt(x) << "\" y1=\"" << kTop << "\" x2=\"" << fmt(x)
            << "\" y2=\"" << kTop + plot_h << "\" stroke=\"#ddd\"/>\n";
        out << "<text x=\"" << fmt(x) << "\" y=\"" << kTop + plot_h + 16
            << "\" text-anchor=\"middle\">" << tick_label(t, spec.log_x) << "</text>\n";
    }
    for (double t : ticks_for(yr)) {
        const double y = py(t);
        out << "<line x1=\"" << kLeft << "\" y1=\"" << fmt(y) << "\" x2=\"" << kLeft + plot_w
            << "\" y2=\"" << fmt(y) << "\" stroke=\"#ddd\"/>\n";
        out << "<text x=\"" << kLeft - 6 << "\" y=\"" << fmt(y + 4)
            << "\" text-anchor=\"end\">" << tick_label(t, spec.log_y) << "</text>\n";
    }
    out << "</g>\n";
    out << "<rect x=\"" << kLeft << "\" y=\"" << kTop << "\" width=\"" << plot_w
        << "\" height=\"" << plot_h << "\" fill=\"none\" stroke=\"#333\"/>\n";

    for (const auto& band : spec.bands) {
        std::ostringstream pts;
        for (std::size_t i = 0; i < band.x.size(); ++i) {
            if (!plottable(band.x[i], band.y_hi[i])) continue;
            pts << fmt(px(band.x[i])) << "," << fmt(py(band.y_hi[i])) << " ";
        }
        for (std::size_t i = band.x.size(); i-- > 0;) {
            if (!plottable(band.x[i], band.y_lo[i])) continue;
            pts << fmt(px(band.x[i])) << "," << fmt(py(band.y_lo[i])) << " ";
        }
        out << "<polygon points=\"" << pts.str() << "\" fill=\"" << band.color
            << "\" opacity=\"" << band.opacity << "\"/>\n";
    }

    std::size_t color_idx = 0;
    for (const auto& s : spec.series) {
        const std::string color =
            s.color.empty() ? kPalette[color_idx++ % std::size(kPalette)] : s.color;
        if (s.dots) {
            for (std::size_t i = 0; i < s.x.size(); ++i) {
                if (!plottable(s.x[i], s.y[i])) continue;
                out << "<circle cx=\"" << fmt(px(s.x[i])) << "\" cy=\"" << fmt(py(s.y[i]))
                    << "\" r=\"1.8\" fill=\"" << color << "\"/>\n";
            }
        } else {
            std::ostringstream pts;
            for (std::size_t i = 0; i < s.x.size(); ++i) {
                if (!plottable(s.x[i], s.y[i])) continue;
                pts << fmt(px(s.x[i])) << "," << fmt(py(s.y[i])) << " ";
            }
            out << "<polyline points=\"" << pts.str() << "\" fill=\"none\" stroke=\"" << color
                << "\" stroke-width=\"1.6\"/>\n";
        }
    }

    // legend
    double ly = kTop + 14.0;
    color_idx = 0;
    for (const auto& s : spec.series) {
        const std::string color =
            s.color.empty() ? kPalette[color_idx++ % std::size(kPalette)] : s.color;
        if (s.label.empty()) continue;
        out << "<line x1=\"" << kLeft + plot_w - 150 << "\" y1=\"" << fmt(ly) << "\" x2=\""
            << kLeft + plot_w - 130 << "\" y2=\"" << fmt(ly) << "\" stroke=\"" << color
            << "\" stroke-width=\"2\"/>\n";
        out << "<text x=\"" << kLeft + plot_w - 124 << "\" y=\"" << fmt(ly + 4)
            << "\" font-family=\"sans-serif\" font-size=\"12\">" << esc(s.label) << "</text>\n";
        ly += 16.0;
    }

    out << "<text x=\"" << kLeft + plot_w / 2 << "\" y=\"" << kHeight - 12
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\">"
        << esc(spec.x_label) << "</text>\n";
    out << "<text x=\"16\" y=\"" << kTop + plot_h / 2
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\" "
        << "transform=\"rotate(-90 16 " << kTop + plot_h / 2 << ")\">" << esc(spec.y_label)
        << "</text>\n";
    out << "</svg>\n";
}

std::pair<double, double> write_heatmap(const std::filesystem::path& path,
                                        const HeatmapSpec& spec) {
    const std::size_t rows = spec.row_labels.size();
    const std::size_t cols = spec.col_labels.size();
    if (spec.values.rows() != rows || spec.values.cols() != cols) {
        throw ShapeError("write_heatmap: label/value shape mismatch");
    }
    double vmin = std::numeric_limits<double>::infinity(), vmax = -vmin;
    for (std::size_t i = 0; i < spec.values.size(); ++i) {
        const double v = spec.values.data()[i];
        if (std::isfinite(v)) {
            vmin = std::min(vmin, v);
            vmax = std::max(vmax, v);
        }
    }
    if (spec.vmin) vmin = *spec.vmin;
    if (spec.vmax) vmax = *spec.vmax;
    if (!(vmin < vmax)) vmax = vmin + 1.0;

    const double cell = 64.0, left = 110.0, top = 60.0;
    const double width = left + cell * static_cast<double>(cols) + 30.0;
    const double height = top + cell * static_cast<double>(rows) + 40.0;

    std::ofstream out(path);
    if (!out) throw IoError("write_heatmap: cannot open " + path.string());
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
        << height << "\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    out << "<text x=\"" << width / 2 << "\" y=\"24\" text-anchor=\"middle\" "
        << "font-family=\"sans-serif\" font-size=\"15\">" << esc(spec.title) << "</text>\n";

    for (std::size_t i = 0; i < rows; ++i) {
        out << "<text x=\"" << left - 8 << "\" y=\"" << top + cell * (i + 0.5) + 4
            << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"12\">"
            << esc(spec.row_labels[i]) << "</text>\n";
        for (std::size_t j = 0; j < cols; ++j) {
            const double v = spec.values(i, j);
            std::string fill = "#bbbbbb";
            if (std::isfinite(v)) {
                double t = (v - vmin) / (vmax - vmin);
                t = std::clamp(t, 0.0, 1.0);
                if (spec.lower_is_better) t = 1.0 - t;  // light = good
                // dark blue -> pale yellow ramp
                const int r = static_cast<int>(40 + 215 * t);
                const int g = static_cast<int>(45 + 195 * t);
                const int b = static_cast<int>(120 + 60 * (1.0 - t));
                std::ostringstream c;
                c << "rgb(" << r << "," << g << "," << b << ")";
                fill = c.str();
            }
            out << "<rect x=\"" << left + cell * j << "\" y=\"" << top + cell * i
                << "\" width=\"" << cell << "\" height=\"" << cell << "\" fill=\"" << fill
                << "\" stroke=\"white\"/>\n";
            if (std::isfinite(v)) {
                std::ostringstream label;
                label << std::setprecision(3) << v;
                out << "<text x=\"" << left + cell * (j + 0.5) << "\" y=\""
                    << top + cell * (i + 0.5) + 4
                    << "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
                    << "font-size=\"11\">" << label.str() << "</text>\n";
            }
        }
    }
    for (std::size_t j = 0; j < cols; ++j) {
        out << "<text x=\"" << left + cell * (j + 0.5) << "\" y=\"" << top - 8
            << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">"
            << esc(spec.col_labels[j]) << "</text>\n";
    }
    out << "</svg>\n";
    return {vmin, vmax};
}

}  // namespace hetreg

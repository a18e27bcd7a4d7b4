#pragma once

// CSV tables and SVG band plots for error reports.

#include "errors.hpp"
#include "io.hpp"
#include "linalg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace rbrom::report {

/// Shortest text that reads back to the same double; "nan" for NaN.
inline std::string number(double v) {
    if (std::isnan(v)) {
        return "nan";
    }
    char buf[32];
    for (int prec = 15; prec <= 17; ++prec) {
        std::snprintf(buf, sizeof buf, "%.*g", prec, v);
        if (std::strtod(buf, nullptr) == v) {
            break;
        }
    }
    return buf;
}

inline std::string number(const std::optional<double>& v) { return v ? number(*v) : std::string(); }

class CsvWriter {
  public:
    explicit CsvWriter(const std::vector<std::string>& header) { row(header); }

    void row(const std::vector<std::string>& cells) {
        for (std::size_t i = 0; i < cells.size(); ++i) {
            text_ += i == 0 ? "" : ",";
            text_ += cells[i];
        }
        text_ += '\n';
    }

    [[nodiscard]] const std::string& text() const noexcept { return text_; }
    void save(const std::string& path) const { io::write_file(path, text_); }

  private:
    std::string text_;
};

/// time, then one column per parameter; flagged entries are left empty.
inline CsvWriter time_table(const Vector& times, const std::vector<std::vector<std::optional<double>>>& columns) {
    std::vector<std::string> header{"time"};
    for (std::size_t i = 0; i < columns.size(); ++i) {
        header.push_back("param_" + std::to_string(i));
    }
    CsvWriter csv(header);
    for (std::size_t k = 0; k < times.size(); ++k) {
        std::vector<std::string> cells{number(times[k])};
        for (const auto& c : columns) {
            cells.push_back(number(c.at(k)));
        }
        csv.row(cells);
    }
    return csv;
}

struct Series {
    std::string label;
    Vector mean;
    Vector stddev; ///< empty for a plain line
    std::string color;
};

/// Line plot with optional ±1 standard-deviation bands on a log y-axis.
inline std::string svg_plot(const std::string& title, const Vector& times, const std::vector<Series>& series) {
    const double width = 640;
    const double height = 400;
    const double left = 70;
    const double right = 20;
    const double top = 40;
    const double bottom = 50;
    double ymin = std::numeric_limits<double>::infinity();
    double ymax = 0.0;
    for (const auto& s : series) {
        for (std::size_t k = 0; k < s.mean.size(); ++k) {
            const double lo = s.stddev.empty() ? s.mean[k] : s.mean[k] - s.stddev[k];
            const double hi = s.stddev.empty() ? s.mean[k] : s.mean[k] + s.stddev[k];
            if (std::isfinite(hi) && hi > 0.0) {
                ymax = std::max(ymax, hi);
                ymin = std::min(ymin, lo > 0.0 ? lo : s.mean[k]);
            }
        }
    }
    if (!(ymax > 0.0) || !std::isfinite(ymin) || ymin <= 0.0) {
        ymin = 1e-6;
        ymax = 1.0;
    }
    const double l0 = std::floor(std::log10(ymin));
    const double l1 = std::max(std::ceil(std::log10(ymax)), l0 + 1.0);
    const double t0 = times.empty() ? 0.0 : times.front();
    const double t1 = times.empty() || times.back() == t0 ? t0 + 1.0 : times.back();
    auto px = [&](double t) { return left + (t - t0) / (t1 - t0) * (width - left - right); };
    auto py = [&](double y) {
        const double ly = std::log10(std::max(y, std::pow(10.0, l0)));
        return top + (l1 - ly) / (l1 - l0) * (height - top - bottom);
    };
    std::string svg = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + number(width) + "\" height=\"" +
                      number(height) + "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    svg += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    svg += "<text x=\"" + number(width / 2) + "\" y=\"20\" text-anchor=\"middle\">" + title + "</text>\n";
    svg += "<rect x=\"" + number(left) + "\" y=\"" + number(top) + "\" width=\"" + number(width - left - right) +
           "\" height=\"" + number(height - top - bottom) + "\" fill=\"none\" stroke=\"black\"/>\n";
    for (double e = l0; e <= l1; e += 1.0) {
        const double y = py(std::pow(10.0, e));
        svg += "<line x1=\"" + number(left) + "\" x2=\"" + number(width - right) + "\" y1=\"" + number(y) + "\" y2=\"" +
               number(y) + "\" stroke=\"#ddd\"/>\n";
        svg += "<text x=\"" + number(left - 5) + "\" y=\"" + number(y + 4) + "\" text-anchor=\"end\">1e" +
               std::to_string(static_cast<int>(e)) + "</text>\n";
    }
    svg += "<text x=\"" + number(left) + "\" y=\"" + number(height - 20) + "\">t = " + number(t0) + "</text>\n";
    svg += "<text x=\"" + number(width - right) + "\" y=\"" + number(height - 20) + "\" text-anchor=\"end\">t = " +
           number(t1) + "</text>\n";
    double legend_y = top + 15;
    for (const auto& s : series) {
        if (!s.stddev.empty()) {
            std::string upper;
            std::string lower;
            for (std::size_t k = 0; k < s.mean.size(); ++k) {
                if (!std::isfinite(s.mean[k])) {
                    continue;
                }
                upper += number(px(times[k])) + "," + number(py(s.mean[k] + s.stddev[k])) + " ";
            }
            for (std::size_t k = s.mean.size(); k-- > 0;) {
                if (!std::isfinite(s.mean[k])) {
                    continue;
                }
                lower += number(px(times[k])) + "," + number(py(s.mean[k] - s.stddev[k])) + " ";
            }
            svg += "<polygon points=\"" + upper + lower + "\" fill=\"" + s.color + "\" fill-opacity=\"0.2\"/>\n";
        }
        std::string line;
        for (std::size_t k = 0; k < s.mean.size(); ++k) {
            if (std::isfinite(s.mean[k])) {
                line += number(px(times[k])) + "," + number(py(s.mean[k])) + " ";
            }
        }
        svg += "<polyline points=\"" + line + "\" fill=\"none\" stroke=\"" + s.color + "\" stroke-width=\"1.5\"/>\n";
        svg += "<text x=\"" + number(width - right - 10) + "\" y=\"" + number(legend_y) + "\" text-anchor=\"end\" fill=\"" +
               s.color + "\">" + s.label + "</text>\n";
        legend_y += 15;
    }
    svg += "</svg>\n";
    return svg;
}

} // namespace rbrom::report

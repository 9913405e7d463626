#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "gfield/report.hpp"

namespace gfield {

struct Series {
    std::string label;
    std::vector<double> x, y;
};

struct PlotFrame {
    std::string title;
    std::string x_label;
    std::string y_label;
    bool log_x = false;
    bool log_y = false;
    int width = 640;
    int height = 420;
};

namespace detail {

inline std::string xml_escape(const std::string& s)
{
    std::string out;
    for (char c : s) {
        switch (c) {
        case '&': out += "&amp;"; break;
        case '<': out += "&lt;"; break;
        case '>': out += "&gt;"; break;
        case '"': out += "&quot;"; break;
        default: out += c;
        }
    }
    return out;
}

inline std::string num(double v)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

inline std::string svg_open(int w, int h)
{
    return "<?xml version=\"1.0\" encoding=\"UTF-8\" standalone=\"yes\"?>\n"
           "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"" +
           std::to_string(w) + "\" height=\"" + std::to_string(h) + "\" viewBox=\"0 0 " + std::to_string(w) + " " +
           std::to_string(h) + "\" font-family=\"sans-serif\" font-size=\"12\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
}

struct Axis {
    double lo = 0.0, hi = 1.0;
    bool log = false;

    double map(double v) const
    {
        const double a = log ? std::log10(v) : v;
        const double l = log ? std::log10(lo) : lo;
        const double h = log ? std::log10(hi) : hi;
        return h > l ? (a - l) / (h - l) : 0.5;
    }
};

inline Axis fit_axis(const std::vector<double>& vals, bool log, const char* name)
{
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (double v : vals) {
        if (!std::isfinite(v)) continue;
        if (log && !(v > 0.0)) continue;
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    if (!(lo <= hi)) throw std::invalid_argument(std::string("plot: no plottable values on the ") + name + " axis");
    if (lo == hi) {
        const double pad = log ? lo * 0.5 : std::max(1.0, std::abs(lo)) * 0.05;
        lo -= pad;
        hi += pad;
    }
    return {lo, hi, log};
}

inline const char* palette(std::size_t i)
{
    static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"};
    return colors[i % 8];
}

// Five ticks at the axis ends and interior quarters.
inline std::vector<double> ticks(const Axis& a)
{
    std::vector<double> out;
    for (int k = 0; k <= 4; ++k) {
        const double u = k / 4.0;
        out.push_back(a.log ? std::pow(10.0, std::log10(a.lo) + u * (std::log10(a.hi) - std::log10(a.lo)))
                            : a.lo + u * (a.hi - a.lo));
    }
    return out;
}

}  // namespace detail

/// Standalone line plot; non-finite points (and nonpositive ones on log axes)
/// break the polyline.
inline std::string svg_line_plot(const std::vector<Series>& series, const PlotFrame& frame)
{
    if (series.empty()) throw std::invalid_argument("svg_line_plot: no series");
    std::vector<double> xs, ys;
    for (const auto& s : series) {
        if (s.x.size() != s.y.size()) throw std::invalid_argument("svg_line_plot: x and y lengths differ in '" + s.label + "'");
        xs.insert(xs.end(), s.x.begin(), s.x.end());
        ys.insert(ys.end(), s.y.begin(), s.y.end());
    }
    const auto ax = detail::fit_axis(xs, frame.log_x, "x");
    const auto ay = detail::fit_axis(ys, frame.log_y, "y");
    const double left = 70, right = 150, top = 40, bottom = 50;
    const double pw = frame.width - left - right, ph = frame.height - top - bottom;
    auto px = [&](double v) { return left + ax.map(v) * pw; };
    auto py = [&](double v) { return top + (1.0 - ay.map(v)) * ph; };

    std::ostringstream os;
    os << detail::svg_open(frame.width, frame.height);
    os << "<text x=\"" << frame.width / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">"
       << detail::xml_escape(frame.title) << "</text>\n";
    os << "<rect x=\"" << left << "\" y=\"" << top << "\" width=\"" << pw << "\" height=\"" << ph
       << "\" fill=\"none\" stroke=\"black\"/>\n";
    for (double t : detail::ticks(ax)) {
        const double x = px(t);
        os << "<line x1=\"" << detail::num(x) << "\" y1=\"" << top + ph << "\" x2=\"" << detail::num(x) << "\" y2=\""
           << top + ph + 5 << "\" stroke=\"black\"/>\n<text x=\"" << detail::num(x) << "\" y=\"" << top + ph + 18
           << "\" text-anchor=\"middle\">" << detail::num(t) << "</text>\n";
    }
    for (double t : detail::ticks(ay)) {
        const double y = py(t);
        os << "<line x1=\"" << left - 5 << "\" y1=\"" << detail::num(y) << "\" x2=\"" << left << "\" y2=\""
           << detail::num(y) << "\" stroke=\"black\"/>\n<text x=\"" << left - 8 << "\" y=\"" << detail::num(y + 4)
           << "\" text-anchor=\"end\">" << detail::num(t) << "</text>\n";
    }
    os << "<text x=\"" << left + pw / 2 << "\" y=\"" << frame.height - 10 << "\" text-anchor=\"middle\">"
       << detail::xml_escape(frame.x_label) << "</text>\n";
    os << "<text x=\"16\" y=\"" << top + ph / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 "
       << top + ph / 2 << ")\">" << detail::xml_escape(frame.y_label) << "</text>\n";

    for (std::size_t k = 0; k < series.size(); ++k) {
        const auto& s = series[k];
        std::string pts;
        auto flush = [&] {
            if (!pts.empty())
                os << "<polyline fill=\"none\" stroke=\"" << detail::palette(k) << "\" stroke-width=\"1.5\" points=\""
                   << pts << "\"/>\n";
            pts.clear();
        };
        for (std::size_t i = 0; i < s.x.size(); ++i) {
            const bool ok = std::isfinite(s.x[i]) && std::isfinite(s.y[i]) && (!frame.log_x || s.x[i] > 0) &&
                            (!frame.log_y || s.y[i] > 0);
            if (!ok) {
                flush();
                continue;
            }
            pts += (pts.empty() ? "" : " ") + detail::num(px(s.x[i])) + "," + detail::num(py(s.y[i]));
        }
        flush();
        const double ly = top + 10 + 18.0 * static_cast<double>(k);
        os << "<line x1=\"" << left + pw + 10 << "\" y1=\"" << ly << "\" x2=\"" << left + pw + 30 << "\" y2=\"" << ly
           << "\" stroke=\"" << detail::palette(k) << "\" stroke-width=\"2\"/>\n<text x=\"" << left + pw + 35
           << "\" y=\"" << ly + 4 << "\">" << detail::xml_escape(s.label) << "</text>\n";
    }
    os << "</svg>\n";
    return os.str();
}

/// Heat map of a long-form (row, column, value) table on a rectangular
/// grid; rows map to the vertical axis.
inline std::string svg_heat_map(const std::vector<double>& rows, const std::vector<double>& cols,
                                const std::vector<double>& values, const PlotFrame& frame)
{
    if (rows.size() != cols.size() || rows.size() != values.size() || rows.empty())
        throw std::invalid_argument("svg_heat_map: columns must be nonempty and equally long");
    std::map<double, std::size_t> ri, ci;
    for (double r : rows) ri.emplace(r, 0);
    for (double c : cols) ci.emplace(c, 0);
    std::size_t k = 0;
    for (auto& [v, idx] : ri) idx = k++;
    k = 0;
    for (auto& [v, idx] : ci) idx = k++;
    const std::size_t nr = ri.size(), nc = ci.size();
    const auto [vmin_it, vmax_it] = std::minmax_element(values.begin(), values.end());
    const double vmin = *vmin_it, vmax = *vmax_it;
    if (!std::isfinite(vmin) || !std::isfinite(vmax)) throw std::invalid_argument("svg_heat_map: non-finite value");

    const double left = 70, right = 110, top = 40, bottom = 50;
    const double pw = frame.width - left - right, ph = frame.height - top - bottom;
    const double cw = pw / static_cast<double>(nc), rh = ph / static_cast<double>(nr);
    auto color = [&](double v) {
        const double u = vmax > vmin ? (v - vmin) / (vmax - vmin) : 0.5;
        // Blue to white to red.
        const int r = static_cast<int>(std::lround(u < 0.5 ? 255 * 2 * u : 255));
        const int b = static_cast<int>(std::lround(u < 0.5 ? 255 : 255 * 2 * (1 - u)));
        const int g = static_cast<int>(std::lround(255 * (1 - std::abs(2 * u - 1))));
        char buf[8];
        std::snprintf(buf, sizeof buf, "#%02x%02x%02x", r, g, b);
        return std::string(buf);
    };

    std::ostringstream os;
    os << detail::svg_open(frame.width, frame.height);
    os << "<text x=\"" << frame.width / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">"
       << detail::xml_escape(frame.title) << "</text>\n";
    for (std::size_t i = 0; i < values.size(); ++i) {
        const double x = left + cw * static_cast<double>(ci[cols[i]]);
        const double y = top + ph - rh * static_cast<double>(ri[rows[i]] + 1);
        os << "<rect x=\"" << detail::num(x) << "\" y=\"" << detail::num(y) << "\" width=\"" << detail::num(cw + 0.05)
           << "\" height=\"" << detail::num(rh + 0.05) << "\" fill=\"" << color(values[i]) << "\"/>\n";
    }
    os << "<rect x=\"" << left << "\" y=\"" << top << "\" width=\"" << pw << "\" height=\"" << ph
       << "\" fill=\"none\" stroke=\"black\"/>\n";
    os << "<text x=\"" << left << "\" y=\"" << top + ph + 18 << "\">" << detail::num(ci.begin()->first) << "</text>\n";
    os << "<text x=\"" << left + pw << "\" y=\"" << top + ph + 18 << "\" text-anchor=\"end\">"
       << detail::num(ci.rbegin()->first) << "</text>\n";
    os << "<text x=\"" << left - 8 << "\" y=\"" << top + ph << "\" text-anchor=\"end\">" << detail::num(ri.begin()->first)
       << "</text>\n";
    os << "<text x=\"" << left - 8 << "\" y=\"" << top + 10 << "\" text-anchor=\"end\">"
       << detail::num(ri.rbegin()->first) << "</text>\n";
    os << "<text x=\"" << left + pw / 2 << "\" y=\"" << frame.height - 10 << "\" text-anchor=\"middle\">"
       << detail::xml_escape(frame.x_label) << "</text>\n";
    os << "<text x=\"16\" y=\"" << top + ph / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 "
       << top + ph / 2 << ")\">" << detail::xml_escape(frame.y_label) << "</text>\n";
    // Color bar.
    const double bx = left + pw + 20;
    for (int s = 0; s < 50; ++s) {
        const double u = s / 49.0;
        os << "<rect x=\"" << bx << "\" y=\"" << detail::num(top + ph - (s + 1) * ph / 50) << "\" width=\"16\" height=\""
           << detail::num(ph / 50 + 0.05) << "\" fill=\"" << color(vmin + u * (vmax - vmin)) << "\"/>\n";
    }
    os << "<text x=\"" << bx + 20 << "\" y=\"" << top + ph << "\">" << detail::num(vmin) << "</text>\n";
    os << "<text x=\"" << bx + 20 << "\" y=\"" << top + 10 << "\">" << detail::num(vmax) << "</text>\n";
    os << "</svg>\n";
    return os.str();
}

/// Line plot of the named y columns against the x column of a CSV table.
inline std::string svg_from_table(const CsvTable& t, const std::string& x_col, const std::vector<std::string>& y_cols,
                                  PlotFrame frame)
{
    auto index = [&](const std::string& name) {
        const auto& h = t.header();
        const auto it = std::find(h.begin(), h.end(), name);
        if (it == h.end()) throw std::invalid_argument("plot: no column '" + name + "'");
        return static_cast<std::size_t>(it - h.begin());
    };
    const std::size_t xi = index(x_col);
    std::vector<Series> series;
    for (const auto& y : y_cols) {
        const std::size_t yi = index(y);
        Series s{y, {}, {}};
        for (const auto& r : t.rows()) {
            s.x.push_back(r[xi]);
            s.y.push_back(r[yi]);
        }
        series.push_back(std::move(s));
    }
    if (frame.x_label.empty()) frame.x_label = x_col;
    return svg_line_plot(series, frame);
}

}  // namespace gfield

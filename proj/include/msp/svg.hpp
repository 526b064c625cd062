#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <string>
#include <vector>

#include "msp/error.hpp"
#include "msp/matrix.hpp"

namespace msp::svg {

struct Series {
    std::string label;
    std::vector<double> x;
    std::vector<double> y;
};

struct Range {
    double lo = 0.0;
    double hi = 1.0;
};

namespace detail {

inline std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

inline std::string escape(const std::string& s) {
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

inline constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};

inline std::string header(int w, int h) {
    return "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" +
           std::to_string(w) + "\" height=\"" + std::to_string(h) + "\" viewBox=\"0 0 " + std::to_string(w) + " " +
           std::to_string(h) + "\" font-family=\"sans-serif\" font-size=\"11\">\n" +
           "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
}

inline std::string text(double x, double y, const std::string& s, const char* anchor = "middle", double rotate = 0) {
    std::string t = "<text x=\"" + num(x) + "\" y=\"" + num(y) + "\" text-anchor=\"" + anchor + "\"";
    if (rotate != 0) t += " transform=\"rotate(" + num(rotate) + " " + num(x) + " " + num(y) + ")\"";
    return t + ">" + escape(s) + "</text>\n";
}

}  // namespace detail

/// Data extent over all series, padded when degenerate.
inline std::pair<Range, Range> extent(const std::vector<Series>& series, bool log_y) {
    Range x{std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()}, y = x;
    for (const auto& s : series)
        for (std::size_t i = 0; i < s.x.size(); ++i) {
            const double yv = log_y ? std::log10(s.y[i]) : s.y[i];
            if (!std::isfinite(yv) || !std::isfinite(s.x[i])) continue;
            x.lo = std::min(x.lo, s.x[i]), x.hi = std::max(x.hi, s.x[i]);
            y.lo = std::min(y.lo, yv), y.hi = std::max(y.hi, yv);
        }
    const auto fix = [](Range& r) {
        if (!std::isfinite(r.lo)) r = {0.0, 1.0};
        if (r.hi - r.lo < 1e-12) r = {r.lo - 0.5, r.hi + 0.5};
    };
    fix(x), fix(y);
    return {x, y};
}

/// Line chart with axes, ticks at the range ends and quartiles, axis labels
/// and a legend. With log_y, y is plotted as log10 and non-positive points
/// are skipped.
inline std::string line_chart(const std::vector<Series>& series, const std::string& title, const std::string& xlabel,
                              const std::string& ylabel, bool log_y = false) {
    for (const auto& s : series)
        if (s.x.size() != s.y.size()) throw DimensionError("line_chart: series \"" + s.label + "\" x/y lengths differ");
    const int W = 640, H = 420, L = 80, R = 20, T = 40, B = 60;
    const double pw = W - L - R, ph = H - T - B;
    const auto [xr, yr] = extent(series, log_y);
    const auto px = [&](double v) { return L + (v - xr.lo) / (xr.hi - xr.lo) * pw; };
    const auto py = [&](double v) { return T + ph - (v - yr.lo) / (yr.hi - yr.lo) * ph; };

    std::string out = detail::header(W, H);
    out += detail::text(W / 2.0, 22, title);
    out += "<rect x=\"" + detail::num(L) + "\" y=\"" + detail::num(T) + "\" width=\"" + detail::num(pw) +
           "\" height=\"" + detail::num(ph) + "\" fill=\"none\" stroke=\"black\"/>\n";
    for (int i = 0; i <= 4; ++i) {
        const double fx = xr.lo + (xr.hi - xr.lo) * i / 4.0, fy = yr.lo + (yr.hi - yr.lo) * i / 4.0;
        out += "<line x1=\"" + detail::num(px(fx)) + "\" y1=\"" + detail::num(T + ph) + "\" x2=\"" +
               detail::num(px(fx)) + "\" y2=\"" + detail::num(T + ph + 5) + "\" stroke=\"black\"/>\n";
        out += detail::text(px(fx), T + ph + 18, detail::num(fx));
        out += "<line x1=\"" + detail::num(L - 5) + "\" y1=\"" + detail::num(py(fy)) + "\" x2=\"" + detail::num(L) +
               "\" y2=\"" + detail::num(py(fy)) + "\" stroke=\"black\"/>\n";
        out += detail::text(L - 8, py(fy) + 4, log_y ? "1e" + detail::num(fy) : detail::num(fy), "end");
    }
    out += detail::text(L + pw / 2, H - 15, xlabel);
    out += detail::text(18, T + ph / 2, ylabel, "middle", -90);
    for (std::size_t k = 0; k < series.size(); ++k) {
        const char* color = detail::kPalette[k % std::size(detail::kPalette)];
        std::string pts;
        for (std::size_t i = 0; i < series[k].x.size(); ++i) {
            const double yv = log_y ? std::log10(series[k].y[i]) : series[k].y[i];
            if (!std::isfinite(yv)) continue;
            pts += detail::num(px(series[k].x[i])) + "," + detail::num(py(yv)) + " ";
        }
        out += "<polyline fill=\"none\" stroke=\"" + std::string(color) + "\" stroke-width=\"1.5\" points=\"" + pts +
               "\"/>\n";
        out += "<text x=\"" + detail::num(L + pw - 10) + "\" y=\"" + detail::num(T + 16 + 14 * k) +
               "\" text-anchor=\"end\" fill=\"" + color + "\">" + detail::escape(series[k].label) + "</text>\n";
    }
    return out + "</svg>\n";
}

/// Grayscale heatmap, darker = larger, with row/column indices and the
/// value range in the caption.
inline std::string heatmap(const Matrix& m, const std::string& title) {
    const int cell = 32, L = 40, T = 50;
    const int W = L + cell * static_cast<int>(m.cols()) + 20, H = T + cell * static_cast<int>(m.rows()) + 50;
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (double v : m.data()) lo = std::min(lo, v), hi = std::max(hi, v);
    if (m.size() == 0) lo = hi = 0.0;
    const double span = hi - lo > 0 ? hi - lo : 1.0;

    std::string out = detail::header(W, H);
    out += detail::text(W / 2.0, 22, title);
    for (std::size_t i = 0; i < m.rows(); ++i) {
        out += detail::text(L - 8, T + cell * (i + 0.5) + 4, std::to_string(i), "end");
        for (std::size_t j = 0; j < m.cols(); ++j) {
            const int g = static_cast<int>(std::lround(255.0 * (1.0 - (m(i, j) - lo) / span)));
            char fill[8];
            std::snprintf(fill, sizeof fill, "#%02x%02x%02x", g, g, g);
            out += "<rect x=\"" + std::to_string(L + cell * j) + "\" y=\"" + std::to_string(T + cell * i) +
                   "\" width=\"" + std::to_string(cell) + "\" height=\"" + std::to_string(cell) + "\" fill=\"" + fill +
                   "\" stroke=\"#cccccc\"><title>" + detail::num(m(i, j)) + "</title></rect>\n";
        }
    }
    for (std::size_t j = 0; j < m.cols(); ++j) out += detail::text(L + cell * (j + 0.5), T - 6, std::to_string(j));
    out += detail::text(W / 2.0, H - 18, "range [" + detail::num(lo) + ", " + detail::num(hi) + "]");
    return out + "</svg>\n";
}

}  // namespace msp::svg

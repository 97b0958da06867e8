#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "tsad/error.hpp"
#include "tsad/format.hpp"

namespace tsad {

// Minimal deterministic SVG writer: fixed canvas, two-decimal coordinates,
// elements emitted in data order. These are data-equivalent renderings of
// the report CSVs, not publication graphics.
class SvgCanvas {
public:
    SvgCanvas(double width, double height) : width_(width), height_(height) {
        body_ << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\""
              << format_fixed(width, 0) << "\" height=\""
              << format_fixed(height, 0) << "\" viewBox=\"0 0 "
              << format_fixed(width, 0) << ' ' << format_fixed(height, 0)
              << "\">\n";
        body_ << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    }

    void line(double x1, double y1, double x2, double y2,
              const std::string& stroke, double width = 1.0) {
        body_ << "<line x1=\"" << c(x1) << "\" y1=\"" << c(y1) << "\" x2=\""
              << c(x2) << "\" y2=\"" << c(y2) << "\" stroke=\"" << stroke
              << "\" stroke-width=\"" << c(width) << "\"/>\n";
    }

    void rect(double x, double y, double w, double h, const std::string& fill) {
        body_ << "<rect x=\"" << c(x) << "\" y=\"" << c(y) << "\" width=\""
              << c(w) << "\" height=\"" << c(h) << "\" fill=\"" << fill
              << "\"/>\n";
    }

    void circle(double x, double y, double r, const std::string& fill) {
        body_ << "<circle cx=\"" << c(x) << "\" cy=\"" << c(y) << "\" r=\""
              << c(r) << "\" fill=\"" << fill << "\"/>\n";
    }

    void polyline(const std::vector<std::pair<double, double>>& points,
                  const std::string& stroke) {
        if (points.empty()) return;
        body_ << "<polyline fill=\"none\" stroke=\"" << stroke
              << "\" stroke-width=\"1\" points=\"";
        for (std::size_t k = 0; k < points.size(); ++k) {
            if (k) body_ << ' ';
            body_ << c(points[k].first) << ',' << c(points[k].second);
        }
        body_ << "\"/>\n";
    }

    void text(double x, double y, const std::string& s, int size = 11) {
        body_ << "<text x=\"" << c(x) << "\" y=\"" << c(y)
              << "\" font-family=\"monospace\" font-size=\"" << size << "\">"
              << s << "</text>\n";
    }

    void save(const std::string& path) {
        std::ofstream out(path);
        if (!out) fail("io", "cannot write " + path);
        out << body_.str() << "</svg>\n";
    }

    double width() const { return width_; }
    double height() const { return height_; }

private:
    static std::string c(double v) { return format_fixed(v, 2); }

    double width_;
    double height_;
    std::ostringstream body_;
};

namespace plotdata {

struct ThresholdRow {
    std::string node_id;
    double threshold = 0.0;
    double val_f1 = 0.0;
};

struct DegreeRow {
    std::string node_id;
    std::size_t degree = 0;
    double f1_a = 0.0;
    double f1_b = 0.0;
    double delta_f1 = 0.0;
};

struct CountRow {
    std::string node_id;
    std::size_t train = 0;
    std::size_t val = 0;
    std::size_t test = 0;
};

struct ForecastRow {
    std::int64_t t = 0;
    double actual = 0.0;
    double forecast = 0.0;
    bool flagged = false;
    bool labeled = false;
};

} // namespace plotdata

// Standard frame: axes along the left and bottom margins plus a title.
inline void draw_frame(SvgCanvas& svg, const std::string& title) {
    svg.line(50, svg.height() - 40, svg.width() - 20, svg.height() - 40, "black");
    svg.line(50, 20, 50, svg.height() - 40, "black");
    svg.text(55, 16, title);
}

// Per-node bars: best validation F1 (top half scale) with the tuned
// threshold drawn as a second bar normalized by the maximum threshold.
inline void plot_threshold_tuning(const std::vector<plotdata::ThresholdRow>& rows,
                                  const std::string& path) {
    SvgCanvas svg(800, 400);
    draw_frame(svg, "threshold tuning: best validation F1 (blue) and tau (gray)");
    const double base = svg.height() - 40;
    const double span = base - 30;
    double tau_max = 0.0;
    for (const auto& r : rows) tau_max = std::max(tau_max, r.threshold);
    if (tau_max <= 0.0) tau_max = 1.0;
    const double slot = (svg.width() - 80) / std::max<std::size_t>(rows.size(), 1);
    for (std::size_t k = 0; k < rows.size(); ++k) {
        const double x = 55 + static_cast<double>(k) * slot;
        const double f1_h = rows[k].val_f1 * span;
        const double tau_h = rows[k].threshold / tau_max * span;
        svg.rect(x, base - f1_h, slot * 0.35, f1_h, "steelblue");
        svg.rect(x + slot * 0.4, base - tau_h, slot * 0.35, tau_h, "gray");
        if (rows.size() <= 40) svg.text(x, base + 14, rows[k].node_id, 9);
    }
    svg.save(path);
}

// Scatter of per-node F1 improvement against node degree.
inline void plot_f1_vs_degree(const std::vector<plotdata::DegreeRow>& rows,
                              const std::string& path) {
    SvgCanvas svg(800, 400);
    draw_frame(svg, "F1 improvement vs node degree");
    std::size_t deg_max = 1;
    double d_abs = 0.05;
    for (const auto& r : rows) {
        deg_max = std::max(deg_max, r.degree);
        d_abs = std::max(d_abs, std::fabs(r.delta_f1));
    }
    const double base = svg.height() - 40;
    const double mid = (base + 20) / 2.0 + 10;
    svg.line(50, mid, svg.width() - 20, mid, "lightgray");
    svg.text(svg.width() - 90, mid - 4, "delta=0", 9);
    for (const auto& r : rows) {
        const double x =
            55 + (svg.width() - 90) * static_cast<double>(r.degree) /
                     static_cast<double>(deg_max);
        const double y = mid - (r.delta_f1 / d_abs) * (mid - 30);
        svg.circle(x, y, 4, r.delta_f1 >= 0 ? "steelblue" : "indianred");
    }
    svg.save(path);
}

// Grouped per-node bars of labeled anomaly counts in train/val/test.
inline void plot_anomaly_counts(const std::vector<plotdata::CountRow>& rows,
                                const std::string& path) {
    SvgCanvas svg(800, 400);
    draw_frame(svg, "per-node anomaly counts: train (gray), val (orange), test (red)");
    std::size_t count_max = 1;
    for (const auto& r : rows)
        count_max = std::max({count_max, r.train, r.val, r.test});
    const double base = svg.height() - 40;
    const double span = base - 30;
    const double slot = (svg.width() - 80) / std::max<std::size_t>(rows.size(), 1);
    for (std::size_t k = 0; k < rows.size(); ++k) {
        const double x = 55 + static_cast<double>(k) * slot;
        auto bar = [&](double off, std::size_t count, const char* color) {
            const double h =
                span * static_cast<double>(count) / static_cast<double>(count_max);
            svg.rect(x + off, base - h, slot * 0.25, h, color);
        };
        bar(0.0, rows[k].train, "gray");
        bar(slot * 0.3, rows[k].val, "orange");
        bar(slot * 0.6, rows[k].test, "indianred");
        if (rows.size() <= 40) svg.text(x, base + 14, rows[k].node_id, 9);
    }
    svg.save(path);
}

// Actual vs forecast over the test range for one node, with flagged steps
// and true labels marked.
inline void plot_forecast_vs_actual(const std::vector<plotdata::ForecastRow>& rows,
                                    const std::string& node_id,
                                    const std::string& path) {
    SvgCanvas svg(900, 400);
    draw_frame(svg, "forecast (blue) vs actual (black), node " + node_id +
                        "; flags x, labels o");
    if (rows.empty()) {
        svg.save(path);
        return;
    }
    double lo = rows[0].actual, hi = rows[0].actual;
    for (const auto& r : rows) {
        lo = std::min({lo, r.actual, r.forecast});
        hi = std::max({hi, r.actual, r.forecast});
    }
    if (hi <= lo) hi = lo + 1.0;
    const double base = svg.height() - 40;
    const double span = base - 40;
    auto ypos = [&](double v) { return base - (v - lo) / (hi - lo) * span; };
    auto xpos = [&](std::size_t k) {
        return 55 + (svg.width() - 90) * static_cast<double>(k) /
                        static_cast<double>(std::max<std::size_t>(rows.size() - 1, 1));
    };
    std::vector<std::pair<double, double>> actual, forecast;
    for (std::size_t k = 0; k < rows.size(); ++k) {
        actual.emplace_back(xpos(k), ypos(rows[k].actual));
        forecast.emplace_back(xpos(k), ypos(rows[k].forecast));
    }
    svg.polyline(actual, "black");
    svg.polyline(forecast, "steelblue");
    for (std::size_t k = 0; k < rows.size(); ++k) {
        if (rows[k].labeled)
            svg.circle(xpos(k), ypos(rows[k].actual), 5, "orange");
        if (rows[k].flagged) {
            const double x = xpos(k), y = ypos(rows[k].actual);
            svg.line(x - 4, y - 4, x + 4, y + 4, "red");
            svg.line(x - 4, y + 4, x + 4, y - 4, "red");
        }
    }
    svg.save(path);
}

} // namespace tsad

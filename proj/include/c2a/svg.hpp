#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

namespace c2a {

// Standalone SVG line charts: axes, ticks, polyline per series, legend.
// No external renderer; numbers formatted with fixed printf so output is
// byte-stable.
struct SvgLineChart {
    std::string title, x_label, y_label;
    int width = 640, height = 400;

    struct Series {
        std::string name;
        std::vector<double> xs, ys;
    };
    std::vector<Series> series;

    void add_series(std::string name, std::vector<double> xs, std::vector<double> ys) {
        series.push_back({std::move(name), std::move(xs), std::move(ys)});
    }

    static std::string fmt(double v) {
        char buf[64];
        std::snprintf(buf, sizeof(buf), "%.6g", v);
        return buf;
    }

    // Negative offsets emit a root element; otherwise a nested chart at (x, y).
    std::string render(int x_at = -1, int y_at = -1) const {
        const double ml = 62, mr = 16, mt = 34, mb = 46;
        const double pw = width - ml - mr, ph = height - mt - mb;
        double x_min = 0, x_max = 1, y_min = 0, y_max = 1;
        bool any = false;
        for (const auto& s : series)
            for (std::size_t i = 0; i < s.xs.size(); ++i) {
                if (!any) {
                    x_min = x_max = s.xs[i];
                    y_min = y_max = s.ys[i];
                    any = true;
                } else {
                    x_min = std::min(x_min, s.xs[i]);
                    x_max = std::max(x_max, s.xs[i]);
                    y_min = std::min(y_min, s.ys[i]);
                    y_max = std::max(y_max, s.ys[i]);
                }
            }
        if (x_max == x_min) x_max = x_min + 1;
        if (y_max == y_min) y_max = y_min + 1;
        const double y_pad = 0.05 * (y_max - y_min);
        y_min -= y_pad;
        y_max += y_pad;

        auto px = [&](double x) { return ml + pw * (x - x_min) / (x_max - x_min); };
        auto py = [&](double y) { return mt + ph * (1.0 - (y - y_min) / (y_max - y_min)); };

        static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                        "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"};
        std::string out;
        out += "<svg xmlns=\"http://www.w3.org/2000/svg\"";
        if (x_at >= 0) out += " x=\"" + std::to_string(x_at) + "\" y=\"" + std::to_string(y_at) + "\"";
        out += " width=\"" + std::to_string(width) + "\" height=\"" + std::to_string(height) +
               "\" viewBox=\"0 0 " + std::to_string(width) + " " + std::to_string(height) + "\">\n";
        out += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
        out += "<text x=\"" + fmt(width / 2.0) +
               "\" y=\"20\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"14\">" +
               title + "</text>\n";

        // axes
        out += "<line x1=\"" + fmt(ml) + "\" y1=\"" + fmt(mt) + "\" x2=\"" + fmt(ml) +
               "\" y2=\"" + fmt(mt + ph) + "\" stroke=\"black\"/>\n";
        out += "<line x1=\"" + fmt(ml) + "\" y1=\"" + fmt(mt + ph) + "\" x2=\"" + fmt(ml + pw) +
               "\" y2=\"" + fmt(mt + ph) + "\" stroke=\"black\"/>\n";
        for (int t = 0; t <= 4; ++t) {
            const double fx = x_min + (x_max - x_min) * t / 4.0;
            const double fy = y_min + (y_max - y_min) * t / 4.0;
            out += "<text x=\"" + fmt(px(fx)) + "\" y=\"" + fmt(mt + ph + 16) +
                   "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"10\">" +
                   fmt(fx) + "</text>\n";
            out += "<text x=\"" + fmt(ml - 6) + "\" y=\"" + fmt(py(fy) + 3) +
                   "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"10\">" +
                   fmt(fy) + "</text>\n";
            out += "<line x1=\"" + fmt(ml) + "\" y1=\"" + fmt(py(fy)) + "\" x2=\"" + fmt(ml + pw) +
                   "\" y2=\"" + fmt(py(fy)) + "\" stroke=\"#dddddd\" stroke-width=\"0.5\"/>\n";
        }
        out += "<text x=\"" + fmt(ml + pw / 2) + "\" y=\"" + fmt(height - 8.0) +
               "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">" + x_label +
               "</text>\n";
        out += "<text x=\"14\" y=\"" + fmt(mt + ph / 2) +
               "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\" "
               "transform=\"rotate(-90 14 " +
               fmt(mt + ph / 2) + ")\">" + y_label + "</text>\n";

        for (std::size_t si = 0; si < series.size(); ++si) {
            const auto& s = series[si];
            const char* color = palette[si % 8];
            std::string points;
            for (std::size_t i = 0; i < s.xs.size(); ++i) {
                if (i) points += " ";
                points += fmt(px(s.xs[i])) + "," + fmt(py(s.ys[i]));
            }
            out += "<polyline fill=\"none\" stroke=\"" + std::string(color) +
                   "\" stroke-width=\"1.5\" points=\"" + points + "\"/>\n";
            const double ly = mt + 14.0 * static_cast<double>(si);
            out += "<line x1=\"" + fmt(ml + pw - 110) + "\" y1=\"" + fmt(ly) + "\" x2=\"" +
                   fmt(ml + pw - 94) + "\" y2=\"" + fmt(ly) + "\" stroke=\"" + color +
                   "\" stroke-width=\"2\"/>\n";
            out += "<text x=\"" + fmt(ml + pw - 90) + "\" y=\"" + fmt(ly + 3) +
                   "\" font-family=\"sans-serif\" font-size=\"10\">" + s.name + "</text>\n";
        }
        out += "</svg>\n";
        return out;
    }
};

}  // namespace c2a

#pragma once

#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "xpertai/common.hpp"

namespace xpertai {

// Minimal SVG line-chart writer for curve exports. One polyline per series,
// x-axis is the point index normalized to [0,1].
struct SvgSeries {
    std::string label;
    std::string color = "#1f77b4";
    Vec values;
};

inline void save_svg_lines(const std::vector<SvgSeries>& series, const std::string& title,
                           const std::string& path) {
    if (series.empty()) throw ConfigError("save_svg_lines: no series");
    const double width = 640.0, height = 400.0, margin = 45.0;
    double lo = series[0].values.empty() ? 0.0 : series[0].values[0];
    double hi = lo;
    for (const auto& s : series)
        for (double v : s.values) {
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
    if (hi == lo) hi = lo + 1.0;
    std::ofstream f(path);
    if (!f) throw ParseError("cannot open '" + path + "' for writing");
    f << std::setprecision(6);
    f << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\">\n";
    f << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    f << "<text x=\"" << width / 2 << "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">"
      << title << "</text>\n";
    f << "<line x1=\"" << margin << "\" y1=\"" << height - margin << "\" x2=\"" << width - margin
      << "\" y2=\"" << height - margin << "\" stroke=\"black\"/>\n";
    f << "<line x1=\"" << margin << "\" y1=\"" << margin << "\" x2=\"" << margin << "\" y2=\""
      << height - margin << "\" stroke=\"black\"/>\n";
    double legend_y = margin;
    for (const auto& s : series) {
        if (s.values.size() < 2) continue;
        f << "<polyline fill=\"none\" stroke=\"" << s.color << "\" stroke-width=\"1.5\" points=\"";
        for (std::size_t i = 0; i < s.values.size(); ++i) {
            double px = margin + (width - 2 * margin) * static_cast<double>(i) /
                                     static_cast<double>(s.values.size() - 1);
            double py = height - margin - (height - 2 * margin) * (s.values[i] - lo) / (hi - lo);
            f << px << "," << py << " ";
        }
        f << "\"/>\n";
        f << "<text x=\"" << width - margin - 150 << "\" y=\"" << legend_y
          << "\" font-size=\"12\" fill=\"" << s.color << "\">" << s.label << "</text>\n";
        legend_y += 16.0;
    }
    f << "</svg>\n";
}

}  // namespace xpertai

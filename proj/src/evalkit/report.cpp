#include "evalkit/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "util/errors.hpp"

namespace coseq::evalkit {

std::string format_cell(double v) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    return buf;
}

void write_csv(const std::string& path, const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("write_csv: cannot open " + path);
    for (size_t i = 0; i < header.size(); ++i) {
        if (i) f << ",";
        f << header[i];
    }
    f << "\n";
    for (const auto& row : rows) {
        for (size_t i = 0; i < row.size(); ++i) {
            if (i) f << ",";
            f << row[i];
        }
        f << "\n";
    }
}

static std::string esc(const std::string& s) {
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

void write_scatter_svg(const std::string& path, const std::string& title,
                       const std::string& x_label, const std::string& y_label,
                       const std::vector<ScatterPoint>& points) {
    double xmin = 0.0, xmax = 1.0, ymin = 0.0, ymax = 1.0;
    if (!points.empty()) {
        xmin = xmax = points[0].x;
        ymin = ymax = points[0].y;
        for (const auto& p : points) {
            xmin = std::min(xmin, p.x);
            xmax = std::max(xmax, p.x);
            ymin = std::min(ymin, p.y);
            ymax = std::max(ymax, p.y);
        }
    }
    double xpad = std::max(1e-9, (xmax - xmin) * 0.1 + 1e-3);
    double ypad = std::max(1e-9, (ymax - ymin) * 0.1 + 1e-3);
    xmin -= xpad;
    xmax += xpad;
    ymin -= ypad;
    ymax += ypad;
    const int W = 480, H = 360, M = 48;
    auto sx = [&](double x) { return M + (x - xmin) / (xmax - xmin) * (W - 2 * M); };
    auto sy = [&](double y) { return H - M - (y - ymin) / (ymax - ymin) * (H - 2 * M); };

    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("write_scatter_svg: cannot open " + path);
    f << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
    f << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
      << "\">\n";
    f << "<rect width=\"" << W << "\" height=\"" << H << "\" fill=\"white\"/>\n";
    f << "<text x=\"" << W / 2 << "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">"
      << esc(title) << "</text>\n";
    f << "<line x1=\"" << M << "\" y1=\"" << H - M << "\" x2=\"" << W - M << "\" y2=\""
      << H - M << "\" stroke=\"black\"/>\n";
    f << "<line x1=\"" << M << "\" y1=\"" << M << "\" x2=\"" << M << "\" y2=\"" << H - M
      << "\" stroke=\"black\"/>\n";
    f << "<text x=\"" << W / 2 << "\" y=\"" << H - 10
      << "\" text-anchor=\"middle\" font-size=\"12\">" << esc(x_label) << "</text>\n";
    f << "<text x=\"14\" y=\"" << H / 2 << "\" text-anchor=\"middle\" font-size=\"12\" "
      << "transform=\"rotate(-90 14 " << H / 2 << ")\">" << esc(y_label) << "</text>\n";
    for (const auto& p : points) {
        f << "<circle cx=\"" << format_cell(sx(p.x)) << "\" cy=\"" << format_cell(sy(p.y))
          << "\" r=\"4\" fill=\"steelblue\"/>\n";
        f << "<text x=\"" << format_cell(sx(p.x) + 6) << "\" y=\""
          << format_cell(sy(p.y) - 6) << "\" font-size=\"10\">" << esc(p.label)
          << "</text>\n";
    }
    f << "</svg>\n";
}

void write_bars_svg(const std::string& path, const std::string& title,
                    const std::vector<Bar>& bars) {
    const int W = 480, H = 320, M = 48;
    double vmax = 1e-9;
    for (const auto& b : bars) vmax = std::max(vmax, b.value);
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("write_bars_svg: cannot open " + path);
    f << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
    f << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
      << "\">\n";
    f << "<rect width=\"" << W << "\" height=\"" << H << "\" fill=\"white\"/>\n";
    f << "<text x=\"" << W / 2 << "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">"
      << esc(title) << "</text>\n";
    f << "<line x1=\"" << M << "\" y1=\"" << H - M << "\" x2=\"" << W - M << "\" y2=\""
      << H - M << "\" stroke=\"black\"/>\n";
    int n = static_cast<int>(bars.size());
    if (n > 0) {
        double bw = static_cast<double>(W - 2 * M) / n;
        for (int i = 0; i < n; ++i) {
            double h = bars[static_cast<size_t>(i)].value / vmax * (H - 2 * M - 20);
            double x = M + i * bw + bw * 0.15;
            double y = H - M - h;
            f << "<rect x=\"" << format_cell(x) << "\" y=\"" << format_cell(y)
              << "\" width=\"" << format_cell(bw * 0.7) << "\" height=\""
              << format_cell(h) << "\" fill=\"steelblue\"/>\n";
            f << "<text x=\"" << format_cell(M + i * bw + bw * 0.5) << "\" y=\"" << H - M + 14
              << "\" text-anchor=\"middle\" font-size=\"10\">"
              << esc(bars[static_cast<size_t>(i)].label) << "</text>\n";
            f << "<text x=\"" << format_cell(M + i * bw + bw * 0.5) << "\" y=\""
              << format_cell(y - 4) << "\" text-anchor=\"middle\" font-size=\"10\">"
              << format_cell(bars[static_cast<size_t>(i)].value) << "</text>\n";
        }
    }
    f << "</svg>\n";
}

}  // namespace coseq::evalkit

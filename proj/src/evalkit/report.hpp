#pragma once

#include <string>
#include <vector>

namespace coseq::evalkit {

/// Fixed "%.6f" cell formatting so regenerated reports are byte-identical.
std::string format_cell(double v);

void write_csv(const std::string& path, const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows);

struct ScatterPoint {
    double x = 0.0;
    double y = 0.0;
    std::string label;
};

/// Minimal SVG scatter plot (well-formed XML, deterministic bytes).
void write_scatter_svg(const std::string& path, const std::string& title,
                       const std::string& x_label, const std::string& y_label,
                       const std::vector<ScatterPoint>& points);

struct Bar {
    std::string label;
    double value = 0.0;
};

void write_bars_svg(const std::string& path, const std::string& title,
                    const std::vector<Bar>& bars);

}  // namespace coseq::evalkit

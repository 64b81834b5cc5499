#pragma once

#include <string>
#include <vector>

namespace topdown {

// Binary PGM (P5, maxval 255). Values are clamped from [0,1].
void write_pgm(const std::string& path, const std::vector<double>& values01, int h, int w);
std::vector<unsigned char> read_pgm(const std::string& path, int& h, int& w);

// Minimal self-contained SVG line plot for curve CSVs.
struct PlotSeries {
    std::string label;
    std::vector<std::pair<double, double>> points;
};
void write_svg_plot(const std::string& path, const std::vector<PlotSeries>& series,
                    const std::string& title, const std::string& x_label,
                    const std::string& y_label);

}  // namespace topdown

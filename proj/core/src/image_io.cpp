#include "topdown/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "topdown/csvio.hpp"

namespace topdown {

void write_pgm(const std::string& path, const std::vector<double>& values01, int h, int w) {
    if (static_cast<size_t>(h) * static_cast<size_t>(w) != values01.size())
        throw std::invalid_argument("PGM extent " + std::to_string(h) + "x" + std::to_string(w) +
                                    " does not match " + std::to_string(values01.size()) +
                                    " values");
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write '" + path + "'");
    out << "P5\n" << w << " " << h << "\n255\n";
    for (double v : values01) {
        const double c = std::min(1.0, std::max(0.0, v));
        out.put(static_cast<char>(static_cast<unsigned char>(std::lround(c * 255.0))));
    }
    if (!out) throw std::runtime_error("write to '" + path + "' failed");
}

std::vector<unsigned char> read_pgm(const std::string& path, int& h, int& w) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open '" + path + "'");
    std::string magic;
    int maxval = 0;
    in >> magic >> w >> h >> maxval;
    if (magic != "P5" || maxval != 255)
        throw std::runtime_error("'" + path + "' is not a maxval-255 P5 PGM");
    in.get();  // single whitespace after the header
    std::vector<unsigned char> data(static_cast<size_t>(h) * static_cast<size_t>(w));
    in.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(data.size()));
    if (!in) throw std::runtime_error("'" + path + "': truncated pixel data");
    return data;
}

void write_svg_plot(const std::string& path, const std::vector<PlotSeries>& series,
                    const std::string& title, const std::string& x_label,
                    const std::string& y_label) {
    double xmin = 0, xmax = 1, ymin = 0, ymax = 1;
    bool any = false;
    for (const auto& s : series)
        for (const auto& [x, y] : s.points) {
            if (!any) {
                xmin = xmax = x;
                ymin = ymax = y;
                any = true;
            }
            xmin = std::min(xmin, x);
            xmax = std::max(xmax, x);
            ymin = std::min(ymin, y);
            ymax = std::max(ymax, y);
        }
    if (xmax == xmin) xmax = xmin + 1;
    if (ymax == ymin) ymax = ymin + 1;

    const int W = 640, H = 420, ml = 60, mr = 20, mt = 40, mb = 50;
    auto px = [&](double x) { return ml + (x - xmin) / (xmax - xmin) * (W - ml - mr); };
    auto py = [&](double y) { return H - mb - (y - ymin) / (ymax - ymin) * (H - mt - mb); };
    static const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e",
                                    "#8c564b"};

    std::ostringstream svg;
    svg << "<svg xmlns='http://www.w3.org/2000/svg' width='" << W << "' height='" << H << "'>\n";
    svg << "<rect width='100%' height='100%' fill='white'/>\n";
    svg << "<text x='" << W / 2 << "' y='24' text-anchor='middle' font-size='16'>" << title
        << "</text>\n";
    svg << "<line x1='" << ml << "' y1='" << H - mb << "' x2='" << W - mr << "' y2='" << H - mb
        << "' stroke='black'/>\n";
    svg << "<line x1='" << ml << "' y1='" << mt << "' x2='" << ml << "' y2='" << H - mb
        << "' stroke='black'/>\n";
    svg << "<text x='" << (ml + W - mr) / 2 << "' y='" << H - 12
        << "' text-anchor='middle' font-size='12'>" << x_label << "</text>\n";
    svg << "<text x='16' y='" << (mt + H - mb) / 2 << "' text-anchor='middle' font-size='12' "
        << "transform='rotate(-90 16 " << (mt + H - mb) / 2 << ")'>" << y_label << "</text>\n";
    for (int i = 0; i <= 4; ++i) {
        const double fx = xmin + (xmax - xmin) * i / 4.0;
        const double fy = ymin + (ymax - ymin) * i / 4.0;
        svg << "<text x='" << px(fx) << "' y='" << H - mb + 16
            << "' text-anchor='middle' font-size='10'>" << CsvWriter::num(fx, 4) << "</text>\n";
        svg << "<text x='" << ml - 6 << "' y='" << py(fy) + 4
            << "' text-anchor='end' font-size='10'>" << CsvWriter::num(fy, 4) << "</text>\n";
    }
    for (size_t s = 0; s < series.size(); ++s) {
        const char* color = kColors[s % 6];
        svg << "<polyline fill='none' stroke='" << color << "' stroke-width='1.5' points='";
        for (const auto& [x, y] : series[s].points) svg << px(x) << "," << py(y) << " ";
        svg << "'/>\n";
        svg << "<text x='" << W - mr - 6 << "' y='" << mt + 16 * (s + 1)
            << "' text-anchor='end' font-size='12' fill='" << color << "'>" << series[s].label
            << "</text>\n";
    }
    svg << "</svg>\n";

    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write '" + path + "'");
    out << svg.str();
    if (!out) throw std::runtime_error("write to '" + path + "' failed");
}

}  // namespace topdown

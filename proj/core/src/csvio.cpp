#include "topdown/csvio.hpp"

#include <cstdio>
#include <sstream>
#include <stdexcept>

namespace topdown {

namespace {

void check_cell(const std::string& cell, const std::string& path) {
    if (cell.find(',') != std::string::npos || cell.find('\n') != std::string::npos)
        throw std::invalid_argument("CSV cell with comma/newline writing '" + path + "': " + cell);
}

std::vector<std::string> split_commas(const std::string& line) {
    std::vector<std::string> out;
    size_t start = 0;
    while (true) {
        const size_t at = line.find(',', start);
        if (at == std::string::npos) {
            out.push_back(line.substr(start));
            break;
        }
        out.push_back(line.substr(start, at - start));
        start = at + 1;
    }
    return out;
}

}  // namespace

CsvWriter::CsvWriter(const std::string& path, const std::string& schema, int version,
                     const std::vector<std::string>& columns)
    : out_(path, std::ios::trunc), path_(path), columns_(columns.size()) {
    if (!out_) throw std::runtime_error("cannot write '" + path + "'");
    out_ << "# schema: " << schema << " v" << version << "\n";
    for (size_t i = 0; i < columns.size(); ++i) {
        check_cell(columns[i], path_);
        out_ << columns[i] << (i + 1 < columns.size() ? "," : "\n");
    }
}

void CsvWriter::row(const std::vector<std::string>& cells) {
    if (cells.size() != columns_)
        throw std::invalid_argument("row with " + std::to_string(cells.size()) +
                                    " cells in a " + std::to_string(columns_) + "-column CSV ('" +
                                    path_ + "')");
    for (size_t i = 0; i < cells.size(); ++i) {
        check_cell(cells[i], path_);
        out_ << cells[i] << (i + 1 < cells.size() ? "," : "\n");
    }
    if (!out_) throw std::runtime_error("write to '" + path_ + "' failed");
}

std::string CsvWriter::num(double v) { return num(v, 9); }

std::string CsvWriter::num(double v, int precision) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*g", precision, v);
    return buf;
}

CsvContent read_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open '" + path + "'");
    CsvContent c;
    std::string line;
    if (!std::getline(in, line) || line.rfind("# schema: ", 0) != 0)
        throw std::runtime_error("'" + path + "': missing '# schema:' banner");
    {
        std::istringstream banner(line.substr(10));
        std::string vtok;
        banner >> c.schema >> vtok;
        if (vtok.size() < 2 || vtok[0] != 'v')
            throw std::runtime_error("'" + path + "': malformed schema version '" + vtok + "'");
        c.version = std::stoi(vtok.substr(1));
    }
    if (!std::getline(in, line)) throw std::runtime_error("'" + path + "': missing header row");
    c.columns = split_commas(line);
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto cells = split_commas(line);
        if (cells.size() != c.columns.size())
            throw std::runtime_error("'" + path + "': row width " + std::to_string(cells.size()) +
                                     " != header width " + std::to_string(c.columns.size()));
        c.rows.push_back(std::move(cells));
    }
    return c;
}

}  // namespace topdown

#pragma once

#include <fstream>
#include <string>
#include <vector>

namespace topdown {

// CSV emitter with a versioned schema banner:
//   # schema: <name> v<version>
//   <col>,<col>,...
// Cells must be comma/newline-free (asserted); numbers go through num()
// for bit-stable text across runs.
class CsvWriter {
  public:
    CsvWriter(const std::string& path, const std::string& schema, int version,
              const std::vector<std::string>& columns);
    void row(const std::vector<std::string>& cells);
    static std::string num(double v);
    static std::string num(double v, int precision);

  private:
    std::ofstream out_;
    std::string path_;
    size_t columns_;
};

struct CsvContent {
    std::string schema;  // name from the banner
    int version = 0;
    std::vector<std::string> columns;
    std::vector<std::vector<std::string>> rows;
};

CsvContent read_csv(const std::string& path);

}  // namespace topdown

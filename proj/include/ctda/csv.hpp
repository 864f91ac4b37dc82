#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace ctda {

// RFC-4180 CSV with a mandatory header row. The exact header string doubles
// as the schema version: readers reject any mismatch.
class CsvWriter {
  public:
    CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& header);
    ~CsvWriter();

    void write_row(const std::vector<std::string>& cells);
    void close();

    static std::string format_double(double v);

  private:
    std::string path_;
    std::string buffer_;
    int n_cols_;
    bool closed_ = false;
};

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
};

// Reads a CSV written by CsvWriter. If expected_header is nonempty, a
// mismatch is a hard error (schema violation).
CsvTable read_csv(const std::filesystem::path& path, const std::vector<std::string>& expected_header = {});

}  // namespace ctda

#pragma once

#include <string>
#include <vector>

namespace omreg {

inline constexpr const char* kCsvVersionLine = "# omreg-csv v1";

/// Builds a CSV document in memory. Doubles are written with %.17g so a
/// re-read reproduces them bit for bit.
class CsvTable {
 public:
  explicit CsvTable(std::vector<std::string> columns);

  CsvTable& add_row(std::vector<std::string> cells);
  const std::vector<std::string>& columns() const { return columns_; }
  std::size_t n_rows() const { return rows_.size(); }
  std::string str() const;

 private:
  std::vector<std::string> columns_;
  std::vector<std::vector<std::string>> rows_;
};

std::string csv_cell(double v);
std::string csv_cell(long long v);
std::string csv_cell(const std::string& v);

/// Writes to a sibling temp file and renames it over `path`.
void write_file_atomic(const std::string& path, const std::string& content);

/// Parsed CSV: the version line is checked and skipped.
struct CsvData {
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;
  int column(const std::string& name) const;
};
CsvData read_csv(const std::string& path);

}  // namespace omreg

#include "omreg/csv.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "omreg/errors.hpp"

namespace omreg {

CsvTable::CsvTable(std::vector<std::string> columns) : columns_(std::move(columns)) {}

CsvTable& CsvTable::add_row(std::vector<std::string> cells) {
  if (cells.size() != columns_.size()) throw InvalidArgument("CsvTable: row width does not match header");
  rows_.push_back(std::move(cells));
  return *this;
}

namespace {
void append_line(std::string& out, const std::vector<std::string>& cells) {
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (i) out += ',';
    out += cells[i];
  }
  out += '\n';
}
}  // namespace

std::string CsvTable::str() const {
  std::string out = std::string(kCsvVersionLine) + "\n";
  append_line(out, columns_);
  for (const auto& r : rows_) append_line(out, r);
  return out;
}

std::string csv_cell(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string csv_cell(long long v) { return std::to_string(v); }

std::string csv_cell(const std::string& v) {
  if (v.find_first_of(",\"\n") == std::string::npos) return v;
  std::string q = "\"";
  for (char c : v) {
    if (c == '"') q += '"';
    q += c;
  }
  return q + "\"";
}

void write_file_atomic(const std::string& path, const std::string& content) {
  namespace fs = std::filesystem;
  const fs::path target(path);
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  const fs::path tmp = target.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write '" + tmp.string() + "'");
    out << content;
    if (!out.flush()) throw Error("write failed for '" + tmp.string() + "'");
  }
  fs::rename(tmp, target);
}

int CsvData::column(const std::string& name) const {
  for (std::size_t i = 0; i < columns.size(); ++i)
    if (columns[i] == name) return static_cast<int>(i);
  throw InvalidArgument("CSV has no column '" + name + "'");
}

CsvData read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open '" + path + "'");
  std::string line;
  if (!std::getline(in, line) || line != kCsvVersionLine) throw Error("'" + path + "' is not an omreg v1 CSV");
  auto split = [](const std::string& l) {
    std::vector<std::string> cells;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < l.size(); ++i) {
      const char c = l[i];
      if (quoted) {
        if (c == '"' && i + 1 < l.size() && l[i + 1] == '"') cur += l[++i];
        else if (c == '"') quoted = false;
        else cur += c;
      } else if (c == '"') {
        quoted = true;
      } else if (c == ',') {
        cells.push_back(cur);
        cur.clear();
      } else {
        cur += c;
      }
    }
    cells.push_back(cur);
    return cells;
  };
  CsvData data;
  if (!std::getline(in, line)) throw Error("'" + path + "' has no header row");
  data.columns = split(line);
  while (std::getline(in, line))
    if (!line.empty()) data.rows.push_back(split(line));
  return data;
}

}  // namespace omreg

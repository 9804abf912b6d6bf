#include "rsmc/csv_io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "rsmc/errors.hpp"

namespace rsmc {

namespace {

std::vector<std::string> split_row(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream is(line);
  while (std::getline(is, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

bool is_missing(const std::string& s) {
  return s.empty() || s == "nan" || s == "NaN" || s == "NA" || s == "NAN";
}

std::size_t column_index(const std::vector<std::string>& header, const std::string& name,
                         const std::string& origin) {
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == name) return i;
  }
  throw ConfigError(origin + ": column '" + name + "' not found in header");
}

}  // namespace

SensorSeries parse_sensor_csv(const std::string& text, const ColumnMap& columns,
                              const std::string& origin) {
  std::istringstream is(text);
  std::string line;
  if (!std::getline(is, line)) throw ConfigError(origin + ": empty file");
  std::vector<std::string> header = split_row(line);
  for (auto& h : header) h = trim(h);
  if (!header.empty() && header[0].rfind("\xEF\xBB\xBF", 0) == 0) header[0].erase(0, 3);
  const std::size_t ti = column_index(header, columns.time, origin);
  const std::size_t vi = column_index(header, columns.value, origin);
  std::optional<std::size_t> gi;
  if (columns.truth) gi = column_index(header, *columns.truth, origin);

  SensorSeries s;
  std::size_t row = 1;
  const auto number = [&](const std::string& raw, std::size_t col, bool allow_missing) {
    const std::string cell = trim(raw);
    if (is_missing(cell)) {
      if (allow_missing) return std::numeric_limits<double>::quiet_NaN();
      throw ConfigError(origin + ": row " + std::to_string(row) + ", column '" + header[col] +
                        "': missing value");
    }
    double v = 0.0;
    const char* first = cell.data();
    if (!cell.empty() && cell[0] == '+') ++first;
    const auto [ptr, ec] = std::from_chars(first, cell.data() + cell.size(), v);
    if (ec != std::errc() || ptr != cell.data() + cell.size()) {
      throw ConfigError(origin + ": row " + std::to_string(row) + ", column '" + header[col] +
                        "': cannot parse '" + cell + "'");
    }
    return v;
  };
  while (std::getline(is, line)) {
    ++row;
    if (trim(line).empty()) continue;
    const std::vector<std::string> cells = split_row(line);
    if (cells.size() != header.size()) {
      throw ConfigError(origin + ": row " + std::to_string(row) + ": expected " +
                        std::to_string(header.size()) + " fields, found " +
                        std::to_string(cells.size()));
    }
    const double t = number(cells[ti], ti, false);
    if (!s.timestamps.empty() && !(t > s.timestamps.back())) {
      throw ConfigError(origin + ": row " + std::to_string(row) +
                        ": timestamps must be strictly increasing");
    }
    const double v = number(cells[vi], vi, true);
    s.timestamps.push_back(t);
    s.values.push_back(v);
    s.missing.push_back(std::isnan(v));
    if (gi) s.truth.push_back(number(cells[*gi], *gi, true));
  }
  if (s.timestamps.empty()) throw ConfigError(origin + ": no data rows");
  return s;
}

SensorSeries ingest_csv(const std::filesystem::path& path, const ColumnMap& columns) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_sensor_csv(buf.str(), columns, path.string());
}

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

CsvWriter& CsvWriter::field(const std::string& s) {
  if (!first_) os_ << ',';
  first_ = false;
  if (s.find_first_of(",\"\n") != std::string::npos) {
    os_ << '"';
    for (char c : s) {
      if (c == '"') os_ << '"';
      os_ << c;
    }
    os_ << '"';
  } else {
    os_ << s;
  }
  return *this;
}

CsvWriter& CsvWriter::field(double v) { return field(format_double(v)); }

CsvWriter& CsvWriter::field(std::size_t v) { return field(std::to_string(v)); }

void CsvWriter::end_row() {
  os_ << '\n';
  first_ = true;
}

}  // namespace rsmc

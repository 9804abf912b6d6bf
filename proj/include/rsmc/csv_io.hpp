#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace rsmc {

struct SensorSeries {
  std::vector<double> timestamps;  // strictly increasing
  std::vector<double> values;      // NaN where missing
  std::vector<bool> missing;
  std::vector<double> truth;       // empty unless a truth column was mapped

  std::size_t size() const { return timestamps.size(); }
};

struct ColumnMap {
  std::string time = "t";
  std::string value = "value";
  std::optional<std::string> truth;
};

/// Header-labelled, comma-separated. Empty, "nan" and "NA" cells are missing.
/// Throws ConfigError naming the row and column of any parse failure.
SensorSeries ingest_csv(const std::filesystem::path& path, const ColumnMap& columns);
SensorSeries parse_sensor_csv(const std::string& text, const ColumnMap& columns,
                              const std::string& origin = "<csv>");

/// Shortest round-trip decimal form.
std::string format_double(double v);

class CsvWriter {
 public:
  explicit CsvWriter(std::ostream& os) : os_(os) {}
  CsvWriter& field(const std::string& s);
  CsvWriter& field(double v);
  CsvWriter& field(std::size_t v);
  void end_row();

 private:
  std::ostream& os_;
  bool first_ = true;
};

}  // namespace rsmc

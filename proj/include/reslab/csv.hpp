#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace reslab {

/// Shortest decimal text that parses back to the same double.
std::string format_double(double x);

std::uint64_t fnv1a64(std::string_view bytes);
/// 16 lowercase hex digits.
std::string hex64(std::uint64_t v);

struct CsvError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Numeric table with "# key=value" metadata lines before the header row.
struct CsvTable {
  std::vector<std::pair<std::string, std::string>> meta;
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;

  void set_meta(const std::string& key, const std::string& value);
  std::optional<std::string> meta_value(std::string_view key) const;
  /// Throws CsvError when absent.
  std::size_t column_index(std::string_view name) const;
  bool has_column(std::string_view name) const;
  std::vector<double> column(std::string_view name) const;
  void add_row(std::vector<double> row);
};

void write_csv(std::ostream& os, const CsvTable& table);
void write_csv_file(const std::string& path, const CsvTable& table);
CsvTable read_csv(std::istream& is);
CsvTable read_csv_file(const std::string& path);

}  // namespace reslab

#pragma once

#include <cstddef>
#include <istream>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace gim::csv {

/// Splits one RFC-4180 style record. Quoted fields may contain commas and
/// doubled quotes; embedded newlines are not supported.
std::vector<std::string> split_line(std::string_view line);

/// Quotes a field only when it contains a comma, quote, or newline.
std::string escape(std::string_view field);

/// Strict full-string number parse; nullopt on trailing garbage or empty input.
std::optional<double> parse_double(std::string_view text);

/// Shortest text that parses back to exactly v.
std::string format_double(double v);

/// Small in-memory table for auxiliary files (stats, rankings).
struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::size_t> lines;  // 1-based source line per row

  std::optional<std::size_t> column(std::string_view name) const;
  /// Throws DataError naming the file and column when absent.
  std::size_t require_column(std::string_view name, const std::string& source) const;
};

Table read_table(std::istream& in, const std::string& source);
Table read_table_file(const std::string& path);

}  // namespace gim::csv

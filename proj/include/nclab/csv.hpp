#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace nclab::csv {

// Minimal comma-separated reader: no quoting, fields are trimmed.
struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::size_t> line_numbers;  // 1-based source line of each row

  // Column position or throws ParseError naming the column.
  std::size_t column(std::string_view name) const;
  bool has_column(std::string_view name) const;
};

Table read(const std::filesystem::path& path);
Table parse(std::string_view text);

std::vector<std::string> split_line(std::string_view line);

// Throws ParseError with `line` on malformed input.
double to_double(std::string_view field, std::size_t line);
long long to_integer(std::string_view field, std::size_t line);

// Shortest text that parses back to the same double; "nan" for NaN.
std::string format(double value);

}  // namespace nclab::csv

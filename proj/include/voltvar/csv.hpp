#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace voltvar::csv {

std::vector<std::string> split_line(std::string_view line);
double to_double(std::string_view field, std::string_view context);
int to_int(std::string_view field, std::string_view context);

/// Reads a whole CSV file: header + rows. Blank lines are skipped.
struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(std::string_view name) const;  // throws ParseError
};

Table read(const std::filesystem::path& path);

/// Shortest round-trip representation.
std::string fmt(double v);

}  // namespace voltvar::csv

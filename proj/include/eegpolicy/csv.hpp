#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace eegpolicy::csv {

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  // Index of a header column, or -1.
  int column(const std::string& name) const;
};

Table read(const std::filesystem::path& path);
Table parse(const std::string& text);
std::vector<std::string> split_line(const std::string& line);
std::string escape(const std::string& field);

// Shortest round-trip decimal representation.
std::string format_double(double v);

}  // namespace eegpolicy::csv

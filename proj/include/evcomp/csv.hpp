#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace evc::csv {

// Shortest round-trippable decimal (%.17g).
std::string fmt(double v);

std::vector<std::string> split_line(const std::string& line);

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  int column(const std::string& name) const;  // -1 if absent
};

Table read_csv(const std::filesystem::path& file);

}  // namespace evc::csv

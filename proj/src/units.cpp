#include "fusemap/units.hpp"

#include <charconv>
#include <cmath>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace fusemap {

namespace {

std::pair<double, std::string_view> split_number(std::string_view text, std::string_view what) {
  while (!text.empty() && text.front() == ' ') text.remove_prefix(1);
  while (!text.empty() && text.back() == ' ') text.remove_suffix(1);
  double value = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr == text.data()) {
    throw std::invalid_argument(std::string(what) + ": cannot parse '" + std::string(text) + "'");
  }
  std::string_view unit(ptr, static_cast<std::size_t>(text.data() + text.size() - ptr));
  while (!unit.empty() && unit.front() == ' ') unit.remove_prefix(1);
  if (!std::isfinite(value) || value < 0) {
    throw std::invalid_argument(std::string(what) + ": value must be finite and >= 0 in '" + std::string(text) + "'");
  }
  return {value, unit};
}

double scale_for(std::string_view unit, const std::vector<std::pair<std::string_view, double>>& table,
                 std::string_view what, std::string_view text) {
  for (const auto& [name, scale] : table) {
    if (unit == name) return scale;
  }
  std::string names;
  for (const auto& [name, scale] : table) {
    if (name.empty()) continue;
    names += names.empty() ? "" : ", ";
    names += name;
  }
  throw std::invalid_argument(std::string(what) + ": unknown unit in '" + std::string(text) + "' (expected " + names + ")");
}

}  // namespace

Bytes parse_size(std::string_view text) {
  static const std::vector<std::pair<std::string_view, double>> table = {
      {"", 1},          {"B", 1},          {"KiB", 1024.0},   {"MiB", 1048576.0}, {"GiB", 1073741824.0},
      {"KB", 1e3},      {"MB", 1e6},       {"GB", 1e9},       {"kB", 1e3}};
  const auto [value, unit] = split_number(text, "size");
  const double bytes = value * scale_for(unit, table, "size", text);
  if (bytes != std::floor(bytes)) throw std::invalid_argument("size: '" + std::string(text) + "' is not a whole number of bytes");
  if (bytes > 9.0e18) throw std::invalid_argument("size: '" + std::string(text) + "' is too large");
  return static_cast<Bytes>(bytes);
}

double parse_bandwidth(std::string_view text) {
  static const std::vector<std::pair<std::string_view, double>> table = {
      {"", 1},        {"B/s", 1},      {"KB/s", 1e3},      {"MB/s", 1e6},         {"GB/s", 1e9},
      {"TB/s", 1e12}, {"KiB/s", 1024.0}, {"MiB/s", 1048576.0}, {"GiB/s", 1073741824.0}};
  const auto [value, unit] = split_number(text, "bandwidth");
  return value * scale_for(unit, table, "bandwidth", text);
}

double parse_frequency(std::string_view text) {
  static const std::vector<std::pair<std::string_view, double>> table = {
      {"", 1}, {"Hz", 1}, {"kHz", 1e3}, {"KHz", 1e3}, {"MHz", 1e6}, {"GHz", 1e9}};
  const auto [value, unit] = split_number(text, "frequency");
  return value * scale_for(unit, table, "frequency", text);
}

}  // namespace fusemap

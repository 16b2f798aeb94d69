#include "srloc/range_csv.hpp"

#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

#include "srloc/errors.hpp"
#include "srloc/experiment_io.hpp"

namespace srloc {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const std::size_t comma = line.find(',', start);
    out.push_back(trim(line.substr(start, comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

double parse_field(std::string_view field, int row, int column, std::string_view name) {
  double v = 0.0;
  if (!field.empty() && field.front() == '+') field.remove_prefix(1);
  const auto res = std::from_chars(field.data(), field.data() + field.size(), v);
  if (field.empty() || res.ec != std::errc() || res.ptr != field.data() + field.size() ||
      !std::isfinite(v)) {
    throw ParseError("row " + std::to_string(row) + ", column " + std::to_string(column) + " (" +
                         std::string(name) + "): '" + std::string(field) +
                         "' is not a finite number",
                     row, column);
  }
  return v;
}

}  // namespace

RangeData parse_range_csv(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start <= text.size()) {
    const std::size_t nl = text.find('\n', start);
    lines.push_back(text.substr(start, nl - start));
    if (nl == std::string_view::npos) break;
    start = nl + 1;
  }
  std::size_t header_line = 0;
  while (header_line < lines.size() && trim(lines[header_line]).empty()) ++header_line;
  if (header_line == lines.size()) throw ParseError("empty input: missing header", 1, 0);

  const int header_row = static_cast<int>(header_line) + 1;
  const auto header = split(lines[header_line]);
  constexpr std::array<std::string_view, 4> kNames{"ax", "ay", "az", "range"};
  std::array<int, 4> index{-1, -1, -1, -1};
  for (std::size_t c = 0; c < header.size(); ++c) {
    bool known = false;
    for (std::size_t k = 0; k < kNames.size(); ++k) {
      if (header[c] != kNames[k]) continue;
      if (index[k] >= 0) {
        throw ParseError("duplicate column '" + std::string(kNames[k]) + "'", header_row,
                         static_cast<int>(c) + 1);
      }
      index[k] = static_cast<int>(c);
      known = true;
    }
    if (!known) {
      throw ParseError("unknown column '" + std::string(header[c]) + "' (expected ax, ay[, az], range)",
                       header_row, static_cast<int>(c) + 1);
    }
  }
  for (std::size_t k : {0u, 1u, 3u}) {
    if (index[k] < 0) {
      throw ParseError("missing column '" + std::string(kNames[k]) + "'", header_row, 0);
    }
  }
  const int n = index[2] >= 0 ? 3 : 2;

  std::vector<Vector> positions;
  std::map<std::vector<double>, std::size_t> lookup;
  RangeSet ranges;
  for (std::size_t li = header_line + 1; li < lines.size(); ++li) {
    if (trim(lines[li]).empty()) continue;
    const int row = static_cast<int>(li) + 1;
    const auto fields = split(lines[li]);
    if (fields.size() != header.size()) {
      throw ParseError("row " + std::to_string(row) + " has " + std::to_string(fields.size()) +
                           " fields, header has " + std::to_string(header.size()),
                       row, static_cast<int>(std::min(fields.size(), header.size())) + 1);
    }
    std::vector<double> key;
    for (int k = 0; k < n; ++k) {
      const std::size_t name_index = k < 2 ? static_cast<std::size_t>(k) : 2u;
      const int c = index[name_index];
      key.push_back(parse_field(fields[static_cast<std::size_t>(c)], row, c + 1, kNames[name_index]));
    }
    const int rc = index[3];
    const double r = parse_field(fields[static_cast<std::size_t>(rc)], row, rc + 1, "range");
    if (r < 0.0) {
      throw ParseError("row " + std::to_string(row) + ": range must be non-negative", row, rc + 1);
    }
    auto [it, inserted] = lookup.try_emplace(key, positions.size());
    if (inserted) {
      positions.push_back(Eigen::Map<const Vector>(key.data(), n));
      ranges.groups.emplace_back();
    }
    ranges.groups[it->second].push_back(r);
  }
  if (positions.empty()) throw ParseError("no measurement rows", header_row + 1, 0);
  try {
    return RangeData{SensorArray(std::move(positions)), std::move(ranges)};
  } catch (const UsageError& e) {
    // Too few sensors for the dimension: a geometry problem, not a syntax one.
    throw DegenerateGeometryError(e.what(), std::numeric_limits<double>::infinity());
  }
}

RangeData read_range_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open '" + path + "'", 0, 0);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_range_csv(buf.str());
}

std::string format_range_csv(const SensorArray& sensors, const RangeSet& ranges) {
  if (static_cast<int>(ranges.groups.size()) != sensors.size()) {
    throw UsageError("format_range_csv: one range group per sensor required");
  }
  std::ostringstream out;
  const int n = sensors.dimension();
  out << (n == 3 ? "ax,ay,az,range\n" : "ax,ay,range\n");
  for (int i = 0; i < sensors.size(); ++i) {
    for (double r : ranges.groups[static_cast<std::size_t>(i)]) {
      for (int k = 0; k < n; ++k) out << format_number(sensors.position(i)(k)) << ',';
      out << format_number(r) << '\n';
    }
  }
  return out.str();
}

}  // namespace srloc

#pragma once

#include <string>
#include <string_view>

#include "srloc/measurement_model.hpp"

namespace srloc {

struct RangeData {
  SensorArray sensors;
  RangeSet ranges;
};

/// Header `ax,ay,range` or `ax,ay,az,range` (any column order). Each row is one
/// measured range; rows with identical anchor coordinates form one sensor, in
/// order of first appearance. Blank lines are skipped. Throws ParseError with
/// 1-based row and column on malformed input.
RangeData parse_range_csv(std::string_view text);
RangeData read_range_csv(const std::string& path);

std::string format_range_csv(const SensorArray& sensors, const RangeSet& ranges);

}  // namespace srloc

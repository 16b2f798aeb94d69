#pragma once

#include <string>
#include <string_view>

#include "srloc/experiment.hpp"

namespace srloc {

/// Shortest decimal string that parses back to the same double ("nan", "inf", "-inf" for non-finite values).
std::string format_number(double value);

/// Parses an experiment spec document. A campaign result document (which embeds
/// its spec under "spec") is accepted as well. Fields that are absent keep the
/// defaults of the named scenario. Throws SchemaError with a JSON pointer to the
/// offending value.
ExperimentSpec parse_spec_json(std::string_view text);

/// Full spec, every field explicit, so parse_spec_json(spec_to_json(s)) == s.
std::string spec_to_json(const ExperimentSpec& spec);

/// One row per (sweep point, method):
/// sweep_value,method,rmse,bias_x,bias_y[,bias_z],mean_iters,max_iters,mean_time_s,crlb_rmse,trials
/// Wall time is machine dependent, so mean_time_s is written as "nan" unless
/// include_timing is set; without it reruns are byte-identical.
std::string table_to_csv(const TrialTable& table, bool include_timing = false);

/// Spec, generator name, per-point aggregates and raw per-trial errors.
std::string table_to_json(const TrialTable& table, bool include_timing = false);

}  // namespace srloc

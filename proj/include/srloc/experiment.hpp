#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

#include "srloc/crlb.hpp"
#include "srloc/measurement_model.hpp"
#include "srloc/robust_estimators.hpp"

namespace srloc {

enum class Scenario { kScenario1, kScenario2, kCustom };
std::string_view scenario_name(Scenario scenario);
Scenario parse_scenario(std::string_view name);

enum class SweepParameter { kBeta, kSensors, kSigma };
std::string_view sweep_parameter_name(SweepParameter parameter);
SweepParameter parse_sweep_parameter(std::string_view name);

/// How the estimator scale is chosen per trial.
///   literal:      1.34 sqrt(3) sigma, sigma as given
///   range_scaled: literal value times 2 median(r), i.e. sigma propagated to squared-range units
///   fixed:        ExperimentSpec::epsilon
enum class EpsilonRule { kLiteral, kRangeScaled, kFixed };
std::string_view epsilon_rule_name(EpsilonRule rule);
EpsilonRule parse_epsilon_rule(std::string_view name);

std::string_view outlier_mode_name(OutlierMode mode);
OutlierMode parse_outlier_mode(std::string_view name);

struct Box {
  Vector lower;
  Vector upper;
};

struct ExperimentSpec {
  Scenario scenario = Scenario::kCustom;
  int dimension = 2;
  /// R for random placement. Ignored when `sensor_positions` is non-empty.
  int sensor_count = 10;
  /// Sensors are drawn uniformly in this box per trial unless fixed positions are given.
  Box sensor_area;
  std::vector<Vector> sensor_positions;
  Box target_box;
  int samples_per_sensor = 1;
  NoiseModel noise;
  OutlierMode outlier_mode = OutlierMode::kPerSample;
  int trials = 100;
  std::vector<Method> methods{Method::kSrLs, Method::kSrIrls, Method::kSrGd, Method::kSrHybrid};
  std::uint64_t seed = 0;
  SweepParameter sweep_parameter = SweepParameter::kBeta;
  /// Empty means a single point at the nominal parameter value.
  std::vector<double> sweep_values;
  EpsilonRule epsilon_rule = EpsilonRule::kLiteral;
  double epsilon = 0.0;
  /// Tolerances and iteration caps; its epsilon field is overwritten per trial.
  EstimatorConfig estimator;
  long fisher_samples = kDefaultFisherSamples;

  /// Throws UsageError on any invalid field.
  void validate() const;
  int sweep_size() const;
  double sweep_value(int index) const;
  /// Copy with the sweep parameter set to its value at `index`.
  ExperimentSpec at_sweep_point(int index) const;
};

/// 4000 x 4000 m area, R = 10, K = 1, sigma = 55, beta = 0.4, uniform outliers
/// with d_max = 4000 sqrt(2) hitting exactly floor(beta R) sensors.
ExperimentSpec scenario_one();

/// Eight base stations on a 5 km radius ring around the origin, target in the
/// 2 x 2 km box [500, 2500] x [-500, 1500], K = 20, sigma = 55, per-sample
/// NLOS contamination N(380, 120^2), beta = 0.4. The layout is a stand-in for
/// the unpublished city geometry.
ExperimentSpec scenario_two();

struct MethodRecord {
  Method method = Method::kSrLs;
  Vector x_hat;
  /// sqrt(|x_hat - x|^2 / n)
  double error = 0.0;
  int iterations = 0;
  bool converged = false;
  double elapsed_s = 0.0;
};

struct TrialRecord {
  int sweep_index = 0;
  int trial_index = 0;
  /// Number of discarded draws (degenerate geometry or solver failure) before this one.
  int redraws = 0;
  Vector x_true;
  double epsilon = 0.0;
  /// NaN when no Fisher scalar was supplied.
  double crlb = 0.0;
  std::vector<MethodRecord> methods;
};

inline constexpr int kMaxRedraws = 100;

/// One trial at `spec` (already positioned at its sweep point). The generator is
/// derived from (seed, sweep_index, trial_index, redraw), so the record depends
/// on nothing else. Throws CampaignError after kMaxRedraws failed draws.
TrialRecord run_trial(const ExperimentSpec& spec, int sweep_index, int trial_index,
                      const FisherScalar* fisher = nullptr);

/// Fisher scalar for one sweep point, from its own derived generator.
FisherScalar sweep_fisher(const ExperimentSpec& spec, int sweep_index);

struct MethodSummary {
  Method method = Method::kSrLs;
  /// Mean over trials of the per-trial error.
  double rmse = 0.0;
  Vector bias;
  double mean_iters = 0.0;
  int max_iters = 0;
  double mean_time_s = 0.0;
  int trials = 0;
  int non_converged = 0;
  /// Raw per-trial errors in trial order.
  std::vector<double> errors;
};

struct SweepPointSummary {
  double value = 0.0;
  FisherScalar fisher;
  double crlb_rmse = 0.0;
  int redraws = 0;
  std::vector<MethodSummary> methods;
};

struct TrialTable {
  ExperimentSpec spec;
  std::vector<SweepPointSummary> points;
};

/// Worker count from SRLOC_WORKERS, else hardware concurrency (at least 1).
int default_worker_count();

/// Runs every trial at every sweep point on `workers` threads (0 = default)
/// and reduces in trial order, so the table does not depend on scheduling.
/// Throws CampaignError when more than 10% of the draws at a sweep point are
/// discarded.
TrialTable run_campaign(const ExperimentSpec& spec, int workers = 0);

/// Reduces trial records (one sweep point, trial order) into per-method summaries.
std::vector<MethodSummary> summarize(const std::vector<TrialRecord>& records,
                                     const std::vector<Method>& methods, int dimension);

}  // namespace srloc

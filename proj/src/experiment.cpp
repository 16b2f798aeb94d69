#include "srloc/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <limits>
#include <mutex>
#include <numbers>
#include <string>
#include <thread>

#include "srloc/errors.hpp"

namespace srloc {

std::string_view scenario_name(Scenario scenario) {
  switch (scenario) {
    case Scenario::kScenario1:
      return "scenario1";
    case Scenario::kScenario2:
      return "scenario2";
    case Scenario::kCustom:
      return "custom";
  }
  return "custom";
}

Scenario parse_scenario(std::string_view name) {
  if (name == "scenario1") return Scenario::kScenario1;
  if (name == "scenario2") return Scenario::kScenario2;
  if (name == "custom") return Scenario::kCustom;
  throw UsageError("unknown scenario '" + std::string(name) + "'");
}

std::string_view sweep_parameter_name(SweepParameter parameter) {
  switch (parameter) {
    case SweepParameter::kBeta:
      return "beta";
    case SweepParameter::kSensors:
      return "R";
    case SweepParameter::kSigma:
      return "sigma";
  }
  return "beta";
}

SweepParameter parse_sweep_parameter(std::string_view name) {
  if (name == "beta") return SweepParameter::kBeta;
  if (name == "R") return SweepParameter::kSensors;
  if (name == "sigma") return SweepParameter::kSigma;
  throw UsageError("unknown sweep parameter '" + std::string(name) + "' (beta, R or sigma)");
}

std::string_view epsilon_rule_name(EpsilonRule rule) {
  switch (rule) {
    case EpsilonRule::kLiteral:
      return "literal";
    case EpsilonRule::kRangeScaled:
      return "range_scaled";
    case EpsilonRule::kFixed:
      return "fixed";
  }
  return "literal";
}

EpsilonRule parse_epsilon_rule(std::string_view name) {
  if (name == "literal") return EpsilonRule::kLiteral;
  if (name == "range_scaled") return EpsilonRule::kRangeScaled;
  if (name == "fixed") return EpsilonRule::kFixed;
  throw UsageError("unknown epsilon rule '" + std::string(name) + "'");
}

std::string_view outlier_mode_name(OutlierMode mode) {
  return mode == OutlierMode::kPerSample ? "per_sample" : "per_sensor_count";
}

OutlierMode parse_outlier_mode(std::string_view name) {
  if (name == "per_sample") return OutlierMode::kPerSample;
  if (name == "per_sensor_count") return OutlierMode::kPerSensorCount;
  throw UsageError("unknown outlier mode '" + std::string(name) + "'");
}

namespace {

void check_box(const Box& box, int n, const char* what) {
  if (box.lower.size() != n || box.upper.size() != n) {
    throw UsageError(std::string(what) + " must have " + std::to_string(n) + " coordinates");
  }
  if (!box.lower.allFinite() || !box.upper.allFinite() ||
      !(box.lower.array() < box.upper.array()).all()) {
    throw UsageError(std::string(what) + " needs finite bounds with lower < upper");
  }
}

Vector uniform_in(Rng& rng, const Box& box) {
  Vector p(box.lower.size());
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    p(i) = std::uniform_real_distribution<double>(box.lower(i), box.upper(i))(rng);
  }
  return p;
}

// Independent stream per (seed, purpose, indices).
Rng derived_rng(std::uint64_t seed, std::uint32_t purpose, std::uint32_t a, std::uint32_t b,
                std::uint32_t c) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed & 0xffffffffu),
                    static_cast<std::uint32_t>(seed >> 32), purpose, a, b, c};
  return Rng(seq);
}

constexpr std::uint32_t kTrialStream = 1;
constexpr std::uint32_t kFisherStream = 2;

double median_range(const RangeSet& ranges) {
  std::vector<double> all;
  for (const auto& g : ranges.groups) all.insert(all.end(), g.begin(), g.end());
  const auto mid = all.begin() + static_cast<std::ptrdiff_t>(all.size() / 2);
  std::nth_element(all.begin(), mid, all.end());
  double m = *mid;
  if (all.size() % 2 == 0) m = 0.5 * (m + *std::max_element(all.begin(), mid));
  return m;
}

double trial_epsilon(const ExperimentSpec& spec, const RangeSet& ranges) {
  switch (spec.epsilon_rule) {
    case EpsilonRule::kLiteral:
      return epsilon_from_sigma(spec.noise.sigma);
    case EpsilonRule::kRangeScaled:
      return epsilon_from_sigma(spec.noise.sigma) * 2.0 * median_range(ranges);
    case EpsilonRule::kFixed:
      return spec.epsilon;
  }
  return spec.epsilon;
}

}  // namespace

void ExperimentSpec::validate() const {
  if (dimension != 2 && dimension != 3) throw UsageError("dimension must be 2 or 3");
  if (sensor_positions.empty()) {
    if (sensor_count < dimension + 1) {
      throw UsageError("sensor count must be at least dimension + 1");
    }
    check_box(sensor_area, dimension, "sensor area");
  } else {
    SensorArray check(sensor_positions);
    if (check.dimension() != dimension) {
      throw UsageError("sensor positions do not match the dimension");
    }
  }
  check_box(target_box, dimension, "target box");
  if (samples_per_sensor < 1) throw UsageError("samples per sensor must be at least 1");
  noise.validate();
  if (trials < 1) throw UsageError("trials must be at least 1");
  if (methods.empty()) throw UsageError("at least one method is required");
  for (std::size_t i = 0; i < methods.size(); ++i) {
    if (std::find(methods.begin(), methods.begin() + static_cast<std::ptrdiff_t>(i),
                  methods[i]) != methods.begin() + static_cast<std::ptrdiff_t>(i)) {
      throw UsageError("duplicate method " + std::string(method_name(methods[i])));
    }
  }
  for (std::size_t i = 0; i < sweep_values.size(); ++i) {
    if (!std::isfinite(sweep_values[i])) throw UsageError("sweep values must be finite");
    if (i > 0 && !(sweep_values[i - 1] < sweep_values[i])) {
      throw UsageError("sweep values must be strictly increasing");
    }
  }
  if (sweep_parameter == SweepParameter::kSensors && !sweep_values.empty() &&
      !sensor_positions.empty()) {
    throw UsageError("an R sweep needs random sensor placement");
  }
  if (epsilon_rule == EpsilonRule::kFixed && !(epsilon > 0.0 && std::isfinite(epsilon))) {
    throw UsageError("fixed epsilon must be positive");
  }
  EstimatorConfig probe = estimator;
  probe.epsilon = 1.0;
  probe.validate();
  if (fisher_samples < 1000) throw UsageError("fisher_samples must be at least 1000");
  for (int i = 0; i < sweep_size(); ++i) at_sweep_point(i).noise.validate();
}

int ExperimentSpec::sweep_size() const {
  return sweep_values.empty() ? 1 : static_cast<int>(sweep_values.size());
}

double ExperimentSpec::sweep_value(int index) const {
  if (index < 0 || index >= sweep_size()) throw UsageError("sweep index out of range");
  if (!sweep_values.empty()) return sweep_values[static_cast<std::size_t>(index)];
  switch (sweep_parameter) {
    case SweepParameter::kBeta:
      return noise.beta;
    case SweepParameter::kSensors:
      return sensor_positions.empty() ? sensor_count
                                      : static_cast<double>(sensor_positions.size());
    case SweepParameter::kSigma:
      return noise.sigma;
  }
  return 0.0;
}

ExperimentSpec ExperimentSpec::at_sweep_point(int index) const {
  ExperimentSpec s = *this;
  if (sweep_values.empty()) return s;
  const double v = sweep_value(index);
  switch (sweep_parameter) {
    case SweepParameter::kBeta:
      s.noise.beta = v;
      break;
    case SweepParameter::kSensors:
      if (v != std::floor(v) || v < dimension + 1) {
        throw UsageError("R sweep values must be integers of at least dimension + 1");
      }
      s.sensor_count = static_cast<int>(v);
      break;
    case SweepParameter::kSigma:
      s.noise.sigma = v;
      break;
  }
  s.sweep_values.clear();
  return s;
}

ExperimentSpec scenario_one() {
  ExperimentSpec s;
  s.scenario = Scenario::kScenario1;
  s.dimension = 2;
  s.sensor_count = 10;
  s.sensor_area = {Vector::Zero(2), Vector::Constant(2, 4000.0)};
  s.target_box = s.sensor_area;
  s.samples_per_sensor = 1;
  s.noise = NoiseModel{55.0, 0.4, UniformOutliers{4000.0 * std::numbers::sqrt2}};
  s.outlier_mode = OutlierMode::kPerSensorCount;
  return s;
}

ExperimentSpec scenario_two() {
  ExperimentSpec s;
  s.scenario = Scenario::kScenario2;
  s.dimension = 2;
  constexpr int kStations = 8;
  constexpr double kRadius = 5000.0;
  for (int i = 0; i < kStations; ++i) {
    const double angle = 2.0 * std::numbers::pi * i / kStations;
    Vector p(2);
    p << kRadius * std::cos(angle), kRadius * std::sin(angle);
    s.sensor_positions.push_back(p);
  }
  s.sensor_count = kStations;
  Vector lo(2), hi(2);
  lo << 500.0, -500.0;
  hi << 2500.0, 1500.0;
  s.target_box = {lo, hi};
  s.samples_per_sensor = 20;
  s.noise = NoiseModel{55.0, 0.4, ShiftedGaussianOutliers{380.0, 120.0}};
  s.outlier_mode = OutlierMode::kPerSample;
  return s;
}

FisherScalar sweep_fisher(const ExperimentSpec& spec, int sweep_index) {
  Rng rng = derived_rng(spec.seed, kFisherStream, static_cast<std::uint32_t>(sweep_index), 0, 0);
  return fisher_scalar(spec.noise, spec.fisher_samples, rng);
}

TrialRecord run_trial(const ExperimentSpec& spec, int sweep_index, int trial_index,
                      const FisherScalar* fisher) {
  using Clock = std::chrono::steady_clock;
  const int n = spec.dimension;
  std::string last_failure;
  for (int redraw = 0; redraw <= kMaxRedraws; ++redraw) {
    Rng rng = derived_rng(spec.seed, kTrialStream, static_cast<std::uint32_t>(sweep_index),
                          static_cast<std::uint32_t>(trial_index),
                          static_cast<std::uint32_t>(redraw));
    TrialRecord rec;
    rec.sweep_index = sweep_index;
    rec.trial_index = trial_index;
    rec.redraws = redraw;
    try {
      std::vector<Vector> positions = spec.sensor_positions;
      if (positions.empty()) {
        for (int i = 0; i < spec.sensor_count; ++i) positions.push_back(uniform_in(rng, spec.sensor_area));
      }
      const SensorArray sensors(std::move(positions));
      rec.x_true = uniform_in(rng, spec.target_box);
      const RangeSet ranges = sample_measurements(rng, rec.x_true, sensors, spec.noise,
                                                  spec.samples_per_sensor, spec.outlier_mode);
      const DesignSystem design = build_design(sensors, ranges);
      EstimatorConfig config = spec.estimator;
      config.epsilon = trial_epsilon(spec, ranges);
      config.record_iterates = false;
      rec.epsilon = config.epsilon;
      rec.crlb = fisher ? crlb_rmse(rec.x_true, sensors, *fisher, spec.samples_per_sensor)
                        : std::numeric_limits<double>::quiet_NaN();
      for (Method m : spec.methods) {
        const auto start = Clock::now();
        const EstimateResult est = run_estimator(m, design, config);
        MethodRecord mr;
        mr.elapsed_s = std::chrono::duration<double>(Clock::now() - start).count();
        mr.method = m;
        mr.x_hat = est.x_hat;
        mr.error = std::sqrt((est.x_hat - rec.x_true).squaredNorm() / n);
        mr.iterations = est.iterations;
        mr.converged = est.converged;
        rec.methods.push_back(std::move(mr));
      }
      return rec;
    } catch (const DegenerateGeometryError& e) {
      last_failure = e.what();
    } catch (const EstimatorError& e) {
      last_failure = e.what();
    } catch (const UsageError& e) {
      // Coincident random sensors or a target on top of a sensor.
      last_failure = e.what();
    }
  }
  throw CampaignError("trial " + std::to_string(trial_index) + " at sweep point " +
                      std::to_string(sweep_index) + " failed " + std::to_string(kMaxRedraws + 1) +
                      " draws; last: " + last_failure);
}

std::vector<MethodSummary> summarize(const std::vector<TrialRecord>& records,
                                     const std::vector<Method>& methods, int dimension) {
  std::vector<MethodSummary> out;
  for (std::size_t k = 0; k < methods.size(); ++k) {
    MethodSummary s;
    s.method = methods[k];
    s.bias = Vector::Zero(dimension);
    for (const TrialRecord& rec : records) {
      const MethodRecord& m = rec.methods.at(k);
      s.errors.push_back(m.error);
      s.rmse += m.error;
      s.bias += m.x_hat - rec.x_true;
      s.mean_iters += m.iterations;
      s.max_iters = std::max(s.max_iters, m.iterations);
      s.mean_time_s += m.elapsed_s;
      s.non_converged += m.converged ? 0 : 1;
    }
    s.trials = static_cast<int>(records.size());
    if (s.trials > 0) {
      s.rmse /= s.trials;
      s.bias /= s.trials;
      s.mean_iters /= s.trials;
      s.mean_time_s /= s.trials;
    }
    out.push_back(std::move(s));
  }
  return out;
}

int default_worker_count() {
  if (const char* env = std::getenv("SRLOC_WORKERS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v >= 1) return static_cast<int>(std::min(v, 1024L));
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

namespace {

// Runs job(i) for i in [0, count) on `workers` threads. The failure with the
// smallest index is rethrown so errors do not depend on scheduling either.
template <typename Job>
void parallel_for(int count, int workers, Job&& job) {
  workers = std::max(1, std::min(workers, count));
  if (workers == 1) {
    for (int i = 0; i < count; ++i) job(i);
    return;
  }
  std::atomic<int> next{0};
  std::mutex mu;
  int failed_index = count;
  std::exception_ptr failure;
  auto worker = [&] {
    for (int i = next.fetch_add(1); i < count; i = next.fetch_add(1)) {
      try {
        job(i);
      } catch (...) {
        std::lock_guard lock(mu);
        if (i < failed_index) {
          failed_index = i;
          failure = std::current_exception();
        }
      }
    }
  };
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

}  // namespace

TrialTable run_campaign(const ExperimentSpec& spec, int workers) {
  spec.validate();
  if (workers <= 0) workers = default_worker_count();
  TrialTable table;
  table.spec = spec;
  for (int p = 0; p < spec.sweep_size(); ++p) {
    const ExperimentSpec point = spec.at_sweep_point(p);
    SweepPointSummary summary;
    summary.value = spec.sweep_value(p);
    summary.fisher = sweep_fisher(point, p);
    std::vector<TrialRecord> records(static_cast<std::size_t>(spec.trials));
    parallel_for(spec.trials, workers, [&](int t) {
      records[static_cast<std::size_t>(t)] = run_trial(point, p, t, &summary.fisher);
    });
    for (const TrialRecord& rec : records) {
      summary.redraws += rec.redraws;
      summary.crlb_rmse += rec.crlb;
    }
    summary.crlb_rmse /= spec.trials;
    if (summary.redraws * 10 > spec.trials) {
      throw CampaignError("sweep point " + std::to_string(p) + ": " +
                          std::to_string(summary.redraws) + " discarded draws for " +
                          std::to_string(spec.trials) + " trials (more than 10%)");
    }
    summary.methods = summarize(records, spec.methods, spec.dimension);
    table.points.push_back(std::move(summary));
  }
  return table;
}

}  // namespace srloc

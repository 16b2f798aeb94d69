#include "cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "srloc/crlb.hpp"
#include "srloc/errors.hpp"
#include "srloc/experiment.hpp"
#include "srloc/experiment_io.hpp"
#include "srloc/range_csv.hpp"
#include "srloc/robust_estimators.hpp"

namespace srloc::cli {

namespace {

constexpr double kOutlierFlagRatio = 0.1;

std::vector<double> parse_numbers(const std::string& text, const std::string& what) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    while (used < item.size() && item[used] == ' ') ++used;
    if (item.empty() || used != item.size() || !std::isfinite(v)) {
      throw UsageError(what + ": '" + item + "' is not a finite number");
    }
    out.push_back(v);
  }
  return out;
}

Vector parse_point(const std::string& text, const std::string& what) {
  const std::vector<double> v = parse_numbers(text, what);
  if (v.size() != 2 && v.size() != 3) throw UsageError(what + " needs 2 or 3 coordinates");
  return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

// Rounds away the binary noise of start + i * step.
double tidy(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return std::stod(buf);
}

/// "beta=0:0.1:1" (inclusive range) or "beta=0,0.2,0.5" (explicit list).
std::pair<SweepParameter, std::vector<double>> parse_sweep(const std::string& text) {
  const std::size_t eq = text.find('=');
  if (eq == std::string::npos) throw UsageError("--sweep expects NAME=START:STEP:STOP or NAME=V1,V2,...");
  const SweepParameter p = parse_sweep_parameter(text.substr(0, eq));
  const std::string body = text.substr(eq + 1);
  if (body.find(':') == std::string::npos) return {p, parse_numbers(body, "--sweep")};
  std::string spec = body;
  std::replace(spec.begin(), spec.end(), ':', ',');
  const std::vector<double> r = parse_numbers(spec, "--sweep");
  if (r.size() != 3 || !(r[1] > 0.0) || r[2] < r[0]) {
    throw UsageError("--sweep range needs START:STEP:STOP with STEP > 0 and STOP >= START");
  }
  const double count = std::floor((r[2] - r[0]) / r[1] + 1e-9);
  if (count > 10000) throw UsageError("--sweep range has too many points");
  std::vector<double> values;
  for (int i = 0; i <= static_cast<int>(count); ++i) values.push_back(tidy(r[0] + i * r[1]));
  return {p, values};
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("cannot open '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw UsageError("cannot write '" + path.string() + "'");
  out << text;
}

std::string join_vector(const Vector& v, const char* sep = " ") {
  std::string s;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (i) s += sep;
    s += format_number(v(i));
  }
  return s;
}

double median(std::vector<double> v) {
  const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
  std::nth_element(v.begin(), mid, v.end());
  double m = *mid;
  if (v.size() % 2 == 0) m = 0.5 * (m + *std::max_element(v.begin(), mid));
  return m;
}

// ---------------------------------------------------------------------------
// localize
// ---------------------------------------------------------------------------

struct LocalizeArgs {
  std::string input;
  std::string method = "sr_hybrid";
  std::optional<double> sigma;
  std::optional<double> epsilon;
  bool auto_sigma = false;
  bool json = false;
  std::string output;
};

int cmd_localize(const LocalizeArgs& args, std::ostream& out, std::ostream& err) {
  const Method method = parse_method(args.method);
  const RangeData data = read_range_csv(args.input);
  const DesignSystem design = build_design(data.sensors, data.ranges);

  EstimatorConfig config;
  std::optional<double> sigma_hat;
  std::string epsilon_source;
  if (args.epsilon) {
    config.epsilon = *args.epsilon;
    epsilon_source = "given";
  } else if (args.sigma) {
    config.epsilon = epsilon_from_sigma(*args.sigma);
    epsilon_source = "1.34 sqrt(3) sigma, sigma = " + format_number(*args.sigma);
  } else {
    // Range residuals of the plain squared-range fit feed the MAD scale.
    EstimatorConfig ls_config;
    const EstimateResult ls = sr_ls(design, ls_config);
    std::vector<double> res;
    for (int i = 0; i < data.sensors.size(); ++i) {
      const double predicted = true_range(ls.x_hat, data.sensors.position(i));
      for (double r : data.ranges.groups[static_cast<std::size_t>(i)]) res.push_back(r - predicted);
    }
    const MadEstimate mad = estimate_sigma_mad(res);
    if (mad.degenerate) {
      std::vector<double> abs_b;
      for (double b : design.b) abs_b.push_back(std::abs(b));
      config.epsilon = 1e-6 * median(std::move(abs_b));
      if (!(config.epsilon > 0.0)) config.epsilon = 1e-6;
      err << "warning: MAD scale estimate is zero; falling back to epsilon = 1e-6 median|b| = "
          << format_number(config.epsilon) << "\n";
      epsilon_source = "fallback 1e-6 median|b|";
    } else {
      config.epsilon = epsilon_from_sigma(mad.sigma);
      epsilon_source = "1.34 sqrt(3) sigma_hat";
    }
    sigma_hat = mad.sigma;
  }

  const EstimateResult est = run_estimator(method, design, config);

  struct WeightRow {
    int sensor;
    int sample;
    double weight;
  };
  std::vector<WeightRow> rows;
  {
    int row = 0;
    for (int i = 0; i < data.sensors.size(); ++i) {
      const auto& g = data.ranges.groups[static_cast<std::size_t>(i)];
      for (std::size_t k = 0; k < g.size(); ++k) rows.push_back({i + 1, static_cast<int>(k) + 1, est.weights(row++)});
    }
  }
  std::stable_sort(rows.begin(), rows.end(), [](const WeightRow& a, const WeightRow& b) { return a.weight < b.weight; });
  std::vector<double> wv(est.weights.begin(), est.weights.end());
  const double threshold = kOutlierFlagRatio * median(wv);

  std::ostringstream report;
  if (args.json) {
    nlohmann::json j;
    j["method"] = method_name(method);
    j["x_hat"] = std::vector<double>(est.x_hat.begin(), est.x_hat.end());
    j["alpha"] = est.alpha;
    j["epsilon"] = config.epsilon;
    j["epsilon_source"] = epsilon_source;
    if (sigma_hat) j["sigma_hat"] = *sigma_hat;
    j["iterations"] = est.iterations;
    j["converged"] = est.converged;
    j["lambda"] = est.lambda_star;
    j["outlier_threshold"] = threshold;
    nlohmann::json w = nlohmann::json::array();
    for (const auto& r : rows) {
      w.push_back({{"sensor", r.sensor}, {"sample", r.sample}, {"weight", r.weight},
                   {"suspected_outlier", r.weight < threshold}});
    }
    j["weights"] = w;
    j["objective_trace"] = est.objective_trace;
    report << j.dump(2) << "\n";
  } else {
    report << "method      " << method_name(method) << "\n"
           << "x_hat       " << join_vector(est.x_hat) << "\n"
           << "alpha       " << format_number(est.alpha) << "\n";
    if (sigma_hat) report << "sigma_hat   " << format_number(*sigma_hat) << "\n";
    report << "epsilon     " << format_number(config.epsilon) << " (" << epsilon_source << ")\n"
           << "iterations  " << est.iterations << "\n"
           << "converged   " << (est.converged ? "yes" : "no") << "\n"
           << "lambda      " << format_number(est.lambda_star) << "\n"
           << "weights, ascending (* below " << format_number(threshold) << " = 0.1 x median)\n"
           << "  sensor  sample  weight\n";
    for (const auto& r : rows) {
      report << "  " << std::setw(6) << r.sensor << "  " << std::setw(6) << r.sample << "  "
             << format_number(r.weight) << (r.weight < threshold ? " *" : "") << "\n";
    }
    report << "objective\n";
    for (std::size_t k = 0; k < est.objective_trace.size(); ++k) {
      report << "  " << std::setw(4) << k + 1 << "  " << format_number(est.objective_trace[k]) << "\n";
    }
  }
  if (!args.output.empty()) {
    write_file(args.output, report.str());
  } else {
    out << report.str();
  }
  if (!est.converged) {
    err << "warning: " << method_name(method) << " stopped at the iteration cap without converging\n";
    return kNotConverged;
  }
  return kOk;
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

struct SimulateArgs {
  std::string spec_file;
  std::string builtin;
  std::optional<double> beta;
  std::optional<double> sigma;
  std::optional<int> sensors;
  std::optional<int> trials;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> methods;
  std::string sweep;
  std::string epsilon_rule;
  std::optional<double> epsilon;
  std::optional<long> fisher_samples;
  std::optional<int> workers;
  std::string output;
  bool timing = false;
};

std::string summary_table(const TrialTable& table) {
  std::ostringstream s;
  s << std::left << std::setw(12) << sweep_parameter_name(table.spec.sweep_parameter) << std::setw(11) << "method"
    << std::right << std::setw(12) << "rmse" << std::setw(12) << "crlb" << std::setw(11) << "mean_iters"
    << std::setw(10) << "max_iters" << std::setw(8) << "nonconv" << "\n";
  for (const auto& p : table.points) {
    for (const auto& m : p.methods) {
      s << std::left << std::setw(12) << format_number(p.value) << std::setw(11) << method_name(m.method)
        << std::right << std::fixed << std::setprecision(3) << std::setw(12) << m.rmse << std::setw(12)
        << p.crlb_rmse << std::setprecision(1) << std::setw(11) << m.mean_iters << std::setw(10) << m.max_iters
        << std::setw(8) << m.non_converged << "\n";
      s.unsetf(std::ios::fixed);
    }
  }
  return s.str();
}

int cmd_simulate(const SimulateArgs& args, std::ostream& out, std::ostream&) {
  ExperimentSpec spec;
  if (!args.spec_file.empty()) {
    spec = parse_spec_json(read_file(args.spec_file));
  } else if (args.builtin == "scenario1") {
    spec = scenario_one();
  } else if (args.builtin == "scenario2") {
    spec = scenario_two();
  } else {
    throw UsageError("--builtin must be scenario1 or scenario2");
  }
  if (args.beta) spec.noise.beta = *args.beta;
  if (args.sigma) spec.noise.sigma = *args.sigma;
  if (args.sensors) {
    if (!spec.sensor_positions.empty()) throw UsageError("--sensors needs random sensor placement");
    spec.sensor_count = *args.sensors;
  }
  if (args.trials) spec.trials = *args.trials;
  if (args.seed) spec.seed = *args.seed;
  if (!args.methods.empty()) {
    spec.methods.clear();
    for (const auto& m : args.methods) spec.methods.push_back(parse_method(m));
  }
  if (!args.sweep.empty()) {
    auto [p, values] = parse_sweep(args.sweep);
    spec.sweep_parameter = p;
    spec.sweep_values = std::move(values);
  }
  if (!args.epsilon_rule.empty()) spec.epsilon_rule = parse_epsilon_rule(args.epsilon_rule);
  if (args.epsilon) {
    spec.epsilon_rule = EpsilonRule::kFixed;
    spec.epsilon = *args.epsilon;
  }
  if (args.fisher_samples) spec.fisher_samples = *args.fisher_samples;
  spec.validate();

  const TrialTable table = run_campaign(spec, args.workers.value_or(0));
  const std::string csv = table_to_csv(table, args.timing);
  if (args.output.empty()) {
    out << csv;
    return kOk;
  }
  const std::filesystem::path dir(args.output);
  std::filesystem::create_directories(dir);
  write_file(dir / "results.csv", csv);
  write_file(dir / "results.json", table_to_json(table, args.timing));
  out << summary_table(table);
  out << "wrote " << (dir / "results.csv").string() << " and " << (dir / "results.json").string() << "\n";
  return kOk;
}

// ---------------------------------------------------------------------------
// crlb
// ---------------------------------------------------------------------------

struct CrlbArgs {
  std::vector<std::string> sensors;
  std::string builtin;
  std::string target;
  std::optional<double> sigma;
  std::optional<double> beta;
  std::optional<double> uniform;
  std::string nlos;
  std::optional<int> samples_per_sensor;
  long mc_samples = kDefaultFisherSamples;
  std::uint64_t seed = 0;
};

int cmd_crlb(const CrlbArgs& args, std::ostream& out, std::ostream&) {
  NoiseModel noise{55.0, 0.0, UniformOutliers{4000.0 * std::sqrt(2.0)}};
  int k = 1;
  std::vector<Vector> positions;
  if (!args.builtin.empty()) {
    ExperimentSpec s = args.builtin == "scenario1"   ? scenario_one()
                       : args.builtin == "scenario2" ? scenario_two()
                                                     : throw UsageError("--builtin must be scenario1 or scenario2");
    noise = s.noise;
    k = s.samples_per_sensor;
    positions = s.sensor_positions;
  }
  for (const auto& p : args.sensors) positions.push_back(parse_point(p, "--sensor"));
  if (positions.empty()) throw UsageError("no sensors given (use --sensor X,Y or --builtin scenario2)");
  if (args.target.empty()) throw UsageError("--target is required");
  const Vector x = parse_point(args.target, "--target");
  if (args.sigma) noise.sigma = *args.sigma;
  if (args.beta) noise.beta = *args.beta;
  if (args.uniform) noise.outlier = UniformOutliers{*args.uniform};
  if (!args.nlos.empty()) {
    const std::vector<double> v = parse_numbers(args.nlos, "--nlos");
    if (v.size() != 2) throw UsageError("--nlos expects MU,SIGMA");
    noise.outlier = ShiftedGaussianOutliers{v[0], v[1]};
  }
  if (args.samples_per_sensor) k = *args.samples_per_sensor;
  noise.validate();
  if (k < 1) throw UsageError("--samples-per-sensor must be at least 1");
  const SensorArray sensors(std::move(positions));
  if (x.size() != sensors.dimension()) throw UsageError("--target dimension does not match the sensors");

  Rng rng(args.seed);
  const FisherScalar fisher = fisher_scalar(noise, args.mc_samples, rng);
  const double bound = crlb_rmse(x, sensors, fisher, k);
  out << "fisher       " << format_number(fisher.value) << " (std error " << format_number(fisher.std_error)
      << ", " << fisher.mc_samples << " samples)\n";
  if (noise.beta == 0.0) {
    const FisherScalar exact{1.0 / (noise.sigma * noise.sigma), 0, 0.0};
    out << "fisher_gauss " << format_number(exact.value) << " (1 / sigma^2)\n";
    out << "crlb_gauss   " << format_number(crlb_rmse(x, sensors, exact, k)) << "\n";
  }
  out << "crlb_rmse    " << format_number(bound) << "\n";
  return kOk;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Robust squared-range source localization"};
  app.name("srloc");
  app.require_subcommand(1, 1);

  LocalizeArgs loc;
  auto* localize = app.add_subcommand("localize", "Estimate a source position from a range CSV");
  localize->add_option("input", loc.input, "CSV with columns ax,ay[,az],range")->required();
  localize->add_option("--method", loc.method, "sr-ls, sr-irls, sr-gd or sr-hybrid")->capture_default_str();
  auto* o_sigma = localize->add_option("--sigma", loc.sigma, "Range noise std-dev; epsilon = 1.34 sqrt(3) sigma");
  auto* o_eps = localize->add_option("--epsilon", loc.epsilon, "Loss scale epsilon (squared-range units)");
  auto* o_auto = localize->add_flag("--auto-sigma", loc.auto_sigma, "Estimate sigma by MAD of the SR-LS range residuals");
  o_sigma->excludes(o_eps)->excludes(o_auto);
  o_eps->excludes(o_auto);
  localize->add_flag("--json", loc.json, "Machine-readable report");
  localize->add_option("-o,--output", loc.output, "Write the report to a file");

  SimulateArgs sim;
  auto* simulate = app.add_subcommand("simulate", "Run a Monte Carlo campaign");
  auto* o_spec = simulate->add_option("spec", sim.spec_file, "JSON experiment spec (or a previous results.json)");
  auto* o_builtin = simulate->add_option("--builtin", sim.builtin, "scenario1 or scenario2");
  o_spec->excludes(o_builtin);
  simulate->add_option("--beta", sim.beta, "Contamination ratio");
  simulate->add_option("--sigma", sim.sigma, "Inlier range noise std-dev");
  simulate->add_option("--sensors", sim.sensors, "Number of randomly placed sensors");
  simulate->add_option("--trials", sim.trials, "Monte Carlo trials per sweep point");
  simulate->add_option("--seed", sim.seed, "Master seed");
  simulate->add_option("--method", sim.methods, "Restrict to these methods (repeatable)");
  simulate->add_option("--sweep", sim.sweep, "NAME=START:STEP:STOP or NAME=V1,V2,... with NAME in beta, R, sigma");
  simulate->add_option("--epsilon-rule", sim.epsilon_rule, "literal, range_scaled or fixed");
  simulate->add_option("--epsilon", sim.epsilon, "Fixed epsilon for every trial");
  simulate->add_option("--fisher-samples", sim.fisher_samples, "Monte Carlo samples for the Fisher scalar");
  simulate->add_option("--workers", sim.workers, "Worker threads (default: SRLOC_WORKERS or all cores)");
  simulate->add_option("-o,--output", sim.output, "Directory for results.csv and results.json");
  simulate->add_flag("--timing", sim.timing, "Fill the mean_time_s column (makes output machine dependent)");

  CrlbArgs cr;
  auto* crlb = app.add_subcommand("crlb", "Fisher scalar and CRLB at a target point");
  crlb->add_option("--sensor", cr.sensors, "Sensor position X,Y[,Z] (repeatable)");
  crlb->add_option("--builtin", cr.builtin, "Take noise model (and scenario2 stations) from a scenario");
  crlb->add_option("--target", cr.target, "Target position X,Y[,Z]")->required();
  crlb->add_option("--sigma", cr.sigma, "Inlier range noise std-dev (default 55)");
  crlb->add_option("--beta", cr.beta, "Contamination ratio (default 0)");
  auto* o_uni = crlb->add_option("--uniform", cr.uniform, "Uniform outliers on [-D, D]");
  auto* o_nlos = crlb->add_option("--nlos", cr.nlos, "Shifted Gaussian outliers MU,SIGMA");
  o_uni->excludes(o_nlos);
  crlb->add_option("-K,--samples-per-sensor", cr.samples_per_sensor, "Measurements per sensor");
  crlb->add_option("--mc-samples", cr.mc_samples, "Monte Carlo samples")->capture_default_str();
  crlb->add_option("--seed", cr.seed, "Seed for the Monte Carlo draw");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kInputError;
  }

  try {
    if (localize->parsed()) return cmd_localize(loc, out, err);
    if (simulate->parsed()) {
      if (sim.spec_file.empty() && sim.builtin.empty()) {
        throw UsageError("simulate needs a spec file or --builtin");
      }
      return cmd_simulate(sim, out, err);
    }
    return cmd_crlb(cr, out, err);
  } catch (const ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kInputError;
  } catch (const SchemaError& e) {
    err << "schema error: " << e.what() << "\n";
    return kInputError;
  } catch (const DegenerateGeometryError& e) {
    err << "degenerate geometry: " << e.what() << "\n";
    return kDegenerateGeometry;
  } catch (const CampaignError& e) {
    err << "campaign failed: " << e.what() << "\n";
    return kCampaignFailed;
  } catch (const EstimatorError& e) {
    err << "estimator failed at iteration " << e.iteration() << ": " << e.what() << "\n";
    return kNotConverged;
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return kInputError;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return kInputError;
  }
}

}  // namespace srloc::cli

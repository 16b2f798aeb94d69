#include "srloc/experiment_io.hpp"

#include <charconv>
#include <cmath>
#include <limits>
#include <sstream>

#include <nlohmann/json.hpp>

#include "srloc/errors.hpp"

namespace srloc {

using nlohmann::json;

std::string format_number(double value) {
  if (std::isnan(value)) return "nan";
  if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, value);
  return std::string(buf, res.ptr);
}

namespace {

// Schema walking. Every accessor carries the JSON pointer of the value it reads.
class Node {
 public:
  Node(const json& value, std::string pointer) : value_(value), pointer_(std::move(pointer)) {}

  const std::string& pointer() const { return pointer_; }
  const json& raw() const { return value_; }

  [[noreturn]] void fail(const std::string& message) const { throw SchemaError(pointer_, message); }

  void expect_object(std::initializer_list<std::string_view> allowed) const {
    if (!value_.is_object()) fail("expected an object");
    for (const auto& [key, _] : value_.items()) {
      bool known = false;
      for (std::string_view a : allowed) known = known || key == a;
      if (!known) Node(value_[key], child_pointer(key)).fail("unknown field '" + key + "'");
    }
  }

  bool has(std::string_view key) const { return value_.contains(std::string(key)); }

  Node operator[](std::string_view key) const {
    return Node(value_.at(std::string(key)), child_pointer(key));
  }

  Node at(std::size_t index) const {
    return Node(value_.at(index), pointer_ + "/" + std::to_string(index));
  }

  std::size_t array_size() const {
    if (!value_.is_array()) fail("expected an array");
    return value_.size();
  }

  double number() const {
    if (!value_.is_number()) fail("expected a number");
    const double v = value_.get<double>();
    if (!std::isfinite(v)) fail("expected a finite number");
    return v;
  }

  double positive() const {
    const double v = number();
    if (!(v > 0.0)) fail("must be positive");
    return v;
  }

  long long integer(long long min_value) const {
    if (!value_.is_number_integer()) fail("expected an integer");
    if (value_.is_number_unsigned() &&
        value_.get<unsigned long long>() >
            static_cast<unsigned long long>(std::numeric_limits<long long>::max())) {
      fail("integer out of range");
    }
    const long long v = value_.get<long long>();
    if (v < min_value) fail("must be at least " + std::to_string(min_value));
    return v;
  }

  int int32(int min_value) const {
    const long long v = integer(min_value);
    if (v > std::numeric_limits<int>::max()) fail("integer out of range");
    return static_cast<int>(v);
  }

  std::uint64_t uint64() const {
    if (!value_.is_number_unsigned() && !(value_.is_number_integer() && value_.get<long long>() >= 0)) {
      fail("expected a non-negative integer");
    }
    return value_.get<std::uint64_t>();
  }

  bool boolean() const {
    if (!value_.is_boolean()) fail("expected true or false");
    return value_.get<bool>();
  }

  std::string string() const {
    if (!value_.is_string()) fail("expected a string");
    return value_.get<std::string>();
  }

  template <typename Parse>
  auto enumeration(Parse parse) const {
    const std::string s = string();
    try {
      return parse(s);
    } catch (const UsageError& e) {
      fail(e.what());
    }
  }

  Vector vector(int expected_size) const {
    const std::size_t n = array_size();
    if (expected_size >= 0 && n != static_cast<std::size_t>(expected_size)) {
      fail("expected " + std::to_string(expected_size) + " coordinates");
    }
    Vector v(static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) v(static_cast<Eigen::Index>(i)) = at(i).number();
    return v;
  }

 private:
  std::string child_pointer(std::string_view key) const {
    std::string escaped;
    for (char c : key) {
      if (c == '~') {
        escaped += "~0";
      } else if (c == '/') {
        escaped += "~1";
      } else {
        escaped += c;
      }
    }
    return pointer_ + "/" + escaped;
  }

  const json& value_;
  std::string pointer_;
};

Box parse_box(const Node& node, int n) {
  node.expect_object({"lower", "upper"});
  if (!node.has("lower")) node.fail("missing field 'lower'");
  if (!node.has("upper")) node.fail("missing field 'upper'");
  Box b{node["lower"].vector(n), node["upper"].vector(n)};
  for (int i = 0; i < n; ++i) {
    if (!(b.lower(i) < b.upper(i))) node["upper"].at(static_cast<std::size_t>(i)).fail("upper bound must exceed lower bound");
  }
  return b;
}

void parse_noise(const Node& node, ExperimentSpec& spec) {
  node.expect_object({"sigma", "beta", "outlier", "mode"});
  if (node.has("sigma")) spec.noise.sigma = node["sigma"].positive();
  if (node.has("beta")) {
    const Node b = node["beta"];
    spec.noise.beta = b.number();
    if (spec.noise.beta < 0.0 || spec.noise.beta > 1.0) b.fail("must lie in [0, 1]");
  }
  if (node.has("mode")) spec.outlier_mode = node["mode"].enumeration(parse_outlier_mode);
  if (node.has("outlier")) {
    const Node o = node["outlier"];
    if (!o.raw().is_object() || !o.has("kind")) o.fail("expected an object with a 'kind' field");
    const std::string kind = o["kind"].string();
    if (kind == "uniform") {
      o.expect_object({"kind", "d_max"});
      if (!o.has("d_max")) o.fail("missing field 'd_max'");
      spec.noise.outlier = UniformOutliers{o["d_max"].positive()};
    } else if (kind == "shifted_gaussian") {
      o.expect_object({"kind", "mu", "sigma"});
      if (!o.has("mu")) o.fail("missing field 'mu'");
      if (!o.has("sigma")) o.fail("missing field 'sigma'");
      spec.noise.outlier = ShiftedGaussianOutliers{o["mu"].number(), o["sigma"].positive()};
    } else {
      o["kind"].fail("unknown outlier kind '" + kind + "' (uniform or shifted_gaussian)");
    }
  }
}

void parse_sensors(const Node& node, ExperimentSpec& spec) {
  node.expect_object({"count", "area", "positions"});
  if (node.has("positions")) {
    if (node.has("count") || node.has("area")) {
      node.fail("give either 'positions' or 'count'/'area', not both");
    }
    const Node list = node["positions"];
    std::vector<Vector> positions;
    for (std::size_t i = 0; i < list.array_size(); ++i) positions.push_back(list.at(i).vector(spec.dimension));
    try {
      SensorArray check(positions);
    } catch (const UsageError& e) {
      list.fail(e.what());
    }
    spec.sensor_positions = std::move(positions);
    spec.sensor_count = static_cast<int>(spec.sensor_positions.size());
    return;
  }
  spec.sensor_positions.clear();
  if (node.has("count")) spec.sensor_count = node["count"].int32(spec.dimension + 1);
  if (node.has("area")) spec.sensor_area = parse_box(node["area"], spec.dimension);
}

void parse_estimator(const Node& node, EstimatorConfig& cfg) {
  node.expect_object({"irls_delta", "irls_max_iter", "gd_delta", "gd_max_iter", "hybrid_switch_delta",
                      "condition_frame", "gtrs"});
  if (node.has("irls_delta")) cfg.irls_delta = node["irls_delta"].positive();
  if (node.has("irls_max_iter")) cfg.irls_max_iter = node["irls_max_iter"].int32(1);
  if (node.has("gd_delta")) cfg.gd_delta = node["gd_delta"].positive();
  if (node.has("gd_max_iter")) cfg.gd_max_iter = node["gd_max_iter"].int32(1);
  if (node.has("hybrid_switch_delta")) cfg.hybrid_switch_delta = node["hybrid_switch_delta"].positive();
  if (node.has("condition_frame")) cfg.condition_frame = node["condition_frame"].boolean();
  if (node.has("gtrs")) {
    const Node g = node["gtrs"];
    g.expect_object({"tol", "max_bisect", "max_doublings"});
    if (g.has("tol")) cfg.gtrs.tol = g["tol"].positive();
    if (g.has("max_bisect")) cfg.gtrs.max_bisect = g["max_bisect"].int32(1);
    if (g.has("max_doublings")) cfg.gtrs.max_doublings = g["max_doublings"].int32(1);
  }
}

ExperimentSpec parse_spec_node(const Node& root) {
  root.expect_object({"scenario", "dimension", "sensors", "target_box", "samples_per_sensor", "noise",
                      "trials", "methods", "seed", "sweep", "epsilon", "estimator", "fisher_samples"});
  ExperimentSpec spec;
  if (root.has("scenario")) {
    const Scenario sc = root["scenario"].enumeration(parse_scenario);
    if (sc == Scenario::kScenario1) spec = scenario_one();
    if (sc == Scenario::kScenario2) spec = scenario_two();
    spec.scenario = sc;
  }
  if (root.has("dimension")) {
    const Node d = root["dimension"];
    const int n = d.int32(2);
    if (n != 2 && n != 3) d.fail("must be 2 or 3");
    if (n != spec.dimension && spec.scenario != Scenario::kCustom) {
      d.fail("built-in scenarios are two-dimensional");
    }
    spec.dimension = n;
  }
  if (root.has("sensors")) {
    parse_sensors(root["sensors"], spec);
  } else if (spec.scenario == Scenario::kCustom) {
    root.fail("missing field 'sensors'");
  }
  if (root.has("target_box")) {
    spec.target_box = parse_box(root["target_box"], spec.dimension);
  } else if (spec.scenario == Scenario::kCustom) {
    root.fail("missing field 'target_box'");
  }
  if (root.has("samples_per_sensor")) spec.samples_per_sensor = root["samples_per_sensor"].int32(1);
  if (root.has("noise")) parse_noise(root["noise"], spec);
  if (root.has("trials")) spec.trials = root["trials"].int32(1);
  if (root.has("seed")) spec.seed = root["seed"].uint64();
  if (root.has("methods")) {
    const Node list = root["methods"];
    spec.methods.clear();
    for (std::size_t i = 0; i < list.array_size(); ++i) {
      const Method m = list.at(i).enumeration(parse_method);
      for (Method seen : spec.methods) {
        if (seen == m) list.at(i).fail("duplicate method");
      }
      spec.methods.push_back(m);
    }
    if (spec.methods.empty()) list.fail("at least one method is required");
  }
  if (root.has("sweep")) {
    const Node sw = root["sweep"];
    sw.expect_object({"parameter", "values"});
    if (sw.has("parameter")) spec.sweep_parameter = sw["parameter"].enumeration(parse_sweep_parameter);
    spec.sweep_values.clear();
    if (sw.has("values")) {
      const Node vals = sw["values"];
      for (std::size_t i = 0; i < vals.array_size(); ++i) {
        const double v = vals.at(i).number();
        if (!spec.sweep_values.empty() && !(spec.sweep_values.back() < v)) {
          vals.at(i).fail("sweep values must be strictly increasing");
        }
        spec.sweep_values.push_back(v);
      }
    }
  }
  if (root.has("epsilon")) {
    const Node e = root["epsilon"];
    e.expect_object({"rule", "value"});
    if (e.has("rule")) spec.epsilon_rule = e["rule"].enumeration(parse_epsilon_rule);
    if (e.has("value")) spec.epsilon = e["value"].positive();
    if (spec.epsilon_rule == EpsilonRule::kFixed && !e.has("value")) e.fail("rule 'fixed' needs 'value'");
  }
  if (root.has("estimator")) parse_estimator(root["estimator"], spec.estimator);
  if (root.has("fisher_samples")) spec.fisher_samples = root["fisher_samples"].integer(1000);
  try {
    spec.validate();
  } catch (const UsageError& e) {
    root.fail(e.what());
  }
  return spec;
}

json box_json(const Box& b) {
  return {{"lower", std::vector<double>(b.lower.begin(), b.lower.end())},
          {"upper", std::vector<double>(b.upper.begin(), b.upper.end())}};
}

json spec_json(const ExperimentSpec& s) {
  json j;
  j["scenario"] = scenario_name(s.scenario);
  j["dimension"] = s.dimension;
  if (s.sensor_positions.empty()) {
    j["sensors"] = {{"count", s.sensor_count}, {"area", box_json(s.sensor_area)}};
  } else {
    json list = json::array();
    for (const Vector& p : s.sensor_positions) list.push_back(std::vector<double>(p.begin(), p.end()));
    j["sensors"] = {{"positions", list}};
  }
  j["target_box"] = box_json(s.target_box);
  j["samples_per_sensor"] = s.samples_per_sensor;
  json outlier;
  if (const auto* u = std::get_if<UniformOutliers>(&s.noise.outlier)) {
    outlier = {{"kind", "uniform"}, {"d_max", u->d_max}};
  } else {
    const auto& g = std::get<ShiftedGaussianOutliers>(s.noise.outlier);
    outlier = {{"kind", "shifted_gaussian"}, {"mu", g.mu}, {"sigma", g.sigma}};
  }
  j["noise"] = {{"sigma", s.noise.sigma},
                {"beta", s.noise.beta},
                {"outlier", outlier},
                {"mode", outlier_mode_name(s.outlier_mode)}};
  j["trials"] = s.trials;
  json methods = json::array();
  for (Method m : s.methods) methods.push_back(method_name(m));
  j["methods"] = methods;
  j["seed"] = s.seed;
  j["sweep"] = {{"parameter", sweep_parameter_name(s.sweep_parameter)}, {"values", s.sweep_values}};
  j["epsilon"] = {{"rule", epsilon_rule_name(s.epsilon_rule)}};
  if (s.epsilon_rule == EpsilonRule::kFixed) j["epsilon"]["value"] = s.epsilon;
  const EstimatorConfig& c = s.estimator;
  j["estimator"] = {{"irls_delta", c.irls_delta},
                    {"irls_max_iter", c.irls_max_iter},
                    {"gd_delta", c.gd_delta},
                    {"gd_max_iter", c.gd_max_iter},
                    {"hybrid_switch_delta", c.hybrid_switch_delta},
                    {"condition_frame", c.condition_frame},
                    {"gtrs",
                     {{"tol", c.gtrs.tol},
                      {"max_bisect", c.gtrs.max_bisect},
                      {"max_doublings", c.gtrs.max_doublings}}}};
  j["fisher_samples"] = s.fisher_samples;
  return j;
}

// nlohmann writes NaN as null; keep the distinction for timing explicit instead.
json maybe_number(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

}  // namespace

ExperimentSpec parse_spec_json(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw SchemaError("", std::string("invalid JSON: ") + e.what());
  }
  const Node root(doc, "");
  if (doc.is_object() && doc.contains("spec") && doc.contains("points")) {
    return parse_spec_node(root["spec"]);
  }
  return parse_spec_node(root);
}

std::string spec_to_json(const ExperimentSpec& spec) { return spec_json(spec).dump(2) + "\n"; }

std::string table_to_csv(const TrialTable& table, bool include_timing) {
  std::ostringstream out;
  const int n = table.spec.dimension;
  out << "sweep_value,method,rmse,bias_x,bias_y";
  if (n == 3) out << ",bias_z";
  out << ",mean_iters,max_iters,mean_time_s,crlb_rmse,trials\n";
  for (const SweepPointSummary& p : table.points) {
    for (const MethodSummary& m : p.methods) {
      out << format_number(p.value) << ',' << method_name(m.method) << ',' << format_number(m.rmse);
      for (int i = 0; i < n; ++i) out << ',' << format_number(m.bias(i));
      out << ',' << format_number(m.mean_iters) << ',' << m.max_iters << ','
          << format_number(include_timing ? m.mean_time_s : std::numeric_limits<double>::quiet_NaN())
          << ',' << format_number(p.crlb_rmse) << ',' << m.trials << '\n';
    }
  }
  return out.str();
}

std::string table_to_json(const TrialTable& table, bool include_timing) {
  json doc;
  doc["spec"] = spec_json(table.spec);
  doc["rng"] = kRngName;
  json points = json::array();
  for (const SweepPointSummary& p : table.points) {
    json jp;
    jp["sweep_value"] = p.value;
    jp["crlb_rmse"] = maybe_number(p.crlb_rmse);
    jp["fisher"] = {{"value", p.fisher.value},
                    {"std_error", p.fisher.std_error},
                    {"mc_samples", p.fisher.mc_samples}};
    jp["redraws"] = p.redraws;
    json methods = json::array();
    for (const MethodSummary& m : p.methods) {
      methods.push_back({{"method", method_name(m.method)},
                         {"rmse", m.rmse},
                         {"bias", std::vector<double>(m.bias.begin(), m.bias.end())},
                         {"mean_iters", m.mean_iters},
                         {"max_iters", m.max_iters},
                         {"mean_time_s", include_timing ? json(m.mean_time_s) : json(nullptr)},
                         {"trials", m.trials},
                         {"non_converged", m.non_converged},
                         {"errors", m.errors}});
    }
    jp["methods"] = methods;
    points.push_back(jp);
  }
  doc["points"] = points;
  return doc.dump(2) + "\n";
}

}  // namespace srloc

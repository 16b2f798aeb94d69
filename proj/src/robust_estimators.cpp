#include "srloc/robust_estimators.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <string>

#include "srloc/errors.hpp"

namespace srloc {

// ---------------------------------------------------------------------------
// Objective pieces
// ---------------------------------------------------------------------------

Vector residuals(const Vector& y, const DesignSystem& design) {
  if (y.size() != design.lifted_size()) {
    throw UsageError("lifted vector has " + std::to_string(y.size()) + " entries, expected " +
                     std::to_string(design.lifted_size()));
  }
  return design.a * y - design.b;
}

double objective_J(const Vector& y, const Vector& w, const DesignSystem& design, double epsilon) {
  if (w.size() != design.rows()) {
    throw UsageError("weight vector size does not match the design");
  }
  if (!(w.array() > 0.0).all()) {
    throw UsageError("objective_J: all weights must be strictly positive");
  }
  const Vector e = residuals(y, design);
  const double eps2 = epsilon * epsilon;
  return (w.array() * e.array().square()).sum() + (eps2 * w.array() - w.array().log()).sum();
}

Vector update_weights(const Vector& y, const DesignSystem& design, double epsilon) {
  if (!(epsilon > 0.0)) {
    throw UsageError("update_weights: epsilon must be positive");
  }
  const Vector e = residuals(y, design);
  return (e.array().square() + epsilon * epsilon).inverse().matrix();
}

Vector objective_gradient_y(const Vector& y, const Vector& w, const DesignSystem& design) {
  return 2.0 * design.a.transpose() * (w.asDiagonal() * residuals(y, design));
}

Vector objective_gradient_w(const Vector& y, const Vector& w, const DesignSystem& design,
                            double epsilon) {
  const Vector e = residuals(y, design);
  return (e.array().square() + epsilon * epsilon - w.array().inverse()).matrix();
}

double lipschitz_constant(const DesignSystem& design, const Vector& w) {
  const Matrix m = design.a.transpose() * w.asDiagonal() * design.a;
  return 2.0 * m.norm();
}

Vector extract_position(const Vector& y, int dimension) {
  if (y.size() != dimension + 1) {
    throw UsageError("extract_position: lifted vector must have n + 1 entries");
  }
  return y.head(dimension);
}

// ---------------------------------------------------------------------------
// Frame conditioning
// ---------------------------------------------------------------------------

Vector FrameTransform::to_original(const Vector& y_frame) const {
  const Eigen::Index n = center.size();
  Vector y(n + 1);
  y.head(n) = center + scale * y_frame.head(n);
  y(n) = center.squaredNorm() + 2.0 * scale * center.dot(y_frame.head(n)) +
         scale * scale * y_frame(n);
  return y;
}

Vector FrameTransform::to_frame(const Vector& y_original) const {
  const Eigen::Index n = center.size();
  Vector y(n + 1);
  y.head(n) = (y_original.head(n) - center) / scale;
  y(n) = (y_original(n) - 2.0 * center.dot(y_original.head(n)) + center.squaredNorm()) /
         (scale * scale);
  return y;
}

ConditionedDesign condition_design(const DesignSystem& design) {
  const int n = design.dimension;
  const Eigen::Index rows = design.rows();
  const Matrix anchors = -0.5 * design.a.leftCols(n);

  ConditionedDesign out;
  out.frame.center = anchors.colwise().mean().transpose();
  const double mean_sq =
      (anchors.rowwise() - out.frame.center.transpose()).rowwise().squaredNorm().mean();
  out.frame.scale = std::sqrt(mean_sq);
  if (!(out.frame.scale > 0.0)) {
    throw DegenerateGeometryError("all anchors coincide", std::numeric_limits<double>::infinity());
  }
  const double s = out.frame.scale;
  const Vector& c = out.frame.center;

  DesignSystem& d = out.design;
  d.dimension = n;
  d.a.resize(rows, n + 1);
  d.a.leftCols(n) = -2.0 * (anchors.rowwise() - c.transpose()) / s;
  d.a.col(n).setOnes();
  // b_i + 2 a_i^T c - |c|^2 = r_i^2 - |a_i - c|^2
  d.b = (design.b + 2.0 * anchors * c - Vector::Constant(rows, c.squaredNorm())) / (s * s);
  d.d = design.d;
  d.f = design.f;
  return out;
}

// ---------------------------------------------------------------------------
// Stationarity
// ---------------------------------------------------------------------------

StationarityReport stationarity(const Vector& y, const Vector& w, const DesignSystem& design,
                                double epsilon) {
  const Vector e = residuals(y, design);
  const Matrix m = design.a.transpose() * w.asDiagonal() * design.a;
  const Vector g = design.a.transpose() * (w.asDiagonal() * e);
  const Vector h = design.d * y + design.f;

  StationarityReport r;
  const double hh = h.squaredNorm();
  r.lambda = hh > 0.0 ? -g.dot(h) / hh : 0.0;
  r.y_residual = (g + r.lambda * h).norm();
  r.y_scale = m.norm() * y.norm() + (design.a.transpose() * (w.asDiagonal() * design.b)).norm();
  const Eigen::ArrayXd gap = e.array().square() + epsilon * epsilon - w.array().inverse();
  r.w_residual = (gap * w.array()).abs().maxCoeff();
  return r;
}

// ---------------------------------------------------------------------------
// Estimators
// ---------------------------------------------------------------------------

std::string_view method_name(Method method) {
  switch (method) {
    case Method::kSrLs:
      return "sr_ls";
    case Method::kSrIrls:
      return "sr_irls";
    case Method::kSrGd:
      return "sr_gd";
    case Method::kSrHybrid:
      return "sr_hybrid";
  }
  return "unknown";
}

Method parse_method(std::string_view name) {
  std::string s(name);
  for (char& ch : s) {
    if (ch == '-') ch = '_';
  }
  if (s == "sr_ls") return Method::kSrLs;
  if (s == "sr_irls") return Method::kSrIrls;
  if (s == "sr_gd") return Method::kSrGd;
  if (s == "sr_hybrid") return Method::kSrHybrid;
  throw UsageError("unknown method '" + std::string(name) + "'");
}

void EstimatorConfig::validate() const {
  if (!(epsilon > 0.0) || !std::isfinite(epsilon)) throw UsageError("epsilon must be positive");
  if (!(irls_delta > 0.0) || !(gd_delta > 0.0)) {
    throw UsageError("convergence tolerances must be positive");
  }
  if (irls_max_iter < 1 || gd_max_iter < 1) throw UsageError("iteration caps must be >= 1");
  if (!(hybrid_switch_delta > 0.0)) throw UsageError("hybrid switch threshold must be positive");
}

namespace {

using Clock = std::chrono::steady_clock;

/// Working copy of the problem: the design the iterations run on, the
/// epsilon expressed in that frame, and the map back to original units.
struct Workspace {
  DesignSystem design;
  FrameTransform frame;
  double epsilon = 1.0;
  /// J_original = J_frame + objective_shift
  double objective_shift = 0.0;
  /// w_original = w_frame * weight_factor
  double weight_factor = 1.0;
  const EstimatorConfig* config = nullptr;

  double original_objective(double j_frame) const { return j_frame + objective_shift; }
};

Workspace make_workspace(const DesignSystem& design, const EstimatorConfig& config) {
  config.validate();
  if (design.rows() < design.lifted_size()) {
    throw DegenerateGeometryError("fewer measurements than unknowns",
                                  std::numeric_limits<double>::infinity());
  }
  Workspace ws;
  ws.config = &config;
  if (config.condition_frame) {
    ConditionedDesign cd = condition_design(design);
    const double s = cd.frame.scale;
    ws.design = std::move(cd.design);
    ws.frame = std::move(cd.frame);
    ws.epsilon = config.epsilon / (s * s);
    ws.objective_shift = 4.0 * static_cast<double>(design.rows()) * std::log(s);
    ws.weight_factor = 1.0 / (s * s * s * s);
  } else {
    ws.design = design;
    ws.frame.center = Vector::Zero(design.dimension);
    ws.frame.scale = 1.0;
    ws.epsilon = config.epsilon;
  }
  // Residuals e = A y - b are only resolved to a few ulps of b. A smaller epsilon
  // lets rounding noise set the weights, spreading them over dozens of decades.
  const double resolution =
      1e3 * std::numeric_limits<double>::epsilon() * std::max(1.0, ws.design.b.cwiseAbs().maxCoeff());
  ws.epsilon = std::max(ws.epsilon, resolution);
  return ws;
}

GtrsSolution solve_step(const GtrsProblem& problem, const GtrsOptions& options, int iteration) {
  try {
    return solve_gtrs(problem, options);
  } catch (const DegenerateGeometryError&) {
    throw;
  } catch (const UsageError&) {
    throw;
  } catch (const std::runtime_error& err) {
    throw EstimatorError(std::string("GTRS failure at iteration ") + std::to_string(iteration) +
                             ": " + err.what(),
                         iteration);
  }
}

/// One weighted GTRS solve (the y-update of SR-IRLS).
GtrsSolution irls_solve(const Workspace& ws, const Vector& w, int iteration) {
  const DesignSystem& d = ws.design;
  Matrix q = d.a.transpose() * w.asDiagonal() * d.a;
  Vector c = d.a.transpose() * (w.asDiagonal() * d.b);
  GtrsProblem problem = make_gtrs_problem(std::move(q), std::move(c));
  return solve_step(problem, ws.config->gtrs, iteration);
}

/// Extrapolated proximal-gradient state for SR-GD.
struct GdState {
  Vector y_prev;
  Vector y_prev2;
  double l_prev = 0.0;
  double l_curr = 0.0;
  double omega = 0.0;
};

/// Proximal step on the constraint manifold: returns y(k) given W(k-1).
GtrsSolution gd_step(const Workspace& ws, GdState& state, const Vector& w, int iteration) {
  const DesignSystem& d = ws.design;
  const Matrix m = d.a.transpose() * w.asDiagonal() * d.a;
  state.l_curr = 2.0 * m.norm();
  state.omega = state.l_curr > 0.0 ? std::sqrt(state.l_prev / state.l_curr) / 12.0 : 0.0;
  const Vector y_hat = state.y_prev + state.omega * (state.y_prev - state.y_prev2);

  GtrsProblem problem;
  const Eigen::Index size = d.lifted_size();
  problem.q = state.l_curr * Matrix::Identity(size, size);
  problem.c = -(m * y_hat - d.a.transpose() * (w.asDiagonal() * d.b)) + state.l_curr * y_hat;
  problem.d = d.d;
  problem.f = d.f;
  problem.lambda_low = -state.l_curr;
  GtrsSolution sol = solve_step(problem, ws.config->gtrs, iteration);

  state.y_prev2 = state.y_prev;
  state.y_prev = sol.y;
  state.l_prev = state.l_curr;
  return sol;
}

EstimateResult finalize(const Workspace& ws, Method method, const Vector& y_frame,
                        const Vector& w_frame, double lambda_frame, Clock::time_point start) {
  EstimateResult r;
  r.method = method;
  r.y = ws.frame.to_original(y_frame);
  const int n = ws.design.dimension;
  r.x_hat = r.y.head(n);
  r.alpha = r.y(n);
  r.weights = w_frame * ws.weight_factor;
  r.lambda_star = lambda_frame / (ws.frame.scale * ws.frame.scale);
  r.elapsed_s = std::chrono::duration<double>(Clock::now() - start).count();
  return r;
}

void record(const Workspace& ws, EstimateResult& r, const Vector& y_frame) {
  if (ws.config->record_iterates) r.iterates.push_back(ws.frame.to_original(y_frame));
}

Vector least_squares_start(const DesignSystem& d) {
  Eigen::ColPivHouseholderQR<Matrix> qr(d.a);
  if (qr.rank() < d.lifted_size()) {
    throw DegenerateGeometryError("design matrix is rank deficient", design_condition(d.a));
  }
  return qr.solve(d.b);
}

}  // namespace

EstimateResult sr_ls(const DesignSystem& design, const EstimatorConfig& config) {
  const auto start = Clock::now();
  const Workspace ws = make_workspace(design, config);
  const Vector w = Vector::Ones(ws.design.rows());
  const GtrsSolution sol = irls_solve(ws, w, 1);
  EstimateResult r = finalize(ws, Method::kSrLs, sol.y, w, sol.lambda_star, start);
  r.objective_trace.push_back(ws.original_objective(objective_J(sol.y, w, ws.design, ws.epsilon)));
  r.weights = Vector::Ones(design.rows());
  r.iterations = 1;
  r.converged = true;
  record(ws, r, sol.y);
  return r;
}

namespace {

struct IrlsOutcome {
  Vector y;
  Vector y_before;
  Vector w;
  double lambda = 0.0;
  int iterations = 0;
  bool converged = false;
};

/// Alternating GTRS / weight updates until |dJ| < threshold(J) or the cap.
template <typename Threshold>
IrlsOutcome irls_phase(const Workspace& ws, EstimateResult& r, Threshold threshold) {
  IrlsOutcome out;
  out.w = Vector::Ones(ws.design.rows());
  double j_prev = std::numeric_limits<double>::quiet_NaN();
  for (int k = 1; k <= ws.config->irls_max_iter; ++k) {
    const GtrsSolution sol = irls_solve(ws, out.w, k);
    out.y_before = k == 1 ? sol.y : out.y;
    out.y = sol.y;
    out.lambda = sol.lambda_star;
    out.w = update_weights(out.y, ws.design, ws.epsilon);
    const double j = ws.original_objective(objective_J(out.y, out.w, ws.design, ws.epsilon));
    r.objective_trace.push_back(j);
    record(ws, r, out.y);
    out.iterations = k;
    if (k > 1 && std::abs(j - j_prev) < threshold(j)) {
      out.converged = true;
      break;
    }
    j_prev = j;
  }
  return out;
}

struct GdOutcome {
  Vector y;
  Vector w;
  double lambda = 0.0;
  int iterations = 0;
  bool converged = false;
};

GdOutcome gd_phase(const Workspace& ws, EstimateResult& r, GdState state, Vector w) {
  GdOutcome out;
  for (int k = 1; k <= ws.config->gd_max_iter; ++k) {
    const Vector y_last = state.y_prev;
    const GtrsSolution sol = gd_step(ws, state, w, k);
    w = update_weights(sol.y, ws.design, ws.epsilon);
    r.objective_trace.push_back(ws.original_objective(objective_J(sol.y, w, ws.design, ws.epsilon)));
    record(ws, r, sol.y);
    out.iterations = k;
    out.lambda = sol.lambda_star;
    if ((sol.y - y_last).norm() < ws.config->gd_delta) {
      out.converged = true;
      break;
    }
  }
  out.y = state.y_prev;
  out.w = std::move(w);
  return out;
}

}  // namespace

EstimateResult sr_irls(const DesignSystem& design, const EstimatorConfig& config) {
  const auto start = Clock::now();
  const Workspace ws = make_workspace(design, config);
  EstimateResult trace;
  const double delta = config.irls_delta;
  IrlsOutcome out = irls_phase(ws, trace, [delta](double) { return delta; });
  EstimateResult r = finalize(ws, Method::kSrIrls, out.y, out.w, out.lambda, start);
  r.objective_trace = std::move(trace.objective_trace);
  r.iterates = std::move(trace.iterates);
  r.iterations = out.iterations;
  r.converged = out.converged;
  return r;
}

EstimateResult sr_gd(const DesignSystem& design, const EstimatorConfig& config) {
  const auto start = Clock::now();
  const Workspace ws = make_workspace(design, config);
  GdState state;
  state.y_prev = least_squares_start(ws.design);
  state.y_prev2 = state.y_prev;
  state.l_prev = 0.0;
  EstimateResult trace;
  GdOutcome out = gd_phase(ws, trace, state, Vector::Ones(ws.design.rows()));
  EstimateResult r = finalize(ws, Method::kSrGd, out.y, out.w, out.lambda, start);
  r.objective_trace = std::move(trace.objective_trace);
  r.iterates = std::move(trace.iterates);
  r.iterations = out.iterations;
  r.converged = out.converged;
  return r;
}

EstimateResult sr_hybrid(const DesignSystem& design, const EstimatorConfig& config) {
  const auto start = Clock::now();
  const Workspace ws = make_workspace(design, config);
  EstimateResult trace;
  const double rel = config.hybrid_switch_delta;
  IrlsOutcome irls = irls_phase(ws, trace, [rel](double j) { return rel * (1.0 + std::abs(j)); });

  // Hand-off: the last two IRLS iterates seed the extrapolation and the
  // Lipschitz constant of the current weights stands in for l(k-1).
  GdState state;
  state.y_prev = irls.y;
  state.y_prev2 = irls.y_before;
  state.l_prev = lipschitz_constant(ws.design, irls.w);
  GdOutcome gd = gd_phase(ws, trace, state, irls.w);

  EstimateResult r = finalize(ws, Method::kSrHybrid, gd.y, gd.w, gd.lambda, start);
  r.objective_trace = std::move(trace.objective_trace);
  r.iterates = std::move(trace.iterates);
  r.switch_iteration = irls.iterations;
  r.iterations = irls.iterations + gd.iterations;
  r.converged = gd.converged;
  return r;
}

EstimateResult run_estimator(Method method, const DesignSystem& design,
                             const EstimatorConfig& config) {
  switch (method) {
    case Method::kSrLs:
      return sr_ls(design, config);
    case Method::kSrIrls:
      return sr_irls(design, config);
    case Method::kSrGd:
      return sr_gd(design, config);
    case Method::kSrHybrid:
      return sr_hybrid(design, config);
  }
  throw UsageError("unknown method");
}

}  // namespace srloc

#pragma once

#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "srloc/gtrs.hpp"
#include "srloc/measurement_model.hpp"

namespace srloc {

// ---------------------------------------------------------------------------
// Loss functions and scale tuning
// ---------------------------------------------------------------------------

enum class LossKind { kGemanMcClure, kHuber, kGmConvex };

/// Parses "geman_mcclure", "huber" or "gm_convex"; throws UsageError otherwise.
LossKind parse_loss_kind(std::string_view name);

/// geman_mcclure: x^2 / (x^2 + s^2)
/// huber:         x^2 / 2 inside |x| < s, s |x| - s^2 / 2 outside
/// gm_convex:     geman_mcclure inside |x| < s / sqrt(3), (3 |x| / e0 - 1) / 8 outside, e0 = s / sqrt(3)
double robust_loss(LossKind kind, double x, double scale);

/// Huber cut-off 1.34 sigma carried over to the convexified Geman-McClure knee: 1.34 sqrt(3) sigma.
double epsilon_from_sigma(double sigma);

struct MadEstimate {
  double sigma = 0.0;
  bool degenerate = false;
};

/// 1.4826 * median(|e - median(e)|). Needs at least two residuals.
MadEstimate estimate_sigma_mad(std::span<const double> residuals);

// ---------------------------------------------------------------------------
// Objective pieces
// ---------------------------------------------------------------------------

/// e = A y - b
Vector residuals(const Vector& y, const DesignSystem& design);

/// J(y, w) = sum w_i e_i^2 + sum (eps^2 w_i - ln w_i). Throws UsageError if any w_i <= 0.
double objective_J(const Vector& y, const Vector& w, const DesignSystem& design, double epsilon);

/// w_i = 1 / (e_i^2 + eps^2), the exact minimiser of J over w for fixed y.
Vector update_weights(const Vector& y, const DesignSystem& design, double epsilon);

/// grad_y J = 2 A^T W (A y - b)
Vector objective_gradient_y(const Vector& y, const Vector& w, const DesignSystem& design);

/// dJ/dw_i = e_i^2 + eps^2 - 1 / w_i
Vector objective_gradient_w(const Vector& y, const Vector& w, const DesignSystem& design,
                            double epsilon);

/// l = 2 ||A^T W A||_F, an upper bound on the Lipschitz constant of grad_y J.
double lipschitz_constant(const DesignSystem& design, const Vector& w);

/// Position part of a lifted vector (first n entries).
Vector extract_position(const Vector& y, int dimension);

// ---------------------------------------------------------------------------
// Estimators
// ---------------------------------------------------------------------------

enum class Method { kSrLs, kSrIrls, kSrGd, kSrHybrid };

/// "sr_ls", "sr_irls", "sr_gd", "sr_hybrid"
std::string_view method_name(Method method);
/// Accepts both "sr_irls" and "sr-irls" spellings.
Method parse_method(std::string_view name);

struct EstimatorConfig {
  /// Loss scale in squared-range units. Values below the rounding resolution of
  /// the residuals (about 1e3 ulp of max |b| in the working frame) are raised to it.
  double epsilon = 1.0;
  /// SR-IRLS stops when |J(k) - J(k-1)| < irls_delta.
  double irls_delta = 1e-6;
  int irls_max_iter = 100;
  /// SR-GD stops when ||y(k) - y(k-1)|| < gd_delta, measured in the conditioned frame.
  double gd_delta = 1e-8;
  int gd_max_iter = 5000;
  /// SR-Hybrid leaves the IRLS phase once |dJ| < hybrid_switch_delta * (1 + |J|).
  double hybrid_switch_delta = 1e-4;
  /// Run the iterations on sensors centred at their centroid and scaled to unit RMS radius.
  bool condition_frame = true;
  /// Keep every lifted iterate (tests and diagnostics).
  bool record_iterates = false;
  /// Inner solves run tighter than the standalone default: J moves by about
  /// lambda * |phi| per solve, which has to stay well below the monotone-trace slack.
  GtrsOptions gtrs{.tol = 1e-14};

  void validate() const;
};

struct EstimateResult {
  Method method = Method::kSrLs;
  Vector x_hat;
  double alpha = 0.0;
  Vector y;
  Vector weights;
  std::vector<double> objective_trace;
  int iterations = 0;
  bool converged = false;
  /// Multiplier of the last GTRS solve, in original units.
  double lambda_star = 0.0;
  /// Iteration at which SR-Hybrid switched to gradient steps; -1 otherwise.
  int switch_iteration = -1;
  double elapsed_s = 0.0;
  std::vector<Vector> iterates;
};

EstimateResult sr_ls(const DesignSystem& design, const EstimatorConfig& config = {});
EstimateResult sr_irls(const DesignSystem& design, const EstimatorConfig& config);
EstimateResult sr_gd(const DesignSystem& design, const EstimatorConfig& config);
EstimateResult sr_hybrid(const DesignSystem& design, const EstimatorConfig& config);

EstimateResult run_estimator(Method method, const DesignSystem& design,
                             const EstimatorConfig& config);

// ---------------------------------------------------------------------------
// Frame conditioning
// ---------------------------------------------------------------------------

/// x = center + scale * x'. Lifted vectors map affinely: alpha follows |x|^2.
struct FrameTransform {
  Vector center;
  double scale = 1.0;

  Vector to_original(const Vector& y_frame) const;
  Vector to_frame(const Vector& y_original) const;
};

struct ConditionedDesign {
  DesignSystem design;
  FrameTransform frame;
};

/// Re-expresses the design with anchors centred at their centroid and scaled
/// to unit RMS radius. Residuals scale by 1 / scale^2.
ConditionedDesign condition_design(const DesignSystem& design);

// ---------------------------------------------------------------------------
// Stationarity diagnostics
// ---------------------------------------------------------------------------

struct StationarityReport {
  /// Multiplier minimising || A^T W (A y - b) + lambda (D y + f) ||.
  double lambda = 0.0;
  double y_residual = 0.0;
  /// ||A^T W A|| ||y|| + ||A^T W b||
  double y_scale = 0.0;
  /// max_i |e_i^2 + eps^2 - 1 / w_i| * w_i
  double w_residual = 0.0;
};

StationarityReport stationarity(const Vector& y, const Vector& w, const DesignSystem& design,
                                double epsilon);

}  // namespace srloc

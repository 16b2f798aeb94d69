#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "srloc/errors.hpp"
#include "srloc/robust_estimators.hpp"

namespace srloc {

LossKind parse_loss_kind(std::string_view name) {
  if (name == "geman_mcclure") return LossKind::kGemanMcClure;
  if (name == "huber") return LossKind::kHuber;
  if (name == "gm_convex") return LossKind::kGmConvex;
  throw UsageError("unknown loss kind '" + std::string(name) + "'");
}

double robust_loss(LossKind kind, double x, double scale) {
  if (!(scale > 0.0)) {
    throw UsageError("robust_loss: scale must be positive");
  }
  const double ax = std::abs(x);
  switch (kind) {
    case LossKind::kGemanMcClure:
      return x * x / (x * x + scale * scale);
    case LossKind::kHuber:
      return ax < scale ? 0.5 * x * x : scale * ax - 0.5 * scale * scale;
    case LossKind::kGmConvex: {
      const double knee = scale / std::sqrt(3.0);
      return ax < knee ? x * x / (x * x + scale * scale) : (3.0 * ax / knee - 1.0) / 8.0;
    }
  }
  throw UsageError("robust_loss: unknown loss kind");
}

double epsilon_from_sigma(double sigma) {
  if (!(sigma > 0.0)) {
    throw UsageError("epsilon_from_sigma: sigma must be positive");
  }
  return 1.34 * std::sqrt(3.0) * sigma;
}

namespace {

double median_of(std::vector<double> v) {
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  const double upper = v[mid];
  if (v.size() % 2 == 1) return upper;
  const double lower = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lower + upper);
}

}  // namespace

MadEstimate estimate_sigma_mad(std::span<const double> residuals) {
  if (residuals.size() < 2) {
    throw UsageError("estimate_sigma_mad: need at least two residuals");
  }
  const double center = median_of({residuals.begin(), residuals.end()});
  std::vector<double> dev;
  dev.reserve(residuals.size());
  for (double e : residuals) dev.push_back(std::abs(e - center));
  MadEstimate out;
  out.sigma = 1.4826 * median_of(std::move(dev));
  out.degenerate = out.sigma == 0.0;
  return out;
}

}  // namespace srloc

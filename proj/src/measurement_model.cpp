#include "srloc/measurement_model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <string>

#include "srloc/errors.hpp"

namespace srloc {

namespace {

constexpr double kMaxDesignCondition = 1e10;

double gaussian_pdf(double v, double mean, double sigma) {
  const double z = (v - mean) / sigma;
  return std::exp(-0.5 * z * z) / (sigma * std::sqrt(2.0 * std::numbers::pi));
}

}  // namespace

SensorArray::SensorArray(std::vector<Vector> positions) : positions_(std::move(positions)) {
  if (positions_.empty()) {
    throw UsageError("sensor array is empty");
  }
  dimension_ = static_cast<int>(positions_.front().size());
  if (dimension_ != 2 && dimension_ != 3) {
    throw UsageError("space dimension must be 2 or 3, got " + std::to_string(dimension_));
  }
  if (size() < dimension_ + 1) {
    throw UsageError("need at least n + 1 = " + std::to_string(dimension_ + 1) + " sensors, got " +
                     std::to_string(size()));
  }
  for (std::size_t i = 0; i < positions_.size(); ++i) {
    if (positions_[i].size() != dimension_) {
      throw UsageError("sensor " + std::to_string(i) + " has mismatched dimension");
    }
    if (!positions_[i].allFinite()) {
      throw UsageError("sensor " + std::to_string(i) + " has non-finite coordinates");
    }
    for (std::size_t j = 0; j < i; ++j) {
      if (positions_[i] == positions_[j]) {
        throw UsageError("sensors " + std::to_string(j) + " and " + std::to_string(i) +
                         " coincide");
      }
    }
  }
}

void NoiseModel::validate() const {
  if (!(sigma > 0.0) || !std::isfinite(sigma)) {
    throw UsageError("noise sigma must be positive");
  }
  if (!(beta >= 0.0 && beta <= 1.0)) {
    throw UsageError("contamination ratio beta must lie in [0, 1]");
  }
  if (const auto* u = std::get_if<UniformOutliers>(&outlier)) {
    if (!(u->d_max > 0.0) || !std::isfinite(u->d_max)) {
      throw UsageError("uniform outlier d_max must be positive");
    }
  } else {
    const auto& g = std::get<ShiftedGaussianOutliers>(outlier);
    if (!(g.sigma > 0.0) || !std::isfinite(g.sigma) || !std::isfinite(g.mu)) {
      throw UsageError("shifted Gaussian outlier sigma must be positive");
    }
  }
}

int RangeSet::total() const {
  int n = 0;
  for (const auto& g : groups) n += static_cast<int>(g.size());
  return n;
}

double true_range(const Vector& x, const Vector& a) {
  if (x.size() != a.size()) {
    throw UsageError("true_range: dimension mismatch (" + std::to_string(x.size()) + " vs " +
                     std::to_string(a.size()) + ")");
  }
  return (x - a).norm();
}

namespace {

double sample_outlier(Rng& rng, const NoiseModel& noise) {
  if (const auto* u = std::get_if<UniformOutliers>(&noise.outlier)) {
    return std::uniform_real_distribution<double>(-u->d_max, u->d_max)(rng);
  }
  const auto& g = std::get<ShiftedGaussianOutliers>(noise.outlier);
  return std::normal_distribution<double>(g.mu, g.sigma)(rng);
}

}  // namespace

double sample_noise(Rng& rng, const NoiseModel& noise, bool* is_outlier) {
  const bool outlier = std::bernoulli_distribution(noise.beta)(rng);
  if (is_outlier != nullptr) *is_outlier = outlier;
  return outlier ? sample_outlier(rng, noise)
                 : std::normal_distribution<double>(0.0, noise.sigma)(rng);
}

RangeSet sample_measurements(Rng& rng, const Vector& x, const SensorArray& sensors,
                             const NoiseModel& noise, int samples_per_sensor, OutlierMode mode) {
  noise.validate();
  if (samples_per_sensor < 1) {
    throw UsageError("samples per sensor must be >= 1");
  }
  if (x.size() != sensors.dimension()) {
    throw UsageError("target dimension does not match sensor array");
  }
  const int count = sensors.size();

  std::vector<bool> sensor_is_outlier(static_cast<std::size_t>(count), false);
  if (mode == OutlierMode::kPerSensorCount) {
    const int n_out = static_cast<int>(std::floor(noise.beta * count + 1e-9));
    std::vector<int> order(static_cast<std::size_t>(count));
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    for (int i = 0; i < n_out; ++i) sensor_is_outlier[static_cast<std::size_t>(order[i])] = true;
  }

  RangeSet out;
  out.groups.resize(static_cast<std::size_t>(count));
  out.outlier_flags.resize(static_cast<std::size_t>(count));
  std::normal_distribution<double> inlier(0.0, noise.sigma);
  std::bernoulli_distribution flag(noise.beta);
  for (int i = 0; i < count; ++i) {
    const double d = true_range(x, sensors.position(i));
    auto& group = out.groups[static_cast<std::size_t>(i)];
    auto& flags = out.outlier_flags[static_cast<std::size_t>(i)];
    group.reserve(static_cast<std::size_t>(samples_per_sensor));
    for (int k = 0; k < samples_per_sensor; ++k) {
      const bool outlier =
          mode == OutlierMode::kPerSample ? flag(rng) : sensor_is_outlier[static_cast<std::size_t>(i)];
      const double v = outlier ? sample_outlier(rng, noise) : inlier(rng);
      const double r = d + v;
      group.push_back(r > 0.0 ? r : kRangeClamp);
      flags.push_back(outlier);
    }
  }
  return out;
}

Matrix constraint_matrix(int dimension) {
  Matrix d = Matrix::Zero(dimension + 1, dimension + 1);
  d.topLeftCorner(dimension, dimension).setIdentity();
  return d;
}

Vector constraint_vector(int dimension) {
  Vector f = Vector::Zero(dimension + 1);
  f(dimension) = -0.5;
  return f;
}

double design_condition(const Matrix& a) {
  Matrix scaled = a;
  for (Eigen::Index j = 0; j < scaled.cols(); ++j) {
    const double norm = scaled.col(j).norm();
    if (norm == 0.0) return std::numeric_limits<double>::infinity();
    scaled.col(j) /= norm;
  }
  Eigen::JacobiSVD<Matrix> svd(scaled);
  const auto& s = svd.singularValues();
  if (s(s.size() - 1) == 0.0) return std::numeric_limits<double>::infinity();
  return s(0) / s(s.size() - 1);
}

DesignSystem build_design(const SensorArray& sensors, const RangeSet& ranges) {
  if (static_cast<int>(ranges.groups.size()) != sensors.size()) {
    throw UsageError("range groups (" + std::to_string(ranges.groups.size()) +
                     ") do not match sensor count (" + std::to_string(sensors.size()) + ")");
  }
  const int n = sensors.dimension();
  const int rows = ranges.total();
  DesignSystem sys;
  sys.dimension = n;
  sys.a.resize(rows, n + 1);
  sys.b.resize(rows);
  int row = 0;
  for (int i = 0; i < sensors.size(); ++i) {
    const Vector& ai = sensors.position(i);
    const auto& group = ranges.groups[static_cast<std::size_t>(i)];
    if (group.empty()) {
      throw UsageError("sensor " + std::to_string(i) + " has no range samples");
    }
    const double ai_sq = ai.squaredNorm();
    for (double r : group) {
      if (!(r > 0.0) || !std::isfinite(r)) {
        throw UsageError("ranges must be finite and strictly positive");
      }
      sys.a.row(row).head(n) = -2.0 * ai.transpose();
      sys.a(row, n) = 1.0;
      sys.b(row) = r * r - ai_sq;
      ++row;
    }
  }
  sys.d = constraint_matrix(n);
  sys.f = constraint_vector(n);

  const double cond = design_condition(sys.a);
  if (!(cond <= kMaxDesignCondition)) {
    throw DegenerateGeometryError("design matrix is rank deficient (sensors collinear or coplanar)",
                                  cond);
  }
  return sys;
}

double noise_pdf(const NoiseModel& noise, double v) {
  const double nominal = gaussian_pdf(v, 0.0, noise.sigma);
  double outlier = 0.0;
  if (const auto* u = std::get_if<UniformOutliers>(&noise.outlier)) {
    outlier = std::abs(v) <= u->d_max ? 1.0 / (2.0 * u->d_max) : 0.0;
  } else {
    const auto& g = std::get<ShiftedGaussianOutliers>(noise.outlier);
    outlier = gaussian_pdf(v, g.mu, g.sigma);
  }
  return (1.0 - noise.beta) * nominal + noise.beta * outlier;
}

double noise_pdf_derivative(const NoiseModel& noise, double v) {
  const double s2 = noise.sigma * noise.sigma;
  double d = (1.0 - noise.beta) * (-v / s2) * gaussian_pdf(v, 0.0, noise.sigma);
  if (const auto* g = std::get_if<ShiftedGaussianOutliers>(&noise.outlier)) {
    d += noise.beta * (-(v - g->mu) / (g->sigma * g->sigma)) * gaussian_pdf(v, g->mu, g->sigma);
  }
  return d;
}

}  // namespace srloc

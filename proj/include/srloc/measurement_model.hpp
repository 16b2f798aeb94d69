#pragma once

#include <random>
#include <variant>
#include <vector>

#include <Eigen/Dense>

namespace srloc {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Generator used by every sampling routine. Its name is written into campaign outputs.
using Rng = std::mt19937_64;
inline constexpr const char* kRngName = "mt19937_64";

/// Value substituted for non-positive ranges at generation time.
inline constexpr double kRangeClamp = 1e-5;

/// Known anchor positions. Construction validates R >= n + 1, n in {2, 3},
/// finite coordinates, and pairwise-distinct positions.
class SensorArray {
 public:
  explicit SensorArray(std::vector<Vector> positions);

  int dimension() const { return dimension_; }
  int size() const { return static_cast<int>(positions_.size()); }
  const Vector& position(int i) const { return positions_[static_cast<std::size_t>(i)]; }
  const std::vector<Vector>& positions() const { return positions_; }

 private:
  std::vector<Vector> positions_;
  int dimension_ = 0;
};

struct UniformOutliers {
  double d_max = 0.0;
};

struct ShiftedGaussianOutliers {
  double mu = 0.0;
  double sigma = 0.0;
};

using OutlierModel = std::variant<UniformOutliers, ShiftedGaussianOutliers>;

/// Two-mode error mixture (1 - beta) N(0, sigma^2) + beta H.
struct NoiseModel {
  double sigma = 1.0;
  double beta = 0.0;
  OutlierModel outlier = UniformOutliers{1.0};

  /// Throws UsageError unless sigma > 0, 0 <= beta <= 1 and the outlier parameters are positive.
  void validate() const;
};

/// How outlier flags are assigned when sampling.
enum class OutlierMode {
  kPerSample,       ///< independent Bernoulli(beta) flag per measurement
  kPerSensorCount,  ///< exactly floor(beta * R) sensors, all of their samples contaminated
};

/// Measured ranges grouped per sensor (sensor-major, sample-minor).
struct RangeSet {
  std::vector<std::vector<double>> groups;
  /// Ground-truth contamination flags, same shape as `groups`. Empty for loaded data.
  std::vector<std::vector<bool>> outlier_flags;

  int total() const;
};

/// Linearised squared-range system: rows [-2 a_i^T, 1], b_i = r_i^2 - |a_i|^2,
/// constraint y^T D y + 2 f^T y = 0 with D = diag(I_n, 0), f = (0, ..., 0, -1/2).
struct DesignSystem {
  Matrix a;
  Vector b;
  Matrix d;
  Vector f;
  int dimension = 0;

  int rows() const { return static_cast<int>(b.size()); }
  int lifted_size() const { return dimension + 1; }
};

double true_range(const Vector& x, const Vector& a);

RangeSet sample_measurements(Rng& rng, const Vector& x, const SensorArray& sensors,
                             const NoiseModel& noise, int samples_per_sensor,
                             OutlierMode mode = OutlierMode::kPerSample);

/// Throws DegenerateGeometryError when A is (numerically) rank deficient.
DesignSystem build_design(const SensorArray& sensors, const RangeSet& ranges);

/// Constraint pieces D and f for space dimension n.
Matrix constraint_matrix(int dimension);
Vector constraint_vector(int dimension);

/// Condition number of A after scaling its columns to unit norm.
double design_condition(const Matrix& a);

double noise_pdf(const NoiseModel& noise, double v);
/// d/dv of noise_pdf. The uniform component contributes zero (endpoints excluded).
double noise_pdf_derivative(const NoiseModel& noise, double v);

/// One draw from the mixture, also reporting which mode produced it.
double sample_noise(Rng& rng, const NoiseModel& noise, bool* is_outlier = nullptr);

}  // namespace srloc

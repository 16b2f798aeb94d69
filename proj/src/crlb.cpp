#include "srloc/crlb.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "srloc/errors.hpp"

namespace srloc {

FisherScalar fisher_scalar(const NoiseModel& noise, long mc_samples, Rng& rng) {
  noise.validate();
  if (mc_samples < 1000) {
    throw UsageError("fisher_scalar: at least 1000 Monte Carlo samples are required, got " +
                     std::to_string(mc_samples));
  }
  // Welford running mean/variance of the squared score.
  double mean = 0.0;
  double m2 = 0.0;
  for (long i = 0; i < mc_samples; ++i) {
    const double v = sample_noise(rng, noise);
    const double p = noise_pdf(noise, v);
    const double score = p > 0.0 ? noise_pdf_derivative(noise, v) / p : 0.0;
    const double s2 = score * score;
    const double delta = s2 - mean;
    mean += delta / static_cast<double>(i + 1);
    m2 += delta * (s2 - mean);
  }
  FisherScalar out;
  out.value = mean;
  out.mc_samples = mc_samples;
  out.std_error = std::sqrt(m2 / static_cast<double>(mc_samples - 1)) /
                  std::sqrt(static_cast<double>(mc_samples));
  return out;
}

double crlb_rmse(const Vector& x, const SensorArray& sensors, const FisherScalar& fisher,
                 int samples_per_sensor) {
  const int n = sensors.dimension();
  if (x.size() != n) throw UsageError("crlb_rmse: target dimension mismatch");
  if (samples_per_sensor < 1) throw UsageError("crlb_rmse: samples per sensor must be >= 1");
  Matrix fim = Matrix::Zero(n, n);
  for (const Vector& a : sensors.positions()) {
    const Vector diff = x - a;
    const double dist = diff.norm();
    if (!(dist > 0.0)) throw UsageError("crlb_rmse: target coincides with a sensor");
    const Vector u = diff / dist;
    fim += u * u.transpose();
  }
  // A density with no slope anywhere (pure uniform outliers) carries no
  // information; the bound is infinite rather than a geometry failure.
  if (fisher.value == 0.0) return std::numeric_limits<double>::infinity();
  fim *= fisher.value * static_cast<double>(samples_per_sensor);

  Eigen::SelfAdjointEigenSolver<Matrix> eig(fim, Eigen::EigenvaluesOnly);
  const double lo = eig.eigenvalues()(0);
  const double hi = eig.eigenvalues()(n - 1);
  if (!(hi > 0.0) || !(lo > 1e-12 * hi)) {
    throw DegenerateGeometryError("Fisher information matrix is singular",
                                  lo > 0.0 ? hi / lo : std::numeric_limits<double>::infinity());
  }
  return std::sqrt(eig.eigenvalues().cwiseInverse().sum() / n);
}

}  // namespace srloc

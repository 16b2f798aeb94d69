#pragma once

#include "srloc/measurement_model.hpp"

namespace srloc {

/// Per-measurement Fisher information E[(p'(v) / p(v))^2] of the error density.
struct FisherScalar {
  double value = 0.0;
  long mc_samples = 0;
  double std_error = 0.0;
};

inline constexpr long kDefaultFisherSamples = 1'000'000;

/// Monte Carlo estimate with v drawn from the mixture itself. Needs at least 1000 samples.
FisherScalar fisher_scalar(const NoiseModel& noise, long mc_samples, Rng& rng);

/// sqrt(trace(FIM^{-1}) / n) with FIM = fisher * K * sum_i u_i u_i^T,
/// u_i the unit vector from sensor i to x. Infinite when fisher.value is 0.
/// Throws DegenerateGeometryError when the geometry makes the FIM singular.
double crlb_rmse(const Vector& x, const SensorArray& sensors, const FisherScalar& fisher,
                 int samples_per_sensor = 1);

}  // namespace srloc

#include "srloc/gtrs.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "srloc/errors.hpp"

namespace srloc {

namespace {

double phi_scale(const GtrsProblem& p, const Vector& y) {
  return 1.0 + std::abs(y.dot(p.d * y)) + std::abs(2.0 * p.f.dot(y));
}

void check_problem(const GtrsProblem& p) {
  const Eigen::Index m = p.c.size();
  if (m < 2 || p.q.rows() != m || p.q.cols() != m || p.d.rows() != m || p.d.cols() != m ||
      p.f.size() != m) {
    throw UsageError("GTRS problem pieces have inconsistent sizes");
  }
  if (!p.q.allFinite() || !p.c.allFinite() || !std::isfinite(p.lambda_low)) {
    throw UsageError("GTRS problem has non-finite entries");
  }
  const int n = static_cast<int>(m) - 1;
  if (p.d != constraint_matrix(n) || p.f != constraint_vector(n)) {
    throw UsageError("GTRS constraint must be |x|^2 = alpha (D = diag(I, 0), f = -e/2)");
  }
}

/// The KKT system with alpha eliminated. With S = Q_xx - q q^T / Q_aa = V diag(mu) V^T,
///   x(lambda) = V (g - lambda h) ./ (mu + lambda),  g = V^T (c_x - q c_a / Q_aa),  h = V^T q / (2 Q_aa)
///   alpha(lambda) = (c_a + lambda / 2 - q^T x) / Q_aa
/// so phi is an explicit rational function of lambda with poles at -mu_j.
struct ReducedPencil {
  Matrix basis;
  Vector mu;
  Vector g;
  Vector h;
  Vector cross;
  double q_aa = 0.0;
  double c_a = 0.0;

  double boundary() const { return -mu(0); }
  // Magnitude of the pencil, so that multiplier tolerances follow a rescaling of Q.
  double scale() const { return std::max(mu.cwiseAbs().maxCoeff(), q_aa); }
  double singular_floor() const { return 1e3 * std::numeric_limits<double>::epsilon() * scale(); }

  Vector point(double lambda) const {
    const Eigen::ArrayXd denom = mu.array() + lambda;
    if (!(denom.minCoeff() > singular_floor())) {
      throw NearBoundaryError("Q + lambda D is numerically singular at lambda = " +
                                  std::to_string(lambda),
                              lambda);
    }
    const Eigen::Index n = mu.size();
    Vector y(n + 1);
    y.head(n) = basis * ((g.array() - lambda * h.array()) / denom).matrix();
    y(n) = (c_a + 0.5 * lambda - cross.dot(y.head(n))) / q_aa;
    return y;
  }
};

ReducedPencil reduce(const Matrix& q, const Vector& c) {
  const Eigen::Index n = q.rows() - 1;
  ReducedPencil r;
  r.q_aa = q(n, n);
  if (!(r.q_aa > 0.0)) {
    throw UsageError("GTRS: lifted diagonal entry of Q must be positive");
  }
  r.cross = q.col(n).head(n);
  r.c_a = c(n);
  const Matrix schur = q.topLeftCorner(n, n) - r.cross * r.cross.transpose() / r.q_aa;
  Eigen::SelfAdjointEigenSolver<Matrix> eig(schur);
  r.basis = eig.eigenvectors();
  r.mu = eig.eigenvalues();
  r.g = r.basis.transpose() * (c.head(n) - r.cross * (r.c_a / r.q_aa));
  r.h = r.basis.transpose() * r.cross / (2.0 * r.q_aa);
  return r;
}

double phi_of(const Vector& y) {
  const Eigen::Index n = y.size() - 1;
  return y.head(n).squaredNorm() - y(n);
}

}  // namespace

GtrsProblem make_gtrs_problem(Matrix q, Vector c) {
  const int n = static_cast<int>(c.size()) - 1;
  GtrsProblem p;
  p.lambda_low = lambda_lower_bound(q);
  p.q = std::move(q);
  p.c = std::move(c);
  p.d = constraint_matrix(n);
  p.f = constraint_vector(n);
  return p;
}

double lambda_lower_bound(const Matrix& q) {
  if (q.rows() != q.cols() || q.rows() < 2) {
    throw UsageError("lambda_lower_bound: Q must be square with at least 2 rows");
  }
  if (!q.allFinite()) {
    throw UsageError("lambda_lower_bound: non-finite entries");
  }
  const Eigen::Index n = q.rows() - 1;
  return (-q.diagonal().head(n)).maxCoeff();
}

double lambda_eigen_bound(const Matrix& q) {
  if (q.rows() != q.cols() || q.rows() < 2) {
    throw UsageError("lambda_eigen_bound: Q must be square with at least 2 rows");
  }
  const Eigen::Index n = q.rows() - 1;
  return reduce(q, Vector::Zero(n + 1)).boundary();
}

Vector gtrs_point(const GtrsProblem& problem, double lambda) {
  check_problem(problem);
  return reduce(problem.q, problem.c).point(lambda);
}

double characteristic_phi(const GtrsProblem& problem, double lambda) {
  return phi_of(gtrs_point(problem, lambda));
}

GtrsSolution solve_gtrs(const GtrsProblem& problem, const GtrsOptions& options) {
  check_problem(problem);
  if (!(options.tol > 0.0)) {
    throw UsageError("solve_gtrs: tol must be positive");
  }
  const ReducedPencil pencil = reduce(problem.q, problem.c);

  auto finish = [&](double lambda, const Vector& y, double phi, int iters) {
    GtrsSolution s;
    s.y = y;
    s.lambda_star = lambda;
    s.phi_residual = std::abs(phi);
    s.kkt_residual =
        ((problem.q + lambda * problem.d) * y - problem.c + lambda * problem.f).norm();
    s.bisection_iters = iters;
    return s;
  };
  auto converged = [&](const Vector& y, double phi) {
    return std::abs(phi) <= options.tol * phi_scale(problem, y);
  };

  const double boundary = std::max(problem.lambda_low, pencil.boundary());
  const double unit = std::max(pencil.scale(), std::abs(boundary));

  // Lower end just inside the positive-definite interval. phi blows up towards
  // the pole unless the data are (nearly) orthogonal to its eigenvector, so a
  // negative value first pulls the end closer before giving up on the hard case.
  const double min_delta = 2.0 * pencil.singular_floor();
  double delta = std::max(1e-8 * unit, min_delta);
  double lo = boundary + delta;
  Vector y_lo = pencil.point(lo);
  double phi_lo = phi_of(y_lo);
  while (phi_lo < 0.0 && !converged(y_lo, phi_lo)) {
    if (delta <= min_delta) {
      throw NoRootError("characteristic function is negative at the lower end of the multiplier "
                        "interval (hard case)");
    }
    delta = std::max(0.01 * delta, min_delta);
    lo = boundary + delta;
    y_lo = pencil.point(lo);
    phi_lo = phi_of(y_lo);
  }
  if (converged(y_lo, phi_lo)) return finish(lo, y_lo, phi_lo, 0);

  // Upper end: grow geometrically until phi changes sign.
  double step = unit;
  double hi = boundary + step;
  Vector y_hi = pencil.point(hi);
  double phi_hi = phi_of(y_hi);
  for (int doubling = 0; phi_hi >= 0.0; ++doubling) {
    if (converged(y_hi, phi_hi)) return finish(hi, y_hi, phi_hi, 0);
    if (doubling == options.max_doublings) {
      throw NoRootError("no sign change of the characteristic function after " +
                        std::to_string(options.max_doublings) + " bracket doublings");
    }
    lo = hi;
    step *= 2.0;
    hi = boundary + step;
    y_hi = pencil.point(hi);
    phi_hi = phi_of(y_hi);
  }

  double best_lambda = hi;
  double best_phi = phi_hi;
  Vector best_y = y_hi;
  for (int it = 1; it <= options.max_bisect; ++it) {
    const double mid = 0.5 * (lo + hi);
    const Vector y = pencil.point(mid);
    const double phi = phi_of(y);
    if (std::abs(phi) < std::abs(best_phi)) {
      best_lambda = mid;
      best_phi = phi;
      best_y = y;
    }
    if (converged(y, phi)) return finish(mid, y, phi, it);
    if (phi > 0.0) {
      lo = mid;
    } else {
      hi = mid;
    }
    const double next = 0.5 * (lo + hi);
    // The interval has collapsed to rounding level without phi meeting its tolerance.
    const double resolution =
        std::numeric_limits<double>::epsilon() * std::max({std::abs(lo), std::abs(hi), pencil.singular_floor()});
    if (hi - lo <= resolution || next <= lo || next >= hi) {
      return finish(best_lambda, best_y, best_phi, it);
    }
  }
  throw ConvergenceError("bisection did not converge within " +
                             std::to_string(options.max_bisect) + " halvings",
                         best_y);
}

double gtrs_objective(const GtrsProblem& problem, const Vector& y) {
  return y.dot(problem.q * y) - 2.0 * problem.c.dot(y);
}

double constraint_residual(const Matrix& d, const Vector& f, const Vector& y) {
  return std::abs(y.dot(d * y) + 2.0 * f.dot(y));
}

}  // namespace srloc

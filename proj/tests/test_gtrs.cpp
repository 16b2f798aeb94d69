#include <cmath>
#include <limits>
#include <random>

#include <gtest/gtest.h>

#include "srloc/errors.hpp"
#include "srloc/gtrs.hpp"

namespace srloc {
namespace {

// Lifted least-squares data for sensors `a` and ranges `r`, weighted by `w`.
struct Lifted {
  Matrix a;
  Vector b;
};

Lifted lifted(const std::vector<Vector>& sensors, const std::vector<double>& ranges) {
  const int m = static_cast<int>(sensors.size());
  const int n = static_cast<int>(sensors[0].size());
  Lifted l{Matrix(m, n + 1), Vector(m)};
  for (int i = 0; i < m; ++i) {
    l.a.row(i).head(n) = -2.0 * sensors[i].transpose();
    l.a(i, n) = 1.0;
    l.b(i) = ranges[i] * ranges[i] - sensors[i].squaredNorm();
  }
  return l;
}

GtrsProblem weighted_problem(const Lifted& l, const Vector& w) {
  return make_gtrs_problem(l.a.transpose() * w.asDiagonal() * l.a,
                           l.a.transpose() * w.asDiagonal() * l.b);
}

Vector v2(double x, double y) {
  Vector v(2);
  v << x, y;
  return v;
}

// Random weighted 2-D instance with sensors and target in the unit square.
GtrsProblem random_problem(std::mt19937_64& rng, int sensors) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, 0.05);
  std::vector<Vector> a;
  std::vector<double> r;
  const Vector x = v2(u(rng), u(rng));
  for (int i = 0; i < sensors; ++i) {
    a.push_back(v2(u(rng), u(rng)));
    r.push_back(std::abs((x - a.back()).norm() + noise(rng)));
  }
  Vector w(sensors);
  for (int i = 0; i < sensors; ++i) w(i) = std::exp(3.0 * (u(rng) - 0.5));
  return weighted_problem(lifted(a, r), w);
}

// Brute-force minimum of the objective over the manifold alpha = |x|^2 on a
// regular grid; returns the best value and its point.
std::pair<double, Vector> grid_minimum(const GtrsProblem& p, double lo, double hi, double step) {
  double best = std::numeric_limits<double>::infinity();
  Vector arg(3);
  Vector y(3);
  const int count = static_cast<int>(std::round((hi - lo) / step));
  for (int i = 0; i <= count; ++i) {
    for (int j = 0; j <= count; ++j) {
      y << lo + i * step, lo + j * step, 0.0;
      y(2) = y(0) * y(0) + y(1) * y(1);
      const double f = y.dot(p.q * y) - 2.0 * p.c.dot(y);
      if (f < best) {
        best = f;
        arg = y;
      }
    }
  }
  return {best, arg};
}

TEST(LambdaLowerBound, IdentityGivesMinusOne) { EXPECT_EQ(lambda_lower_bound(Matrix::Identity(3, 3)), -1.0); }

TEST(LambdaLowerBound, ExcludesTheLiftedDiagonal) {
  EXPECT_EQ(lambda_lower_bound(Vector(Eigen::Vector3d(4, 9, 7)).asDiagonal()), -4.0);
}

TEST(LambdaLowerBound, UnitTriangleGram) {
  // A = [[0,0,1],[-2,0,1],[0,-2,1]] gives A^T A = [[4,0,-2],[0,4,-2],[-2,-2,3]].
  Matrix a(3, 3);
  a << 0, 0, 1, -2, 0, 1, 0, -2, 1;
  EXPECT_EQ(lambda_lower_bound(a.transpose() * a), -4.0);
}

TEST(LambdaLowerBound, RejectsNonFiniteEntries) {
  Matrix q = Matrix::Identity(3, 3);
  q(1, 1) = std::numeric_limits<double>::infinity();
  EXPECT_THROW(lambda_lower_bound(q), UsageError);
}

TEST(LambdaEigenBound, NeverBelowTheDiagonalRule) {
  std::mt19937_64 rng(11);
  for (int t = 0; t < 200; ++t) {
    const GtrsProblem p = random_problem(rng, 4 + t % 5);
    const double eig = lambda_eigen_bound(p.q);
    EXPECT_GE(eig, p.lambda_low - 1e-12 * p.q.norm());
    // Q + lambda D is singular exactly at the eigen bound.
    const Eigen::SelfAdjointEigenSolver<Matrix> es(p.q + eig * p.d);
    EXPECT_NEAR(es.eigenvalues()(0), 0.0, 1e-9 * p.q.norm());
  }
}

class UnitTriangle : public ::testing::Test {
 protected:
  std::vector<Vector> sensors{v2(0, 0), v2(1, 0), v2(0, 1)};
  Vector x = v2(0.5, 0.5);

  GtrsProblem problem() const {
    std::vector<double> r;
    for (const auto& a : sensors) r.push_back((x - a).norm());
    return weighted_problem(lifted(sensors, r), Vector::Ones(3));
  }
};

TEST_F(UnitTriangle, PhiVanishesAtZeroForConsistentData) {
  EXPECT_NEAR(characteristic_phi(problem(), 0.0), 0.0, 1e-12);
}

TEST_F(UnitTriangle, PhiTurnsNegativeForHugeMultipliers) {
  const GtrsProblem p = problem();
  EXPECT_LT(characteristic_phi(p, 1e12 * p.q.norm()), 0.0);
}

TEST_F(UnitTriangle, SolverRecoversTheExactPoint) {
  const GtrsSolution s = solve_gtrs(problem());
  EXPECT_NEAR(s.y(0), 0.5, 1e-9);
  EXPECT_NEAR(s.y(1), 0.5, 1e-9);
  EXPECT_NEAR(s.y(2), 0.5, 1e-9);
  EXPECT_NEAR(s.lambda_star, 0.0, 1e-8);
}

TEST(GtrsPoint, MatchesADirectDenseSolve) {
  std::mt19937_64 rng(12);
  for (int t = 0; t < 50; ++t) {
    const GtrsProblem p = random_problem(rng, 6);
    for (double lambda : {lambda_eigen_bound(p.q) + 0.5, 0.0, 3.0, 100.0}) {
      const Vector direct = (p.q + lambda * p.d).fullPivLu().solve(p.c - lambda * p.f);
      EXPECT_LT((gtrs_point(p, lambda) - direct).norm(), 1e-9 * (1 + direct.norm()));
    }
  }
}

TEST(GtrsPoint, SingularMultiplierIsNearBoundary) {
  std::mt19937_64 rng(13);
  const GtrsProblem p = random_problem(rng, 5);
  EXPECT_THROW(gtrs_point(p, lambda_eigen_bound(p.q)), NearBoundaryError);
  EXPECT_THROW(gtrs_point(p, lambda_eigen_bound(p.q) - 1.0), NearBoundaryError);
}

TEST(CharacteristicPhi, StrictlyDecreasingOnTheAdmissibleInterval) {
  std::mt19937_64 rng(14);
  for (int t = 0; t < 100; ++t) {
    const GtrsProblem p = random_problem(rng, 4 + t % 5);
    const double lo = lambda_eigen_bound(p.q);
    double prev = std::numeric_limits<double>::infinity();
    for (double step = 1e-3; step < 1e4; step *= 1.7) {
      const double phi = characteristic_phi(p, lo + step);
      EXPECT_LT(phi, prev);
      prev = phi;
    }
  }
}

TEST(SolveGtrs, MatchesTheManifoldGridMinimum) {
  std::mt19937_64 rng(15);
  for (int t = 0; t < 20; ++t) {
    const GtrsProblem p = random_problem(rng, 6);
    const GtrsSolution s = solve_gtrs(p);
    const double f = gtrs_objective(p, s.y);
    const auto [grid_f, grid_y] = grid_minimum(p, -1.0, 2.0, 1e-2);
    // Grid points are feasible, so the global minimiser can only be lower...
    EXPECT_LE(f, grid_f + 1e-9 * (1 + std::abs(grid_f)));
    // ...and the grid gets within one cell of it.
    EXPECT_LT((s.y.head(2) - grid_y.head(2)).norm(), 1.5e-2);
  }
}

TEST(SolveGtrs, PostConditions) {
  std::mt19937_64 rng(16);
  for (int t = 0; t < 100; ++t) {
    const GtrsProblem p = random_problem(rng, 4 + t % 5);
    const GtrsSolution s = solve_gtrs(p);
    EXPECT_LE(constraint_residual(p.d, p.f, s.y), 1e-8 * (1 + s.y.squaredNorm()));
    EXPECT_LE(s.kkt_residual, 1e-6 * (p.q.norm() * s.y.norm() + p.c.norm()));
    const Eigen::SelfAdjointEigenSolver<Matrix> es(p.q + s.lambda_star * p.d);
    EXPECT_GE(es.eigenvalues()(0), -1e-8 * p.q.norm());
    EXPECT_NEAR(s.phi_residual, std::abs(characteristic_phi(p, s.lambda_star)), 1e-12 * (1 + s.y.squaredNorm()));
  }
}

TEST(SolveGtrs, ScaleCovariance) {
  std::mt19937_64 rng(17);
  for (int t = 0; t < 30; ++t) {
    const GtrsProblem p = random_problem(rng, 5);
    for (double scale : {1e-6, 3.0, 1e8}) {
      const GtrsProblem ps = make_gtrs_problem(scale * p.q, scale * p.c);
      const GtrsSolution a = solve_gtrs(p);
      const GtrsSolution b = solve_gtrs(ps);
      EXPECT_LT((a.y - b.y).norm(), 1e-7 * (1 + a.y.norm()));
      EXPECT_NEAR(b.lambda_star, scale * a.lambda_star, 1e-6 * scale * (1 + std::abs(a.lambda_star)));
    }
  }
}

TEST(SolveGtrs, HardCaseIsReported) {
  // No cross terms and c_x = 0: x(lambda) = 0 for every lambda and
  // phi = -(c_a + lambda / 2), which is already negative at the boundary -1.
  Matrix q = Vector(Eigen::Vector3d(1, 2, 1)).asDiagonal();
  const GtrsProblem p = make_gtrs_problem(q, Vector(Eigen::Vector3d(0, 0, 1)));
  EXPECT_THROW(solve_gtrs(p), NoRootError);
}

TEST(SolveGtrs, BisectionBudgetExhaustionCarriesTheBestIterate) {
  std::mt19937_64 rng(18);
  const GtrsProblem p = random_problem(rng, 6);
  GtrsOptions opts;
  opts.max_bisect = 2;
  try {
    solve_gtrs(p, opts);
    FAIL() << "expected ConvergenceError";
  } catch (const ConvergenceError& e) {
    EXPECT_EQ(e.best_iterate().size(), 3);
  }
}

TEST(SolveGtrs, RejectsMalformedProblems) {
  std::mt19937_64 rng(19);
  GtrsProblem p = random_problem(rng, 5);
  GtrsOptions bad;
  bad.tol = 0.0;
  EXPECT_THROW(solve_gtrs(p, bad), UsageError);
  GtrsProblem wrong_f = p;
  wrong_f.f(2) = -1.0;
  EXPECT_THROW(solve_gtrs(wrong_f), UsageError);
  GtrsProblem wrong_size = p;
  wrong_size.c = Vector::Zero(4);
  EXPECT_THROW(solve_gtrs(wrong_size), UsageError);
}

TEST(SolveGtrs, WideDynamicRangeWeights) {
  // Two sensors almost exactly fitted dominate the weights, as happens late in
  // reweighting; phi must still be evaluated accurately near the boundary.
  std::mt19937_64 rng(20);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int t = 0; t < 50; ++t) {
    std::vector<Vector> a;
    std::vector<double> r;
    const Vector x = v2(u(rng), u(rng));
    for (int i = 0; i < 8; ++i) {
      a.push_back(v2(u(rng), u(rng)));
      r.push_back((x - a.back()).norm() + (i < 2 ? 0.0 : 0.3 * (u(rng) - 0.5)));
    }
    Vector w = Vector::Constant(8, 1.0);
    w(0) = w(1) = 1e9;
    const GtrsProblem p = weighted_problem(lifted(a, r), w);
    const GtrsSolution s = solve_gtrs(p);
    const auto [grid_f, grid_y] = grid_minimum(p, -1.0, 2.0, 1e-2);
    EXPECT_LE(gtrs_objective(p, s.y), grid_f + 1e-9 * (1 + std::abs(grid_f)));
    EXPECT_LE(constraint_residual(p.d, p.f, s.y), 1e-8 * (1 + s.y.squaredNorm()));
  }
}

}  // namespace
}  // namespace srloc

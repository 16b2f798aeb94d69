#pragma once

#include "srloc/measurement_model.hpp"

namespace srloc {

/// minimize y^T Q y - 2 c^T y  subject to  y^T D y + 2 f^T y = 0.
///
/// Q must be symmetric positive semidefinite; D and f are the lifted-position
/// constraint pieces (see constraint_matrix / constraint_vector). `lambda_low`
/// is the caller-supplied lower end of the multiplier interval; the solver
/// never bisects below the Schur-complement bound where Q + lambda D stops
/// being positive definite, whichever is larger.
struct GtrsProblem {
  Matrix q;
  Vector c;
  Matrix d;
  Vector f;
  double lambda_low = 0.0;

  int dimension() const { return static_cast<int>(c.size()) - 1; }
};

struct GtrsSolution {
  Vector y;
  double lambda_star = 0.0;
  double phi_residual = 0.0;
  double kkt_residual = 0.0;
  int bisection_iters = 0;
};

struct GtrsOptions {
  double tol = 1e-10;
  int max_bisect = 200;
  int max_doublings = 200;
};

/// Builds a problem with D, f for the given space dimension and lambda_low from
/// lambda_lower_bound(q).
GtrsProblem make_gtrs_problem(Matrix q, Vector c);

/// max_{i <= n} -Q_ii over the position block (the trailing lifted entry is excluded).
double lambda_lower_bound(const Matrix& q);

/// -1 / lambda_1(D, Q): the multiplier below which Q + lambda D is no longer
/// positive definite. Computed from the Schur complement of the lifted block.
double lambda_eigen_bound(const Matrix& q);

/// y(lambda) = (Q + lambda D)^{-1} (c - lambda f), evaluated with alpha eliminated
/// and the n x n Schur complement diagonalised, which keeps phi accurate next to
/// the boundary even when Q spans many orders of magnitude. Throws
/// NearBoundaryError when Q + lambda D is numerically singular. The constraint
/// must be the lifted one (D = diag(I, 0), f = (0, ..., -1/2)); anything else is
/// a UsageError.
Vector gtrs_point(const GtrsProblem& problem, double lambda);

/// phi(lambda) = y^T D y + 2 f^T y evaluated at y(lambda).
double characteristic_phi(const GtrsProblem& problem, double lambda);

/// Root of phi by bracketing and bisection. Throws NoRootError (hard case: phi
/// stays negative right up to the boundary, or no sign change within the
/// doubling budget) and ConvergenceError (bisection budget exhausted).
GtrsSolution solve_gtrs(const GtrsProblem& problem, const GtrsOptions& options = {});

/// Objective y^T Q y - 2 c^T y (without the constant term).
double gtrs_objective(const GtrsProblem& problem, const Vector& y);

/// |y^T D y + 2 f^T y|
double constraint_residual(const Matrix& d, const Vector& f, const Vector& y);

}  // namespace srloc

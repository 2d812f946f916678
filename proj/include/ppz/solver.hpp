#pragma once

#include <Eigen/Core>
#include <Eigen/SparseCore>
#include <iosfwd>
#include <limits>
#include <string>
#include <vector>

namespace ppz {

// Standard-form convex quadratic program:
//
//   minimize    1/2 x'Qx + c'x
//   subject to  G x <= h
//               E x  = g
//               lo <= x <= hi     (+-inf entries allowed)
//
// Q must be symmetric positive semidefinite. Absolute-value terms are not
// native; callers reformulate |a| with split variables a = a+ - a- before
// assembly.
struct ConvexProgram {
  int num_vars = 0;
  Eigen::SparseMatrix<double> Q;
  Eigen::VectorXd c;
  Eigen::SparseMatrix<double> G;
  Eigen::VectorXd h;
  Eigen::SparseMatrix<double> E;
  Eigen::VectorXd g;
  Eigen::VectorXd lo, hi;

  static constexpr double kInf = std::numeric_limits<double>::infinity();

  static ConvexProgram make(int num_vars);  // zero objective, no rows, free box
  void validate() const;
};

enum class SolveStatus { Optimal, Infeasible, Unbounded, IterLimit };

const char* to_string(SolveStatus status);

// Primal/dual solution with a KKT certificate. Inequality duals are >= 0 and
// correspond row-for-row to G; box duals are reported per bound.
struct SolveResult {
  SolveStatus status = SolveStatus::IterLimit;
  Eigen::VectorXd x;
  Eigen::VectorXd duals_ineq;  // one per G row
  Eigen::VectorXd duals_eq;    // one per E row
  Eigen::VectorXd duals_lo;    // one per variable (0 where bound infinite)
  Eigen::VectorXd duals_hi;
  double objective = 0.0;
  double dual_objective = 0.0;
  double kkt_residual = std::numeric_limits<double>::infinity();
  int iterations = 0;
};

struct SolverOptions {
  double tol = 1e-8;
  int max_iters = 10000;
  bool verbose = false;
};

SolveResult solve(const ConvexProgram& program, double tol);
SolveResult solve(const ConvexProgram& program, const SolverOptions& options);

// Debug dump: matrices in coordinate triplet form.
void dump_program_json(const ConvexProgram& program, std::ostream& out);

}  // namespace ppz

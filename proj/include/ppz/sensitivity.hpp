#pragma once

#include <Eigen/Core>
#include <vector>

#include "ppz/market.hpp"
#include "ppz/solver.hpp"
#include "ppz/spatial.hpp"

namespace ppz {

// Market-only program: drivers stay where they are and the only lever is the
// conversion quantile. Minimizes the negated revenue, so p_star is the
// negative of the best attainable market value; +inf marks an infeasible
// perturbation.
struct MarketOnlySolution {
  SolveStatus status = SolveStatus::IterLimit;
  Eigen::VectorXd y;
  double p_star = 0.0;
  Eigen::VectorXd lambda;  // balance-row duals, one per location
  Eigen::VectorXd nu_lo, nu_hi;  // quantile box duals
  double revenue() const { return -p_star; }
};

ConvexProgram build_market_program(const MarketState& state, const CityGraph& graph,
                                   const ConversionModel& conv, const Eigen::VectorXd& q);

MarketOnlySolution solve_market_only(const MarketState& state, const CityGraph& graph,
                                     const ConversionModel& conv, double tol);
MarketOnlySolution solve_market_only(const MarketState& state, const CityGraph& graph,
                                     const ConversionModel& conv, double tol,
                                     const Eigen::VectorXd& q);

// One balance-row coordinate of the shadow-price check: the dual should match
// the negated derivative of the optimal value where that derivative exists.
struct LocalCheck {
  int location = -1;
  double forward_diff = 0.0;
  double backward_diff = 0.0;
  double central_diff = 0.0;
  double dual = 0.0;
  double gap = 0.0;           // |dual + central_diff|, meaningful when differentiable
  bool differentiable = false;
  bool feasible_plus = true;
  bool feasible_minus = true;
};

std::vector<LocalCheck> verify_local_sensitivity(const MarketState& state, const CityGraph& graph,
                                                 const ConversionModel& conv, double h, double tol);

// One sampled perturbation of the lower-bound inequality
// p*(q) >= p*(0) - lambda'q; slack must be >= -tol everywhere.
struct GlobalCheck {
  Eigen::VectorXd q;
  double p_q = 0.0;     // +inf when the perturbed program is infeasible
  double bound = 0.0;   // p*(0) - lambda'q
  double slack = 0.0;   // p_q - bound
  bool feasible = true;
};

std::vector<GlobalCheck> verify_global_bound(const MarketState& state, const CityGraph& graph,
                                             const ConversionModel& conv,
                                             const std::vector<Eigen::VectorXd>& q_samples,
                                             double tol);

struct CurvePoint {
  double supply = 0.0;
  double revenue = 0.0;
  double forward_diff = 0.0;  // zero at the final grid point
};

// Optimal revenue as the supply at one location sweeps a grid; the forward
// difference is the empirical marginal value of supply and drops step-like
// from ~fare to ~0 where neighborhood supply overtakes demand.
std::vector<CurvePoint> marginal_value_curve(const MarketState& state, const CityGraph& graph,
                                             const ConversionModel& conv, int location,
                                             const std::vector<double>& supply_grid, double tol);

struct SensitivityReport {
  double p_star_0 = 0.0;
  Eigen::VectorXd lambda;
  std::vector<LocalCheck> local_checks;
  std::vector<GlobalCheck> global_checks;
  std::vector<CurvePoint> curve;
};

}  // namespace ppz

#include "ppz/sensitivity.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

namespace ppz {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}

ConvexProgram build_market_program(const MarketState& state, const CityGraph& graph,
                                   const ConversionModel& conv, const Eigen::VectorXd& q) {
  const int n = graph.n;
  state.validate(n);
  conv.validate(n);
  if (q.size() != n) throw std::invalid_argument("build_market_program: q dimension mismatch");

  ConvexProgram prog = ConvexProgram::make(n);
  const Eigen::VectorXd ymin = conv.y_min();
  for (int i = 0; i < n; ++i) {
    prog.lo[i] = std::min(ymin[i], 1.0);
    prog.hi[i] = 1.0;
    prog.c[i] = -state.f[i] * state.d[i];
  }

  std::vector<Eigen::Triplet<double>> gt;
  Eigen::VectorXd h(n);
  for (int i = 0; i < n; ++i) {
    double rhs = -state.r[i] + q[i];
    for (int k : graph.dispatch_mask.rows[static_cast<std::size_t>(i)]) {
      rhs += state.s0[k];
      if (state.d[k] > 0) gt.emplace_back(i, k, state.d[k]);
    }
    h[i] = rhs;
  }
  prog.G.resize(n, n);
  prog.G.setFromTriplets(gt.begin(), gt.end());
  prog.h = h;
  return prog;
}

MarketOnlySolution solve_market_only(const MarketState& state, const CityGraph& graph,
                                     const ConversionModel& conv, double tol,
                                     const Eigen::VectorXd& q) {
  ConvexProgram prog = build_market_program(state, graph, conv, q);
  SolveResult res = solve(prog, tol);

  MarketOnlySolution sol;
  sol.status = res.status;
  if (res.status == SolveStatus::Optimal) {
    sol.y = res.x.cwiseMax(prog.lo).cwiseMin(prog.hi);
    sol.p_star = res.objective;
    sol.lambda = res.duals_ineq;
    sol.nu_lo = res.duals_lo;
    sol.nu_hi = res.duals_hi;
  } else if (res.status == SolveStatus::Infeasible) {
    sol.p_star = kInf;
  } else {
    sol.p_star = std::numeric_limits<double>::quiet_NaN();
  }
  return sol;
}

MarketOnlySolution solve_market_only(const MarketState& state, const CityGraph& graph,
                                     const ConversionModel& conv, double tol) {
  return solve_market_only(state, graph, conv, tol, Eigen::VectorXd::Zero(graph.n));
}

std::vector<LocalCheck> verify_local_sensitivity(const MarketState& state, const CityGraph& graph,
                                                 const ConversionModel& conv, double h,
                                                 double tol) {
  if (!(h > 0)) throw std::invalid_argument("verify_local_sensitivity: step must be positive");
  MarketOnlySolution base = solve_market_only(state, graph, conv, tol * 1e-2);
  if (base.status != SolveStatus::Optimal)
    throw std::runtime_error("verify_local_sensitivity: base problem not solvable");

  std::vector<LocalCheck> checks;
  for (int i = 0; i < graph.n; ++i) {
    Eigen::VectorXd q = Eigen::VectorXd::Zero(graph.n);
    q[i] = h;
    MarketOnlySolution plus = solve_market_only(state, graph, conv, tol * 1e-2, q);
    q[i] = -h;
    MarketOnlySolution minus = solve_market_only(state, graph, conv, tol * 1e-2, q);

    LocalCheck check;
    check.location = i;
    check.dual = base.lambda[i];
    check.feasible_plus = std::isfinite(plus.p_star);
    check.feasible_minus = std::isfinite(minus.p_star);
    if (check.feasible_plus) check.forward_diff = (plus.p_star - base.p_star) / h;
    if (check.feasible_minus) check.backward_diff = (base.p_star - minus.p_star) / h;
    if (check.feasible_plus && check.feasible_minus) {
      check.central_diff = (plus.p_star - minus.p_star) / (2.0 * h);
      check.differentiable = std::abs(check.forward_diff - check.backward_diff) < 10.0 * tol;
      if (check.differentiable) check.gap = std::abs(check.dual + check.central_diff);
    }
    checks.push_back(check);
  }
  return checks;
}

std::vector<GlobalCheck> verify_global_bound(const MarketState& state, const CityGraph& graph,
                                             const ConversionModel& conv,
                                             const std::vector<Eigen::VectorXd>& q_samples,
                                             double tol) {
  MarketOnlySolution base = solve_market_only(state, graph, conv, tol * 1e-2);
  if (base.status != SolveStatus::Optimal)
    throw std::runtime_error("verify_global_bound: base problem not solvable");

  std::vector<GlobalCheck> checks;
  for (const Eigen::VectorXd& q : q_samples) {
    MarketOnlySolution perturbed = solve_market_only(state, graph, conv, tol * 1e-2, q);
    GlobalCheck check;
    check.q = q;
    check.feasible = std::isfinite(perturbed.p_star);
    check.p_q = perturbed.p_star;
    check.bound = base.p_star - base.lambda.dot(q);
    check.slack = check.feasible ? check.p_q - check.bound : kInf;
    checks.push_back(std::move(check));
  }
  return checks;
}

std::vector<CurvePoint> marginal_value_curve(const MarketState& state, const CityGraph& graph,
                                             const ConversionModel& conv, int location,
                                             const std::vector<double>& supply_grid, double tol) {
  if (location < 0 || location >= graph.n)
    throw std::invalid_argument("marginal_value_curve: location out of range");
  for (std::size_t k = 1; k < supply_grid.size(); ++k)
    if (!(supply_grid[k] > supply_grid[k - 1]))
      throw std::invalid_argument("marginal_value_curve: grid must be increasing");

  std::vector<CurvePoint> curve;
  for (double supply : supply_grid) {
    MarketState perturbed = state;
    perturbed.s0[location] = supply;
    MarketOnlySolution sol = solve_market_only(perturbed, graph, conv, tol);
    CurvePoint point;
    point.supply = supply;
    point.revenue = sol.status == SolveStatus::Optimal ? sol.revenue()
                                                       : -std::numeric_limits<double>::infinity();
    curve.push_back(point);
  }
  for (std::size_t k = 0; k + 1 < curve.size(); ++k)
    curve[k].forward_diff =
        (curve[k + 1].revenue - curve[k].revenue) / (curve[k + 1].supply - curve[k].supply);
  return curve;
}

}  // namespace ppz

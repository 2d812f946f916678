#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <utility>
#include <vector>

#include "ppz/market.hpp"
#include "ppz/solver.hpp"
#include "ppz/spatial.hpp"
#include "ppz/transition.hpp"

namespace ppz {

enum class Objective { Bookings, Conversion };

struct PositioningConfig {
  Objective objective = Objective::Bookings;
  double l1_weight = 0.0;      // sparsity penalty on allocation fractions
  double smooth_weight = 0.0;  // penalty on squared quantile differences of neighbors
  double b_min = 1.0;          // bonus floor used in the budget constraint
  double b_max = 20.0;

  void validate() const;
};

// Variable layout of the assembled positioning program:
// [ y (per active location) | A (per allocation pair) | C (per funding pair) ].
struct PositioningLayout {
  int num_active = 0;
  int num_pairs = 0;
  std::vector<std::pair<int, int>> contrib_pairs;  // (account, destination), lex order

  int y_offset() const { return 0; }
  int a_offset() const { return num_active; }
  int c_offset() const { return num_active + num_pairs; }
  int num_vars() const { return c_offset() + static_cast<int>(contrib_pairs.size()); }

  // Row bookkeeping (offsets into G).
  int balance_rows = 0;  // active rows first, then boundary rows of pruned-out locations
  int budget_rows = 0;
  int alloc_simplex_rows = 0;
  int contrib_simplex_rows = 0;
  std::vector<int> budget_row_dest;  // original destination id per budget row
};

struct PositioningProgram {
  ConvexProgram program;
  PositioningLayout layout;
};

struct AllocationPlan {
  ActiveSet active;
  AllocationIndex index;
  Eigen::VectorXd A;  // per pair, [0, 1]
  Eigen::VectorXd y;  // per active location, compact order
  Eigen::VectorXd x;  // implied price modifiers
  Eigen::VectorXd C;  // per funding pair
  std::vector<std::pair<int, int>> contrib_pairs;
  Eigen::VectorXd s_expected;  // full-size expected post-move supply
  double market_objective = 0.0;  // pure objective, no regularization
  double solver_objective = 0.0;
  SolveStatus status = SolveStatus::IterLimit;
  double kkt_residual = 0.0;
  std::uint64_t ledger_version = 0;  // escrow snapshot the plan was built from
};

struct Assignment {
  int driver_id;
  int origin;
  int destination;
};

// Assembles the positioning program over the active set: maximize the
// price-modulated market objective subject to neighborhood balance, supply
// dynamics (substituted), the allocation and funding simplexes, and the
// escrow budget bound at the bonus floor.
PositioningProgram build_positioning_program(const MarketState& state, const CityGraph& graph,
                                             const ConversionModel& conv,
                                             const TransitionModel& trans,
                                             const PositioningConfig& cfg,
                                             const ActiveSet& active,
                                             const AllocationIndex& index);

AllocationPlan solve_positioning(const MarketState& state, const CityGraph& graph,
                                 const ConversionModel& conv, const TransitionModel& trans,
                                 const PositioningConfig& cfg, const ActiveSet& active,
                                 const AllocationIndex& index, double tol);

// Each of the s0_i drivers at i independently draws a destination with the
// plan's allocation fractions (no incentive with the leftover mass).
// Driver ids are assigned origin-major and streams are keyed per driver.
std::vector<Assignment> sample_assignments(const AllocationPlan& plan, const Eigen::VectorXd& s0,
                                           std::uint64_t seed);

}  // namespace ppz

#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <vector>

#include "ppz/escrow.hpp"
#include "ppz/incentive.hpp"
#include "ppz/market.hpp"
#include "ppz/positioning.hpp"
#include "ppz/spatial.hpp"
#include "ppz/transition.hpp"

namespace ppz {

// Expected post-repositioning supply: landing-location totals of incentivized
// movers plus the surviving unallocated fraction at each origin.
Eigen::VectorXd expected_supply(const AllocationIndex& index, const Eigen::VectorXd& A,
                                const Eigen::VectorXd& s0, const TransitionModel& trans);

// Expected count of drivers who comply and earn their incentive, per
// destination.
Eigen::VectorXd expected_responders(const AllocationIndex& index, const Eigen::VectorXd& A,
                                    const Eigen::VectorXd& s0, const TransitionModel& trans);

struct StepOutcome {
  Eigen::VectorXi realized_supply;  // repositionable drivers after movement, pre-dispatch
  Eigen::VectorXi requests;
  Eigen::VectorXi served;
  int conversions = 0;
  double no_pt_bookings = 0.0;   // sum of f over served requests
  double ppz_paid = 0.0;         // bonuses earned this step, dollars
  std::vector<EscrowEvent> events;
};

// One-step market simulation: incentivized drivers move per the transition
// model, requests arrive Poisson with rate d*y at the plan's prices, dispatch
// matches greedily within dispatch neighborhoods, and earned incentives are
// reported as ledger events. Deterministic for a fixed seed. The issued
// records carry the bonus values and funding that the outcome events settle.
StepOutcome simulate_step(const MarketState& state, const AllocationPlan& plan,
                          const std::vector<IssuedPpz>& issued, const CityGraph& graph,
                          const TransitionModel& trans, std::uint64_t seed,
                          std::uint64_t first_timestamp = 0);

}  // namespace ppz

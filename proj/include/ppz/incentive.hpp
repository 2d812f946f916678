#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <string>
#include <vector>

#include "ppz/escrow.hpp"
#include "ppz/positioning.hpp"

namespace ppz {

struct FundingShare {
  int account;
  Cents cents;
};

// Per-destination bonus values and the funding that backs them. Every driver
// sent to the same destination in one epoch receives the identical bonus.
struct BonusPlan {
  ActiveSet active;
  Eigen::VectorXd b;           // per active location, dollars
  Eigen::VectorXd C;           // contribution fraction per funding pair
  std::vector<std::pair<int, int>> contrib_pairs;
  Eigen::VectorXd responders;  // expected responders per active location
  std::vector<std::vector<FundingShare>> funded;  // per active dest: one bonus split, cents
  std::vector<Cents> bonus_cents;                 // per active dest
  SolveStatus status = SolveStatus::IterLimit;
  std::uint64_t ledger_version = 0;
};

// Solves the bonus program: stay as close as possible to the clearance
// targets subject to the expected-payout budget rows, bonus bounds, and the
// funding simplex, with a small sparsity penalty on contributions.
BonusPlan compute_bonuses(const AllocationPlan& plan, const MarketState& state,
                          const CityGraph& graph, const TransitionModel& trans,
                          const Eigen::VectorXd& b_tgt, double b_min, double b_max,
                          double tol, double contrib_l1_weight = 1e-4);

struct IssuedPpz {
  int driver_id;
  int origin;
  int destination;
  Cents bonus;
  std::vector<FundingShare> funding;
  std::string ref_id;
};

// Converts assignments into PpzIssued ledger events, one per driver, funded
// by the plan's per-destination split. Issuance for a destination halts once
// its funding accounts cannot cover another full bonus.
std::vector<IssuedPpz> issue_ppzs(const BonusPlan& bonus, const std::vector<Assignment>& assignments,
                                  EscrowLedger& ledger, const std::string& epoch_label = "");

std::string issued_ppz_to_json(const IssuedPpz& ppz, const std::string& epoch_label);

}  // namespace ppz

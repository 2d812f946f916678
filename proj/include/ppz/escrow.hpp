#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "ppz/spatial.hpp"

namespace ppz {

using Cents = std::int64_t;

enum class EventKind {
  RideAccepted,   // expected fare income enters pending at the ride origin
  RideCanceled,   // pending income reversed
  RideCompleted,  // pending becomes realized, corrected to the actual fare
  PpzIssued,      // bonus reserved against one or more funding accounts
  PpzEarned,      // reservation becomes a payout
  PpzExpired,     // reservation released
};

const char* to_string(EventKind kind);
EventKind event_kind_from_string(const std::string& s);

struct EscrowEvent {
  EventKind kind = EventKind::RideAccepted;
  std::string ref_id;
  int location = -1;  // ride origin or incentive destination
  Cents amount = 0;   // expected fare / realized fare / total reserved bonus
  std::vector<std::pair<int, Cents>> funding;  // PpzIssued only: (account, cents)
  std::uint64_t timestamp = 0;
};

class LedgerError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Event-sourced per-location budget accounts.
//
// available(i) = pending + realized - reserved - paid, and never goes
// negative: a downward fare correction that cannot be absorbed is carried as
// per-account debt and netted against future income at the same location.
// Replaying the log from empty reproduces the state exactly (integer cents).
class EscrowLedger {
 public:
  explicit EscrowLedger(int n);
  EscrowLedger(int n, SparseMask contrib_mask);  // validates PpzIssued funding sources

  void apply_event(const EscrowEvent& event);

  int locations() const { return n_; }
  Cents available(int location) const;
  std::vector<Cents> available_cents() const;
  Eigen::VectorXd available_dollars() const;

  Cents pending_income(int location) const { return accounts_[idx(location)].pending; }
  Cents realized_income(int location) const { return accounts_[idx(location)].realized; }
  Cents reserved_spend(int location) const { return accounts_[idx(location)].reserved; }
  Cents paid_spend(int location) const { return accounts_[idx(location)].paid; }
  Cents debt(int location) const { return accounts_[idx(location)].debt; }

  Cents total_income() const;  // sum of pending + realized
  Cents total_paid() const;

  const std::vector<EscrowEvent>& log() const { return log_; }
  std::uint64_t version() const { return static_cast<std::uint64_t>(log_.size()); }
  std::uint64_t next_timestamp() const { return next_ts_; }

  static EscrowLedger replay(int n, const std::vector<EscrowEvent>& events);

 private:
  struct Account {
    Cents pending = 0;
    Cents realized = 0;
    Cents reserved = 0;
    Cents paid = 0;
    Cents debt = 0;
  };
  struct OpenRide {
    int location;
    Cents amount;         // expected fare at accept
    Cents pending_added;  // portion credited to pending (rest paid down debt)
    Cents debt_paid;
  };
  struct OpenPpz {
    std::vector<std::pair<int, Cents>> funding;
  };

  std::size_t idx(int location) const;
  Cents available_unchecked(std::size_t i) const;
  void credit_income(std::size_t i, Cents amount, Cents* credited, Cents* debt_paid);

  int n_;
  std::optional<SparseMask> contrib_;
  std::vector<Account> accounts_;
  std::vector<EscrowEvent> log_;
  std::unordered_map<std::string, OpenRide> open_rides_;
  std::unordered_map<std::string, OpenPpz> open_ppzs_;
  std::unordered_map<std::string, char> closed_refs_;
  std::uint64_t next_ts_ = 0;
};

// Per-destination bonus level that would clear the surrounding balances given
// the expected responder counts: each account's balance is split evenly over
// the destinations it may fund, pooled per destination, divided by
// max(responders, 1) and clamped to [b_min, b_max].
Eigen::VectorXd clearance_targets(const EscrowLedger& ledger, const CityGraph& graph,
                                  const Eigen::VectorXd& expected_responders,
                                  double b_min, double b_max);

// Newline-delimited JSON event log.
std::string event_to_json(const EscrowEvent& event);
EscrowEvent event_from_json(const std::string& line);
void write_event_log(std::ostream& out, const std::vector<EscrowEvent>& events);
std::vector<EscrowEvent> read_event_log(std::istream& in);

}  // namespace ppz

#include "ppz/escrow.hpp"

#include <algorithm>
#include <istream>
#include <ostream>

#include <nlohmann/json.hpp>

namespace ppz {

using nlohmann::json;

const char* to_string(EventKind kind) {
  switch (kind) {
    case EventKind::RideAccepted: return "RideAccepted";
    case EventKind::RideCanceled: return "RideCanceled";
    case EventKind::RideCompleted: return "RideCompleted";
    case EventKind::PpzIssued: return "PpzIssued";
    case EventKind::PpzEarned: return "PpzEarned";
    case EventKind::PpzExpired: return "PpzExpired";
  }
  return "?";
}

EventKind event_kind_from_string(const std::string& s) {
  if (s == "RideAccepted") return EventKind::RideAccepted;
  if (s == "RideCanceled") return EventKind::RideCanceled;
  if (s == "RideCompleted") return EventKind::RideCompleted;
  if (s == "PpzIssued") return EventKind::PpzIssued;
  if (s == "PpzEarned") return EventKind::PpzEarned;
  if (s == "PpzExpired") return EventKind::PpzExpired;
  throw LedgerError("unknown event kind: " + s);
}

EscrowLedger::EscrowLedger(int n) : n_(n), accounts_(static_cast<std::size_t>(n)) {
  if (n < 0) throw LedgerError("negative location count");
}

EscrowLedger::EscrowLedger(int n, SparseMask contrib_mask) : EscrowLedger(n) {
  if (contrib_mask.n != n) throw LedgerError("contrib mask dimension mismatch");
  contrib_ = std::move(contrib_mask);
}

std::size_t EscrowLedger::idx(int location) const {
  if (location < 0 || location >= n_) throw LedgerError("location out of range");
  return static_cast<std::size_t>(location);
}

Cents EscrowLedger::available_unchecked(std::size_t i) const {
  const Account& a = accounts_[i];
  return a.pending + a.realized - a.reserved - a.paid;
}

Cents EscrowLedger::available(int location) const { return available_unchecked(idx(location)); }

std::vector<Cents> EscrowLedger::available_cents() const {
  std::vector<Cents> out(static_cast<std::size_t>(n_));
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = available_unchecked(i);
  return out;
}

Eigen::VectorXd EscrowLedger::available_dollars() const {
  Eigen::VectorXd out(n_);
  for (int i = 0; i < n_; ++i)
    out[i] = static_cast<double>(available_unchecked(static_cast<std::size_t>(i))) / 100.0;
  return out;
}

Cents EscrowLedger::total_income() const {
  Cents t = 0;
  for (const Account& a : accounts_) t += a.pending + a.realized;
  return t;
}

Cents EscrowLedger::total_paid() const {
  Cents t = 0;
  for (const Account& a : accounts_) t += a.paid;
  return t;
}

void EscrowLedger::credit_income(std::size_t i, Cents amount, Cents* credited, Cents* debt_paid) {
  Account& a = accounts_[i];
  Cents pay = std::min(a.debt, amount);
  a.debt -= pay;
  *debt_paid = pay;
  *credited = amount - pay;
}

void EscrowLedger::apply_event(const EscrowEvent& event) {
  if (event.amount < 0) throw LedgerError("negative amount");
  if (event.timestamp < next_ts_) throw LedgerError("timestamp not monotone");

  auto require_new_ref = [&](const std::string& ref) {
    if (ref.empty()) throw LedgerError("empty ref_id");
    if (open_rides_.count(ref) || open_ppzs_.count(ref) || closed_refs_.count(ref))
      throw LedgerError("duplicate ref_id: " + ref);
  };

  switch (event.kind) {
    case EventKind::RideAccepted: {
      require_new_ref(event.ref_id);
      std::size_t i = idx(event.location);
      Cents credited = 0, debt_paid = 0;
      credit_income(i, event.amount, &credited, &debt_paid);
      accounts_[i].pending += credited;
      open_rides_[event.ref_id] = OpenRide{event.location, event.amount, credited, debt_paid};
      break;
    }
    case EventKind::RideCanceled:
    case EventKind::RideCompleted: {
      auto it = open_rides_.find(event.ref_id);
      if (it == open_rides_.end()) {
        if (closed_refs_.count(event.ref_id)) throw LedgerError("duplicate terminal event: " + event.ref_id);
        throw LedgerError("unknown ride ref: " + event.ref_id);
      }
      const OpenRide ride = it->second;
      open_rides_.erase(it);
      closed_refs_[event.ref_id] = 1;

      // Retract the expected income, then book the realized fare (zero for a
      // cancellation). With no spend in between this reverses the acceptance
      // exactly.
      std::size_t i = idx(ride.location);
      Account& a = accounts_[i];
      a.pending -= ride.pending_added;
      a.debt += ride.debt_paid;
      if (event.kind == EventKind::RideCompleted) {
        Cents credited = 0, debt_paid = 0;
        credit_income(i, event.amount, &credited, &debt_paid);
        a.realized += credited;
      }
      // Funds already reserved or paid out of the expected income cannot be
      // clawed back; floor available at zero and carry the gap as debt.
      Cents avail = available_unchecked(i);
      if (avail < 0) {
        a.realized += -avail;
        a.debt += -avail;
      }
      break;
    }
    case EventKind::PpzIssued: {
      require_new_ref(event.ref_id);
      Cents total = 0;
      for (const auto& [account, cents] : event.funding) {
        if (cents < 0) throw LedgerError("negative funding amount");
        if (contrib_ && !contrib_->contains(account, event.location))
          throw LedgerError("funding account not allowed for destination");
        total += cents;
      }
      if (total != event.amount) throw LedgerError("funding does not sum to reserved bonus");
      std::unordered_map<int, Cents> per_account;
      for (const auto& [account, cents] : event.funding) per_account[account] += cents;
      for (const auto& [account, cents] : per_account) {
        if (available(account) < cents) throw LedgerError("escrow overdraft on issue");
      }
      for (const auto& [account, cents] : event.funding)
        accounts_[idx(account)].reserved += cents;
      open_ppzs_[event.ref_id] = OpenPpz{event.funding};
      break;
    }
    case EventKind::PpzEarned:
    case EventKind::PpzExpired: {
      auto it = open_ppzs_.find(event.ref_id);
      if (it == open_ppzs_.end()) {
        if (closed_refs_.count(event.ref_id)) throw LedgerError("duplicate terminal event: " + event.ref_id);
        throw LedgerError("unknown incentive ref: " + event.ref_id);
      }
      for (const auto& [account, cents] : it->second.funding) {
        Account& a = accounts_[idx(account)];
        a.reserved -= cents;
        if (event.kind == EventKind::PpzEarned) a.paid += cents;
      }
      closed_refs_[event.ref_id] = 1;
      open_ppzs_.erase(it);
      break;
    }
  }

  log_.push_back(event);
  next_ts_ = event.timestamp + 1;
}

EscrowLedger EscrowLedger::replay(int n, const std::vector<EscrowEvent>& events) {
  EscrowLedger ledger(n);
  for (const EscrowEvent& e : events) ledger.apply_event(e);
  return ledger;
}

Eigen::VectorXd clearance_targets(const EscrowLedger& ledger, const CityGraph& graph,
                                  const Eigen::VectorXd& expected_responders,
                                  double b_min, double b_max) {
  if (expected_responders.size() != graph.n)
    throw std::invalid_argument("clearance_targets: dimension mismatch");
  if ((expected_responders.array() < 0).any())
    throw std::invalid_argument("clearance_targets: negative responders");

  const Eigen::VectorXd e = ledger.available_dollars();
  Eigen::VectorXd pooled = Eigen::VectorXd::Zero(graph.n);
  for (int i = 0; i < graph.n; ++i) {
    const auto& dests = graph.contrib_mask.rows[static_cast<std::size_t>(i)];
    if (dests.empty()) continue;
    double share = e[i] / static_cast<double>(dests.size());
    for (int j : dests) pooled[j] += share;
  }
  Eigen::VectorXd targets(graph.n);
  for (int j = 0; j < graph.n; ++j) {
    double denom = std::max(expected_responders[j], 1.0);
    targets[j] = std::clamp(pooled[j] / denom, b_min, b_max);
  }
  return targets;
}

std::string event_to_json(const EscrowEvent& event) {
  json j;
  j["kind"] = to_string(event.kind);
  j["ref"] = event.ref_id;
  j["location"] = event.location;
  j["amount_cents"] = event.amount;
  j["ts"] = event.timestamp;
  if (event.kind == EventKind::PpzIssued) {
    json f = json::array();
    for (const auto& [account, cents] : event.funding) f.push_back({account, cents});
    j["funding"] = std::move(f);
  }
  return j.dump();
}

EscrowEvent event_from_json(const std::string& line) {
  json j = json::parse(line);
  EscrowEvent e;
  e.kind = event_kind_from_string(j.at("kind").get<std::string>());
  e.ref_id = j.at("ref").get<std::string>();
  e.location = j.value("location", -1);
  e.amount = j.value("amount_cents", Cents{0});
  e.timestamp = j.value("ts", std::uint64_t{0});
  if (j.contains("funding")) {
    for (const auto& pair : j["funding"])
      e.funding.emplace_back(pair.at(0).get<int>(), pair.at(1).get<Cents>());
  }
  return e;
}

void write_event_log(std::ostream& out, const std::vector<EscrowEvent>& events) {
  for (const EscrowEvent& e : events) out << event_to_json(e) << '\n';
}

std::vector<EscrowEvent> read_event_log(std::istream& in) {
  std::vector<EscrowEvent> events;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    events.push_back(event_from_json(line));
  }
  return events;
}

}  // namespace ppz

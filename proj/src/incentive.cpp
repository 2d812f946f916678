#include "ppz/incentive.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "ppz/dynamics.hpp"

namespace ppz {

namespace {

// Integer split of `total` cents proportional to `weights`, largest remainder.
std::vector<Cents> proportional_split(Cents total, const std::vector<double>& weights) {
  double wsum = std::accumulate(weights.begin(), weights.end(), 0.0);
  std::vector<Cents> out(weights.size(), 0);
  if (total <= 0 || wsum <= 0) return out;
  std::vector<std::pair<double, std::size_t>> frac;
  Cents assigned = 0;
  for (std::size_t k = 0; k < weights.size(); ++k) {
    double raw = static_cast<double>(total) * weights[k] / wsum;
    out[k] = static_cast<Cents>(std::floor(raw));
    assigned += out[k];
    frac.emplace_back(raw - std::floor(raw), k);
  }
  std::sort(frac.begin(), frac.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  for (std::size_t k = 0; assigned < total && k < frac.size(); ++k) {
    out[frac[k].second] += 1;
    ++assigned;
  }
  // Weights are nonnegative and wsum > 0, so the remainder always fits.
  return out;
}

}  // namespace

BonusPlan compute_bonuses(const AllocationPlan& plan, const MarketState& state,
                          const CityGraph& graph, const TransitionModel& trans,
                          const Eigen::VectorXd& b_tgt, double b_min, double b_max,
                          double tol, double contrib_l1_weight) {
  if (b_tgt.size() != graph.n) throw std::invalid_argument("compute_bonuses: target dimension mismatch");
  if (!(b_min > 0) || b_min > b_max) throw std::invalid_argument("compute_bonuses: bad bonus bounds");

  const ActiveSet& active = plan.active;
  const int na = active.size();
  const int nq = static_cast<int>(plan.contrib_pairs.size());

  Eigen::VectorXd responders_full = expected_responders(plan.index, plan.A, state.s0, trans);

  BonusPlan bonus;
  bonus.active = active;
  bonus.contrib_pairs = plan.contrib_pairs;
  bonus.ledger_version = plan.ledger_version;
  bonus.responders.resize(na);
  for (int k = 0; k < na; ++k) bonus.responders[k] = responders_full[active.kept[static_cast<std::size_t>(k)]];

  // Variables [b | C]. Destinations with no expected responders keep a
  // vacuous budget row, so their optimum is the clamped target.
  ConvexProgram prog = ConvexProgram::make(na + nq);
  std::vector<Eigen::Triplet<double>> qt;
  for (int k = 0; k < na; ++k) {
    int orig = active.kept[static_cast<std::size_t>(k)];
    qt.emplace_back(k, k, 2.0);
    prog.c[k] = -2.0 * std::clamp(b_tgt[orig], b_min, b_max);
    prog.lo[k] = b_min;
    prog.hi[k] = b_max;
  }
  for (int q = 0; q < nq; ++q) {
    prog.c[na + q] = contrib_l1_weight;
    prog.lo[na + q] = 0.0;
    prog.hi[na + q] = 1.0;
  }
  prog.Q.setFromTriplets(qt.begin(), qt.end());

  std::vector<Eigen::Triplet<double>> gt;
  std::vector<double> h;
  int row = 0;
  std::vector<int> budget_row(static_cast<std::size_t>(graph.n), -1);
  for (int k = 0; k < na; ++k) {
    int orig = active.kept[static_cast<std::size_t>(k)];
    if (bonus.responders[k] <= 0) continue;
    budget_row[static_cast<std::size_t>(orig)] = row;
    gt.emplace_back(row, k, bonus.responders[k]);
    h.push_back(0.0);
    ++row;
  }
  for (int q = 0; q < nq; ++q) {
    const auto& [i, j] = plan.contrib_pairs[static_cast<std::size_t>(q)];
    int rr = budget_row[static_cast<std::size_t>(j)];
    if (rr >= 0) gt.emplace_back(rr, na + q, -state.e[i]);
  }
  {
    int last_account = -1;
    for (int q = 0; q < nq; ++q) {
      int i = plan.contrib_pairs[static_cast<std::size_t>(q)].first;
      if (i != last_account) {
        h.push_back(1.0);
        ++row;
        last_account = i;
      }
      gt.emplace_back(row - 1, na + q, 1.0);
    }
  }
  prog.G.resize(row, prog.num_vars);
  prog.G.setFromTriplets(gt.begin(), gt.end());
  prog.h = Eigen::Map<Eigen::VectorXd>(h.data(), static_cast<Eigen::Index>(h.size()));

  SolveResult res = solve(prog, tol);
  bonus.status = res.status;
  bonus.b.resize(na);
  bonus.C = Eigen::VectorXd::Zero(nq);
  if (res.status != SolveStatus::Optimal) return bonus;

  for (int k = 0; k < na; ++k) bonus.b[k] = std::clamp(res.x[k], b_min, b_max);
  if (nq) bonus.C = res.x.tail(nq).cwiseMax(0.0).cwiseMin(1.0);

  // Per-destination funding split in integer cents, reused for every issued
  // incentive at that destination.
  bonus.bonus_cents.assign(static_cast<std::size_t>(na), 0);
  bonus.funded.assign(static_cast<std::size_t>(na), {});
  Cents lo_cents = static_cast<Cents>(std::llround(b_min * 100.0));
  Cents hi_cents = static_cast<Cents>(std::llround(b_max * 100.0));
  for (int k = 0; k < na; ++k) {
    int orig = active.kept[static_cast<std::size_t>(k)];
    Cents cents = std::clamp<Cents>(static_cast<Cents>(std::llround(bonus.b[k] * 100.0)), lo_cents, hi_cents);
    bonus.bonus_cents[static_cast<std::size_t>(k)] = cents;
    if (bonus.responders[k] <= 0) continue;  // nothing to pay, no funding split
    std::vector<int> accounts;
    std::vector<double> weights;
    for (int q = 0; q < nq; ++q) {
      const auto& [i, j] = plan.contrib_pairs[static_cast<std::size_t>(q)];
      if (j != orig || bonus.C[q] <= 0) continue;
      accounts.push_back(i);
      weights.push_back(bonus.C[q] * state.e[i]);
    }
    std::vector<Cents> split = proportional_split(cents, weights);
    auto& dest_funding = bonus.funded[static_cast<std::size_t>(k)];
    for (std::size_t a = 0; a < accounts.size(); ++a)
      if (split[a] > 0) dest_funding.push_back({accounts[a], split[a]});
  }
  return bonus;
}

std::vector<IssuedPpz> issue_ppzs(const BonusPlan& bonus, const std::vector<Assignment>& assignments,
                                  EscrowLedger& ledger, const std::string& epoch_label) {
  if (bonus.ledger_version != ledger.version())
    throw LedgerError("stale bonus plan: ledger moved since the snapshot");

  std::vector<IssuedPpz> issued;
  std::vector<char> halted(static_cast<std::size_t>(bonus.active.size()), 0);

  for (const Assignment& a : assignments) {
    if (!bonus.active.contains(a.destination)) continue;
    int k = bonus.active.compact(a.destination);
    if (halted[static_cast<std::size_t>(k)]) continue;
    Cents cents = bonus.bonus_cents[static_cast<std::size_t>(k)];
    const auto& template_funding = bonus.funded[static_cast<std::size_t>(k)];
    if (cents <= 0 || template_funding.empty()) {
      halted[static_cast<std::size_t>(k)] = 1;
      continue;
    }
    bool afford = std::all_of(template_funding.begin(), template_funding.end(),
                              [&](const FundingShare& share) {
                                return ledger.available(share.account) >= share.cents;
                              });
    if (!afford) {
      halted[static_cast<std::size_t>(k)] = 1;
      continue;
    }

    IssuedPpz rec;
    rec.driver_id = a.driver_id;
    rec.origin = a.origin;
    rec.destination = a.destination;
    rec.bonus = cents;
    rec.funding = template_funding;
    rec.ref_id = (epoch_label.empty() ? std::string("ppz") : epoch_label + "-ppz") + "-" +
                 std::to_string(a.driver_id);

    EscrowEvent event;
    event.kind = EventKind::PpzIssued;
    event.ref_id = rec.ref_id;
    event.location = a.destination;
    event.amount = cents;
    for (const FundingShare& share : template_funding)
      event.funding.emplace_back(share.account, share.cents);
    event.timestamp = ledger.next_timestamp();
    ledger.apply_event(event);

    issued.push_back(std::move(rec));
  }
  return issued;
}

std::string issued_ppz_to_json(const IssuedPpz& ppz, const std::string& epoch_label) {
  nlohmann::json j;
  j["driver_id"] = ppz.driver_id;
  j["origin"] = ppz.origin;
  j["destination"] = ppz.destination;
  j["bonus_cents"] = ppz.bonus;
  nlohmann::json funding = nlohmann::json::array();
  for (const FundingShare& share : ppz.funding) funding.push_back({share.account, share.cents});
  j["funding"] = std::move(funding);
  j["epoch"] = epoch_label;
  return j.dump();
}

}  // namespace ppz

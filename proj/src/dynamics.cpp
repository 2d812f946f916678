#include "ppz/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

#include "ppz/rng.hpp"

namespace ppz {

namespace {
constexpr std::uint64_t kMoveTag = 0x6d6f7665;     // per-driver movement stream
constexpr std::uint64_t kDemandTag = 0x64656d64;   // per-location request stream
}  // namespace

const std::vector<TransitionModel::Landing>& TransitionModel::landings(int origin, int dest) const {
  static const std::vector<Landing> empty;
  auto it = p_dest.find({origin, dest});
  return it == p_dest.end() ? empty : it->second;
}

double TransitionModel::comply_prob(int origin, int dest) const {
  for (const Landing& l : landings(origin, dest))
    if (l.location == dest) return l.prob;
  return 0.0;
}

void TransitionModel::validate(int n) const {
  if (p_stay < 0 || p_stay > 1) throw std::invalid_argument("p_stay outside [0,1]");
  for (const auto& [pair, lands] : p_dest) {
    if (pair.first < 0 || pair.first >= n || pair.second < 0 || pair.second >= n)
      throw std::invalid_argument("transition pair out of range");
    double total = 0;
    for (const Landing& l : lands) {
      if (l.location < 0 || l.location >= n) throw std::invalid_argument("landing out of range");
      if (l.prob < 0 || l.prob > 1) throw std::invalid_argument("landing prob outside [0,1]");
      total += l.prob;
    }
    if (total > 1 + 1e-9) throw std::invalid_argument("landing probabilities exceed 1");
  }
}

TransitionModel TransitionModel::simple(double p_stay,
                                        const std::vector<std::pair<int, int>>& pairs,
                                        double p_comply, double p_fail_stay) {
  TransitionModel t;
  t.p_stay = p_stay;
  for (const auto& [i, j] : pairs) {
    std::vector<Landing> lands;
    if (p_comply > 0) lands.push_back({j, p_comply});
    if (p_fail_stay > 0) lands.push_back({i, p_fail_stay});
    t.p_dest[{i, j}] = std::move(lands);
  }
  return t;
}

Eigen::VectorXd expected_supply(const AllocationIndex& index, const Eigen::VectorXd& A,
                                const Eigen::VectorXd& s0, const TransitionModel& trans) {
  const int n = static_cast<int>(s0.size());
  if (A.size() != index.size()) throw std::invalid_argument("expected_supply: dimension mismatch");

  Eigen::VectorXd allocated = Eigen::VectorXd::Zero(n);  // A 1 per origin
  Eigen::VectorXd s = Eigen::VectorXd::Zero(n);
  for (int p = 0; p < index.size(); ++p) {
    const auto& [o, j] = index.pairs[static_cast<std::size_t>(p)];
    allocated[o] += A[p];
    for (const auto& land : trans.landings(o, j)) s[land.location] += land.prob * A[p] * s0[o];
  }
  for (int i = 0; i < n; ++i) {
    if (allocated[i] > 1 + 1e-9) throw std::invalid_argument("expected_supply: origin row sum exceeds 1");
    s[i] += trans.p_stay * (1.0 - allocated[i]) * s0[i];
  }
  return s;
}

Eigen::VectorXd expected_responders(const AllocationIndex& index, const Eigen::VectorXd& A,
                                    const Eigen::VectorXd& s0, const TransitionModel& trans) {
  const int n = static_cast<int>(s0.size());
  if (A.size() != index.size()) throw std::invalid_argument("expected_responders: dimension mismatch");
  Eigen::VectorXd out = Eigen::VectorXd::Zero(n);
  for (int p = 0; p < index.size(); ++p) {
    const auto& [o, j] = index.pairs[static_cast<std::size_t>(p)];
    out[j] += trans.comply_prob(o, j) * A[p] * s0[o];
  }
  return out;
}

StepOutcome simulate_step(const MarketState& state, const AllocationPlan& plan,
                          const std::vector<IssuedPpz>& issued, const CityGraph& graph,
                          const TransitionModel& trans, std::uint64_t seed,
                          std::uint64_t first_timestamp) {
  const int n = graph.n;
  StepOutcome out;
  out.realized_supply = Eigen::VectorXi::Zero(n);
  out.requests = Eigen::VectorXi::Zero(n);
  out.served = Eigen::VectorXi::Zero(n);

  // Movement. Every repositionable driver has a stable id and its own stream,
  // so changing the issued set leaves other drivers' draws untouched.
  std::vector<char> has_ppz;
  std::vector<int> driver_origin;
  std::vector<long long> origin_base(static_cast<std::size_t>(n) + 1, 0);
  for (int i = 0; i < n; ++i) {
    long long cnt = llround(state.s0[i]);
    origin_base[static_cast<std::size_t>(i) + 1] = origin_base[static_cast<std::size_t>(i)] + cnt;
  }
  const long long total_drivers = origin_base[static_cast<std::size_t>(n)];
  has_ppz.assign(static_cast<std::size_t>(total_drivers), 0);

  struct OpenPpz {
    const IssuedPpz* record;
    int landed = -1;
    bool complied = false;
    bool earned = false;
  };
  std::vector<OpenPpz> open;
  open.reserve(issued.size());

  for (const IssuedPpz& ppz : issued) {
    if (ppz.driver_id < 0 || ppz.driver_id >= total_drivers)
      throw std::invalid_argument("simulate_step: driver id out of range");
    has_ppz[static_cast<std::size_t>(ppz.driver_id)] = 1;
  }

  // Unassigned drivers: stay with p_stay.
  for (int i = 0; i < n; ++i) {
    for (long long k = origin_base[static_cast<std::size_t>(i)]; k < origin_base[static_cast<std::size_t>(i) + 1]; ++k) {
      if (has_ppz[static_cast<std::size_t>(k)]) continue;
      auto rng = make_rng(derive_seed(seed, kMoveTag, static_cast<std::uint64_t>(k)));
      std::uniform_real_distribution<double> unif(0.0, 1.0);
      if (unif(rng) < trans.p_stay) out.realized_supply[i] += 1;
    }
  }
  // Incentivized drivers: land per the pair's landing distribution.
  for (const IssuedPpz& ppz : issued) {
    auto rng = make_rng(derive_seed(seed, kMoveTag, static_cast<std::uint64_t>(ppz.driver_id)));
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    double roll = unif(rng);
    double cum = 0.0;
    int landed = -1;
    for (const auto& land : trans.landings(ppz.origin, ppz.destination)) {
      cum += land.prob;
      if (roll < cum) {
        landed = land.location;
        break;
      }
    }
    OpenPpz op;
    op.record = &ppz;
    op.landed = landed;
    op.complied = (landed == ppz.destination);
    if (landed >= 0) out.realized_supply[landed] += 1;
    open.push_back(op);
  }

  // Requests: Poisson with the plan's price-modulated rate, each with a
  // uniform arrival time inside the step.
  Eigen::VectorXd rate = Eigen::VectorXd::Zero(n);
  for (int k = 0; k < plan.active.size(); ++k)
    rate[plan.active.kept[static_cast<std::size_t>(k)]] = state.d[plan.active.kept[static_cast<std::size_t>(k)]] * plan.y[k];

  struct Request {
    double time;
    int location;
  };
  std::vector<Request> reqs;
  for (int i = 0; i < n; ++i) {
    auto rng = make_rng(derive_seed(seed, kDemandTag, static_cast<std::uint64_t>(i)));
    if (rate[i] <= 0) continue;
    std::poisson_distribution<int> pois(rate[i]);
    int count = pois(rng);
    out.requests[i] = count;
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    for (int c = 0; c < count; ++c) reqs.push_back({unif(rng), i});
  }
  std::sort(reqs.begin(), reqs.end(), [](const Request& a, const Request& b) {
    if (a.time != b.time) return a.time < b.time;
    return a.location < b.location;
  });

  // Dispatch pool: realized repositionable supply plus drivers already
  // holding an incentive from a previous epoch (they stay put).
  Eigen::VectorXi idle = out.realized_supply;
  for (int i = 0; i < n; ++i) idle[i] += static_cast<int>(llround(state.s_bar[i]));

  // Complied drivers are earmarked per landing location so a dispatch there
  // can consume one and earn the bonus.
  std::vector<std::vector<int>> complied_at(static_cast<std::size_t>(n));
  for (int k = 0; k < static_cast<int>(open.size()); ++k)
    if (open[static_cast<std::size_t>(k)].complied)
      complied_at[static_cast<std::size_t>(open[static_cast<std::size_t>(k)].landed)].push_back(k);

  for (const Request& req : reqs) {
    int best = -1;
    for (int j : graph.dispatch_mask.rows[static_cast<std::size_t>(req.location)]) {
      if (idle[j] <= 0) continue;
      if (best < 0 || idle[j] > idle[best] || (idle[j] == idle[best] && j < best)) best = j;
    }
    if (best < 0) continue;  // lost request
    idle[best] -= 1;
    out.served[req.location] += 1;
    out.conversions += 1;
    out.no_pt_bookings += state.f[req.location];
    auto& pool = complied_at[static_cast<std::size_t>(best)];
    if (!pool.empty()) {
      open[static_cast<std::size_t>(pool.back())].earned = true;
      pool.pop_back();
    }
  }

  std::uint64_t ts = first_timestamp;
  for (const OpenPpz& op : open) {
    EscrowEvent e;
    e.ref_id = op.record->ref_id;
    e.location = op.record->destination;
    e.amount = op.record->bonus;
    e.timestamp = ts++;
    if (op.earned) {
      e.kind = EventKind::PpzEarned;
      out.ppz_paid += static_cast<double>(op.record->bonus) / 100.0;
    } else {
      e.kind = EventKind::PpzExpired;
    }
    out.events.push_back(std::move(e));
  }
  return out;
}

}  // namespace ppz

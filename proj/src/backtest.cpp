#include "ppz/backtest.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>
#include <thread>

#include <nlohmann/json.hpp>

#include "ppz/dynamics.hpp"
#include "ppz/incentive.hpp"
#include "ppz/rng.hpp"

namespace ppz {

namespace {

constexpr std::uint64_t kPrefillTag = 0x70726566;

struct Grid {
  int w = 0, h = 0;
  double x(int i) const { return static_cast<double>(i % w); }
  double y(int i) const { return static_cast<double>(i / w); }
  double dist(int i, int j) const { return std::hypot(x(i) - x(j), y(i) - y(j)); }
};

Grid grid_shape(int n) {
  if (n < 1) throw std::invalid_argument("city size must be >= 1");
  int w = static_cast<int>(std::floor(std::sqrt(static_cast<double>(n))));
  while (w > 1 && n % w != 0) --w;
  return Grid{w, n / w};
}

SparseMask radius_mask(const Grid& grid, int n, double radius, bool include_self) {
  SparseMask mask(n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      double d = grid.dist(i, j);
      if (d > radius) continue;
      if (!include_self && i == j) continue;
      mask.rows[static_cast<std::size_t>(i)].push_back(j);
    }
  }
  return mask;
}

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  std::size_t mid = v.size() / 2;
  return v.size() % 2 ? v[mid] : 0.5 * (v[mid - 1] + v[mid]);
}

// Synthetic fare stream standing in for upfront-fare income: one accepted
// ride per location, sized by its share of expected fare volume with a
// per-replication jitter.
std::vector<EscrowEvent> prefill_events(const Scenario& scenario, std::uint64_t seed) {
  const int n = scenario.graph.n;
  Eigen::VectorXd share = scenario.state.d.cwiseProduct(scenario.state.f);
  double total_share = share.sum();
  std::vector<EscrowEvent> events;
  if (scenario.prefill_income_cents <= 0 || total_share <= 0) return events;

  auto rng = make_rng(derive_seed(seed, kPrefillTag));
  std::uniform_real_distribution<double> jitter(0.5, 1.5);
  std::uint64_t ts = 0;
  for (int i = 0; i < n; ++i) {
    if (share[i] <= 0) continue;
    double amount = static_cast<double>(scenario.prefill_income_cents) * share[i] / total_share;
    Cents cents = static_cast<Cents>(std::llround(amount * jitter(rng)));
    if (cents <= 0) continue;
    EscrowEvent e;
    e.kind = EventKind::RideAccepted;
    e.ref_id = "pt-" + std::to_string(i);
    e.location = i;
    e.amount = cents;
    e.timestamp = ts++;
    events.push_back(std::move(e));
  }
  return events;
}

struct ReplicationResult {
  std::vector<ReplicationRow> rows;
  bool any_failure = false;
};

ReplicationResult run_replication(const Scenario& scenario, const std::vector<Policy>& policies,
                                  std::uint64_t seed, double tol) {
  const CityGraph& graph = scenario.graph;
  const std::vector<EscrowEvent> prefill = prefill_events(scenario, seed);

  ReplicationResult result;
  for (Policy policy : policies) {
    EscrowLedger ledger(graph.n, graph.contrib_mask);
    for (const EscrowEvent& e : prefill) ledger.apply_event(e);

    MarketState state = scenario.state;
    state.e = ledger.available_dollars();

    PositioningConfig cfg = scenario.cfg;
    if (policy == Policy::PpzBookings) cfg.objective = Objective::Bookings;
    if (policy == Policy::PpzConversion) cfg.objective = Objective::Conversion;

    ActiveSet active;
    AllocationIndex index;
    if (policy == Policy::Null) {
      // Prices still re-optimize; no repositioning variables.
      active = prune_active_set(graph, state.d, Eigen::VectorXd::Zero(graph.n));
    } else {
      active = prune_active_set(graph, state.d, state.s0);
      index = vectorize_allocation(graph, active);
    }

    ReplicationRow row;
    row.seed = seed;
    row.policy = policy;

    AllocationPlan plan = solve_positioning(state, graph, scenario.conv, scenario.trans, cfg,
                                            active, index, tol);
    if (plan.status != SolveStatus::Optimal) {
      result.rows.push_back(row);
      result.any_failure = true;
      continue;
    }
    plan.ledger_version = ledger.version();

    std::vector<IssuedPpz> issued;
    if (policy != Policy::Null && index.size() > 0) {
      Eigen::VectorXd responders = expected_responders(index, plan.A, state.s0, scenario.trans);
      Eigen::VectorXd b_tgt = clearance_targets(ledger, graph, responders, cfg.b_min, cfg.b_max);
      BonusPlan bonus = compute_bonuses(plan, state, graph, scenario.trans, b_tgt, cfg.b_min,
                                        cfg.b_max, tol);
      if (bonus.status != SolveStatus::Optimal) {
        result.rows.push_back(row);
        result.any_failure = true;
        continue;
      }
      std::vector<Assignment> assignments = sample_assignments(plan, state.s0, seed);
      issued = issue_ppzs(bonus, assignments, ledger, scenario.epoch_label);
    }

    StepOutcome outcome = simulate_step(state, plan, issued, graph, scenario.trans, seed,
                                        ledger.next_timestamp());
    for (const EscrowEvent& e : outcome.events) ledger.apply_event(e);

    row.solved = true;
    row.conversions = outcome.conversions;
    row.bookings = outcome.no_pt_bookings;
    row.ppz_paid = outcome.ppz_paid;
    row.escrow_income = static_cast<double>(ledger.total_income()) / 100.0;
    result.rows.push_back(row);
  }
  return result;
}

}  // namespace

Scenario generate_synthetic_city(const GenCityParams& params, std::uint64_t seed) {
  const int n = params.n;
  Grid grid = grid_shape(n);
  auto rng = make_rng(derive_seed(seed, 0x67656e63));
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  Scenario s;
  s.graph.n = n;
  s.graph.dispatch_mask = radius_mask(grid, n, params.dispatch_radius, true);
  s.graph.alloc_mask = radius_mask(grid, n, params.alloc_radius, false);
  s.graph.contrib_mask = radius_mask(grid, n, params.contrib_radius, true);
  s.graph.adjacency = radius_mask(grid, n, 1.0, false);

  // Demand: hotspot kernels over a flat base; fares elevated near the first
  // hotspot so the two objectives pull allocations differently.
  std::vector<int> centers;
  for (int k = 0; k < params.hotspots; ++k)
    centers.push_back(static_cast<int>(unif(rng) * n) % n);
  const double sigma = std::max(1.5, static_cast<double>(grid.w) / 8.0);

  s.state.d.resize(n);
  s.state.f.resize(n);
  for (int i = 0; i < n; ++i) {
    double demand = params.base_demand;
    for (int c : centers) {
      double dist = grid.dist(i, c);
      demand += params.hotspot_intensity * std::exp(-dist * dist / (2.0 * sigma * sigma));
    }
    s.state.d[i] = demand;
    double fare = 8.0 + 2.0 * unif(rng);
    if (!centers.empty()) {
      double dist = grid.dist(i, centers.front());
      fare += 6.0 * std::exp(-dist * dist / (2.0 * sigma * sigma));
    }
    s.state.f[i] = fare;
  }

  s.state.s0.resize(n);
  s.state.s_bar.resize(n);
  std::poisson_distribution<int> supply(params.supply_per_location);
  std::poisson_distribution<int> held(params.supply_per_location * 0.1);
  for (int i = 0; i < n; ++i) {
    s.state.s0[i] = supply(rng);
    s.state.s_bar[i] = held(rng);
  }

  s.conv.beta.resize(n);
  for (int i = 0; i < n; ++i)
    s.conv.beta[i] = params.beta_min + (params.beta_max - params.beta_min) * unif(rng);
  s.conv.x_max = 5.0;

  // The benchmark allocation (nobody repositions) must stay admissible: even
  // at the price ceiling, suppressed demand cannot exceed neighborhood
  // supply. Relax overloaded neighborhoods multiplicatively until the floor
  // fits everywhere.
  const Eigen::VectorXd ymin = s.conv.y_min();
  const double p_stay = 0.85;
  for (int sweep = 0; sweep < 100; ++sweep) {
    bool violated = false;
    for (int i = 0; i < n; ++i) {
      double nbhd_supply = 0.0, floor_demand = 0.0;
      for (int k : s.graph.dispatch_mask.rows[static_cast<std::size_t>(i)]) {
        nbhd_supply += p_stay * s.state.s0[k] + s.state.s_bar[k];
        floor_demand += s.state.d[k] * ymin[k];
      }
      double cap = 0.85 * nbhd_supply;
      if (floor_demand > cap && floor_demand > 0) {
        double scale = cap / floor_demand;
        for (int k : s.graph.dispatch_mask.rows[static_cast<std::size_t>(i)]) s.state.d[k] *= scale;
        violated = true;
      }
    }
    if (!violated) break;
  }

  // Reserve: a slice of current neighborhood supply, within the headroom the
  // relaxation above left open.
  s.state.r.resize(n);
  for (int i = 0; i < n; ++i) {
    double nbhd_supply = 0.0, floor_demand = 0.0;
    for (int k : s.graph.dispatch_mask.rows[static_cast<std::size_t>(i)]) {
      nbhd_supply += p_stay * s.state.s0[k] + s.state.s_bar[k];
      floor_demand += s.state.d[k] * ymin[k];
    }
    double cap = std::max(0.0, 0.9 * (nbhd_supply - floor_demand));
    s.state.r[i] = std::min(params.reserve_fraction * nbhd_supply, cap);
  }

  s.trans.p_stay = p_stay;
  for (int i = 0; i < n; ++i) {
    for (int j : s.graph.alloc_mask.rows[static_cast<std::size_t>(i)]) {
      double comply = 0.5 + 0.3 * unif(rng);
      s.trans.p_dest[{i, j}] = {{j, comply}, {i, 0.15}};
    }
  }

  s.cfg.objective = Objective::Bookings;
  s.cfg.l1_weight = 1e-4;
  s.cfg.smooth_weight = 1e-3;
  s.cfg.b_min = 1.0;
  s.cfg.b_max = 8.0;

  double fare_volume = s.state.d.dot(s.state.f);
  s.prefill_income_cents = static_cast<Cents>(std::llround(params.pt_rate * fare_volume * 100.0));
  s.state.e = Eigen::VectorXd::Zero(n);

  s.seeds.resize(static_cast<std::size_t>(params.replication_seeds));
  for (int k = 0; k < params.replication_seeds; ++k)
    s.seeds[static_cast<std::size_t>(k)] = derive_seed(seed, 0x73656564, static_cast<std::uint64_t>(k));
  s.epoch_label = "gen" + std::to_string(seed);

  s.validate();
  return s;
}

const char* to_string(Policy policy) {
  switch (policy) {
    case Policy::Null: return "null";
    case Policy::PpzBookings: return "ppz-bookings";
    case Policy::PpzConversion: return "ppz-conversion";
  }
  return "?";
}

Policy policy_from_string(const std::string& s) {
  if (s == "null") return Policy::Null;
  if (s == "ppz-bookings") return Policy::PpzBookings;
  if (s == "ppz-conversion") return Policy::PpzConversion;
  throw std::invalid_argument("unknown policy: " + s);
}

MetricsTable run_backtest(const Scenario& scenario, const std::vector<Policy>& policies,
                          int replications, double tol, int threads) {
  if (replications < 1) throw std::invalid_argument("replications must be >= 1");
  if (static_cast<std::size_t>(replications) > scenario.seeds.size())
    throw std::invalid_argument("scenario does not carry enough seeds");

  std::vector<Policy> ordered = policies;
  if (std::find(ordered.begin(), ordered.end(), Policy::Null) == ordered.end())
    ordered.push_back(Policy::Null);  // gains need the benchmark

  std::vector<ReplicationResult> results(static_cast<std::size_t>(replications));
  std::atomic<int> next{0};
  int workers = threads > 0 ? threads : static_cast<int>(std::thread::hardware_concurrency());
  workers = std::max(1, std::min(workers, replications));

  auto worker = [&]() {
    for (;;) {
      int rep = next.fetch_add(1);
      if (rep >= replications) break;
      results[static_cast<std::size_t>(rep)] =
          run_replication(scenario, ordered, scenario.seeds[static_cast<std::size_t>(rep)], tol);
    }
  };
  std::vector<std::thread> pool;
  for (int t = 0; t < workers; ++t) pool.emplace_back(worker);
  for (auto& t : pool) t.join();

  MetricsTable table;
  table.replications = replications;
  for (const ReplicationResult& r : results) {
    table.rows.insert(table.rows.end(), r.rows.begin(), r.rows.end());
    if (r.any_failure) ++table.solver_failures;
  }

  // Paired relative gains vs the null rows of the same seed.
  constexpr double kEps = 1e-9;
  for (Policy policy : ordered) {
    PolicySummary summary;
    summary.policy = policy;
    std::vector<double> conv_gains, book_gains;
    for (int rep = 0; rep < replications; ++rep) {
      const auto& rows = results[static_cast<std::size_t>(rep)].rows;
      const ReplicationRow* null_row = nullptr;
      const ReplicationRow* policy_row = nullptr;
      for (const auto& row : rows) {
        if (row.policy == Policy::Null) null_row = &row;
        if (row.policy == policy) policy_row = &row;
      }
      if (!null_row || !policy_row || !null_row->solved || !policy_row->solved) continue;
      conv_gains.push_back((policy_row->conversions - null_row->conversions) /
                           std::max(null_row->conversions, kEps));
      book_gains.push_back((policy_row->bookings - null_row->bookings) /
                           std::max(null_row->bookings, kEps));
    }
    summary.paired_reps = static_cast<int>(conv_gains.size());
    if (!conv_gains.empty()) {
      summary.mean_conversion_gain =
          std::accumulate(conv_gains.begin(), conv_gains.end(), 0.0) / conv_gains.size();
      summary.mean_bookings_gain =
          std::accumulate(book_gains.begin(), book_gains.end(), 0.0) / book_gains.size();
      summary.median_conversion_gain = median(conv_gains);
      summary.median_bookings_gain = median(book_gains);
    }
    table.summary.push_back(summary);
  }
  return table;
}

std::string metrics_to_csv(const MetricsTable& table) {
  std::ostringstream out;
  out << "seed,policy,solved,conversions,bookings,ppz_paid,escrow_income\n";
  for (const ReplicationRow& row : table.rows) {
    out << row.seed << ',' << to_string(row.policy) << ',' << (row.solved ? 1 : 0) << ','
        << row.conversions << ',' << row.bookings << ',' << row.ppz_paid << ','
        << row.escrow_income << '\n';
  }
  return out.str();
}

std::string summary_to_json(const MetricsTable& table) {
  nlohmann::json j;
  j["replications"] = table.replications;
  j["solver_failures"] = table.solver_failures;
  nlohmann::json arr = nlohmann::json::array();
  for (const PolicySummary& s : table.summary) {
    arr.push_back({{"policy", to_string(s.policy)},
                   {"paired_reps", s.paired_reps},
                   {"mean_conversion_gain", s.mean_conversion_gain},
                   {"median_conversion_gain", s.median_conversion_gain},
                   {"mean_bookings_gain", s.mean_bookings_gain},
                   {"median_bookings_gain", s.median_bookings_gain}});
  }
  j["policies"] = std::move(arr);
  return j.dump(2);
}

std::pair<double, double> counterfactual_supply(long long treatment_count, long long control_count,
                                                double treatment_share) {
  if (!(treatment_share > 0.0) || !(treatment_share < 1.0))
    throw std::invalid_argument("treatment share must lie strictly inside (0, 1)");
  double full_control = static_cast<double>(control_count) / (1.0 - treatment_share);
  double full_treatment = static_cast<double>(treatment_count) / treatment_share;
  return {full_control, full_treatment};
}

}  // namespace ppz

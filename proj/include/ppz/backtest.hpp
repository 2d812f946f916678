#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "ppz/scenario.hpp"

namespace ppz {

struct GenCityParams {
  int n = 400;
  int hotspots = 3;
  double hotspot_intensity = 12.0;   // extra app-opens at a hotspot center
  double base_demand = 0.35;
  double supply_per_location = 1.2;  // mean idle drivers per location
  double dispatch_radius = 1.0;
  double alloc_radius = 2.0;
  double contrib_radius = 1.0;
  double beta_min = 0.5, beta_max = 1.2;
  double reserve_fraction = 0.05;
  double pt_rate = 0.35;             // escrow income as a share of expected fare volume
  int replication_seeds = 1000;
};

// Grid city with distance-threshold masks, hotspot-concentrated demand and
// diffuse supply. Deterministic per seed.
Scenario generate_synthetic_city(const GenCityParams& params, std::uint64_t seed);

enum class Policy { Null, PpzBookings, PpzConversion };

const char* to_string(Policy policy);
Policy policy_from_string(const std::string& s);

struct ReplicationRow {
  std::uint64_t seed = 0;
  Policy policy = Policy::Null;
  bool solved = false;
  double conversions = 0.0;
  double bookings = 0.0;
  double ppz_paid = 0.0;
  double escrow_income = 0.0;
};

struct PolicySummary {
  Policy policy = Policy::Null;
  int paired_reps = 0;
  double mean_conversion_gain = 0.0;
  double median_conversion_gain = 0.0;
  double mean_bookings_gain = 0.0;
  double median_bookings_gain = 0.0;
};

// Paired one-step back-test: every policy sees the same escrow prefill,
// driver coin flips, and demand draws per replication seed; gains are
// relative to the null benchmark (prices re-optimized, no repositioning).
struct MetricsTable {
  std::vector<ReplicationRow> rows;  // ordered by (replication, policy)
  std::vector<PolicySummary> summary;
  int replications = 0;
  int solver_failures = 0;
};

MetricsTable run_backtest(const Scenario& scenario, const std::vector<Policy>& policies,
                          int replications, double tol = 1e-8, int threads = 0);

std::string metrics_to_csv(const MetricsTable& table);
std::string summary_to_json(const MetricsTable& table);

// Rescales a mixed treatment/control driver count to the two pure
// counterfactuals: (full-control supply, full-treatment supply).
std::pair<double, double> counterfactual_supply(long long treatment_count, long long control_count,
                                                double treatment_share);

}  // namespace ppz

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ppz/escrow.hpp"
#include "ppz/market.hpp"
#include "ppz/positioning.hpp"
#include "ppz/spatial.hpp"
#include "ppz/transition.hpp"

namespace ppz {

// A self-contained problem instance: the city structure, one market
// snapshot, the elasticity and movement models, solve configuration, and the
// replication seeds for back-testing.
struct Scenario {
  CityGraph graph;
  MarketState state;
  ConversionModel conv;
  TransitionModel trans;
  PositioningConfig cfg;
  std::vector<std::uint64_t> seeds;
  std::string epoch_label;
  Cents prefill_income_cents = 0;  // synthetic fare income per replication

  void validate() const;
};

std::string scenario_to_json(const Scenario& scenario);
Scenario scenario_from_json(const std::string& text);

Scenario load_scenario(const std::string& path);
void save_scenario(const Scenario& scenario, const std::string& path);

}  // namespace ppz

#include "ppz/scenario.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace ppz {

using nlohmann::json;

namespace {

json mask_to_json(const SparseMask& mask) {
  json arr = json::array();
  for (int i = 0; i < mask.n; ++i)
    for (int j : mask.rows[static_cast<std::size_t>(i)]) arr.push_back({i, j});
  return arr;
}

SparseMask mask_from_json(int n, const json& arr) {
  std::vector<std::pair<int, int>> pairs;
  for (const auto& p : arr) pairs.emplace_back(p.at(0).get<int>(), p.at(1).get<int>());
  return SparseMask::from_pairs(n, pairs);
}

json vec_to_json(const Eigen::VectorXd& v) {
  json arr = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v[i]);
  return arr;
}

Eigen::VectorXd vec_from_json(const json& arr) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(arr.size()));
  Eigen::Index i = 0;
  for (const auto& x : arr) v[i++] = x.get<double>();
  return v;
}

}  // namespace

void Scenario::validate() const {
  graph.validate();
  state.validate(graph.n);
  conv.validate(graph.n);
  trans.validate(graph.n);
  cfg.validate();
  std::vector<std::uint64_t> sorted = seeds;
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
    throw std::invalid_argument("scenario seeds must be distinct");
}

std::string scenario_to_json(const Scenario& scenario) {
  json j;
  j["n"] = scenario.graph.n;
  j["epoch"] = scenario.epoch_label;
  j["seeds"] = scenario.seeds;

  j["masks"]["dispatch"] = mask_to_json(scenario.graph.dispatch_mask);
  j["masks"]["alloc"] = mask_to_json(scenario.graph.alloc_mask);
  j["masks"]["contrib"] = mask_to_json(scenario.graph.contrib_mask);
  j["masks"]["adjacency"] = mask_to_json(scenario.graph.adjacency);

  j["market"]["d"] = vec_to_json(scenario.state.d);
  j["market"]["s0"] = vec_to_json(scenario.state.s0);
  j["market"]["s_bar"] = vec_to_json(scenario.state.s_bar);
  j["market"]["r"] = vec_to_json(scenario.state.r);
  j["market"]["f"] = vec_to_json(scenario.state.f);
  j["market"]["e"] = vec_to_json(scenario.state.e);
  j["market"]["beta"] = vec_to_json(scenario.conv.beta);

  j["conversion"]["x_max"] = scenario.conv.x_max;

  j["transition"]["p_stay"] = scenario.trans.p_stay;
  json pairs = json::array();
  for (const auto& [pair, lands] : scenario.trans.p_dest) {
    json lj = json::array();
    for (const auto& land : lands) lj.push_back({land.location, land.prob});
    pairs.push_back({{"o", pair.first}, {"d", pair.second}, {"land", lj}});
  }
  j["transition"]["pairs"] = std::move(pairs);

  j["config"]["objective"] = scenario.cfg.objective == Objective::Bookings ? "bookings" : "conversion";
  j["config"]["l1_weight"] = scenario.cfg.l1_weight;
  j["config"]["smooth_weight"] = scenario.cfg.smooth_weight;
  j["config"]["b_min"] = scenario.cfg.b_min;
  j["config"]["b_max"] = scenario.cfg.b_max;

  j["backtest"]["prefill_income_cents"] = scenario.prefill_income_cents;
  return j.dump(2);
}

Scenario scenario_from_json(const std::string& text) {
  json j = json::parse(text);
  Scenario s;
  const int n = j.at("n").get<int>();
  s.graph.n = n;
  s.graph.dispatch_mask = mask_from_json(n, j.at("masks").at("dispatch"));
  s.graph.alloc_mask = mask_from_json(n, j.at("masks").at("alloc"));
  s.graph.contrib_mask = mask_from_json(n, j.at("masks").at("contrib"));
  s.graph.adjacency = mask_from_json(n, j.at("masks").at("adjacency"));

  const json& market = j.at("market");
  s.state.d = vec_from_json(market.at("d"));
  s.state.s0 = vec_from_json(market.at("s0"));
  s.state.s_bar = vec_from_json(market.at("s_bar"));
  s.state.r = vec_from_json(market.at("r"));
  s.state.f = vec_from_json(market.at("f"));
  s.state.e = market.contains("e") ? vec_from_json(market.at("e")) : Eigen::VectorXd::Zero(n);
  s.conv.beta = vec_from_json(market.at("beta"));
  s.conv.x_max = j.contains("conversion") ? j["conversion"].value("x_max", 5.0) : 5.0;

  const json& trans = j.at("transition");
  s.trans.p_stay = trans.at("p_stay").get<double>();
  for (const auto& pj : trans.at("pairs")) {
    std::vector<TransitionModel::Landing> lands;
    for (const auto& lj : pj.at("land"))
      lands.push_back({lj.at(0).get<int>(), lj.at(1).get<double>()});
    s.trans.p_dest[{pj.at("o").get<int>(), pj.at("d").get<int>()}] = std::move(lands);
  }

  const json& cfg = j.at("config");
  std::string objective = cfg.value("objective", "bookings");
  if (objective == "bookings") s.cfg.objective = Objective::Bookings;
  else if (objective == "conversion") s.cfg.objective = Objective::Conversion;
  else throw std::invalid_argument("unknown objective: " + objective);
  s.cfg.l1_weight = cfg.value("l1_weight", 0.0);
  s.cfg.smooth_weight = cfg.value("smooth_weight", 0.0);
  s.cfg.b_min = cfg.value("b_min", 1.0);
  s.cfg.b_max = cfg.value("b_max", 20.0);

  s.seeds = j.value("seeds", std::vector<std::uint64_t>{});
  s.epoch_label = j.value("epoch", std::string{});
  if (j.contains("backtest"))
    s.prefill_income_cents = j["backtest"].value("prefill_income_cents", Cents{0});

  s.validate();
  return s;
}

Scenario load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open scenario: " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return scenario_from_json(buf.str());
}

void save_scenario(const Scenario& scenario, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write scenario: " + path);
  out << scenario_to_json(scenario) << '\n';
}

}  // namespace ppz

// Command-line front end: solve a scenario, replay a ledger log, run the
// shadow-price analysis, generate synthetic cities, and drive back-tests.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "ppz/backtest.hpp"
#include "ppz/dynamics.hpp"
#include "ppz/incentive.hpp"
#include "ppz/scenario.hpp"
#include "ppz/sensitivity.hpp"

namespace {

using nlohmann::json;

json vec_to_json(const Eigen::VectorXd& v) {
  json arr = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v[i]);
  return arr;
}

int cmd_solve(const std::string& scenario_path, const std::string& objective,
              const std::string& out_path, double tol, bool dump_program) {
  ppz::Scenario scenario = ppz::load_scenario(scenario_path);
  if (objective == "bookings") scenario.cfg.objective = ppz::Objective::Bookings;
  else if (objective == "conversion") scenario.cfg.objective = ppz::Objective::Conversion;
  else if (!objective.empty()) {
    std::cerr << "unknown objective: " << objective << "\n";
    return 1;
  }

  ppz::ActiveSet active = ppz::prune_active_set(scenario.graph, scenario.state.d, scenario.state.s0);
  ppz::AllocationIndex index = ppz::vectorize_allocation(scenario.graph, active);

  if (dump_program) {
    ppz::PositioningProgram built = ppz::build_positioning_program(
        scenario.state, scenario.graph, scenario.conv, scenario.trans, scenario.cfg, active, index);
    ppz::dump_program_json(built.program, std::cerr);
  }

  ppz::AllocationPlan plan = ppz::solve_positioning(scenario.state, scenario.graph, scenario.conv,
                                                    scenario.trans, scenario.cfg, active, index, tol);

  json j;
  j["status"] = ppz::to_string(plan.status);
  j["objective"] = scenario.cfg.objective == ppz::Objective::Bookings ? "bookings" : "conversion";
  j["market_objective"] = plan.market_objective;
  j["solver_objective"] = plan.solver_objective;
  json y = json::array();
  for (int k = 0; k < plan.active.size(); ++k)
    y.push_back({{"location", plan.active.kept[static_cast<std::size_t>(k)]},
                 {"y", plan.y[k]},
                 {"x", plan.x[k]}});
  j["quantiles"] = std::move(y);
  json alloc = json::array();
  for (int p = 0; p < plan.index.size(); ++p) {
    if (plan.A[p] <= 0) continue;
    const auto& [o, d] = plan.index.pairs[static_cast<std::size_t>(p)];
    alloc.push_back({o, d, plan.A[p]});
  }
  j["allocations"] = std::move(alloc);
  json contrib = json::array();
  for (std::size_t q = 0; q < plan.contrib_pairs.size(); ++q) {
    if (plan.C[static_cast<Eigen::Index>(q)] <= 0) continue;
    contrib.push_back({plan.contrib_pairs[q].first, plan.contrib_pairs[q].second,
                       plan.C[static_cast<Eigen::Index>(q)]});
  }
  j["contributions"] = std::move(contrib);
  j["s_expected"] = vec_to_json(plan.s_expected);

  if (out_path.empty()) {
    std::cout << j.dump(2) << "\n";
  } else {
    std::ofstream out(out_path);
    out << j.dump(2) << "\n";
    std::cout << "plan written to " << out_path << "\n";
  }
  return plan.status == ppz::SolveStatus::Optimal ? 0 : 1;
}

int cmd_ledger_replay(const std::string& log_path, int n) {
  std::ifstream in(log_path);
  if (!in) {
    std::cerr << "cannot open " << log_path << "\n";
    return 1;
  }
  std::vector<ppz::EscrowEvent> events = ppz::read_event_log(in);
  if (n <= 0) {
    for (const auto& e : events) {
      n = std::max(n, e.location + 1);
      for (const auto& [account, cents] : e.funding) n = std::max(n, account + 1);
    }
  }
  ppz::EscrowLedger ledger = ppz::EscrowLedger::replay(n, events);
  std::vector<ppz::Cents> balances = ledger.available_cents();
  json j;
  j["locations"] = n;
  j["events"] = events.size();
  j["available_cents"] = balances;
  std::cout << j.dump(2) << "\n";
  return 0;
}

int cmd_sensitivity(const std::string& scenario_path, int location, const std::string& grid_spec,
                    const std::string& out_path, const std::string& csv_path, double tol) {
  ppz::Scenario scenario = ppz::load_scenario(scenario_path);

  std::vector<double> grid;
  {
    double lo = 0, step = 1, hi = 10;
    if (sscanf(grid_spec.c_str(), "%lf:%lf:%lf", &lo, &step, &hi) != 3 || step <= 0) {
      std::cerr << "bad grid spec (want lo:step:hi): " << grid_spec << "\n";
      return 1;
    }
    for (double v = lo; v <= hi + 1e-12; v += step) grid.push_back(v);
  }

  ppz::MarketOnlySolution base =
      ppz::solve_market_only(scenario.state, scenario.graph, scenario.conv, tol);
  if (base.status != ppz::SolveStatus::Optimal) {
    std::cerr << "market-only solve: " << ppz::to_string(base.status) << "\n";
    return 1;
  }

  ppz::SensitivityReport report;
  report.p_star_0 = base.p_star;
  report.lambda = base.lambda;
  report.local_checks =
      ppz::verify_local_sensitivity(scenario.state, scenario.graph, scenario.conv, 0.01, 1e-4);
  report.curve = ppz::marginal_value_curve(scenario.state, scenario.graph, scenario.conv, location,
                                           grid, tol);

  json j;
  j["p_star_0"] = report.p_star_0;
  j["revenue_0"] = -report.p_star_0;
  j["lambda"] = vec_to_json(report.lambda);
  json locals = json::array();
  for (const auto& c : report.local_checks)
    locals.push_back({{"location", c.location},
                      {"forward_diff", c.forward_diff},
                      {"backward_diff", c.backward_diff},
                      {"central_diff", c.central_diff},
                      {"dual", c.dual},
                      {"gap", c.gap},
                      {"differentiable", c.differentiable}});
  j["local_checks"] = std::move(locals);
  json curve = json::array();
  for (const auto& p : report.curve)
    curve.push_back({{"supply", p.supply}, {"revenue", p.revenue}, {"forward_diff", p.forward_diff}});
  j["curve"] = std::move(curve);

  if (out_path.empty()) {
    std::cout << j.dump(2) << "\n";
  } else {
    std::ofstream out(out_path);
    out << j.dump(2) << "\n";
    std::cout << "report written to " << out_path << "\n";
  }
  if (!csv_path.empty()) {
    std::ofstream csv(csv_path);
    csv << "supply,revenue,forward_diff\n";
    for (const auto& p : report.curve)
      csv << p.supply << ',' << p.revenue << ',' << p.forward_diff << '\n';
  }
  return 0;
}

int cmd_gen_city(int n, int hotspots, std::uint64_t seed, const std::string& out_path) {
  ppz::GenCityParams params;
  params.n = n;
  params.hotspots = hotspots;
  ppz::Scenario scenario = ppz::generate_synthetic_city(params, seed);
  ppz::save_scenario(scenario, out_path);
  std::cout << "scenario (" << n << " locations, " << hotspots << " hotspots) written to "
            << out_path << "\n";
  return 0;
}

int cmd_backtest(const std::string& scenario_path, const std::string& policies_csv, int reps,
                 const std::string& out_dir, double tol, int threads) {
  ppz::Scenario scenario = ppz::load_scenario(scenario_path);
  std::vector<ppz::Policy> policies;
  std::stringstream ss(policies_csv);
  std::string token;
  while (std::getline(ss, token, ',')) {
    if (!token.empty()) policies.push_back(ppz::policy_from_string(token));
  }
  if (policies.empty()) {
    std::cerr << "no policies given\n";
    return 1;
  }

  ppz::MetricsTable table = ppz::run_backtest(scenario, policies, reps, tol, threads);

  std::filesystem::create_directories(out_dir);
  {
    std::ofstream csv(out_dir + "/metrics.csv");
    csv << ppz::metrics_to_csv(table);
  }
  {
    std::ofstream summary(out_dir + "/summary.json");
    summary << ppz::summary_to_json(table) << "\n";
  }
  std::cout << ppz::summary_to_json(table) << "\n";

  double failure_share = static_cast<double>(table.solver_failures) / table.replications;
  if (failure_share > 0.05) {
    std::cerr << "solver failure quota exceeded (" << table.solver_failures << "/"
              << table.replications << ")\n";
    return 2;
  }
  return 0;
}

int cmd_counterfactual(long long treat, long long control, double share) {
  auto [full_control, full_treatment] = ppz::counterfactual_supply(treat, control, share);
  json j;
  j["full_control_supply"] = full_control;
  j["full_treatment_supply"] = full_treatment;
  std::cout << j.dump() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Supply repositioning engine: escrow budgeting, driver positioning, incentives"};
  app.require_subcommand(1);

  // solve
  std::string scenario_path, objective, out_path;
  double tol = 1e-8;
  bool dump_program = false;
  auto* solve_cmd = app.add_subcommand("solve", "solve positioning for a scenario");
  solve_cmd->add_option("--scenario", scenario_path, "scenario JSON")->required();
  solve_cmd->add_option("--objective", objective, "bookings|conversion");
  solve_cmd->add_option("--out", out_path, "plan JSON output");
  solve_cmd->add_option("--tol", tol, "solver tolerance");
  solve_cmd->add_flag("--dump-program", dump_program, "dump the assembled program to stderr");

  // ledger replay
  std::string log_path;
  int ledger_n = 0;
  auto* ledger_cmd = app.add_subcommand("ledger", "escrow ledger utilities");
  auto* replay_cmd = ledger_cmd->add_subcommand("replay", "replay an event log and print balances");
  replay_cmd->add_option("--log", log_path, "newline-delimited JSON event log")->required();
  replay_cmd->add_option("--n", ledger_n, "location count (inferred when omitted)");

  // sensitivity
  std::string grid_spec = "0:1:20", report_path, csv_path;
  int location = 0;
  auto* sens_cmd = app.add_subcommand("sensitivity", "shadow-price and marginal-value analysis");
  sens_cmd->add_option("--scenario", scenario_path, "scenario JSON")->required();
  sens_cmd->add_option("--location", location, "location for the marginal-value curve");
  sens_cmd->add_option("--grid", grid_spec, "supply grid lo:step:hi");
  sens_cmd->add_option("--out", report_path, "report JSON output");
  sens_cmd->add_option("--csv", csv_path, "optional curve CSV");
  sens_cmd->add_option("--tol", tol, "solver tolerance");

  // gen-city
  int gen_n = 400, hotspots = 3;
  std::uint64_t seed = 7;
  auto* gen_cmd = app.add_subcommand("gen-city", "generate a synthetic grid city");
  gen_cmd->add_option("--n", gen_n, "location count");
  gen_cmd->add_option("--hotspots", hotspots, "demand hotspot count");
  gen_cmd->add_option("--seed", seed, "generator seed");
  gen_cmd->add_option("--out", out_path, "scenario JSON output")->required();

  // backtest
  std::string policies_csv = "ppz-bookings,null";
  int reps = 100, threads = 0;
  auto* back_cmd = app.add_subcommand("backtest", "paired one-step back-test");
  back_cmd->add_option("--scenario", scenario_path, "scenario JSON")->required();
  back_cmd->add_option("--policies", policies_csv, "comma-separated policies");
  back_cmd->add_option("--reps", reps, "replication count");
  back_cmd->add_option("--out", out_path, "output directory")->required();
  back_cmd->add_option("--tol", tol, "solver tolerance");
  back_cmd->add_option("--threads", threads, "worker threads (0 = hardware)");

  // counterfactual
  long long treat = 0, control = 0;
  double share = 0.5;
  auto* cf_cmd = app.add_subcommand("counterfactual", "rescale split-test supply counts");
  cf_cmd->add_option("--treat", treat, "observed treatment drivers")->required();
  cf_cmd->add_option("--control", control, "observed control drivers")->required();
  cf_cmd->add_option("--share", share, "treatment share in (0,1)")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (solve_cmd->parsed()) return cmd_solve(scenario_path, objective, out_path, tol, dump_program);
    if (replay_cmd->parsed()) return cmd_ledger_replay(log_path, ledger_n);
    if (sens_cmd->parsed())
      return cmd_sensitivity(scenario_path, location, grid_spec, report_path, csv_path, tol);
    if (gen_cmd->parsed()) return cmd_gen_city(gen_n, hotspots, seed, out_path);
    if (back_cmd->parsed())
      return cmd_backtest(scenario_path, policies_csv, reps, out_path, tol, threads);
    if (cf_cmd->parsed()) return cmd_counterfactual(treat, control, share);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

#include <doctest.h>

#include <cmath>
#include <random>

#include "helpers.hpp"
#include "ppz/dynamics.hpp"
#include "ppz/incentive.hpp"

using namespace ppz;
using namespace ppz::testing;

namespace {

// One origin (0) that can send drivers to destination 1, funded by account 0.
struct Fixture {
  CityGraph graph = simple_graph(2, {}, {{0, 1}}, {{0, 1}});
  MarketState state;
  TransitionModel trans = TransitionModel::simple(1.0, {{0, 1}}, 0.6, 0.0);
  AllocationPlan plan;

  Fixture(double s0_origin, double alloc, double balance_dollars) {
    state.d = vec({0, 10});
    state.s0 = vec({s0_origin, 0});
    state.s_bar = vec({0, 0});
    state.r = vec({0, 0});
    state.f = vec({1, 1});
    state.e = vec({balance_dollars, 0});
    plan.active = ActiveSet::all(2);
    plan.index.pairs = {{0, 1}};
    plan.A = vec({alloc});
    plan.contrib_pairs = {{0, 1}};
    plan.C = vec({1.0});
    plan.status = SolveStatus::Optimal;
  }
};

EscrowEvent prefill(int loc, Cents cents, std::uint64_t ts) {
  EscrowEvent e;
  e.kind = EventKind::RideAccepted;
  e.ref_id = "pt-" + std::to_string(ts);
  e.location = loc;
  e.amount = cents;
  e.timestamp = ts;
  return e;
}

}  // namespace

TEST_CASE("zero responders keep the clamped target") {
  Fixture fx(0, 0, 12);
  Eigen::VectorXd b_tgt = vec({4, 4});
  BonusPlan bonus = compute_bonuses(fx.plan, fx.state, fx.graph, fx.trans, b_tgt, 1.0, 10.0, 1e-9);
  REQUIRE(bonus.status == SolveStatus::Optimal);
  CHECK(bonus.b[0] == doctest::Approx(4.0).epsilon(1e-6));
  CHECK(bonus.b[1] == doctest::Approx(4.0).epsilon(1e-6));
  CHECK(bonus.C.cwiseAbs().maxCoeff() < 1e-3);
  CHECK(bonus.funded[0].empty());
  CHECK(bonus.funded[1].empty());
}

TEST_CASE("attainable target is attained and fully funded") {
  // Expected responders 0.6 * 5 = 3, pooled budget 12 covers 3 * 4.
  Fixture fx(5, 1.0, 12);
  Eigen::VectorXd b_tgt = vec({4, 4});
  BonusPlan bonus = compute_bonuses(fx.plan, fx.state, fx.graph, fx.trans, b_tgt, 1.0, 10.0, 1e-9);
  REQUIRE(bonus.status == SolveStatus::Optimal);
  CHECK(bonus.responders[1] == doctest::Approx(3.0));
  CHECK(bonus.b[1] == doctest::Approx(4.0).epsilon(1e-4));
  // Funding must cover the expected payout of 12.
  double funded = 0;
  for (std::size_t q = 0; q < bonus.contrib_pairs.size(); ++q)
    if (bonus.contrib_pairs[q].second == 1)
      funded += bonus.C[static_cast<Eigen::Index>(q)] * fx.state.e[bonus.contrib_pairs[q].first];
  CHECK(funded >= 12.0 - 1e-4);
}

TEST_CASE("tight budget clips the bonus") {
  // minimize (b-4)^2 subject to 3b <= 6 -> b = 2.
  Fixture fx(5, 1.0, 6);
  Eigen::VectorXd b_tgt = vec({4, 4});
  BonusPlan bonus = compute_bonuses(fx.plan, fx.state, fx.graph, fx.trans, b_tgt, 1.0, 10.0, 1e-9);
  REQUIRE(bonus.status == SolveStatus::Optimal);
  CHECK(bonus.b[1] == doctest::Approx(2.0).epsilon(1e-4));
}

TEST_CASE("bonus program matches a dense grid oracle") {
  // Two destinations share one account plus a private account; enumerate
  // (b1, b2) on a fine grid with funding feasibility via the Hall condition.
  std::mt19937_64 rng(808);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (int trial = 0; trial < 6; ++trial) {
    CityGraph g = simple_graph(3, {}, {{0, 1}, {0, 2}}, {{0, 1}, {0, 2}, {1, 2}});
    MarketState st;
    st.d = vec({0, 5, 5});
    st.s0 = vec({6, 0, 0});
    st.s_bar = vec({0, 0, 0});
    st.r = vec({0, 0, 0});
    st.f = vec({1, 1, 1});
    st.e = vec({10.0 * unif(rng), 8.0 * unif(rng), 0});
    TransitionModel trans = TransitionModel::simple(1.0, {{0, 1}, {0, 2}}, 0.5 + 0.4 * unif(rng), 0.0);

    AllocationPlan plan;
    plan.active = ActiveSet::all(3);
    plan.index.pairs = {{0, 1}, {0, 2}};
    plan.A = vec({0.2 + 0.3 * unif(rng), 0.2 + 0.3 * unif(rng)});
    // Every mask-permitted pair into a targeted destination with balance.
    plan.contrib_pairs = {{0, 1}, {0, 2}, {1, 1}, {1, 2}};
    plan.status = SolveStatus::Optimal;

    const double b_min = 0.5, b_max = 6.0;
    Eigen::VectorXd b_tgt = vec({3.0 + 2.0 * unif(rng), 2.0 + 2.0 * unif(rng), 3.0});
    BonusPlan bonus = compute_bonuses(plan, st, g, trans, b_tgt, b_min, b_max, 1e-9, 0.0);
    REQUIRE(bonus.status == SolveStatus::Optimal);

    Eigen::VectorXd resp = expected_responders(plan.index, plan.A, st.s0, trans);
    double solver_obj = 0;
    for (int k : {1, 2})
      solver_obj += std::pow(bonus.b[k] - std::clamp(b_tgt[k], b_min, b_max), 2.0);

    double best = std::numeric_limits<double>::infinity();
    const int steps = 60;
    for (int i1 = 0; i1 <= steps; ++i1) {
      for (int i2 = 0; i2 <= steps; ++i2) {
        double b1 = b_min + (b_max - b_min) * i1 / steps;
        double b2 = b_min + (b_max - b_min) * i2 / steps;
        std::vector<double> req{resp[1] * b1, resp[2] * b2};
        if (!hall_feasible(req, {1, 2}, st.e, g)) continue;
        double obj = std::pow(b1 - std::clamp(b_tgt[1], b_min, b_max), 2.0) +
                     std::pow(b2 - std::clamp(b_tgt[2], b_min, b_max), 2.0);
        best = std::min(best, obj);
      }
    }
    REQUIRE(std::isfinite(best));
    CHECK(solver_obj <= best + 1e-3);
  }
}

TEST_CASE("bonus parity and funding mechanics on issue") {
  Fixture fx(3, 1.0, 6);
  EscrowLedger ledger(2, fx.graph.contrib_mask);
  ledger.apply_event(prefill(0, 600, 0));
  fx.state.e = ledger.available_dollars();

  Eigen::VectorXd b_tgt = vec({2, 2});
  BonusPlan bonus = compute_bonuses(fx.plan, fx.state, fx.graph, fx.trans, b_tgt, 1.0, 10.0, 1e-9);
  REQUIRE(bonus.status == SolveStatus::Optimal);
  bonus.ledger_version = ledger.version();

  SUBCASE("no assignments leave the ledger untouched") {
    std::vector<IssuedPpz> issued = issue_ppzs(bonus, {}, ledger);
    CHECK(issued.empty());
    CHECK(ledger.available(0) == 600);
  }
  SUBCASE("three drivers reserve the full pool") {
    std::vector<Assignment> assignments{{0, 0, 1}, {1, 0, 1}, {2, 0, 1}};
    std::vector<IssuedPpz> issued = issue_ppzs(bonus, assignments, ledger);
    REQUIRE(issued.size() == 3);
    for (const IssuedPpz& ppz : issued) CHECK(ppz.bonus == issued.front().bonus);
    CHECK(issued.front().bonus == 200);
    CHECK(ledger.reserved_spend(0) == 600);
    CHECK(ledger.available(0) == 0);
  }
  SUBCASE("issuance halts when the pool runs dry") {
    std::vector<Assignment> assignments{{0, 0, 1}, {1, 0, 1}, {2, 0, 1}, {3, 0, 1}, {4, 0, 1}};
    std::vector<IssuedPpz> issued = issue_ppzs(bonus, assignments, ledger);
    CHECK(issued.size() == 3);  // 3 * 2.00 exhausts 6.00
    CHECK(ledger.available(0) == 0);
  }
  SUBCASE("stale plans are rejected") {
    ledger.apply_event(prefill(1, 100, ledger.next_timestamp()));
    CHECK_THROWS_AS(issue_ppzs(bonus, {}, ledger), LedgerError);
  }
}

TEST_CASE("random issuance never overdraws and replays exactly") {
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (int trial = 0; trial < 10; ++trial) {
    Fixture fx(1 + static_cast<int>(unif(rng) * 8), 1.0, 0);
    EscrowLedger ledger(2, fx.graph.contrib_mask);
    Cents income = 100 + static_cast<Cents>(unif(rng) * 2000);
    ledger.apply_event(prefill(0, income, 0));
    fx.state.e = ledger.available_dollars();

    Eigen::VectorXd b_tgt = vec({1.0 + 3.0 * unif(rng), 1.0 + 3.0 * unif(rng)});
    BonusPlan bonus = compute_bonuses(fx.plan, fx.state, fx.graph, fx.trans, b_tgt, 1.0, 5.0, 1e-9);
    if (bonus.status != SolveStatus::Optimal) continue;
    bonus.ledger_version = ledger.version();

    std::vector<Assignment> assignments;
    int drivers = static_cast<int>(llround(fx.state.s0[0]));
    for (int k = 0; k < drivers; ++k) assignments.push_back({k, 0, 1});
    Cents before = ledger.available(0);
    issue_ppzs(bonus, assignments, ledger);
    CHECK(ledger.available(0) >= 0);
    CHECK(ledger.reserved_spend(0) <= before);
    // Replay must reproduce the mutated ledger exactly.
    EscrowLedger again = EscrowLedger::replay(2, ledger.log());
    CHECK(again.available_cents() == ledger.available_cents());
  }
}

// Shared fixtures and independent oracles for the test suites. The oracles
// here deliberately avoid the production solve path: dense linear algebra,
// vertex enumeration, subset (Hall) feasibility checks, and plain grid
// search.
#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <optional>
#include <random>
#include <vector>

#include "ppz/dynamics.hpp"
#include "ppz/market.hpp"
#include "ppz/positioning.hpp"
#include "ppz/spatial.hpp"
#include "ppz/transition.hpp"

namespace ppz::testing {

inline SparseMask mask_of(int n, std::vector<std::pair<int, int>> pairs) {
  return SparseMask::from_pairs(n, pairs);
}

inline CityGraph simple_graph(int n, std::vector<std::pair<int, int>> dispatch_extra,
                              std::vector<std::pair<int, int>> alloc,
                              std::vector<std::pair<int, int>> contrib_extra = {},
                              std::vector<std::pair<int, int>> adjacency = {}) {
  CityGraph g;
  g.n = n;
  std::vector<std::pair<int, int>> dispatch, contrib;
  for (int i = 0; i < n; ++i) {
    dispatch.emplace_back(i, i);
    contrib.emplace_back(i, i);
  }
  for (auto [i, j] : dispatch_extra) {
    dispatch.emplace_back(i, j);
    dispatch.emplace_back(j, i);
  }
  for (auto p : contrib_extra) contrib.push_back(p);
  g.dispatch_mask = mask_of(n, dispatch);
  g.alloc_mask = mask_of(n, alloc);
  g.contrib_mask = mask_of(n, contrib);
  g.adjacency = mask_of(n, adjacency);
  g.validate();
  return g;
}

inline Eigen::VectorXd vec(std::initializer_list<double> xs) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(xs.size()));
  Eigen::Index i = 0;
  for (double x : xs) v[i++] = x;
  return v;
}

// Dense reference for the sparse neighborhood product.
inline Eigen::VectorXd dense_mask_product(const SparseMask& mask, const Eigen::VectorXd& v) {
  Eigen::MatrixXd M = Eigen::MatrixXd::Zero(mask.n, mask.n);
  for (int i = 0; i < mask.n; ++i)
    for (int j : mask.rows[static_cast<std::size_t>(i)]) M(i, j) = 1.0;
  return M * v;
}

// ---------------------------------------------------------------------------
// Small-instance generator shared by the positioning-oracle and pruning
// suites. Dispatch neighborhoods are partition cliques, matching how the
// dispatch relation is defined, and landing mass stays on {origin, dest}.

struct SmallInstance {
  CityGraph graph;
  MarketState state;
  ConversionModel conv;
  TransitionModel trans;
  PositioningConfig cfg;
};

inline SmallInstance random_small_instance(std::mt19937_64& rng, int n, int max_pairs,
                                           bool spare_reserves = false) {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  SmallInstance inst;
  CityGraph& g = inst.graph;
  g.n = n;

  // Partition into dispatch cliques.
  std::vector<int> cell(static_cast<std::size_t>(n));
  int cells = 1 + static_cast<int>(unif(rng) * n);
  for (int i = 0; i < n; ++i) cell[static_cast<std::size_t>(i)] = static_cast<int>(unif(rng) * cells);
  std::vector<std::pair<int, int>> dispatch;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (cell[static_cast<std::size_t>(i)] == cell[static_cast<std::size_t>(j)]) dispatch.emplace_back(i, j);

  std::vector<std::pair<int, int>> alloc_all;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (i != j) alloc_all.emplace_back(i, j);
  std::shuffle(alloc_all.begin(), alloc_all.end(), rng);
  int take = std::min<int>(max_pairs, static_cast<int>(unif(rng) * (alloc_all.size() + 1)));
  std::vector<std::pair<int, int>> alloc(alloc_all.begin(), alloc_all.begin() + take);

  std::vector<std::pair<int, int>> contrib;
  for (int i = 0; i < n; ++i) {
    contrib.emplace_back(i, i);
    for (int j = 0; j < n; ++j)
      if (i != j && unif(rng) < 0.4) contrib.emplace_back(i, j);
  }
  std::vector<std::pair<int, int>> adjacency;
  for (int i = 0; i + 1 < n; ++i) {
    adjacency.emplace_back(i, i + 1);
    adjacency.emplace_back(i + 1, i);
  }

  g.dispatch_mask = mask_of(n, dispatch);
  g.alloc_mask = mask_of(n, alloc);
  g.contrib_mask = mask_of(n, contrib);
  g.adjacency = mask_of(n, adjacency);
  g.validate();

  MarketState& st = inst.state;
  st.d.resize(n);
  st.s0.resize(n);
  st.s_bar.resize(n);
  st.r.resize(n);
  st.f.resize(n);
  st.e.resize(n);
  for (int i = 0; i < n; ++i) {
    st.d[i] = unif(rng) < 0.35 ? 0.0 : 1.0 + 9.0 * unif(rng);
    st.s0[i] = unif(rng) < 0.3 ? 0.0 : std::floor(1.0 + 5.0 * unif(rng));
    st.s_bar[i] = unif(rng) < 0.8 ? 0.0 : std::floor(2.0 * unif(rng));
    st.f[i] = 1.0 + 4.0 * unif(rng);
    st.e[i] = unif(rng) < 0.4 ? 0.0 : 20.0 * unif(rng);
  }

  inst.conv.beta = Eigen::VectorXd::Constant(n, 0.7);
  inst.conv.x_max = 5.0;

  inst.trans = TransitionModel::simple(0.8 + 0.2 * unif(rng), alloc, 0.4 + 0.5 * unif(rng), 0.1);

  inst.cfg.objective = unif(rng) < 0.5 ? Objective::Bookings : Objective::Conversion;
  inst.cfg.l1_weight = 0.0;
  inst.cfg.smooth_weight = 0.0;
  inst.cfg.b_min = 0.5 + unif(rng);
  inst.cfg.b_max = inst.cfg.b_min + 10.0;

  // Reserves: small, and capped so the empty allocation stays feasible at the
  // price ceiling.
  Eigen::VectorXd ymin = inst.conv.y_min();
  for (int i = 0; i < n; ++i) {
    double nbhd_supply = 0, floor_demand = 0;
    for (int k : g.dispatch_mask.rows[static_cast<std::size_t>(i)]) {
      nbhd_supply += inst.trans.p_stay * st.s0[k] + st.s_bar[k];
      floor_demand += st.d[k] * ymin[k];
    }
    double draw = (spare_reserves ? 0.0 : unif(rng)) * nbhd_supply * 0.3;
    st.r[i] = std::min(draw, std::max(0.0, 0.95 * (nbhd_supply - floor_demand)));
  }
  return inst;
}

// ---------------------------------------------------------------------------
// Exact LP oracle in <= 3 quantile variables by vertex enumeration:
// maximize w'y subject to B y <= rhs and box bounds. Returns nullopt when the
// polytope is empty.

inline std::optional<double> vertex_lp_max(const Eigen::VectorXd& w, const Eigen::MatrixXd& B,
                                           const Eigen::VectorXd& rhs, const Eigen::VectorXd& lo,
                                           const Eigen::VectorXd& hi) {
  const int n = static_cast<int>(w.size());
  const int m = static_cast<int>(B.rows());
  // Constraint list: rows of B, then y_i >= lo (as -y <= -lo), then y_i <= hi.
  Eigen::MatrixXd A(m + 2 * n, n);
  Eigen::VectorXd b(m + 2 * n);
  A.topRows(m) = B;
  b.head(m) = rhs;
  for (int i = 0; i < n; ++i) {
    A.row(m + i).setZero();
    A(m + i, i) = -1.0;
    b[m + i] = -lo[i];
    A.row(m + n + i).setZero();
    A(m + n + i, i) = 1.0;
    b[m + n + i] = hi[i];
  }
  const int total = m + 2 * n;
  double best = -std::numeric_limits<double>::infinity();
  std::vector<int> pick(static_cast<std::size_t>(n));

  auto feasible = [&](const Eigen::VectorXd& y) {
    return ((A * y - b).array() <= 1e-9).all();
  };

  std::vector<int> idx(static_cast<std::size_t>(total));
  for (int i = 0; i < total; ++i) idx[static_cast<std::size_t>(i)] = i;
  std::vector<bool> select(static_cast<std::size_t>(total), false);
  std::fill(select.begin(), select.begin() + n, true);
  std::sort(select.begin(), select.end());  // lexicographic combinations via next_permutation
  do {
    int k = 0;
    for (int i = 0; i < total; ++i)
      if (select[static_cast<std::size_t>(i)]) pick[static_cast<std::size_t>(k++)] = i;
    Eigen::MatrixXd As(n, n);
    Eigen::VectorXd bs(n);
    for (int r = 0; r < n; ++r) {
      As.row(r) = A.row(pick[static_cast<std::size_t>(r)]);
      bs[r] = b[pick[static_cast<std::size_t>(r)]];
    }
    Eigen::FullPivLU<Eigen::MatrixXd> lu(As);
    if (!lu.isInvertible()) continue;
    Eigen::VectorXd y = lu.solve(bs);
    if (feasible(y)) best = std::max(best, w.dot(y));
  } while (std::next_permutation(select.begin(), select.end()));

  if (!std::isfinite(best)) return std::nullopt;
  return best;
}

// Divisible-supply transportation feasibility by subset (Hall) condition:
// demands req_j can be covered by account balances e_i restricted to the
// contribution mask iff every demand subset is covered by its neighborhood.
inline bool hall_feasible(const std::vector<double>& req, const std::vector<int>& dests,
                          const Eigen::VectorXd& e, const CityGraph& graph, double tol = 1e-9) {
  const int k = static_cast<int>(dests.size());
  for (int mask = 1; mask < (1 << k); ++mask) {
    double need = 0;
    for (int b = 0; b < k; ++b)
      if (mask & (1 << b)) need += req[static_cast<std::size_t>(b)];
    double have = 0;
    for (int i = 0; i < graph.n; ++i) {
      if (e[i] <= 0) continue;
      bool touches = false;
      for (int b = 0; b < k && !touches; ++b)
        if ((mask & (1 << b)) && graph.contrib_mask.contains(i, dests[static_cast<std::size_t>(b)]))
          touches = true;
      if (touches) have += e[i];
    }
    if (need > have + tol) return false;
  }
  return true;
}

// Expected post-move supply, written out directly from the movement story.
inline Eigen::VectorXd oracle_expected_supply(const SmallInstance& inst,
                                              const std::vector<std::pair<int, int>>& pairs,
                                              const Eigen::VectorXd& A) {
  const int n = inst.graph.n;
  Eigen::VectorXd s = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd allocated = Eigen::VectorXd::Zero(n);
  for (std::size_t p = 0; p < pairs.size(); ++p) {
    auto [o, j] = pairs[p];
    allocated[o] += A[static_cast<Eigen::Index>(p)];
    for (const auto& land : inst.trans.landings(o, j))
      s[land.location] += land.prob * A[static_cast<Eigen::Index>(p)] * inst.state.s0[o];
  }
  for (int i = 0; i < n; ++i) s[i] += inst.trans.p_stay * (1.0 - allocated[i]) * inst.state.s0[i];
  return s;
}

// Exhaustive oracle for the positioning objective: allocation fractions on a
// grid (respecting the per-origin simplex), budget feasibility by the Hall
// condition, and the quantile subproblem solved exactly by vertex
// enumeration. Returns the best market objective, or nullopt if nothing is
// feasible.
inline std::optional<double> grid_search_positioning(const SmallInstance& inst, double step = 0.05) {
  const int n = inst.graph.n;
  const auto& pairs_mask = inst.graph.alloc_mask;
  std::vector<std::pair<int, int>> pairs;
  for (int i = 0; i < n; ++i)
    for (int j : pairs_mask.rows[static_cast<std::size_t>(i)]) pairs.emplace_back(i, j);
  const int np = static_cast<int>(pairs.size());

  Eigen::VectorXd w(n);
  for (int i = 0; i < n; ++i)
    w[i] = (inst.cfg.objective == Objective::Bookings ? inst.state.f[i] : 1.0) * inst.state.d[i];

  Eigen::MatrixXd M = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i < n; ++i)
    for (int j : inst.graph.dispatch_mask.rows[static_cast<std::size_t>(i)]) M(i, j) = 1.0;

  const Eigen::VectorXd ymin = inst.conv.y_min().cwiseMin(1.0);
  const Eigen::VectorXd ones = Eigen::VectorXd::Ones(n);

  // The balance rows only involve y for locations with demand; B has one row
  // per location.
  Eigen::MatrixXd B = M * inst.state.d.asDiagonal();

  int levels = static_cast<int>(std::round(1.0 / step)) + 1;
  std::vector<int> level(static_cast<std::size_t>(np), 0);
  std::optional<double> best;

  auto evaluate = [&]() {
    Eigen::VectorXd A(np);
    for (int p = 0; p < np; ++p) A[p] = level[static_cast<std::size_t>(p)] * step;
    // Per-origin simplex.
    Eigen::VectorXd rowsum = Eigen::VectorXd::Zero(n);
    for (int p = 0; p < np; ++p) rowsum[pairs[static_cast<std::size_t>(p)].first] += A[p];
    if ((rowsum.array() > 1.0 + 1e-12).any()) return;
    // Budget feasibility at the bonus floor.
    std::vector<int> dests;
    std::vector<double> req;
    {
      Eigen::VectorXd responders = Eigen::VectorXd::Zero(n);
      for (int p = 0; p < np; ++p) {
        auto [o, j] = pairs[static_cast<std::size_t>(p)];
        responders[j] += inst.trans.comply_prob(o, j) * A[p] * inst.state.s0[o];
      }
      for (int j = 0; j < n; ++j) {
        if (responders[j] > 1e-12) {
          dests.push_back(j);
          req.push_back(inst.cfg.b_min * responders[j]);
        }
      }
    }
    if (!hall_feasible(req, dests, inst.state.e, inst.graph)) return;

    Eigen::VectorXd s = oracle_expected_supply(inst, pairs, A);
    Eigen::VectorXd rhs = M * (s + inst.state.s_bar) - inst.state.r;
    std::optional<double> value = vertex_lp_max(w, B, rhs, ymin, ones);
    if (!value) return;
    if (!best || *value > *best) best = *value;
  };

  // Odometer over allocation levels.
  for (;;) {
    evaluate();
    int p = 0;
    for (; p < np; ++p) {
      if (++level[static_cast<std::size_t>(p)] < levels) break;
      level[static_cast<std::size_t>(p)] = 0;
    }
    if (p == np) break;
  }
  return best;
}

}  // namespace ppz::testing

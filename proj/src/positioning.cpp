#include "ppz/positioning.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>
#include <vector>

#include "ppz/dynamics.hpp"
#include "ppz/rng.hpp"

namespace ppz {

namespace {
// Tie-break regularization toward y = 1 and A = 0. It has to sit well above
// the interior-point complementarity tolerance or the solver parks degenerate
// variables in the middle of the optimal face instead of at the preferred
// vertex.
constexpr double kTieBreak = 1e-4;
// Allocation fractions below this are dust: either solver residue on a
// degenerate face or too small to ever assign a driver.
constexpr double kMinAllocation = 1e-3;
constexpr std::uint64_t kAssignTag = 0x61736767;
}  // namespace

void PositioningConfig::validate() const {
  if (l1_weight < 0 || smooth_weight < 0) throw std::invalid_argument("negative regularization weight");
  if (!(b_min > 0) || b_min > b_max) throw std::invalid_argument("bonus bounds must satisfy 0 < b_min <= b_max");
}

PositioningProgram build_positioning_program(const MarketState& state, const CityGraph& graph,
                                             const ConversionModel& conv,
                                             const TransitionModel& trans,
                                             const PositioningConfig& cfg,
                                             const ActiveSet& active,
                                             const AllocationIndex& index) {
  const int n = graph.n;
  graph.validate();
  state.validate(n);
  conv.validate(n);
  trans.validate(n);
  cfg.validate();

  const int na = active.size();
  const int np = index.size();

  PositioningLayout layout;
  layout.num_active = na;
  layout.num_pairs = np;

  // Funding pairs: any account with balance may fund a destination that some
  // allocation pair actually targets.
  std::vector<char> is_dest(static_cast<std::size_t>(n), 0);
  for (const auto& [o, j] : index.pairs) {
    (void)o;
    is_dest[static_cast<std::size_t>(j)] = 1;
  }
  for (int i = 0; i < n; ++i) {
    if (state.e[i] <= 0) continue;
    for (int j : graph.contrib_mask.rows[static_cast<std::size_t>(i)])
      if (is_dest[static_cast<std::size_t>(j)]) layout.contrib_pairs.emplace_back(i, j);
  }
  const int nq = static_cast<int>(layout.contrib_pairs.size());

  ConvexProgram prog = ConvexProgram::make(layout.num_vars());

  // Boxes: y in [y_min, 1], allocation and funding fractions in [0, 1].
  const Eigen::VectorXd ymin = conv.y_min();
  for (int k = 0; k < na; ++k) {
    prog.lo[k] = std::min(ymin[active.kept[static_cast<std::size_t>(k)]], 1.0);
    prog.hi[k] = 1.0;
  }
  for (int v = layout.a_offset(); v < layout.num_vars(); ++v) {
    prog.lo[v] = 0.0;
    prog.hi[v] = 1.0;
  }

  // Objective: minimize -(w o d)' y  +  l1 ||A||_1  +  smooth sum (y_i - y_k)^2,
  // plus the tie-break terms. w is the fare for the bookings objective and 1
  // for conversions.
  std::vector<Eigen::Triplet<double>> qt;
  for (int k = 0; k < na; ++k) {
    int orig = active.kept[static_cast<std::size_t>(k)];
    double w = cfg.objective == Objective::Bookings ? state.f[orig] : 1.0;
    prog.c[k] = -w * state.d[orig] - 2.0 * kTieBreak;
    qt.emplace_back(k, k, 2.0 * kTieBreak);
  }
  for (int p = 0; p < np; ++p) prog.c[layout.a_offset() + p] = cfg.l1_weight + kTieBreak;
  if (cfg.smooth_weight > 0) {
    for (int k = 0; k < na; ++k) {
      int i = active.kept[static_cast<std::size_t>(k)];
      for (int j : graph.adjacency.rows[static_cast<std::size_t>(i)]) {
        if (j <= i || !active.contains(j)) continue;
        int kj = active.compact(j);
        qt.emplace_back(k, k, 2.0 * cfg.smooth_weight);
        qt.emplace_back(kj, kj, 2.0 * cfg.smooth_weight);
        qt.emplace_back(k, kj, -2.0 * cfg.smooth_weight);
        qt.emplace_back(kj, k, -2.0 * cfg.smooth_weight);
      }
    }
  }
  prog.Q.setFromTriplets(qt.begin(), qt.end());

  // Supply as an affine function of A: the constant part is the surviving
  // unallocated supply, each pair's column moves prob*s0 to its landings and
  // removes the stay-probability mass from its origin.
  Eigen::VectorXd s_const(n);
  for (int i = 0; i < n; ++i) s_const[i] = trans.p_stay * state.s0[i];
  struct ColEntry {
    int location;
    double value;
  };
  std::vector<std::vector<ColEntry>> a_cols(static_cast<std::size_t>(np));
  for (int p = 0; p < np; ++p) {
    const auto& [o, j] = index.pairs[static_cast<std::size_t>(p)];
    auto& col = a_cols[static_cast<std::size_t>(p)];
    for (const auto& land : trans.landings(o, j))
      col.push_back({land.location, land.prob * state.s0[o]});
    col.push_back({o, -trans.p_stay * state.s0[o]});
  }

  // Row set: every active location, plus pruned-out locations whose
  // neighborhood supply still depends on the allocation variables. Rows with
  // a constant nonnegative right side are vacuous and dropped; a constant
  // negative right side makes the instance infeasible outright.
  std::vector<char> influenced(static_cast<std::size_t>(n), 0);
  for (int p = 0; p < np; ++p)
    for (const ColEntry& ce : a_cols[static_cast<std::size_t>(p)])
      influenced[static_cast<std::size_t>(ce.location)] = 1;

  std::vector<int> row_locations = active.kept;
  bool impossible = false;
  for (int i = 0; i < n; ++i) {
    if (active.contains(i)) continue;
    const auto& nbhd = graph.dispatch_mask.rows[static_cast<std::size_t>(i)];
    bool varies = std::any_of(nbhd.begin(), nbhd.end(), [&](int k) {
      return influenced[static_cast<std::size_t>(k)] != 0;
    });
    if (varies) {
      row_locations.push_back(i);
    } else {
      double rhs = -state.r[i];
      for (int k : nbhd) rhs += s_const[k] + state.s_bar[k];
      if (rhs < 0) impossible = true;
    }
  }
  layout.balance_rows = static_cast<int>(row_locations.size());

  std::vector<Eigen::Triplet<double>> gt;
  std::vector<double> h;
  int row = 0;
  for (int i : row_locations) {
    double rhs = -state.r[i];
    for (int k : graph.dispatch_mask.rows[static_cast<std::size_t>(i)]) {
      rhs += s_const[k] + state.s_bar[k];
      if (state.d[k] > 0 && active.contains(k))
        gt.emplace_back(row, active.compact(k), state.d[k]);
    }
    h.push_back(rhs);
    ++row;
  }
  // Allocation columns enter every balance row whose neighborhood they touch;
  // duplicates are summed on assembly.
  {
    std::vector<int> row_of(static_cast<std::size_t>(n), -1);
    for (int rr = 0; rr < layout.balance_rows; ++rr)
      row_of[static_cast<std::size_t>(row_locations[static_cast<std::size_t>(rr)])] = rr;
    for (int p = 0; p < np; ++p) {
      for (const ColEntry& ce : a_cols[static_cast<std::size_t>(p)]) {
        for (int i : graph.dispatch_mask.rows[static_cast<std::size_t>(ce.location)]) {
          int rr = row_of[static_cast<std::size_t>(i)];
          if (rr >= 0) gt.emplace_back(rr, layout.a_offset() + p, -ce.value);
        }
      }
    }
  }

  // Budget rows: expected responders priced at the bonus floor cannot exceed
  // the pooled funding of the destination.
  {
    std::vector<int> dest_row(static_cast<std::size_t>(n), -1);
    for (int j = 0; j < n; ++j) {
      if (!is_dest[static_cast<std::size_t>(j)]) continue;
      dest_row[static_cast<std::size_t>(j)] = row;
      layout.budget_row_dest.push_back(j);
      h.push_back(0.0);
      ++row;
      ++layout.budget_rows;
    }
    for (int p = 0; p < np; ++p) {
      const auto& [o, j] = index.pairs[static_cast<std::size_t>(p)];
      double coeff = cfg.b_min * trans.comply_prob(o, j) * state.s0[o];
      if (coeff != 0.0) gt.emplace_back(dest_row[static_cast<std::size_t>(j)], layout.a_offset() + p, coeff);
    }
    for (int q = 0; q < nq; ++q) {
      const auto& [i, j] = layout.contrib_pairs[static_cast<std::size_t>(q)];
      gt.emplace_back(dest_row[static_cast<std::size_t>(j)], layout.c_offset() + q, -state.e[i]);
    }
  }

  // Per-origin allocation simplex and per-account funding simplex.
  {
    int last_origin = -1;
    for (int p = 0; p < np; ++p) {
      int o = index.pairs[static_cast<std::size_t>(p)].first;
      if (o != last_origin) {
        h.push_back(1.0);
        ++row;
        ++layout.alloc_simplex_rows;
        last_origin = o;
      }
      gt.emplace_back(row - 1, layout.a_offset() + p, 1.0);
    }
    int last_account = -1;
    for (int q = 0; q < nq; ++q) {
      int i = layout.contrib_pairs[static_cast<std::size_t>(q)].first;
      if (i != last_account) {
        h.push_back(1.0);
        ++row;
        ++layout.contrib_simplex_rows;
        last_account = i;
      }
      gt.emplace_back(row - 1, layout.c_offset() + q, 1.0);
    }
  }

  if (impossible) {
    // Zero row with a negative bound: cleanly reports Infeasible.
    h.push_back(-1.0);
    ++row;
  }

  prog.G.resize(row, layout.num_vars());
  prog.G.setFromTriplets(gt.begin(), gt.end());
  prog.h = Eigen::Map<Eigen::VectorXd>(h.data(), static_cast<Eigen::Index>(h.size()));

  return PositioningProgram{std::move(prog), std::move(layout)};
}

AllocationPlan solve_positioning(const MarketState& state, const CityGraph& graph,
                                 const ConversionModel& conv, const TransitionModel& trans,
                                 const PositioningConfig& cfg, const ActiveSet& active,
                                 const AllocationIndex& index, double tol) {
  PositioningProgram built = build_positioning_program(state, graph, conv, trans, cfg, active, index);
  SolveResult res = solve(built.program, tol);

  AllocationPlan plan;
  plan.active = active;
  plan.index = index;
  plan.contrib_pairs = built.layout.contrib_pairs;
  plan.status = res.status;
  plan.kkt_residual = res.kkt_residual;
  plan.solver_objective = res.objective;

  const int na = active.size();
  const int np = index.size();
  plan.y.resize(na);
  plan.x.resize(na);
  plan.A = Eigen::VectorXd::Zero(np);
  plan.C = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(plan.contrib_pairs.size()));

  if (res.status != SolveStatus::Optimal) {
    plan.y.setOnes();
    plan.x.setOnes();
    plan.s_expected = expected_supply(index, plan.A, state.s0, trans);
    return plan;
  }

  const Eigen::VectorXd ymin = conv.y_min();
  for (int k = 0; k < na; ++k) {
    int orig = active.kept[static_cast<std::size_t>(k)];
    double w = cfg.objective == Objective::Bookings ? state.f[orig] : 1.0;
    double lo = std::min(ymin[orig], 1.0);
    double y = std::clamp(res.x[k], std::max(lo, 1e-300), 1.0);
    // Zero-weight locations have a degenerate quantile; report the canonical
    // base price.
    if (w * state.d[orig] == 0.0) y = 1.0;
    plan.y[k] = y;
    plan.x[k] = 1.0 - std::log(y) / conv.beta[orig];
  }
  plan.A = res.x.segment(built.layout.a_offset(), np);
  plan.A = plan.A.cwiseMax(0.0).cwiseMin(1.0);
  for (int p = 0; p < np; ++p)
    if (plan.A[p] < kMinAllocation) plan.A[p] = 0.0;
  {
    Eigen::VectorXd rowsum = Eigen::VectorXd::Zero(graph.n);
    for (int p = 0; p < np; ++p) rowsum[index.pairs[static_cast<std::size_t>(p)].first] += plan.A[p];
    for (int p = 0; p < np; ++p) {
      int o = index.pairs[static_cast<std::size_t>(p)].first;
      if (rowsum[o] > 1.0) plan.A[p] /= rowsum[o];
    }
  }
  if (plan.C.size()) plan.C = res.x.tail(plan.C.size()).cwiseMax(0.0).cwiseMin(1.0);

  plan.s_expected = expected_supply(index, plan.A, state.s0, trans);

  double market = 0.0;
  for (int k = 0; k < na; ++k) {
    int orig = active.kept[static_cast<std::size_t>(k)];
    double w = cfg.objective == Objective::Bookings ? state.f[orig] : 1.0;
    market += w * state.d[orig] * plan.y[k];
  }
  plan.market_objective = market;
  return plan;
}

std::vector<Assignment> sample_assignments(const AllocationPlan& plan, const Eigen::VectorXd& s0,
                                           std::uint64_t seed) {
  const int n = static_cast<int>(s0.size());
  // Per-origin cumulative destination thresholds.
  std::vector<std::vector<std::pair<double, int>>> cum(static_cast<std::size_t>(n));
  Eigen::VectorXd rowsum = Eigen::VectorXd::Zero(n);
  for (int p = 0; p < plan.index.size(); ++p) {
    const auto& [o, j] = plan.index.pairs[static_cast<std::size_t>(p)];
    rowsum[o] += plan.A[p];
    if (rowsum[o] > 1.0 + 1e-9) throw std::invalid_argument("sample_assignments: allocation row sum exceeds 1");
    cum[static_cast<std::size_t>(o)].emplace_back(rowsum[o], j);
  }

  std::vector<Assignment> out;
  long long driver_id = 0;
  for (int i = 0; i < n; ++i) {
    long long count = llround(s0[i]);
    if (std::abs(s0[i] - static_cast<double>(count)) > 1e-9)
      throw std::invalid_argument("sample_assignments: driver counts must be integral");
    for (long long k = 0; k < count; ++k, ++driver_id) {
      if (cum[static_cast<std::size_t>(i)].empty()) continue;
      auto rng = make_rng(derive_seed(seed, kAssignTag, static_cast<std::uint64_t>(driver_id)));
      std::uniform_real_distribution<double> unif(0.0, 1.0);
      double roll = unif(rng);
      for (const auto& [threshold, dest] : cum[static_cast<std::size_t>(i)]) {
        if (roll < threshold) {
          out.push_back({static_cast<int>(driver_id), i, dest});
          break;
        }
      }
    }
  }
  return out;
}

}  // namespace ppz

#include "ppz/spatial.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

namespace ppz {

SparseMask SparseMask::from_pairs(int n, const std::vector<std::pair<int, int>>& pairs) {
  SparseMask m(n);
  for (const auto& [i, j] : pairs) {
    if (i < 0 || i >= n || j < 0 || j >= n)
      throw std::invalid_argument("mask pair out of range");
    m.rows[static_cast<std::size_t>(i)].push_back(j);
  }
  for (auto& row : m.rows) {
    std::sort(row.begin(), row.end());
    row.erase(std::unique(row.begin(), row.end()), row.end());
  }
  return m;
}

SparseMask SparseMask::identity(int n) {
  SparseMask m(n);
  for (int i = 0; i < n; ++i) m.rows[static_cast<std::size_t>(i)].push_back(i);
  return m;
}

bool SparseMask::contains(int i, int j) const {
  if (i < 0 || i >= n) return false;
  const auto& row = rows[static_cast<std::size_t>(i)];
  return std::binary_search(row.begin(), row.end(), j);
}

void SparseMask::insert(int i, int j) {
  auto& row = rows.at(static_cast<std::size_t>(i));
  auto it = std::lower_bound(row.begin(), row.end(), j);
  if (it == row.end() || *it != j) row.insert(it, j);
}

std::size_t SparseMask::nnz() const {
  std::size_t total = 0;
  for (const auto& row : rows) total += row.size();
  return total;
}

SparseMask SparseMask::transposed() const {
  SparseMask t(n);
  for (int i = 0; i < n; ++i)
    for (int j : rows[static_cast<std::size_t>(i)])
      t.rows[static_cast<std::size_t>(j)].push_back(i);
  for (auto& row : t.rows) std::sort(row.begin(), row.end());
  return t;
}

bool SparseMask::is_symmetric() const {
  for (int i = 0; i < n; ++i)
    for (int j : rows[static_cast<std::size_t>(i)])
      if (!contains(j, i)) return false;
  return true;
}

void CityGraph::validate() const {
  auto check_dims = [&](const SparseMask& m, const char* name) {
    if (m.n != n || static_cast<int>(m.rows.size()) != n)
      throw std::invalid_argument(std::string(name) + ": wrong dimension");
  };
  check_dims(dispatch_mask, "dispatch_mask");
  check_dims(alloc_mask, "alloc_mask");
  check_dims(contrib_mask, "contrib_mask");
  check_dims(adjacency, "adjacency");

  if (!dispatch_mask.is_symmetric())
    throw std::invalid_argument("dispatch_mask must be symmetric");
  for (int i = 0; i < n; ++i) {
    if (!dispatch_mask.contains(i, i))
      throw std::invalid_argument("dispatch_mask diagonal must be true");
    if (alloc_mask.contains(i, i))
      throw std::invalid_argument("alloc_mask diagonal must be false");
    if (!contrib_mask.contains(i, i))
      throw std::invalid_argument("contrib_mask diagonal must be true");
  }
}

ActiveSet ActiveSet::of(int n, std::vector<int> kept_ids) {
  std::sort(kept_ids.begin(), kept_ids.end());
  kept_ids.erase(std::unique(kept_ids.begin(), kept_ids.end()), kept_ids.end());
  ActiveSet a;
  a.kept = std::move(kept_ids);
  a.origin_map.assign(static_cast<std::size_t>(n), -1);
  for (int k = 0; k < static_cast<int>(a.kept.size()); ++k) {
    int id = a.kept[static_cast<std::size_t>(k)];
    if (id < 0 || id >= n) throw std::invalid_argument("active id out of range");
    a.origin_map[static_cast<std::size_t>(id)] = k;
  }
  return a;
}

ActiveSet ActiveSet::all(int n) {
  std::vector<int> ids(static_cast<std::size_t>(n));
  std::iota(ids.begin(), ids.end(), 0);
  return of(n, std::move(ids));
}

Eigen::VectorXd neighborhood_aggregate(const CityGraph& graph, const Eigen::VectorXd& v) {
  if (v.size() != graph.n) throw std::invalid_argument("neighborhood_aggregate: dimension mismatch");
  Eigen::VectorXd out = Eigen::VectorXd::Zero(graph.n);
  for (int i = 0; i < graph.n; ++i) {
    double acc = 0;
    for (int j : graph.dispatch_mask.rows[static_cast<std::size_t>(i)]) acc += v[j];
    out[i] = acc;
  }
  return out;
}

ActiveSet prune_active_set(const CityGraph& graph, const Eigen::VectorXd& d,
                           const Eigen::VectorXd& s0_assignable) {
  const int n = graph.n;
  if (d.size() != n || s0_assignable.size() != n)
    throw std::invalid_argument("prune_active_set: dimension mismatch");

  std::vector<char> in_demand_nbhd(static_cast<std::size_t>(n), 0);
  std::vector<char> kept(static_cast<std::size_t>(n), 0);

  // Rule (a): demand locations and their dispatch neighborhoods.
  for (int i = 0; i < n; ++i) {
    if (d[i] > 0) {
      for (int j : graph.dispatch_mask.rows[static_cast<std::size_t>(i)]) {
        in_demand_nbhd[static_cast<std::size_t>(j)] = 1;
        kept[static_cast<std::size_t>(j)] = 1;
      }
    }
  }

  // Rule (b): supply whose allocation neighborhood reaches rule-(a) territory,
  // plus that whole allocation neighborhood.
  for (int i = 0; i < n; ++i) {
    if (s0_assignable[i] <= 0) continue;
    const auto& dests = graph.alloc_mask.rows[static_cast<std::size_t>(i)];
    bool overlaps = std::any_of(dests.begin(), dests.end(), [&](int j) {
      return in_demand_nbhd[static_cast<std::size_t>(j)] != 0;
    });
    if (!overlaps) continue;
    kept[static_cast<std::size_t>(i)] = 1;
    for (int j : dests) kept[static_cast<std::size_t>(j)] = 1;
  }

  std::vector<int> ids;
  for (int i = 0; i < n; ++i)
    if (kept[static_cast<std::size_t>(i)]) ids.push_back(i);
  return ActiveSet::of(n, std::move(ids));
}

AllocationIndex vectorize_allocation(const CityGraph& graph, const ActiveSet& active) {
  AllocationIndex index;
  for (int i : active.kept) {
    for (int j : graph.alloc_mask.rows[static_cast<std::size_t>(i)]) {
      if (active.contains(j)) index.pairs.emplace_back(i, j);
    }
  }
  // Row-major walk over sorted rows is already lexicographic.
  return index;
}

}  // namespace ppz

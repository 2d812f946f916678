#pragma once

#include <Eigen/Core>
#include <cstddef>
#include <utility>
#include <vector>

namespace ppz {

// Sparse 0/1 mask stored as row-sorted adjacency lists.
struct SparseMask {
  int n = 0;
  std::vector<std::vector<int>> rows;

  SparseMask() = default;
  explicit SparseMask(int n_) : n(n_), rows(static_cast<std::size_t>(n_)) {}

  static SparseMask from_pairs(int n, const std::vector<std::pair<int, int>>& pairs);
  static SparseMask identity(int n);

  bool contains(int i, int j) const;
  void insert(int i, int j);  // keeps rows sorted, ignores duplicates
  std::size_t nnz() const;
  SparseMask transposed() const;
  bool is_symmetric() const;
};

// Location set plus the sparse neighborhood structure the optimizers run on.
//
// dispatch_mask  M      symmetric, diagonal true: locations that share a
//                       dispatch neighborhood (a driver at j can serve i).
// alloc_mask     A^max  valid repositioning origin->destination pairs,
//                       diagonal false.
// contrib_mask   C^max  account i may fund incentives ending at j,
//                       diagonal true.
// adjacency             spatial neighbors, used by the smoothness penalty.
struct CityGraph {
  int n = 0;
  SparseMask dispatch_mask;
  SparseMask alloc_mask;
  SparseMask contrib_mask;
  SparseMask adjacency;

  void validate() const;  // throws std::invalid_argument on broken invariants
};

// Result of location pruning: the surviving locations in increasing original
// id, plus the original -> compact index map (-1 for pruned locations).
struct ActiveSet {
  std::vector<int> kept;
  std::vector<int> origin_map;

  int size() const { return static_cast<int>(kept.size()); }
  bool contains(int original) const {
    return original >= 0 && original < static_cast<int>(origin_map.size()) &&
           origin_map[static_cast<std::size_t>(original)] >= 0;
  }
  int compact(int original) const { return origin_map[static_cast<std::size_t>(original)]; }

  static ActiveSet of(int n, std::vector<int> kept_ids);
  static ActiveSet all(int n);
};

// Vectorized allocation variables: every alloc_mask pair with both endpoints
// active, in lexicographic order. Element k of an allocation vector refers to
// pairs[k].
struct AllocationIndex {
  std::vector<std::pair<int, int>> pairs;

  int size() const { return static_cast<int>(pairs.size()); }
};

// M v: entry i is the sum of v over i's dispatch neighborhood.
Eigen::VectorXd neighborhood_aggregate(const CityGraph& graph, const Eigen::VectorXd& v);

// Active set per the two pruning rules: (a) positive-demand locations plus
// their dispatch neighborhoods; (b) positive-supply locations whose allocation
// neighborhood overlaps any dispatch neighborhood of positive demand, plus
// those locations' allocation neighborhoods.
ActiveSet prune_active_set(const CityGraph& graph, const Eigen::VectorXd& d,
                           const Eigen::VectorXd& s0_assignable);

AllocationIndex vectorize_allocation(const CityGraph& graph, const ActiveSet& active);

}  // namespace ppz

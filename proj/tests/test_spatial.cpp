#include <doctest.h>

#include <random>

#include "helpers.hpp"
#include "ppz/spatial.hpp"

using namespace ppz;
using namespace ppz::testing;

TEST_CASE("neighborhood_aggregate identity mask") {
  CityGraph g = simple_graph(3, {}, {});
  Eigen::VectorXd v = vec({1, 2, 3});
  CHECK(neighborhood_aggregate(g, v).isApprox(vec({1, 2, 3})));
}

TEST_CASE("neighborhood_aggregate full mask") {
  CityGraph g = simple_graph(3, {{0, 1}, {0, 2}, {1, 2}}, {});
  Eigen::VectorXd v = vec({1, 2, 3});
  CHECK(neighborhood_aggregate(g, v).isApprox(vec({6, 6, 6})));
}

TEST_CASE("neighborhood_aggregate chain mask matches dense product") {
  // Chain 0-1-2: rows {0,1}, {0,1,2}, {1,2}.
  CityGraph g = simple_graph(3, {{0, 1}, {1, 2}}, {});
  Eigen::VectorXd v = vec({1, 2, 3});
  Eigen::VectorXd out = neighborhood_aggregate(g, v);
  CHECK(out.isApprox(vec({3, 6, 5})));
  CHECK(out.isApprox(dense_mask_product(g.dispatch_mask, v)));
}

TEST_CASE("neighborhood_aggregate is linear") {
  std::mt19937_64 rng(42);
  std::uniform_real_distribution<double> unif(-5.0, 5.0);
  for (int trial = 0; trial < 20; ++trial) {
    int n = 2 + static_cast<int>(rng() % 7);
    std::vector<std::pair<int, int>> extra;
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j)
        if (rng() % 3 == 0) extra.emplace_back(i, j);
    CityGraph g = simple_graph(n, extra, {});
    Eigen::VectorXd u(n), v(n);
    for (int i = 0; i < n; ++i) {
      u[i] = unif(rng);
      v[i] = unif(rng);
    }
    double a = unif(rng), b = unif(rng);
    Eigen::VectorXd lhs = neighborhood_aggregate(g, a * u + b * v);
    Eigen::VectorXd rhs = a * neighborhood_aggregate(g, u) + b * neighborhood_aggregate(g, v);
    CHECK(lhs.isApprox(rhs, 1e-12));
  }
}

TEST_CASE("neighborhood_aggregate rejects wrong length") {
  CityGraph g = simple_graph(3, {}, {});
  CHECK_THROWS(neighborhood_aggregate(g, vec({1, 2})));
}

TEST_CASE("prune_active_set keeps nothing without demand") {
  CityGraph g = simple_graph(4, {{0, 1}}, {{0, 1}, {2, 3}});
  ActiveSet active = prune_active_set(g, Eigen::VectorXd::Zero(4), vec({1, 1, 1, 1}));
  CHECK(active.size() == 0);
}

TEST_CASE("prune_active_set pulls in supply that can reach demand") {
  // Demand at 0, supply at 1 with an allocation pair 1 -> 0.
  CityGraph g = simple_graph(2, {}, {{1, 0}});
  ActiveSet active = prune_active_set(g, vec({1, 0}), vec({0, 1}));
  CHECK(active.kept == std::vector<int>{0, 1});
  CHECK(active.compact(0) == 0);
  CHECK(active.compact(1) == 1);
}

TEST_CASE("prune_active_set drops isolated locations") {
  // Location 2 has no demand and its allocation neighborhood misses the
  // demand neighborhoods.
  CityGraph g = simple_graph(3, {}, {{1, 0}});
  ActiveSet active = prune_active_set(g, vec({5, 0, 0}), vec({0, 2, 3}));
  CHECK(active.kept == std::vector<int>{0, 1});
  CHECK_FALSE(active.contains(2));
}

TEST_CASE("vectorize_allocation enumerates mask pairs in the active set") {
  CityGraph g = simple_graph(3, {}, {{0, 1}, {0, 2}, {2, 1}});

  SUBCASE("empty mask") {
    CityGraph empty = simple_graph(2, {}, {});
    AllocationIndex index = vectorize_allocation(empty, ActiveSet::all(2));
    CHECK(index.pairs.empty());
  }
  SUBCASE("full enumeration") {
    CityGraph both = simple_graph(2, {}, {{0, 1}, {1, 0}});
    AllocationIndex index = vectorize_allocation(both, ActiveSet::all(2));
    CHECK(index.pairs == std::vector<std::pair<int, int>>{{0, 1}, {1, 0}});
  }
  SUBCASE("restricted active set filters pairs") {
    AllocationIndex index = vectorize_allocation(g, ActiveSet::of(3, {0, 1}));
    CHECK(index.pairs == std::vector<std::pair<int, int>>{{0, 1}});
  }
}

TEST_CASE("vectorize_allocation length matches mask entries inside the active set") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 25; ++trial) {
    int n = 2 + static_cast<int>(rng() % 8);
    std::vector<std::pair<int, int>> alloc;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        if (i != j && rng() % 3 == 0) alloc.emplace_back(i, j);
    CityGraph g = simple_graph(n, {}, alloc);
    std::vector<int> ids;
    for (int i = 0; i < n; ++i)
      if (rng() % 2) ids.push_back(i);
    ActiveSet active = ActiveSet::of(n, ids);
    AllocationIndex index = vectorize_allocation(g, active);

    std::size_t expected = 0;
    for (auto [i, j] : alloc)
      if (active.contains(i) && active.contains(j)) ++expected;
    CHECK(index.pairs.size() == expected);
    CHECK(std::is_sorted(index.pairs.begin(), index.pairs.end()));
    for (auto [i, j] : index.pairs) CHECK(g.alloc_mask.contains(i, j));
  }
}

TEST_CASE("CityGraph invariants are enforced") {
  CityGraph g = simple_graph(2, {}, {{0, 1}});

  SUBCASE("asymmetric dispatch mask") {
    g.dispatch_mask = mask_of(2, {{0, 0}, {1, 1}, {0, 1}});
    CHECK_THROWS(g.validate());
  }
  SUBCASE("missing dispatch diagonal") {
    g.dispatch_mask = mask_of(2, {{0, 0}});
    CHECK_THROWS(g.validate());
  }
  SUBCASE("allocation self-loop") {
    g.alloc_mask = mask_of(2, {{0, 0}});
    CHECK_THROWS(g.validate());
  }
  SUBCASE("missing contribution diagonal") {
    g.contrib_mask = mask_of(2, {{0, 0}});
    CHECK_THROWS(g.validate());
  }
}

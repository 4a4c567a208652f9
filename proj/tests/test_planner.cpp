#include <catch_amalgamated.hpp>

#include "oracles.hpp"

using namespace relgraph;
using testing_support::for_each_permutation;
using testing_support::random_dag;

TEST_CASE("graspable_set examples") {
  CHECK(graspable_set(DependencyGraph::with_nodes(3)) == std::set<int>{1, 2, 3});
  CHECK(graspable_set(DependencyGraph::with_nodes(6, {{1, 2}, {3, 2}, {4, 3}, {5, 6}})) == std::set<int>{2, 6});
  CHECK(graspable_set(DependencyGraph::with_nodes(3, {{1, 2}, {2, 3}})) == std::set<int>{3});
  CHECK_THROWS_AS(graspable_set(DependencyGraph::with_nodes(2, {{1, 2}, {2, 1}})), CycleError);
}

TEST_CASE("removal_plan examples") {
  const auto chain = DependencyGraph::with_nodes(3, {{1, 2}, {2, 3}});
  CHECK(removal_plan(chain, 3).sequence == std::vector<int>{3});
  CHECK(removal_plan(chain, 1).sequence == std::vector<int>{3, 2, 1});
  CHECK(removal_plan(chain, 1).target == 1);
  CHECK(removal_plan(DependencyGraph::with_nodes(3, {{1, 2}, {1, 3}}), 1).sequence == std::vector<int>{2, 3, 1});
  CHECK_THROWS_AS(removal_plan(chain, 4), ValidationError);
  CHECK_THROWS_AS(removal_plan(chain, 0), ValidationError);
}

TEST_CASE("emptying_order examples") {
  CHECK(emptying_order(DependencyGraph::with_nodes(2)) == std::vector<int>{1, 2});
  CHECK(emptying_order(DependencyGraph::with_nodes(2, {{1, 2}})) == std::vector<int>{2, 1});
  CHECK(emptying_order(DependencyGraph::with_nodes(3, {{1, 3}, {2, 3}})) == std::vector<int>{3, 1, 2});
  CHECK_THROWS_AS(emptying_order(DependencyGraph::with_nodes(2, {{1, 2}, {2, 1}})), CycleError);
}

TEST_CASE("graspable nodes are exactly the possible first picks") {
  Rng rng(21);
  for (int trial = 0; trial < 150; ++trial) {
    const auto g = random_dag(1 + trial % 6, rng.uniform(0.1, 0.6), rng);
    std::set<int> firsts;
    for_each_permutation(static_cast<int>(g.size()), [&](const std::vector<int>& perm) {
      std::vector<int> seq;
      for (int v : perm) seq.push_back(v + 1);
      if (oracle::legal_sequence(g, seq)) firsts.insert(seq.front());
    });
    CHECK(graspable_set(g) == firsts);
  }
}

TEST_CASE("removal_plan is legal, ends at the target and is minimal") {
  Rng rng(22);
  for (int trial = 0; trial < 200; ++trial) {
    const auto g = random_dag(1 + trial % 6, rng.uniform(0.1, 0.7), rng);
    for (int target = 1; target <= static_cast<int>(g.size()); ++target) {
      const auto plan = removal_plan(g, target);
      REQUIRE(plan.sequence.back() == target);
      REQUIRE(oracle::legal_sequence(g, plan.sequence));
      REQUIRE(static_cast<int>(plan.sequence.size()) == oracle::shortest_plan_length(g, target));
    }
  }
}

TEST_CASE("every emptying_order prefix leaves the next node graspable") {
  Rng rng(23);
  for (int trial = 0; trial < 200; ++trial) {
    const auto g = random_dag(1 + trial % 8, rng.uniform(0.1, 0.6), rng);
    const auto order = emptying_order(g);
    REQUIRE(order.size() == g.size());
    REQUIRE(oracle::legal_sequence(g, order));
    REQUIRE(std::set<int>(order.begin(), order.end()).size() == g.size());
  }
}

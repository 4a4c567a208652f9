#include <catch_amalgamated.hpp>

#include <limits>

#include "test_support.hpp"

using namespace relgraph;
using testing_support::for_each_permutation;
using testing_support::random_dag;
using testing_support::random_digraph;

namespace {

// Acyclic iff some ordering of the nodes sends every edge forward.
bool brute_force_acyclic(const DependencyGraph& g) {
  bool found = false;
  for_each_permutation(static_cast<int>(g.size()), [&](const std::vector<int>& perm) {
    if (found) return;
    std::vector<int> pos(perm.size());
    for (std::size_t i = 0; i < perm.size(); ++i) pos[static_cast<std::size_t>(perm[i])] = static_cast<int>(i);
    found = std::all_of(g.edges().begin(), g.edges().end(), [&](const Edge& e) {
      return pos[static_cast<std::size_t>(e.from - 1)] < pos[static_cast<std::size_t>(e.to - 1)];
    });
  });
  return found;
}

bool has_edge(const DependencyGraph& g, int a, int b) {
  return std::find(g.edges().begin(), g.edges().end(), Edge{a, b}) != g.edges().end();
}

// Depth and width by Floyd-Warshall and union of reachability.
SceneComplexity reference_complexity(const DependencyGraph& g) {
  const int n = static_cast<int>(g.size());
  SceneComplexity c;
  c.num_objects = n;
  if (n == 0) return c;
  const int inf = std::numeric_limits<int>::max() / 4;
  std::vector<std::vector<int>> d(n, std::vector<int>(n, inf));
  std::vector<std::vector<bool>> linked(n, std::vector<bool>(n, false));
  for (int i = 0; i < n; ++i) {
    d[i][i] = 0;
    linked[i][i] = true;
  }
  for (const auto& e : g.edges()) {
    d[e.from - 1][e.to - 1] = 1;
    linked[e.from - 1][e.to - 1] = linked[e.to - 1][e.from - 1] = true;
  }
  for (int k = 0; k < n; ++k)
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        d[i][j] = std::min(d[i][j], d[i][k] + d[k][j]);
        if (linked[i][k] && linked[k][j]) linked[i][j] = true;
      }
  std::vector<int> indeg(n, 0), outdeg(n, 0);
  for (const auto& e : g.edges()) {
    ++outdeg[e.from - 1];
    ++indeg[e.to - 1];
  }
  for (int i = 0; i < n; ++i) {
    c.clutter_width = std::max(c.clutter_width, static_cast<int>(std::count(linked[i].begin(), linked[i].end(), true)));
    for (int j = 0; j < n; ++j) {
      if (indeg[i] == 0 && outdeg[j] == 0 && d[i][j] < inf) c.clutter_depth = std::max(c.clutter_depth, d[i][j] + 1);
    }
  }
  c.relative_clutter_width = static_cast<double>(c.clutter_width) / n;
  return c;
}

SceneComplexity make_complexity(int n, double rel_width, int depth) {
  SceneComplexity c;
  c.num_objects = n;
  c.relative_clutter_width = rel_width;
  c.clutter_width = static_cast<int>(rel_width * n);
  c.clutter_depth = depth;
  return c;
}

}  // namespace

TEST_CASE("validate_dag examples") {
  CHECK(validate_dag(DependencyGraph::with_nodes(3)).acyclic());

  const auto cyc = validate_dag(DependencyGraph::with_nodes(3, {{1, 2}, {2, 3}, {3, 1}}));
  REQUIRE_FALSE(cyc.acyclic());
  CHECK(cyc.cycle == std::vector<int>{1, 2, 3});
  CHECK(format_cycle(cyc.cycle) == "1 -> 2 -> 3 -> 1");

  CHECK(validate_dag(DependencyGraph::with_nodes(3, {{1, 2}, {1, 3}, {3, 2}})).acyclic());
}

TEST_CASE("structural errors are not cycles") {
  auto is_structural = [](const DependencyGraph& g) {
    try {
      validate_dag(g);
    } catch (const CycleError&) {
      return false;
    } catch (const ValidationError&) {
      return true;
    }
    return false;
  };
  CHECK(is_structural(DependencyGraph::with_nodes(2, {{1, 1}})));
  CHECK(is_structural(DependencyGraph::with_nodes(2, {{1, 2}, {1, 2}})));
  CHECK(is_structural(DependencyGraph::with_nodes(2, {{1, 5}})));
  CHECK_THROWS_WITH(check_structure(DependencyGraph::with_nodes(2, {{1, 5}})),
                    Catch::Matchers::ContainsSubstring("unknown endpoint"));

  std::vector<ObjectNode> gap{{1, 0, {0.5, 0.5, 0.1, 0.1}}, {3, 0, {0.5, 0.5, 0.1, 0.1}}};
  CHECK(is_structural(DependencyGraph(gap, {})));
}

TEST_CASE("require_dag throws CycleError carrying the witness") {
  try {
    require_dag(DependencyGraph::with_nodes(4, {{2, 3}, {3, 4}, {4, 2}}));
    FAIL("expected a cycle");
  } catch (const CycleError& e) {
    CHECK(e.cycle() == std::vector<int>{2, 3, 4});
    CHECK_THAT(e.what(), Catch::Matchers::ContainsSubstring("2 -> 3 -> 4 -> 2"));
  }
}

TEST_CASE("validate_dag agrees with brute force on small graphs") {
  Rng rng(11);
  for (int trial = 0; trial < 600; ++trial) {
    const int n = 1 + trial % 6;
    const auto g = random_digraph(n, rng.uniform(0.05, 0.5), rng);
    const auto check = validate_dag(g);
    REQUIRE(check.acyclic() == brute_force_acyclic(g));
    if (!check.acyclic()) {
      const auto& c = check.cycle;
      REQUIRE(c.size() >= 2);
      CHECK(*std::min_element(c.begin(), c.end()) == c.front());
      for (std::size_t i = 0; i < c.size(); ++i) CHECK(has_edge(g, c[i], c[(i + 1) % c.size()]));
    }
  }
}

TEST_CASE("complexity examples") {
  const auto single = complexity(DependencyGraph::with_nodes(1));
  CHECK(single.clutter_width == 1);
  CHECK(single.relative_clutter_width == 1.0);
  CHECK(single.clutter_depth == 1);

  const auto chain = complexity(DependencyGraph::with_nodes(3, {{1, 2}, {2, 3}}));
  CHECK(chain.clutter_width == 3);
  CHECK(chain.relative_clutter_width == 1.0);
  CHECK(chain.clutter_depth == 3);

  const auto pairs = complexity(DependencyGraph::with_nodes(4, {{1, 2}, {3, 4}}));
  CHECK(pairs.clutter_width == 2);
  CHECK(pairs.relative_clutter_width == 0.5);
  CHECK(pairs.clutter_depth == 2);

  const auto empty = complexity(DependencyGraph{});
  CHECK(empty.num_objects == 0);
  CHECK(empty.clutter_width == 0);
  CHECK(empty.clutter_depth == 0);
  CHECK(classify_difficulty(DependencyGraph{}) == DifficultyLevel::Trivial);
}

TEST_CASE("complexity rejects cycles") {
  CHECK_THROWS_AS(complexity(DependencyGraph::with_nodes(2, {{1, 2}, {2, 1}})), CycleError);
}

TEST_CASE("chain depth equals its length") {
  for (int k = 1; k <= 8; ++k) {
    std::vector<Edge> edges;
    for (int i = 1; i < k; ++i) edges.push_back({i, i + 1});
    CHECK(complexity(DependencyGraph::with_nodes(k, edges)).clutter_depth == k);
  }
}

TEST_CASE("complexity matches a Floyd-Warshall reference") {
  Rng rng(5);
  for (int trial = 0; trial < 300; ++trial) {
    const auto g = random_dag(1 + trial % 9, rng.uniform(0.0, 0.6), rng);
    const auto got = complexity(g);
    const auto want = reference_complexity(g);
    REQUIRE(got.clutter_width == want.clutter_width);
    REQUIRE(got.clutter_depth == want.clutter_depth);
    REQUIRE(got.relative_clutter_width == want.relative_clutter_width);
    CHECK(got.clutter_width <= got.num_objects);
    CHECK(got.clutter_depth >= 1);
    CHECK(got.clutter_depth <= got.num_objects);
  }
}

TEST_CASE("joining two components never shrinks the width") {
  Rng rng(8);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 2 + trial % 7;
    // Edges go forward in id order, so any added forward edge keeps the graph acyclic.
    std::vector<Edge> edges;
    for (int a = 1; a <= n; ++a)
      for (int b = a + 1; b <= n; ++b)
        if (rng.uniform() < 0.2) edges.push_back({a, b});
    const auto g = DependencyGraph::with_nodes(n, edges);
    const int a = rng.uniform_int(1, n - 1);
    const int b = rng.uniform_int(a + 1, n);
    if (std::find(edges.begin(), edges.end(), Edge{a, b}) != edges.end()) continue;
    auto more = edges;
    more.push_back({a, b});
    CHECK(complexity(DependencyGraph::with_nodes(n, more)).clutter_width >= complexity(g).clutter_width);
  }
}

TEST_CASE("classify_difficulty examples") {
  CHECK(classify_difficulty(make_complexity(12, 0.55, 4)) == DifficultyLevel::Hard);
  CHECK(classify_difficulty(make_complexity(6, 0.5, 3)) == DifficultyLevel::Medium);
  CHECK(classify_difficulty(make_complexity(2, 1.0, 2)) == DifficultyLevel::Trivial);
  CHECK(classify_difficulty(make_complexity(3, 1.0 / 3.0, 1)) == DifficultyLevel::Easy);
}

TEST_CASE("difficulty thresholds are strict on relative width") {
  CHECK(classify_difficulty(make_complexity(10, 0.5, 4)) == DifficultyLevel::Medium);
  CHECK(classify_difficulty(make_complexity(6, 0.4, 3)) == DifficultyLevel::Easy);
  CHECK(classify_difficulty(make_complexity(9, 0.9, 9)) == DifficultyLevel::Medium);
  CHECK(classify_difficulty(make_complexity(12, 0.9, 3)) == DifficultyLevel::Medium);
  CHECK(classify_difficulty(make_complexity(5, 1.0, 5)) == DifficultyLevel::Easy);
}

TEST_CASE("difficulty on graphs") {
  // 10 nodes, chain of 4 plus 2 isolated pairs: width 6 -> 0.6, depth 4.
  const auto hard = DependencyGraph::with_nodes(10, {{1, 2}, {2, 3}, {3, 4}, {1, 5}, {5, 6}, {7, 8}, {9, 10}});
  CHECK(classify_difficulty(hard) == DifficultyLevel::Hard);
  CHECK(to_string(DifficultyLevel::Hard) == "Hard");
}

#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "relgraph/relgraph.hpp"

namespace testing_support {

using relgraph::DependencyGraph;
using relgraph::Edge;
using relgraph::Rng;

// Random DAG on n nodes: a random hidden order, each forward pair kept with
// probability p.
inline DependencyGraph random_dag(int n, double p, Rng& rng) {
  const auto order = rng.permutation(n);
  std::vector<Edge> edges;
  for (int a = 0; a < n; ++a) {
    for (int b = a + 1; b < n; ++b) {
      if (rng.uniform() < p) edges.push_back({order[static_cast<std::size_t>(a)] + 1, order[static_cast<std::size_t>(b)] + 1});
    }
  }
  return DependencyGraph::with_nodes(n, edges);
}

// Random directed graph without self or duplicate edges (may be cyclic).
inline DependencyGraph random_digraph(int n, double p, Rng& rng) {
  std::vector<Edge> edges;
  for (int a = 1; a <= n; ++a) {
    for (int b = 1; b <= n; ++b) {
      if (a != b && rng.uniform() < p) edges.push_back({a, b});
    }
  }
  return DependencyGraph::with_nodes(n, edges);
}

// Calls f(perm) for every permutation of 0..n-1 in lexicographic order.
template <class F>
void for_each_permutation(int n, F&& f) {
  std::vector<int> perm(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) perm[static_cast<std::size_t>(i)] = i;
  do {
    f(perm);
  } while (std::next_permutation(perm.begin(), perm.end()));
}

inline std::filesystem::path temp_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("relgraph_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace testing_support

#pragma once

#include <functional>
#include <queue>
#include <set>
#include <vector>

#include "relgraph/depgraph.hpp"
#include "relgraph/errors.hpp"

// Grasp planning over a dependency graph. Edge a -> b means b must be
// removed before a; every routine below derives from that one rule and
// breaks ties between equally valid choices by ascending node id.
namespace relgraph {

struct RemovalPlan {
  int target = 0;
  std::vector<int> sequence;  // dependencies first, target last
};

// Nodes that can be picked right now: out-degree 0.
inline std::set<int> graspable_set(const DependencyGraph& graph) {
  require_dag(graph);
  std::set<int> out;
  const auto succ = graph.out_adjacency();
  for (std::size_t i = 0; i < succ.size(); ++i) {
    if (succ[i].empty()) out.insert(static_cast<int>(i) + 1);
  }
  return out;
}

namespace detail {

// Kahn's procedure restricted to `members`, emitting a node once all of its
// out-neighbours inside `members` have been emitted.
inline std::vector<int> dependency_order(const DependencyGraph& graph,
                                         const std::vector<bool>& members) {
  const auto succ = graph.out_adjacency();
  const auto pred = graph.in_adjacency();
  const auto n = succ.size();
  std::vector<int> pending(n, 0);
  std::priority_queue<int, std::vector<int>, std::greater<>> ready;
  for (std::size_t i = 0; i < n; ++i) {
    if (!members[i]) continue;
    for (int v : succ[i]) pending[i] += members[static_cast<std::size_t>(v - 1)] ? 1 : 0;
    if (pending[i] == 0) ready.push(static_cast<int>(i) + 1);
  }
  std::vector<int> order;
  while (!ready.empty()) {
    const int id = ready.top();
    ready.pop();
    order.push_back(id);
    for (int parent : pred[static_cast<std::size_t>(id - 1)]) {
      const auto p = static_cast<std::size_t>(parent - 1);
      if (members[p] && --pending[p] == 0) ready.push(parent);
    }
  }
  return order;
}

}  // namespace detail

// Minimal pick sequence exposing `target`: its dependency closure in
// dependency order, then the target.
inline RemovalPlan removal_plan(const DependencyGraph& graph, int target) {
  if (!graph.has_node(target)) {
    throw ValidationError("unknown target id " + std::to_string(target));
  }
  require_dag(graph);
  const auto succ = graph.out_adjacency();
  std::vector<bool> closure(graph.size(), false);
  std::vector<int> stack{target};
  closure[static_cast<std::size_t>(target - 1)] = true;
  while (!stack.empty()) {
    const int u = stack.back();
    stack.pop_back();
    for (int v : succ[static_cast<std::size_t>(u - 1)]) {
      if (!closure[static_cast<std::size_t>(v - 1)]) {
        closure[static_cast<std::size_t>(v - 1)] = true;
        stack.push_back(v);
      }
    }
  }
  // The target depends on everything else in its closure, so it comes last.
  return RemovalPlan{target, detail::dependency_order(graph, closure)};
}

// Full bin-emptying order: every node after all nodes it depends on.
inline std::vector<int> emptying_order(const DependencyGraph& graph) {
  require_dag(graph);
  return detail::dependency_order(graph, std::vector<bool>(graph.size(), true));
}

}  // namespace relgraph

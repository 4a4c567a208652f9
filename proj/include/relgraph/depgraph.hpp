#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <queue>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "relgraph/errors.hpp"

namespace relgraph {

// Normalized center-format box: (cx, cy) center, (w, h) extent, all in [0,1].
struct BBox {
  double cx = 0.0;
  double cy = 0.0;
  double w = 0.0;
  double h = 0.0;

  double x1() const { return cx - 0.5 * w; }
  double y1() const { return cy - 0.5 * h; }
  double x2() const { return cx + 0.5 * w; }
  double y2() const { return cy + 0.5 * h; }
  double area() const { return w * h; }

  bool valid() const {
    auto in_unit = [](double v) { return std::isfinite(v) && v >= 0.0 && v <= 1.0; };
    return in_unit(cx) && in_unit(cy) && in_unit(w) && in_unit(h) && w > 0.0 && h > 0.0;
  }

  // Clamps every component into [0,1]; applied on ingestion only.
  static BBox clamped(double cx, double cy, double w, double h) {
    auto c = [](double v) { return std::clamp(v, 0.0, 1.0); };
    return BBox{c(cx), c(cy), c(w), c(h)};
  }

  friend bool operator==(const BBox&, const BBox&) = default;
};

struct ObjectNode {
  int id = 0;
  int category = 0;
  BBox bbox;

  friend bool operator==(const ObjectNode&, const ObjectNode&) = default;
};

// Directed edge a -> b: "a can't be moved without first moving b".
struct Edge {
  int from = 0;
  int to = 0;

  friend auto operator<=>(const Edge&, const Edge&) = default;
};

// Object nodes plus directed dependency edges. Node ids are expected to be
// 1..n; check_structure() enforces that and the edge-level invariants.
class DependencyGraph {
 public:
  DependencyGraph() = default;
  DependencyGraph(std::vector<ObjectNode> nodes, std::vector<Edge> edges)
      : nodes_(std::move(nodes)), edges_(std::move(edges)) {}

  // Graph of n nodes with ids 1..n, default boxes, and the given edges.
  static DependencyGraph with_nodes(int n, std::vector<Edge> edges = {}) {
    std::vector<ObjectNode> nodes;
    for (int i = 1; i <= n; ++i) nodes.push_back({i, 0, BBox{0.5, 0.5, 0.1, 0.1}});
    return DependencyGraph(std::move(nodes), std::move(edges));
  }

  const std::vector<ObjectNode>& nodes() const { return nodes_; }
  const std::vector<Edge>& edges() const { return edges_; }
  std::size_t size() const { return nodes_.size(); }
  bool empty() const { return nodes_.empty(); }

  const ObjectNode& node(int id) const { return nodes_.at(static_cast<std::size_t>(id - 1)); }
  bool has_node(int id) const { return id >= 1 && id <= static_cast<int>(nodes_.size()); }

  // Out-neighbours per node index (id - 1), ascending by id.
  std::vector<std::vector<int>> out_adjacency() const {
    std::vector<std::vector<int>> adj(nodes_.size());
    for (const auto& e : edges_) adj[static_cast<std::size_t>(e.from - 1)].push_back(e.to);
    for (auto& list : adj) std::sort(list.begin(), list.end());
    return adj;
  }

  std::vector<std::vector<int>> in_adjacency() const {
    std::vector<std::vector<int>> adj(nodes_.size());
    for (const auto& e : edges_) adj[static_cast<std::size_t>(e.to - 1)].push_back(e.from);
    for (auto& list : adj) std::sort(list.begin(), list.end());
    return adj;
  }

  friend bool operator==(const DependencyGraph&, const DependencyGraph&) = default;

 private:
  std::vector<ObjectNode> nodes_;
  std::vector<Edge> edges_;
};

struct SceneRecord {
  std::string scene_id;
  DependencyGraph graph;
  std::optional<std::string> image;

  friend bool operator==(const SceneRecord&, const SceneRecord&) = default;
};

struct SceneComplexity {
  int num_objects = 0;
  int clutter_width = 0;
  double relative_clutter_width = 0.0;
  int clutter_depth = 0;
};

enum class DifficultyLevel { Trivial, Easy, Medium, Hard };

inline constexpr DifficultyLevel kAllLevels[] = {DifficultyLevel::Trivial, DifficultyLevel::Easy,
                                                 DifficultyLevel::Medium, DifficultyLevel::Hard};

inline std::string_view to_string(DifficultyLevel level) {
  switch (level) {
    case DifficultyLevel::Trivial: return "Trivial";
    case DifficultyLevel::Easy: return "Easy";
    case DifficultyLevel::Medium: return "Medium";
    case DifficultyLevel::Hard: return "Hard";
  }
  return "Unknown";
}

// Throws ValidationError on non-contiguous/duplicate ids, unknown edge
// endpoints, self-edges, or duplicate edges.
inline void check_structure(const DependencyGraph& graph) {
  const auto& nodes = graph.nodes();
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    if (nodes[i].id != static_cast<int>(i) + 1) {
      std::ostringstream msg;
      msg << "node ids must be contiguous from 1 in order; position " << i + 1 << " has id "
          << nodes[i].id;
      throw ValidationError(msg.str());
    }
  }
  std::set<Edge> seen;
  for (const auto& e : graph.edges()) {
    if (!graph.has_node(e.from) || !graph.has_node(e.to)) {
      std::ostringstream msg;
      msg << "unknown endpoint in edge " << e.from << "->" << e.to;
      throw ValidationError(msg.str());
    }
    if (e.from == e.to) {
      throw ValidationError("self-edge on node " + std::to_string(e.from));
    }
    if (!seen.insert(e).second) {
      std::ostringstream msg;
      msg << "duplicate edge " << e.from << "->" << e.to;
      throw ValidationError(msg.str());
    }
  }
}

// Result of a DAG check: empty cycle means acyclic.
struct DagCheck {
  std::vector<int> cycle;
  bool acyclic() const { return cycle.empty(); }
  explicit operator bool() const { return acyclic(); }
};

// Structural errors throw ValidationError; a directed cycle is reported as a
// witness (node ids in edge order, rotated to start at the smallest id).
inline DagCheck validate_dag(const DependencyGraph& graph) {
  check_structure(graph);
  const auto adj = graph.out_adjacency();
  const std::size_t n = adj.size();
  enum Color : unsigned char { White, Gray, Black };
  std::vector<Color> color(n, White);
  std::vector<int> path;  // current DFS path, node ids

  for (std::size_t root = 0; root < n; ++root) {
    if (color[root] != White) continue;
    // (node index, next neighbour position)
    std::vector<std::pair<std::size_t, std::size_t>> stack{{root, 0}};
    color[root] = Gray;
    path.push_back(static_cast<int>(root) + 1);
    while (!stack.empty()) {
      auto& [u, pos] = stack.back();
      if (pos < adj[u].size()) {
        const auto v = static_cast<std::size_t>(adj[u][pos] - 1);
        ++pos;
        if (color[v] == Gray) {
          auto start = std::find(path.begin(), path.end(), static_cast<int>(v) + 1);
          std::vector<int> cycle(start, path.end());
          std::rotate(cycle.begin(), std::min_element(cycle.begin(), cycle.end()), cycle.end());
          return DagCheck{std::move(cycle)};
        }
        if (color[v] == White) {
          color[v] = Gray;
          path.push_back(static_cast<int>(v) + 1);
          stack.emplace_back(v, 0);
        }
      } else {
        color[u] = Black;
        path.pop_back();
        stack.pop_back();
      }
    }
  }
  return DagCheck{};
}

inline std::string format_cycle(const std::vector<int>& cycle) {
  std::ostringstream out;
  for (int id : cycle) out << id << " -> ";
  if (!cycle.empty()) out << cycle.front();
  return out.str();
}

// Throws CycleError (or ValidationError) unless graph is a well-formed DAG.
inline void require_dag(const DependencyGraph& graph) {
  auto check = validate_dag(graph);
  if (!check) {
    throw CycleError("dependency graph has a cycle: " + format_cycle(check.cycle), check.cycle);
  }
}

// Width: largest weakly connected component. Depth: longest of the shortest
// source->sink paths, counted in nodes. Empty graphs give all zeros.
inline SceneComplexity complexity(const DependencyGraph& graph) {
  require_dag(graph);
  SceneComplexity out;
  const auto n = graph.size();
  out.num_objects = static_cast<int>(n);
  if (n == 0) return out;

  const auto succ = graph.out_adjacency();
  const auto pred = graph.in_adjacency();

  std::vector<int> component(n, -1);
  int largest = 0;
  for (std::size_t s = 0; s < n; ++s) {
    if (component[s] >= 0) continue;
    int count = 0;
    std::vector<std::size_t> stack{s};
    component[s] = static_cast<int>(s);
    while (!stack.empty()) {
      const auto u = stack.back();
      stack.pop_back();
      ++count;
      for (const auto* list : {&succ[u], &pred[u]}) {
        for (int id : *list) {
          const auto v = static_cast<std::size_t>(id - 1);
          if (component[v] < 0) {
            component[v] = static_cast<int>(s);
            stack.push_back(v);
          }
        }
      }
    }
    largest = std::max(largest, count);
  }
  out.clutter_width = largest;
  out.relative_clutter_width = static_cast<double>(largest) / static_cast<double>(n);

  int depth = 0;
  for (std::size_t s = 0; s < n; ++s) {
    if (!pred[s].empty()) continue;
    std::vector<int> dist(n, 0);  // nodes on shortest path, 0 = unreached
    std::queue<std::size_t> frontier;
    dist[s] = 1;
    frontier.push(s);
    while (!frontier.empty()) {
      const auto u = frontier.front();
      frontier.pop();
      if (succ[u].empty()) depth = std::max(depth, dist[u]);
      for (int id : succ[u]) {
        const auto v = static_cast<std::size_t>(id - 1);
        if (dist[v] == 0) {
          dist[v] = dist[u] + 1;
          frontier.push(v);
        }
      }
    }
  }
  out.clutter_depth = depth;
  return out;
}

// Most specific level wins: Hard > Medium > Easy > Trivial.
inline DifficultyLevel classify_difficulty(const SceneComplexity& c) {
  if (c.num_objects >= 10 && c.relative_clutter_width > 0.5 && c.clutter_depth >= 4) {
    return DifficultyLevel::Hard;
  }
  if (c.num_objects >= 6 && c.relative_clutter_width > 0.4 && c.clutter_depth >= 3) {
    return DifficultyLevel::Medium;
  }
  if (c.num_objects >= 3) return DifficultyLevel::Easy;
  return DifficultyLevel::Trivial;
}

inline DifficultyLevel classify_difficulty(const DependencyGraph& graph) {
  return classify_difficulty(complexity(graph));
}

}  // namespace relgraph

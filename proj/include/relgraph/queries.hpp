#pragma once

#include <algorithm>
#include <cstdint>
#include <vector>

#include "relgraph/depgraph.hpp"
#include "relgraph/errors.hpp"
#include "relgraph/matrix.hpp"
#include "relgraph/model.hpp"
#include "relgraph/rng.hpp"

// Synthetic object queries standing in for an image detector's decoder
// output. Each real object becomes one query whose features encode its
// (smoothed) class distribution, its jittered box, and its stacking level in
// the pile; the remaining queries describe no object.
namespace relgraph {

struct QueryNoise {
  double feature_sigma = 0.05;   // Gaussian noise added to every feature
  double class_confusion = 0.05; // label smoothing of the class distribution
  double box_jitter = 0.01;      // uniform +-jitter on every box component
};

struct QueryBatch {
  Matrix features;              // N x F0
  Matrix class_probs;           // N x num_classes
  std::vector<BBox> boxes;      // N
  std::vector<int> object_query;  // query index holding object k (ids in order)
};

// Number of objects stacked on top of each node: longest outgoing chain
// length (0 for graspable nodes). Strictly decreases along every edge.
inline std::vector<int> stacking_levels(const DependencyGraph& graph) {
  const auto succ = graph.out_adjacency();
  const auto pred = graph.in_adjacency();
  const auto n = succ.size();
  std::vector<int> level(n, 0);
  std::vector<int> remaining(n, 0);
  std::vector<std::size_t> ready;
  for (std::size_t i = 0; i < n; ++i) {
    remaining[i] = static_cast<int>(succ[i].size());
    if (remaining[i] == 0) ready.push_back(i);
  }
  std::size_t processed = 0;
  while (!ready.empty()) {
    const auto u = ready.back();
    ready.pop_back();
    ++processed;
    for (int id : pred[u]) {
      const auto p = static_cast<std::size_t>(id - 1);
      level[p] = std::max(level[p], level[u] + 1);
      if (--remaining[p] == 0) ready.push_back(p);
    }
  }
  if (processed != n) throw ValidationError("stacking_levels: graph has a cycle");
  return level;
}

// Fixed embedding of (class distribution, box, level) into query space.
inline Matrix query_projection(const ModelConfig& cfg) {
  Rng rng(0x51ec7ab1e5ULL);
  Matrix proj(cfg.num_classes + 5, cfg.query_dim);
  for (Eigen::Index i = 0; i < proj.size(); ++i) proj.data()[i] = rng.normal();
  return proj;
}

namespace detail {

inline double clamp_extent(double v) { return std::clamp(v, 1e-3, 1.0); }

inline BBox jitter_box(const BBox& b, double delta, Rng& rng) {
  if (delta == 0.0) return b;
  auto j = [&](double v) { return v + rng.uniform(-delta, delta); };
  return BBox{std::clamp(j(b.cx), 0.0, 1.0), std::clamp(j(b.cy), 0.0, 1.0), clamp_extent(j(b.w)),
              clamp_extent(j(b.h))};
}

}  // namespace detail

inline QueryBatch synth_queries(const SceneRecord& scene, const QueryNoise& noise, std::uint64_t seed,
                                const ModelConfig& cfg) {
  cfg.validate();
  const auto& graph = scene.graph;
  const int n = cfg.num_queries;
  const int objects = static_cast<int>(graph.size());
  if (objects > n) {
    throw ValidationError("scene '" + scene.scene_id + "' has " + std::to_string(objects) +
                          " objects but only " + std::to_string(n) + " queries");
  }
  const int classes = cfg.num_classes;
  const auto levels = stacking_levels(graph);
  Rng rng(seed);

  QueryBatch batch;
  batch.class_probs = Matrix::Constant(n, classes, noise.class_confusion / classes);
  batch.boxes.resize(static_cast<std::size_t>(n));
  Matrix raw = Matrix::Zero(n, classes + 5);
  const std::vector<int> order = rng.permutation(n);
  batch.object_query.assign(order.begin(), order.begin() + objects);

  std::vector<bool> used(static_cast<std::size_t>(n), false);
  for (int k = 0; k < objects; ++k) {
    const auto& node = graph.nodes()[static_cast<std::size_t>(k)];
    if (node.category < 0 || node.category >= cfg.no_object()) {
      throw ValidationError("category " + std::to_string(node.category) + " outside the model's " +
                            std::to_string(cfg.no_object()) + " object classes");
    }
    const int q = order[static_cast<std::size_t>(k)];
    used[static_cast<std::size_t>(q)] = true;
    batch.class_probs(q, node.category) += 1.0 - noise.class_confusion;
    batch.boxes[static_cast<std::size_t>(q)] = detail::jitter_box(node.bbox, noise.box_jitter, rng);
    raw(q, classes + 4) = static_cast<double>(levels[static_cast<std::size_t>(k)]) / n;
  }
  for (int q = 0; q < n; ++q) {
    if (used[static_cast<std::size_t>(q)]) continue;
    batch.class_probs(q, cfg.no_object()) += 1.0 - noise.class_confusion;
    const double w = rng.uniform(0.05, 0.5);
    const double h = rng.uniform(0.05, 0.5);
    batch.boxes[static_cast<std::size_t>(q)] =
        BBox{rng.uniform(w / 2, 1.0 - w / 2), rng.uniform(h / 2, 1.0 - h / 2), w, h};
  }
  for (int q = 0; q < n; ++q) {
    raw.block(q, 0, 1, classes) = batch.class_probs.row(q);
    const BBox& b = batch.boxes[static_cast<std::size_t>(q)];
    raw(q, classes) = b.cx;
    raw(q, classes + 1) = b.cy;
    raw(q, classes + 2) = b.w;
    raw(q, classes + 3) = b.h;
  }
  batch.features = raw * query_projection(cfg);
  if (noise.feature_sigma != 0.0) {
    for (Eigen::Index i = 0; i < batch.features.size(); ++i) {
      batch.features.data()[i] += noise.feature_sigma * rng.normal();
    }
  }
  return batch;
}

}  // namespace relgraph

#pragma once

#include <array>
#include <optional>
#include <set>
#include <vector>

#include "relgraph/autodiff.hpp"
#include "relgraph/depgraph.hpp"
#include "relgraph/errors.hpp"
#include "relgraph/geometry.hpp"
#include "relgraph/matrix.hpp"
#include "relgraph/model.hpp"

// Set-prediction losses: node loss over the optimal matching and the
// relationship loss on the selection-filtered adjacency T^T e_pred T.
//
// Ground-truth slots: slot j < P holds the object with id j + 1, slots
// P..N-1 hold the no-object class.
namespace relgraph {

struct LossConfig {
  MatchCostWeights box;
  double no_object_weight = 0.1;
  double relation_pos_weight = 1.0;
  bool relation_mean = false;  // mean over off-diagonal cells instead of sum
};

struct LossBreakdown {
  double node_class = 0.0;
  double node_box = 0.0;
  double relationship = 0.0;
  double total = 0.0;
};

// N x P binary matrix with T(sigma[slot], j) = 1 for the j-th real object.
inline Matrix build_selection_matrix(const Assignment& match, int num_queries, const std::vector<int>& object_slots) {
  if (static_cast<int>(match.sigma.size()) != num_queries) {
    throw ValidationError("selection matrix: assignment covers " + std::to_string(match.sigma.size()) +
                          " slots, expected " + std::to_string(num_queries));
  }
  const auto p = static_cast<int>(object_slots.size());
  if (p > num_queries) throw ValidationError("selection matrix: more objects than queries");
  std::set<int> seen;
  Matrix t = Matrix::Zero(num_queries, p);
  for (int j = 0; j < p; ++j) {
    const int slot = object_slots[static_cast<std::size_t>(j)];
    if (slot < 0 || slot >= num_queries || !seen.insert(slot).second) {
      throw ValidationError("selection matrix: inconsistent object slot " + std::to_string(slot));
    }
    t(match.sigma[static_cast<std::size_t>(slot)], j) = 1.0;
  }
  return t;
}

inline Matrix build_selection_matrix(const Assignment& match, int num_queries, int num_objects) {
  std::vector<int> slots(static_cast<std::size_t>(num_objects));
  for (int j = 0; j < num_objects; ++j) slots[static_cast<std::size_t>(j)] = j;
  return build_selection_matrix(match, num_queries, slots);
}

// P x P binary adjacency in object-id order.
inline Matrix adjacency_matrix(const DependencyGraph& graph) {
  const auto p = static_cast<Eigen::Index>(graph.size());
  Matrix g = Matrix::Zero(p, p);
  for (const auto& e : graph.edges()) g(e.from - 1, e.to - 1) = 1.0;
  return g;
}

// Cost matrix [prediction][gt slot] and its optimal assignment.
inline Matrix match_cost_matrix(const SceneRecord& scene, const Matrix& class_probs, const std::vector<BBox>& boxes,
                                const MatchCostWeights& w) {
  const auto n = static_cast<int>(class_probs.rows());
  const auto& nodes = scene.graph.nodes();
  if (static_cast<int>(nodes.size()) > n) throw ValidationError("more objects than predictions");
  Matrix cost = Matrix::Zero(n, n);
  std::vector<double> probs(static_cast<std::size_t>(class_probs.cols()));
  for (int i = 0; i < n; ++i) {
    for (Eigen::Index c = 0; c < class_probs.cols(); ++c) probs[static_cast<std::size_t>(c)] = class_probs(i, c);
    for (std::size_t j = 0; j < nodes.size(); ++j) {
      cost(i, static_cast<Eigen::Index>(j)) =
          match_cost(nodes[j].category, nodes[j].bbox, probs, boxes[static_cast<std::size_t>(i)], w);
    }
  }
  return cost;
}

inline Assignment match_predictions(const SceneRecord& scene, const Matrix& class_probs,
                                    const std::vector<BBox>& boxes, const MatchCostWeights& w) {
  return hungarian_match(match_cost_matrix(scene, class_probs, boxes, w));
}

struct NodeLossTerms {
  ad::Var class_part;
  ad::Var box_part;
};

// Sum over slots of -w log p_sigma(c) plus the box loss of real objects.
inline NodeLossTerms node_loss(const SceneRecord& scene, ad::Var class_probs, ad::Var boxes,
                               const Assignment& match, const LossConfig& cfg) {
  auto& tape = *class_probs.tape();
  const auto n = static_cast<int>(class_probs.rows());
  const int no_object = static_cast<int>(class_probs.cols()) - 1;
  const auto& nodes = scene.graph.nodes();
  const auto p = static_cast<int>(nodes.size());
  if (static_cast<int>(match.sigma.size()) != n) throw ValidationError("node_loss: assignment size mismatch");

  std::vector<std::pair<int, int>> cells;
  Matrix weights(n, 1);
  for (int j = 0; j < n; ++j) {
    const int cls = j < p ? nodes[static_cast<std::size_t>(j)].category : no_object;
    if (cls < 0 || cls > no_object) throw ValidationError("node_loss: class index out of range");
    cells.emplace_back(match.sigma[static_cast<std::size_t>(j)], cls);
    weights(j, 0) = j < p ? 1.0 : cfg.no_object_weight;
  }
  const ad::Var log_p = ad::log_floor(ad::pick(class_probs, std::move(cells)), 1e-12);
  NodeLossTerms out;
  out.class_part = ad::scale(ad::sum(ad::mul(log_p, tape.constant(weights))), -1.0);

  if (p == 0) {
    out.box_part = tape.constant(Matrix::Zero(1, 1));
    return out;
  }
  std::vector<int> matched(match.sigma.begin(), match.sigma.begin() + p);
  const ad::Var pred = ad::gather_rows(boxes, matched);
  Matrix gt_m(p, 4);
  for (int j = 0; j < p; ++j) {
    const BBox& b = nodes[static_cast<std::size_t>(j)].bbox;
    gt_m.row(j) << b.cx, b.cy, b.w, b.h;
  }
  const ad::Var gt = tape.constant(gt_m);
  const ad::Var l1 = ad::sum(ad::abs(ad::sub(pred, gt)));

  auto col = [](ad::Var x, int c) { return ad::slice_cols(x, c, 1); };
  auto corners = [&](ad::Var b) {
    const ad::Var half_w = ad::scale(col(b, 2), 0.5);
    const ad::Var half_h = ad::scale(col(b, 3), 0.5);
    return std::array<ad::Var, 4>{ad::sub(col(b, 0), half_w), ad::sub(col(b, 1), half_h),
                                  ad::add(col(b, 0), half_w), ad::add(col(b, 1), half_h)};
  };
  const auto a = corners(pred);
  const auto g = corners(gt);
  const ad::Var inter_w = ad::relu(ad::sub(ad::minimum(a[2], g[2]), ad::maximum(a[0], g[0])));
  const ad::Var inter_h = ad::relu(ad::sub(ad::minimum(a[3], g[3]), ad::maximum(a[1], g[1])));
  const ad::Var inter = ad::mul(inter_w, inter_h);
  const ad::Var area_a = ad::mul(col(pred, 2), col(pred, 3));
  const ad::Var area_g = ad::mul(col(gt, 2), col(gt, 3));
  const ad::Var uni = ad::sub(ad::add(area_a, area_g), inter);
  const ad::Var enclose = ad::mul(ad::sub(ad::maximum(a[2], g[2]), ad::minimum(a[0], g[0])),
                                  ad::sub(ad::maximum(a[3], g[3]), ad::minimum(a[1], g[1])));
  const ad::Var giou = ad::sub(ad::div(inter, uni), ad::div(ad::sub(enclose, uni), enclose));
  const ad::Var giou_loss = ad::shift(ad::scale(ad::sum(giou), -1.0), static_cast<double>(p));
  out.box_part = ad::add(ad::scale(l1, cfg.box.l1), ad::scale(giou_loss, cfg.box.giou));
  return out;
}

// BCE between G and G_hat = T^T e_pred T over off-diagonal cells.
inline ad::Var relationship_loss(const Matrix& adjacency, ad::Var edge_logits, const Matrix& selection,
                                 const LossConfig& cfg = {}) {
  const auto p = adjacency.rows();
  if (adjacency.cols() != p || selection.cols() != p || selection.rows() != edge_logits.rows() ||
      edge_logits.rows() != edge_logits.cols()) {
    throw ValidationError("relationship_loss: shape mismatch");
  }
  auto& tape = *edge_logits.tape();
  const ad::Var selected = ad::matmul(tape.constant(selection.transpose()),
                                      ad::matmul(edge_logits, tape.constant(selection)));
  Matrix weights = Matrix::Ones(p, p);
  weights.diagonal().setZero();
  ad::Var loss = ad::bce_with_logits(selected, adjacency, weights, cfg.relation_pos_weight);
  if (cfg.relation_mean && p > 1) loss = ad::scale(loss, 1.0 / static_cast<double>(p * (p - 1)));
  return loss;
}

inline double relationship_loss(const Matrix& adjacency, const Matrix& edge_logits, const Matrix& selection,
                                const LossConfig& cfg = {}) {
  ad::Tape tape;
  return relationship_loss(adjacency, tape.constant(edge_logits), selection, cfg).scalar();
}

struct LossTerms {
  ad::Var node_class;
  ad::Var node_box;
  ad::Var relationship;
  ad::Var total;

  LossBreakdown breakdown() const {
    return {node_class.scalar(), node_box.scalar(), relationship.scalar(), total.scalar()};
  }
};

inline LossTerms total_loss(const SceneRecord& scene, const ModelOutputs& outputs, const Assignment& match,
                            const LossConfig& cfg) {
  const auto n = static_cast<int>(outputs.class_probs.rows());
  const auto node = node_loss(scene, outputs.class_probs, outputs.boxes, match, cfg);
  const Matrix selection = build_selection_matrix(match, n, static_cast<int>(scene.graph.size()));
  const ad::Var rel = relationship_loss(adjacency_matrix(scene.graph), outputs.edge_logits, selection, cfg);
  LossTerms out{node.class_part, node.box_part, rel, ad::add(ad::add(node.class_part, node.box_part), rel)};
  return out;
}

}  // namespace relgraph

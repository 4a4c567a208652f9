#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "relgraph/autodiff.hpp"
#include "relgraph/depgraph.hpp"
#include "relgraph/errors.hpp"
#include "relgraph/geometry.hpp"
#include "relgraph/matrix.hpp"
#include "relgraph/model.hpp"

namespace relgraph {

// One scene's predictions in evaluation form. The last class column is
// no-object; relation_probs(i, j) is the probability of edge i -> j.
struct ScenePrediction {
  std::string scene_id;
  std::vector<BBox> boxes;
  Matrix class_probs;
  std::vector<double> scores;  // per query; empty = max object-class probability
  Matrix relation_probs;       // N x N, diagonal ignored

  std::size_t size() const { return boxes.size(); }

  int label(std::size_t q) const {
    Eigen::Index best = 0;
    class_probs.row(static_cast<Eigen::Index>(q)).head(class_probs.cols() - 1).maxCoeff(&best);
    return static_cast<int>(best);
  }

  double score(std::size_t q) const {
    if (!scores.empty()) return scores[q];
    return class_probs.row(static_cast<Eigen::Index>(q)).head(class_probs.cols() - 1).maxCoeff();
  }

  void validate() const {
    const auto n = static_cast<Eigen::Index>(boxes.size());
    if (class_probs.rows() != n || class_probs.cols() < 2) {
      throw ValidationError("prediction '" + scene_id + "': class_probs must have one row per box");
    }
    if (!scores.empty() && static_cast<Eigen::Index>(scores.size()) != n) {
      throw ValidationError("prediction '" + scene_id + "': scores must have one entry per box");
    }
    if (relation_probs.rows() != n || relation_probs.cols() != n) {
      throw ValidationError("prediction '" + scene_id + "': relation matrix must be N x N");
    }
  }
};

inline ScenePrediction to_scene_prediction(const std::string& scene_id, const Prediction& p) {
  ScenePrediction out;
  out.scene_id = scene_id;
  out.boxes = p.boxes;
  out.class_probs = p.class_probs;
  out.relation_probs = p.edge_logits.unaryExpr([](double x) { return ad::detail::sigmoid(x); });
  out.relation_probs.diagonal().setZero();
  return out;
}

// Directed dependency triplet (subject -> object) between two queries.
struct Triplet {
  int subject = 0;
  int object = 0;
  int subject_label = 0;
  int object_label = 0;
  BBox subject_box;
  BBox object_box;
  double confidence = 0.0;
};

// Every ordered pair of distinct queries, confidence = s_i * s_j * p(i -> j),
// sorted by descending confidence (ties by subject, then object) and cut to top_k.
inline std::vector<Triplet> enumerate_triplets(const ScenePrediction& pred, std::size_t top_k = 100) {
  pred.validate();
  std::vector<Triplet> out;
  const auto n = pred.size();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      Triplet t;
      t.subject = static_cast<int>(i);
      t.object = static_cast<int>(j);
      t.subject_label = pred.label(i);
      t.object_label = pred.label(j);
      t.subject_box = pred.boxes[i];
      t.object_box = pred.boxes[j];
      t.confidence = pred.score(i) * pred.score(j) *
                     pred.relation_probs(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
      out.push_back(t);
    }
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const Triplet& a, const Triplet& b) { return a.confidence > b.confidence; });
  if (out.size() > top_k) out.resize(top_k);
  return out;
}

struct PRCurve {
  std::vector<std::pair<double, double>> points;  // (recall, precision)
  double area = 0.0;
};

// Precision/recall at every confidence cutoff and the all-point interpolated
// area. Items sharing a confidence enter together, so the curve depends on
// the ordering of confidences only.
inline PRCurve precision_recall(const std::vector<double>& confidence, const std::vector<bool>& is_tp,
                                std::size_t num_gt) {
  PRCurve curve;
  if (num_gt == 0) return curve;
  std::size_t tp = 0;
  for (std::size_t k = 0; k < confidence.size(); ++k) {
    tp += is_tp[k] ? 1 : 0;
    if (k + 1 < confidence.size() && confidence[k + 1] == confidence[k]) continue;
    curve.points.emplace_back(static_cast<double>(tp) / static_cast<double>(num_gt),
                              static_cast<double>(tp) / static_cast<double>(k + 1));
  }
  double prev_recall = 0.0;
  for (std::size_t k = 0; k < curve.points.size(); ++k) {
    double best = 0.0;
    for (std::size_t m = k; m < curve.points.size(); ++m) best = std::max(best, curve.points[m].second);
    curve.area += (curve.points[k].first - prev_recall) * best;
    prev_recall = curve.points[k].first;
  }
  return curve;
}

namespace detail {

struct RankedTriplet {
  std::size_t scene;
  const Triplet* triplet;
};

// True positive test for one triplet against the scene's unmatched edges.
// Returns the matched edge index, preferring the highest min(IoU) and then
// the lower edge index.
inline std::optional<std::size_t> match_triplet(const Triplet& t, const DependencyGraph& graph,
                                                const std::vector<Edge>& edges, const std::vector<bool>& used,
                                                double iou_thr) {
  std::optional<std::size_t> best;
  double best_iou = -1.0;
  for (std::size_t e = 0; e < edges.size(); ++e) {
    if (used[e]) continue;
    const auto& subject = graph.node(edges[e].from);
    const auto& object = graph.node(edges[e].to);
    if (subject.category != t.subject_label || object.category != t.object_label) continue;
    const double is = iou(t.subject_box, subject.bbox);
    const double io = iou(t.object_box, object.bbox);
    if (is <= iou_thr || io <= iou_thr) continue;
    const double score = std::min(is, io);
    if (score > best_iou) {
      best_iou = score;
      best = e;
    }
  }
  return best;
}

inline std::vector<Edge> sorted_edges(const DependencyGraph& graph) {
  std::vector<Edge> edges = graph.edges();
  std::sort(edges.begin(), edges.end());
  return edges;
}

}  // namespace detail

// Threshold-free relationship AP over triplets from every scene, swept in
// global confidence order.
inline PRCurve ap_rel(const std::vector<SceneRecord>& gt, const std::vector<std::vector<Triplet>>& triplets,
                      double iou_thr = 0.5) {
  if (gt.size() != triplets.size()) throw ValidationError("ap_rel: scene count mismatch");
  std::size_t num_gt = 0;
  std::vector<std::vector<Edge>> edges;
  std::vector<std::vector<bool>> used;
  for (const auto& scene : gt) {
    edges.push_back(detail::sorted_edges(scene.graph));
    used.emplace_back(edges.back().size(), false);
    num_gt += edges.back().size();
  }
  std::vector<detail::RankedTriplet> ranked;
  for (std::size_t s = 0; s < triplets.size(); ++s) {
    for (const auto& t : triplets[s]) ranked.push_back({s, &t});
  }
  std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    return a.triplet->confidence > b.triplet->confidence;
  });
  std::vector<double> confidence;
  std::vector<bool> is_tp;
  for (const auto& r : ranked) {
    const auto hit = detail::match_triplet(*r.triplet, gt[r.scene].graph, edges[r.scene], used[r.scene], iou_thr);
    if (hit) used[r.scene][*hit] = true;
    confidence.push_back(r.triplet->confidence);
    is_tp.push_back(hit.has_value());
  }
  return precision_recall(confidence, is_tp, num_gt);
}

inline constexpr std::array<double, 10> kCocoIouThresholds = {0.50, 0.55, 0.60, 0.65, 0.70,
                                                              0.75, 0.80, 0.85, 0.90, 0.95};

// COCO-style detection mAP: per-class all-point AP averaged over IoU
// thresholds 0.50:0.05:0.95, then over classes present in the ground truth.
// A detection hits at threshold t when IoU >= t.
inline double detection_map(const std::vector<SceneRecord>& gt, const std::vector<ScenePrediction>& preds) {
  if (gt.size() != preds.size()) throw ValidationError("detection_map: scene count mismatch");
  std::set<int> classes;
  for (const auto& scene : gt) {
    for (const auto& node : scene.graph.nodes()) classes.insert(node.category);
  }
  if (classes.empty()) return 0.0;

  struct Det {
    std::size_t scene;
    std::size_t query;
    double score;
  };
  double total = 0.0;
  for (int cls : classes) {
    std::vector<Det> dets;
    std::size_t num_gt = 0;
    for (std::size_t s = 0; s < gt.size(); ++s) {
      for (const auto& node : gt[s].graph.nodes()) num_gt += node.category == cls ? 1 : 0;
      for (std::size_t q = 0; q < preds[s].size(); ++q) {
        if (preds[s].label(q) == cls) dets.push_back({s, q, preds[s].score(q)});
      }
    }
    std::stable_sort(dets.begin(), dets.end(), [](const Det& a, const Det& b) { return a.score > b.score; });
    double class_sum = 0.0;
    for (double thr : kCocoIouThresholds) {
      std::vector<std::vector<bool>> taken;
      for (const auto& scene : gt) taken.emplace_back(scene.graph.size(), false);
      std::vector<double> confidence;
      std::vector<bool> is_tp;
      for (const auto& d : dets) {
        const auto& nodes = gt[d.scene].graph.nodes();
        std::optional<std::size_t> best;
        double best_iou = -1.0;
        for (std::size_t g = 0; g < nodes.size(); ++g) {
          if (taken[d.scene][g] || nodes[g].category != cls) continue;
          const double v = iou(preds[d.scene].boxes[d.query], nodes[g].bbox);
          if (v >= thr - 1e-12 && v > best_iou) {
            best_iou = v;
            best = g;
          }
        }
        if (best) taken[d.scene][*best] = true;
        confidence.push_back(d.score);
        is_tp.push_back(best.has_value());
      }
      class_sum += precision_recall(confidence, is_tp, num_gt).area;
    }
    total += class_sum / static_cast<double>(kCocoIouThresholds.size());
  }
  return total / static_cast<double>(classes.size());
}

// Pairwise relation label of an unordered pair (a, b) with a before b.
enum class PairLabel { Out, In, NoRel };  // a -> b, b -> a, none

inline PairLabel predicted_label(double p_ab, double p_ba) {
  if (std::max(p_ab, p_ba) < 0.5) return PairLabel::NoRel;
  return p_ab >= p_ba ? PairLabel::Out : PairLabel::In;
}

// Per-scene outcome of detection thresholding and greedy GT matching.
struct PairwiseOutcome {
  std::array<std::size_t, 3> gt_count{};
  std::array<std::size_t, 3> predicted_count{};
  std::array<std::size_t, 3> correct{};
  bool all_objects_detected = true;
  bool all_pairs_correct = true;
};

// Keeps detections with score >= score_threshold, matches them greedily by
// score to same-class GT objects at IoU > iou_thr, then labels every pair.
inline PairwiseOutcome pairwise_outcome(const SceneRecord& gt, const ScenePrediction& pred, double score_threshold,
                                        double iou_thr = 0.5) {
  pred.validate();
  const auto& nodes = gt.graph.nodes();
  std::vector<std::size_t> kept;
  for (std::size_t q = 0; q < pred.size(); ++q) {
    if (pred.score(q) >= score_threshold) kept.push_back(q);
  }
  std::stable_sort(kept.begin(), kept.end(),
                   [&](std::size_t a, std::size_t b) { return pred.score(a) > pred.score(b); });
  std::vector<int> query_of_gt(nodes.size(), -1);
  std::vector<int> gt_of_query(pred.size(), -1);
  for (std::size_t q : kept) {
    std::optional<std::size_t> best;
    double best_iou = -1.0;
    for (std::size_t g = 0; g < nodes.size(); ++g) {
      if (query_of_gt[g] >= 0 || nodes[g].category != pred.label(q)) continue;
      const double v = iou(pred.boxes[q], nodes[g].bbox);
      if (v > iou_thr && v > best_iou) {
        best_iou = v;
        best = g;
      }
    }
    if (best) {
      query_of_gt[*best] = static_cast<int>(q);
      gt_of_query[q] = static_cast<int>(*best);
    }
  }

  const Matrix adjacency = [&] {
    Matrix m = Matrix::Zero(static_cast<Eigen::Index>(nodes.size()), static_cast<Eigen::Index>(nodes.size()));
    for (const auto& e : gt.graph.edges()) m(e.from - 1, e.to - 1) = 1.0;
    return m;
  }();
  auto gt_label = [&](std::size_t a, std::size_t b) {
    if (adjacency(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) > 0) return PairLabel::Out;
    if (adjacency(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(a)) > 0) return PairLabel::In;
    return PairLabel::NoRel;
  };
  auto prob = [&](int qa, int qb) { return pred.relation_probs(qa, qb); };

  PairwiseOutcome out;
  for (std::size_t g = 0; g < nodes.size(); ++g) out.all_objects_detected &= query_of_gt[g] >= 0;
  for (std::size_t a = 0; a < nodes.size(); ++a) {
    for (std::size_t b = a + 1; b < nodes.size(); ++b) {
      const PairLabel truth = gt_label(a, b);
      ++out.gt_count[static_cast<std::size_t>(truth)];
      const int qa = query_of_gt[a];
      const int qb = query_of_gt[b];
      if (qa < 0 || qb < 0) {
        out.all_pairs_correct = false;
        continue;
      }
      if (predicted_label(prob(qa, qb), prob(qb, qa)) == truth) {
        ++out.correct[static_cast<std::size_t>(truth)];
      } else {
        out.all_pairs_correct = false;
      }
    }
  }
  // Every pair of kept detections is a predicted triplet; pairs of matched
  // detections are oriented by GT id, others by query index.
  for (std::size_t x = 0; x < kept.size(); ++x) {
    for (std::size_t y = x + 1; y < kept.size(); ++y) {
      int qa = static_cast<int>(kept[x]);
      int qb = static_cast<int>(kept[y]);
      const int ga = gt_of_query[static_cast<std::size_t>(qa)];
      const int gb = gt_of_query[static_cast<std::size_t>(qb)];
      if ((ga >= 0 && gb >= 0) ? ga > gb : qa > qb) std::swap(qa, qb);
      ++out.predicted_count[static_cast<std::size_t>(predicted_label(prob(qa, qb), prob(qb, qa)))];
    }
  }
  return out;
}

struct ObjectRecallPrecision {
  double recall = 0.0;
  double precision = 0.0;
};

// Macro average over the labels {out, in, no_rel} of per-label recall and
// precision; labels with an empty denominator are left out of the average.
inline ObjectRecallPrecision triplet_or_op(const std::vector<SceneRecord>& gt, const std::vector<ScenePrediction>& preds,
                                           double score_threshold = 0.5, double iou_thr = 0.5) {
  if (gt.size() != preds.size()) throw ValidationError("triplet_or_op: scene count mismatch");
  std::array<std::size_t, 3> gt_count{}, pred_count{}, correct{};
  for (std::size_t s = 0; s < gt.size(); ++s) {
    const auto o = pairwise_outcome(gt[s], preds[s], score_threshold, iou_thr);
    for (std::size_t l = 0; l < 3; ++l) {
      gt_count[l] += o.gt_count[l];
      pred_count[l] += o.predicted_count[l];
      correct[l] += o.correct[l];
    }
  }
  auto macro = [&](const std::array<std::size_t, 3>& denom) {
    double sum = 0.0;
    int labels = 0;
    for (std::size_t l = 0; l < 3; ++l) {
      if (denom[l] == 0) continue;
      sum += static_cast<double>(correct[l]) / static_cast<double>(denom[l]);
      ++labels;
    }
    return labels > 0 ? sum / labels : 0.0;
  };
  return {macro(gt_count), macro(pred_count)};
}

// Fraction of scenes whose objects are all detected and whose every pair is
// labelled correctly.
inline double image_accuracy(const std::vector<SceneRecord>& gt, const std::vector<ScenePrediction>& preds,
                             double score_threshold = 0.5, double iou_thr = 0.5) {
  if (gt.size() != preds.size()) throw ValidationError("image_accuracy: scene count mismatch");
  if (gt.empty()) return 0.0;
  std::size_t correct = 0;
  for (std::size_t s = 0; s < gt.size(); ++s) {
    const auto o = pairwise_outcome(gt[s], preds[s], score_threshold, iou_thr);
    correct += (o.all_objects_detected && o.all_pairs_correct) ? 1 : 0;
  }
  return static_cast<double>(correct) / static_cast<double>(gt.size());
}

// ---------------------------------------------------------------------------

struct EvalOptions {
  double iou_threshold = 0.5;
  double score_threshold = 0.5;
  std::size_t top_k = 100;
  std::set<std::string> metrics = {"ap_rel", "map", "object_recall", "object_precision", "image_accuracy"};
};

inline const std::vector<std::string>& known_metrics() {
  static const std::vector<std::string> names = {"ap_rel", "map", "object_recall", "object_precision",
                                                 "image_accuracy"};
  return names;
}

struct MetricValues {
  std::map<std::string, double> values;  // only the selected metrics
  PRCurve ap_rel_curve;
};

struct EvalReport {
  MetricValues overall;
  std::map<DifficultyLevel, MetricValues> by_difficulty;
};

inline MetricValues compute_metrics(const std::vector<SceneRecord>& gt, const std::vector<ScenePrediction>& preds,
                                    const EvalOptions& opts) {
  MetricValues out;
  const auto wants = [&](const char* m) { return opts.metrics.count(m) > 0; };
  if (wants("ap_rel")) {
    std::vector<std::vector<Triplet>> triplets;
    for (const auto& p : preds) triplets.push_back(enumerate_triplets(p, opts.top_k));
    out.ap_rel_curve = ap_rel(gt, triplets, opts.iou_threshold);
    out.values["ap_rel"] = out.ap_rel_curve.area;
  }
  if (wants("map")) out.values["map"] = detection_map(gt, preds);
  if (wants("object_recall") || wants("object_precision")) {
    const auto orp = triplet_or_op(gt, preds, opts.score_threshold, opts.iou_threshold);
    if (wants("object_recall")) out.values["object_recall"] = orp.recall;
    if (wants("object_precision")) out.values["object_precision"] = orp.precision;
  }
  if (wants("image_accuracy")) {
    out.values["image_accuracy"] = image_accuracy(gt, preds, opts.score_threshold, opts.iou_threshold);
  }
  return out;
}

// Metrics over all scenes plus a breakdown by ground-truth difficulty level.
inline EvalReport evaluate(const std::vector<SceneRecord>& gt, const std::vector<ScenePrediction>& preds,
                           const EvalOptions& opts = {}) {
  for (const auto& m : opts.metrics) {
    if (std::find(known_metrics().begin(), known_metrics().end(), m) == known_metrics().end()) {
      throw ValidationError("unknown metric '" + m + "'");
    }
  }
  if (gt.size() != preds.size()) throw ValidationError("evaluate: scene count mismatch");
  EvalReport report;
  report.overall = compute_metrics(gt, preds, opts);
  std::map<DifficultyLevel, std::pair<std::vector<SceneRecord>, std::vector<ScenePrediction>>> groups;
  for (std::size_t s = 0; s < gt.size(); ++s) {
    auto& g = groups[classify_difficulty(gt[s].graph)];
    g.first.push_back(gt[s]);
    g.second.push_back(preds[s]);
  }
  for (const auto& [level, group] : groups) {
    report.by_difficulty[level] = compute_metrics(group.first, group.second, opts);
  }
  return report;
}

}  // namespace relgraph

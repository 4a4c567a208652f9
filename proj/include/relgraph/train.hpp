#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "relgraph/autodiff.hpp"
#include "relgraph/depgraph.hpp"
#include "relgraph/errors.hpp"
#include "relgraph/evaluation.hpp"
#include "relgraph/losses.hpp"
#include "relgraph/model.hpp"
#include "relgraph/queries.hpp"
#include "relgraph/rng.hpp"

namespace relgraph {

struct OptimizerConfig {
  double lr = 1e-3;
  double weight_decay = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  void validate() const {
    if (!(lr >= 0.0) || !(weight_decay >= 0.0)) throw ValidationError("lr and weight_decay must be >= 0");
    if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0)) throw ValidationError("betas must be in [0,1)");
    if (!(eps > 0.0)) throw ValidationError("eps must be positive");
  }
};

// Decoupled weight decay Adam.
class AdamW {
 public:
  AdamW(const ModelParams& like, OptimizerConfig cfg) : cfg_(cfg), m_(zeros_like(like)), v_(zeros_like(like)) {
    cfg_.validate();
  }

  void step(ModelParams& params, const ModelParams& grads) {
    ++t_;
    const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for_each_tensor(
        [&](const std::string&, Matrix& p, const Matrix& g, Matrix& m, Matrix& v) {
          m = cfg_.beta1 * m + (1.0 - cfg_.beta1) * g;
          v = cfg_.beta2 * v + (1.0 - cfg_.beta2) * g.cwiseProduct(g);
          p -= cfg_.lr * cfg_.weight_decay * p;
          p.array() -= cfg_.lr * (m.array() / c1) / ((v.array() / c2).sqrt() + cfg_.eps);
        },
        params, grads, m_, v_);
  }

  std::uint64_t steps() const { return t_; }
  double lr() const { return cfg_.lr; }
  void set_lr(double lr) { cfg_.lr = lr; }

 private:
  OptimizerConfig cfg_;
  ModelParams m_;
  ModelParams v_;
  std::uint64_t t_ = 0;
};

struct TrainConfig {
  int epochs = 20;
  int batch_size = 8;
  double lr_decay = 1.0;  // learning rate multiplier applied after every epoch
  OptimizerConfig optimizer;
  QueryNoise noise;
  LossConfig loss;

  void validate() const {
    if (epochs < 0) throw ValidationError("epochs must be >= 0");
    if (batch_size < 1) throw ValidationError("batch_size must be >= 1");
    if (!(lr_decay > 0.0 && lr_decay <= 1.0)) throw ValidationError("lr_decay must be in (0, 1]");
    optimizer.validate();
    loss.box.validate();
  }
};

struct EpochRecord {
  int epoch = 0;
  LossBreakdown train;  // mean over training scenes
  double eval_ap_rel = 0.0;
};

struct TrainResult {
  ModelParams params;
  std::vector<EpochRecord> history;
};

inline nlohmann::json to_json(const EpochRecord& r) {
  return {{"epoch", r.epoch},
          {"node_class", r.train.node_class},
          {"node_box", r.train.node_box},
          {"relationship", r.train.relationship},
          {"total", r.train.total},
          {"eval_ap_rel", r.eval_ap_rel}};
}

inline std::string history_jsonl(const std::vector<EpochRecord>& history) {
  std::string out;
  for (const auto& r : history) out += to_json(r).dump() + "\n";
  return out;
}

namespace detail {

inline constexpr std::uint64_t kEvalStream = 0xe7a1;
inline constexpr std::uint64_t kShuffleStream = 0x5f1e;
inline constexpr std::uint64_t kTrainStream = 0x7a11;

// Each training scene keeps the same simulated detections in every epoch,
// as a frozen detector would produce.
inline std::uint64_t train_query_seed(std::uint64_t seed, std::size_t index) {
  return mix_seed(mix_seed(seed, kTrainStream), index);
}

inline std::uint64_t eval_query_seed(std::uint64_t seed, std::size_t index) {
  return mix_seed(mix_seed(seed, kEvalStream), index);
}

inline void check_scenes(const std::vector<SceneRecord>& scenes, const ModelConfig& cfg) {
  for (const auto& s : scenes) {
    if (static_cast<int>(s.graph.size()) > cfg.num_queries) {
      throw ValidationError("scene '" + s.scene_id + "' has more objects than queries");
    }
  }
}

}  // namespace detail

// Model predictions on the fixed evaluation queries of every scene.
inline std::vector<ScenePrediction> predict_scenes(const std::vector<SceneRecord>& scenes, const ModelParams& params,
                                                   const ModelConfig& cfg, const QueryNoise& noise,
                                                   std::uint64_t seed) {
  std::vector<ScenePrediction> out;
  out.reserve(scenes.size());
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    const auto queries = synth_queries(scenes[i], noise, detail::eval_query_seed(seed, i), cfg);
    out.push_back(to_scene_prediction(scenes[i].scene_id, predict(queries.features, params, cfg)));
  }
  return out;
}

inline double eval_ap_rel(const std::vector<SceneRecord>& scenes, const ModelParams& params, const ModelConfig& cfg,
                          const QueryNoise& noise, std::uint64_t seed, std::size_t top_k = 100) {
  if (scenes.empty()) return 0.0;
  const auto preds = predict_scenes(scenes, params, cfg, noise, seed);
  std::vector<std::vector<Triplet>> triplets;
  for (const auto& p : preds) triplets.push_back(enumerate_triplets(p, top_k));
  return ap_rel(scenes, triplets).area;
}

// Loss and parameter gradients of one scene at the given query features.
struct SceneStep {
  LossBreakdown loss;
  ModelParams grads;
};

inline SceneStep scene_step(const SceneRecord& scene, const Matrix& features, const ModelParams& params,
                            const ModelConfig& cfg, const LossConfig& loss_cfg) {
  ad::Tape tape;
  const ModelVars vars = bind(tape, params, true);
  const ModelOutputs out = model_forward(tape, features, vars, cfg);
  const Assignment match = match_predictions(scene, out.class_probs.value(),
                                             boxes_from_matrix(out.boxes.value()), loss_cfg.box);
  const LossTerms terms = total_loss(scene, out, match, loss_cfg);
  tape.backward(terms.total);
  return {terms.breakdown(), gradients(vars, params)};
}

using EpochCallback = std::function<void(const EpochRecord&)>;

// Mini-batch AdamW on synthetic queries. Query noise is redrawn every epoch;
// evaluation queries are fixed for the whole run.
inline TrainResult train_toy(const std::vector<SceneRecord>& train, const std::vector<SceneRecord>& eval,
                             const ModelConfig& cfg, const TrainConfig& tcfg, std::uint64_t seed,
                             const EpochCallback& on_epoch = {}) {
  cfg.validate();
  tcfg.validate();
  detail::check_scenes(train, cfg);
  detail::check_scenes(eval, cfg);

  TrainResult result;
  result.params = init_params(cfg, seed);
  AdamW opt(result.params, tcfg.optimizer);
  std::size_t step = 0;

  for (int epoch = 1; epoch <= tcfg.epochs; ++epoch) {
    Rng shuffle(mix_seed(mix_seed(seed, detail::kShuffleStream), static_cast<std::uint64_t>(epoch)));
    const auto order = shuffle.permutation(static_cast<int>(train.size()));
    EpochRecord record;
    record.epoch = epoch;
    // Summed in scene order afterwards so the record does not depend on the shuffle.
    std::vector<LossBreakdown> per_scene(train.size());
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(tcfg.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(tcfg.batch_size));
      const double inv = 1.0 / static_cast<double>(end - start);
      ModelParams grads = zeros_like(result.params);
      double batch_total = 0.0;
      for (std::size_t k = start; k < end; ++k) {
        const auto idx = static_cast<std::size_t>(order[k]);
        const auto queries = synth_queries(train[idx], tcfg.noise, detail::train_query_seed(seed, idx), cfg);
        SceneStep s;
        try {
          s = scene_step(train[idx], queries.features, result.params, cfg, tcfg.loss);
        } catch (const NumericalError& e) {
          throw DivergenceError(std::string("training diverged: ") + e.what(), step);
        }
        batch_total += s.loss.total;
        per_scene[idx] = s.loss;
        for_each_tensor([&](const std::string&, Matrix& g, const Matrix& d) { g += inv * d; }, grads, s.grads);
      }
      if (!std::isfinite(batch_total)) {
        throw DivergenceError("training diverged: non-finite loss at step " + std::to_string(step), step);
      }
      opt.step(result.params, grads);
      ++step;
    }
    for (const auto& l : per_scene) {
      record.train.node_class += l.node_class;
      record.train.node_box += l.node_box;
      record.train.relationship += l.relationship;
    }
    if (!train.empty()) {
      const auto n = static_cast<double>(train.size());
      record.train.node_class /= n;
      record.train.node_box /= n;
      record.train.relationship /= n;
    }
    record.train.total = record.train.node_class + record.train.node_box + record.train.relationship;
    opt.set_lr(opt.lr() * tcfg.lr_decay);
    record.eval_ap_rel = eval_ap_rel(eval, result.params, cfg, tcfg.noise, seed);
    result.history.push_back(record);
    if (on_epoch) on_epoch(record);
  }
  return result;
}

}  // namespace relgraph

#pragma once

#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "relgraph/checkpoint.hpp"
#include "relgraph/dataset_io.hpp"
#include "relgraph/evaluation.hpp"
#include "relgraph/planner.hpp"
#include "relgraph/train.hpp"

// Command-line front end. Every subcommand writes one JSON document to
// stdout (or --out); human-readable notes go to stderr unless --quiet.
namespace relgraph::cli {

enum ExitCode { kOk = 0, kInternalError = 1, kInputError = 2 };

struct Streams {
  std::ostream& out;
  std::ostream& err;
  bool quiet = false;

  void note(const std::string& msg) const {
    if (!quiet) err << msg << "\n";
  }
};

struct GlobalOptions {
  std::uint64_t seed = 0;
  std::string out;
  bool quiet = false;
};

inline void emit(const json& doc, const GlobalOptions& g, const Streams& io) {
  if (g.out.empty()) {
    io.out << doc.dump(2) << "\n";
  } else {
    detail::write_file(g.out, doc.dump(2) + "\n");
  }
}

inline json rejections_json(const std::vector<Rejection>& rejected) {
  json out = json::array();
  for (const auto& r : rejected) out.push_back({{"scene_id", r.scene_id}, {"reason", r.reason}});
  return out;
}

inline void report_rejections(const std::vector<Rejection>& rejected, const Streams& io) {
  for (const auto& r : rejected) io.note("rejected scene '" + r.scene_id + "': " + r.reason);
}

// ---------------------------------------------------------------------------

inline int run_validate(const std::string& scenes_path, const GlobalOptions& g, const Streams& io) {
  const auto loaded = load_scenes(scenes_path);
  report_rejections(loaded.rejected, io);
  emit({{"valid", loaded.file.scenes.size()}, {"rejected", rejections_json(loaded.rejected)}}, g, io);
  return loaded.rejected.empty() ? kOk : kInputError;
}

inline int run_analyze(const std::string& scenes_path, const GlobalOptions& g, const Streams& io) {
  const auto loaded = load_scenes(scenes_path);
  report_rejections(loaded.rejected, io);
  emit(to_json(dataset_stats(loaded.file.scenes)), g, io);
  return kOk;
}

inline int run_split(const std::string& scenes_path, const std::string& out_dir, const GlobalOptions& g,
                     const Streams& io) {
  const auto loaded = load_scenes(scenes_path);
  report_rejections(loaded.rejected, io);
  std::filesystem::create_directories(out_dir);
  json summary;
  for (const auto& [level, scenes] : split_by_difficulty(loaded.file.scenes)) {
    std::string name(to_string(level));
    for (auto& ch : name) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    const auto path = (std::filesystem::path(out_dir) / (name + ".json")).string();
    SceneFile file{loaded.file.version, loaded.file.categories, scenes};
    save_scenes(path, file);
    summary[std::string(to_string(level))] = {{"path", path}, {"count", scenes.size()}};
  }
  emit(summary, g, io);
  return kOk;
}

inline int run_synth(int n_scenes, const SynthConfig& cfg, const GlobalOptions& g, const Streams& io) {
  const auto file = synth_dataset(n_scenes, g.seed, cfg);
  emit(to_json(file), g, io);
  io.note("synthesized " + std::to_string(file.scenes.size()) + " scenes");
  return kOk;
}

struct EvalFlags {
  std::string gt;
  std::string pred;
  EvalOptions options;
  bool pr_curve = false;
};

inline json metrics_json(const MetricValues& m, bool pr_curve) {
  json out = json::object();
  for (const auto& [name, value] : m.values) out[name] = value;
  if (pr_curve && m.values.count("ap_rel")) {
    json points = json::array();
    for (const auto& [r, p] : m.ap_rel_curve.points) points.push_back({r, p});
    out["ap_rel_pr_curve"] = std::move(points);
  }
  return out;
}

inline json report_json(const EvalReport& report, const EvalOptions& opts, bool pr_curve) {
  json doc = metrics_json(report.overall, pr_curve);
  json levels = json::object();
  for (const auto& [level, m] : report.by_difficulty) levels[std::string(to_string(level))] = metrics_json(m, pr_curve);
  doc["by_difficulty"] = std::move(levels);
  doc["metadata"] = {{"iou_threshold", opts.iou_threshold},
                     {"score_threshold", opts.score_threshold},
                     {"top_k", opts.top_k},
                     {"class_agreement_required", true}};
  return doc;
}

inline int run_eval(const EvalFlags& flags, const GlobalOptions& g, const Streams& io) {
  const auto gt = load_scenes(flags.gt);
  if (!gt.rejected.empty()) {
    report_rejections(gt.rejected, io);
    throw ValidationError("ground truth file has " + std::to_string(gt.rejected.size()) + " invalid scene(s)");
  }
  const auto preds = align_predictions(gt.file.scenes, load_predictions(flags.pred));
  const auto report = evaluate(gt.file.scenes, preds, flags.options);
  emit(report_json(report, flags.options, flags.pr_curve), g, io);
  return kOk;
}

struct PlanFlags {
  std::string scenes;
  std::string scene_id;
  std::optional<int> target;
  bool empty = false;
};

inline int run_plan(const PlanFlags& flags, const GlobalOptions& g, const Streams& io) {
  if (flags.target.has_value() == flags.empty) throw ValidationError("plan needs exactly one of --target or --empty");
  const auto loaded = load_scenes(flags.scenes);
  for (const auto& r : loaded.rejected) {
    if (r.scene_id == flags.scene_id) throw ValidationError("scene '" + r.scene_id + "' is invalid: " + r.reason);
  }
  const SceneRecord* scene = nullptr;
  for (const auto& s : loaded.file.scenes) {
    if (s.scene_id == flags.scene_id) scene = &s;
  }
  if (!scene) throw ValidationError("unknown scene '" + flags.scene_id + "'");
  json doc;
  doc["scene_id"] = scene->scene_id;
  if (flags.empty) {
    doc["target"] = nullptr;
    doc["sequence"] = emptying_order(scene->graph);
  } else {
    const auto plan = removal_plan(scene->graph, *flags.target);
    doc["target"] = plan.target;
    doc["sequence"] = plan.sequence;
  }
  emit(doc, g, io);
  return kOk;
}

// ---------------------------------------------------------------------------
// train-toy

struct ToyRunConfig {
  ModelConfig model;
  TrainConfig train;
  SynthConfig synth;
  int train_scenes = 2000;
  int eval_scenes = 200;
  std::string train_file;  // when set, replaces synthesized training scenes
  std::string eval_file;
};

// Reference setup: 12 queries, 32-wide features, 2 heads, 2 layers.
inline ToyRunConfig reference_toy_config() {
  ToyRunConfig cfg;
  cfg.train.epochs = 50;
  cfg.train.lr_decay = 0.95;
  return cfg;
}

inline std::uint64_t eval_split_seed(std::uint64_t seed) { return mix_seed(seed, 0xe5a1); }

namespace detail {

template <class F>
void read_keys(const json& j, const char* section, F&& on_key) {
  if (!j.is_object()) throw ValidationError(std::string("config section '") + section + "' must be an object");
  for (const auto& [key, value] : j.items()) {
    if (!on_key(key, value)) throw ValidationError(std::string("unknown key '") + key + "' in '" + section + "'");
  }
}

}  // namespace detail

inline ToyRunConfig toy_config_from_json(const json& doc) {
  ToyRunConfig cfg = reference_toy_config();
  detail::read_keys(doc, "config", [&](const std::string& section, const json& body) {
    if (section == "model") {
      cfg.model = model_config_from_json(body, cfg.model);
    } else if (section == "train") {
      detail::read_keys(body, "train", [&](const std::string& k, const json& v) {
        auto& t = cfg.train;
        if (k == "epochs") t.epochs = v.get<int>();
        else if (k == "batch_size") t.batch_size = v.get<int>();
        else if (k == "lr") t.optimizer.lr = v.get<double>();
        else if (k == "weight_decay") t.optimizer.weight_decay = v.get<double>();
        else if (k == "lr_decay") t.lr_decay = v.get<double>();
        else if (k == "no_object_weight") t.loss.no_object_weight = v.get<double>();
        else if (k == "relation_pos_weight") t.loss.relation_pos_weight = v.get<double>();
        else if (k == "relation_mean") t.loss.relation_mean = v.get<bool>();
        else if (k == "l1_weight") t.loss.box.l1 = v.get<double>();
        else if (k == "giou_weight") t.loss.box.giou = v.get<double>();
        else return false;
        return true;
      });
    } else if (section == "noise") {
      detail::read_keys(body, "noise", [&](const std::string& k, const json& v) {
        if (k == "feature_sigma") cfg.train.noise.feature_sigma = v.get<double>();
        else if (k == "class_confusion") cfg.train.noise.class_confusion = v.get<double>();
        else if (k == "box_jitter") cfg.train.noise.box_jitter = v.get<double>();
        else return false;
        return true;
      });
    } else if (section == "data") {
      detail::read_keys(body, "data", [&](const std::string& k, const json& v) {
        if (k == "train_scenes") cfg.train_scenes = v.get<int>();
        else if (k == "eval_scenes") cfg.eval_scenes = v.get<int>();
        else if (k == "train_file") cfg.train_file = v.get<std::string>();
        else if (k == "eval_file") cfg.eval_file = v.get<std::string>();
        else if (k == "max_objects") cfg.synth.max_objects = v.get<int>();
        else if (k == "min_objects") cfg.synth.min_objects = v.get<int>();
        else if (k == "overlap_threshold") cfg.synth.overlap_threshold = v.get<double>();
        else return false;
        return true;
      });
    } else {
      return false;
    }
    return true;
  });
  cfg.synth.num_categories = cfg.model.num_classes - 1;
  cfg.model.validate();
  cfg.train.validate();
  cfg.synth.validate();
  if (cfg.train_scenes < 1 || cfg.eval_scenes < 1) throw ValidationError("scene counts must be positive");
  return cfg;
}

struct ToyData {
  SceneFile train;
  SceneFile eval;
};

inline ToyData toy_data(const ToyRunConfig& cfg, std::uint64_t seed, const Streams& io) {
  auto from_file = [&](const std::string& path) {
    auto loaded = load_scenes(path);
    report_rejections(loaded.rejected, io);
    if (loaded.file.scenes.empty()) throw ValidationError("no valid scenes in '" + path + "'");
    return loaded.file;
  };
  ToyData data;
  data.train = cfg.train_file.empty() ? synth_dataset(cfg.train_scenes, seed, cfg.synth) : from_file(cfg.train_file);
  data.eval = cfg.eval_file.empty() ? synth_dataset(cfg.eval_scenes, eval_split_seed(seed), cfg.synth)
                                    : from_file(cfg.eval_file);
  return data;
}

inline int run_train_toy(const std::string& config_path, const std::string& out_dir, std::optional<int> epochs,
                         const GlobalOptions& g, const Streams& io) {
  ToyRunConfig cfg = config_path.empty() ? reference_toy_config()
                                         : toy_config_from_json(relgraph::detail::parse_text(
                                               relgraph::detail::read_file(config_path), config_path));
  if (epochs) {
    cfg.train.epochs = *epochs;
    cfg.train.validate();
  }
  const ToyData data = toy_data(cfg, g.seed, io);
  std::filesystem::create_directories(out_dir);
  const auto dir = std::filesystem::path(out_dir);

  std::ofstream history(dir / "history.jsonl", std::ios::binary);
  if (!history) throw ValidationError("cannot write history in '" + out_dir + "'");
  const auto result = train_toy(data.train.scenes, data.eval.scenes, cfg.model, cfg.train, g.seed,
                                [&](const EpochRecord& r) {
                                  history << to_json(r).dump() << "\n" << std::flush;
                                  std::ostringstream msg;
                                  msg << "epoch " << r.epoch << " loss " << r.train.total << " rel "
                                      << r.train.relationship << " eval AP_rel " << r.eval_ap_rel;
                                  io.note(msg.str());
                                });

  save_checkpoint((dir / "checkpoint.json").string(), {cfg.model, result.params});
  save_scenes((dir / "eval_scenes.json").string(), data.eval);
  PredictionFile preds;
  preds.predictions = predict_scenes(data.eval.scenes, result.params, cfg.model, cfg.train.noise, g.seed);
  save_predictions((dir / "predictions.json").string(), preds);

  const double final_ap = result.history.empty()
                              ? eval_ap_rel(data.eval.scenes, result.params, cfg.model, cfg.train.noise, g.seed)
                              : result.history.back().eval_ap_rel;
  emit({{"epochs", cfg.train.epochs},
        {"final_eval_ap_rel", final_ap},
        {"checkpoint", (dir / "checkpoint.json").string()},
        {"history", (dir / "history.jsonl").string()},
        {"eval_scenes", (dir / "eval_scenes.json").string()},
        {"predictions", (dir / "predictions.json").string()}},
       g, io);
  return kOk;
}

// ---------------------------------------------------------------------------

inline int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Dependency-graph relation reasoning toolkit", "relgraph"};
  app.require_subcommand(1);
  app.fallthrough();
  GlobalOptions g;
  app.add_option("--seed", g.seed, "random seed")->capture_default_str();
  app.add_option("--out", g.out, "write the JSON result here instead of stdout");
  app.add_flag("--quiet", g.quiet, "suppress notes on stderr");

  std::string scenes;
  auto* validate = app.add_subcommand("validate", "check a scene file and list rejected scenes");
  validate->add_option("--scenes", scenes)->required();
  auto* analyze = app.add_subcommand("analyze", "dataset statistics");
  analyze->add_option("--scenes", scenes)->required();

  std::string out_dir;
  auto* split = app.add_subcommand("split", "split scenes into one file per difficulty level");
  split->add_option("--scenes", scenes)->required();
  split->add_option("--out-dir", out_dir)->required();

  int n_scenes = 100;
  SynthConfig synth_cfg;
  auto* synth = app.add_subcommand("synth", "generate synthetic scenes");
  synth->add_option("--n", n_scenes, "number of scenes")->capture_default_str()->check(CLI::PositiveNumber);
  synth->add_option("--min-objects", synth_cfg.min_objects)->capture_default_str();
  synth->add_option("--max-objects", synth_cfg.max_objects)->capture_default_str();
  synth->add_option("--overlap-threshold", synth_cfg.overlap_threshold)->capture_default_str();
  synth->add_option("--num-categories", synth_cfg.num_categories)->capture_default_str();

  std::string config_path;
  std::optional<int> epochs;
  auto* train = app.add_subcommand("train-toy", "train on synthetic queries");
  train->add_option("--config", config_path, "JSON run config (reference setup when omitted)");
  train->add_option("--out-dir", out_dir)->required();
  train->add_option("--epochs", epochs)->check(CLI::NonNegativeNumber);

  EvalFlags eval_flags;
  std::vector<std::string> metrics;
  auto* eval = app.add_subcommand("eval", "score predictions against ground truth");
  eval->add_option("--gt", eval_flags.gt)->required();
  eval->add_option("--pred", eval_flags.pred)->required();
  eval->add_option("--iou", eval_flags.options.iou_threshold)->capture_default_str()->check(CLI::Range(0.0, 1.0));
  eval->add_option("--score-threshold", eval_flags.options.score_threshold)
      ->capture_default_str()
      ->check(CLI::Range(0.0, 1.0));
  eval->add_option("--top-k", eval_flags.options.top_k)->capture_default_str()->check(CLI::PositiveNumber);
  eval->add_option("--metrics", metrics, "comma-separated subset of metrics")->delimiter(',');
  eval->add_flag("--pr-curve", eval_flags.pr_curve, "include the AP_rel precision-recall points");

  PlanFlags plan_flags;
  auto* plan = app.add_subcommand("plan", "removal sequence for a target or for the whole scene");
  plan->add_option("--scenes", plan_flags.scenes)->required();
  plan->add_option("--scene-id", plan_flags.scene_id)->required();
  auto* target = plan->add_option("--target", plan_flags.target);
  plan->add_flag("--empty", plan_flags.empty)->excludes(target);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kInputError;
  }

  const Streams io{out, err, g.quiet};
  try {
    if (!metrics.empty()) {
      eval_flags.options.metrics = std::set<std::string>(metrics.begin(), metrics.end());
      for (const auto& m : metrics) {
        if (std::find(known_metrics().begin(), known_metrics().end(), m) == known_metrics().end()) {
          throw ValidationError("unknown metric '" + m + "'");
        }
      }
    }
    if (validate->parsed()) return run_validate(scenes, g, io);
    if (analyze->parsed()) return run_analyze(scenes, g, io);
    if (split->parsed()) return run_split(scenes, out_dir, g, io);
    if (synth->parsed()) return run_synth(n_scenes, synth_cfg, g, io);
    if (train->parsed()) return run_train_toy(config_path, out_dir, epochs, g, io);
    if (eval->parsed()) return run_eval(eval_flags, g, io);
    if (plan->parsed()) return run_plan(plan_flags, g, io);
  } catch (const DivergenceError& e) {
    err << "error: " << e.what() << " (step " << e.step() << ")\n";
    return kInternalError;
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << "\n";
    return kInputError;
  } catch (const json::exception& e) {
    err << "error: malformed input: " << e.what() << "\n";
    return kInputError;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << "\n";
    return kInternalError;
  }
  return kInternalError;
}

}  // namespace relgraph::cli

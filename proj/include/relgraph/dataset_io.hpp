#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "relgraph/depgraph.hpp"
#include "relgraph/errors.hpp"
#include "relgraph/evaluation.hpp"
#include "relgraph/geometry.hpp"
#include "relgraph/rng.hpp"

namespace relgraph {

using json = nlohmann::json;

inline constexpr const char* kFormatVersion = "1.0";

struct Category {
  int id = 0;
  std::string name;

  friend bool operator==(const Category&, const Category&) = default;
};

struct SceneFile {
  std::string version = kFormatVersion;
  std::vector<Category> categories;
  std::vector<SceneRecord> scenes;

  friend bool operator==(const SceneFile&, const SceneFile&) = default;
};

struct Rejection {
  std::string scene_id;
  std::string reason;
};

struct LoadResult {
  SceneFile file;
  std::vector<Rejection> rejected;
};

// ----------------------------------------------------------------------------
// JSON parsing

namespace detail {

// "line L, column C" for a byte offset of a parse error.
inline std::string text_position(const std::string& text, std::size_t byte) {
  std::size_t line = 1, column = 1;
  for (std::size_t i = 0; i < std::min(byte, text.size()); ++i) {
    if (text[i] == '\n') {
      ++line;
      column = 1;
    } else {
      ++column;
    }
  }
  return "line " + std::to_string(line) + ", column " + std::to_string(column);
}

inline json parse_text(const std::string& text, const std::string& origin) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    // nlohmann reports the offset one past the offending byte.
    const std::size_t at = e.byte > 0 ? e.byte - 1 : 0;
    throw ValidationError(origin + ": parse error at " + text_position(text, at));
  }
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write '" + path + "'");
  out << text;
  if (!out) throw ValidationError("write failed for '" + path + "'");
}

inline const json& field(const json& obj, const char* key, const std::string& where) {
  if (!obj.is_object() || !obj.contains(key)) throw ValidationError(where + ": missing field '" + key + "'");
  return obj.at(key);
}

inline BBox parse_box(const json& j, const std::string& where) {
  if (!j.is_array() || j.size() != 4) throw ValidationError(where + ": box must be [cx, cy, w, h]");
  for (const auto& v : j) {
    if (!v.is_number()) throw ValidationError(where + ": box entries must be numbers");
  }
  return BBox{j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>()};
}

inline json box_json(const BBox& b) { return json::array({b.cx, b.cy, b.w, b.h}); }

// Scene-level parse; throws ValidationError with the reason for rejection.
inline SceneRecord parse_scene(const json& s, const std::set<int>& categories) {
  SceneRecord scene;
  scene.scene_id = field(s, "scene_id", "scene").get<std::string>();
  if (s.contains("image") && !s.at("image").is_null()) scene.image = s.at("image").get<std::string>();

  std::vector<ObjectNode> nodes;
  for (const auto& o : field(s, "objects", scene.scene_id)) {
    ObjectNode node;
    node.id = field(o, "id", scene.scene_id).get<int>();
    node.category = field(o, "category", scene.scene_id).get<int>();
    node.bbox = parse_box(field(o, "bbox_cxcywh", scene.scene_id), "object " + std::to_string(node.id));
    if (!categories.count(node.category)) {
      throw ValidationError("object " + std::to_string(node.id) + " has undeclared category " +
                            std::to_string(node.category));
    }
    if (!node.bbox.valid()) {
      throw ValidationError("object " + std::to_string(node.id) + " has a box outside [0,1] or with zero extent");
    }
    nodes.push_back(node);
  }
  std::sort(nodes.begin(), nodes.end(), [](const ObjectNode& a, const ObjectNode& b) { return a.id < b.id; });

  std::vector<Edge> edges;
  for (const auto& e : field(s, "edges", scene.scene_id)) {
    if (!e.is_array() || e.size() != 2) throw ValidationError("edge must be [from, to]");
    edges.push_back({e[0].get<int>(), e[1].get<int>()});
  }
  scene.graph = DependencyGraph(std::move(nodes), std::move(edges));
  require_dag(scene.graph);
  return scene;
}

}  // namespace detail

// Parses a scene file. Scenes that fail structural or DAG validation are
// returned in `rejected` with the reason; file-level problems throw.
inline LoadResult parse_scene_file(const json& doc) {
  LoadResult out;
  out.file.version = detail::field(doc, "version", "scene file").get<std::string>();
  std::set<int> declared;
  for (const auto& c : detail::field(doc, "categories", "scene file")) {
    Category cat{detail::field(c, "id", "category").get<int>(), detail::field(c, "name", "category").get<std::string>()};
    if (!declared.insert(cat.id).second) throw ValidationError("duplicate category id " + std::to_string(cat.id));
    out.file.categories.push_back(cat);
  }
  std::set<std::string> ids;
  for (const auto& s : detail::field(doc, "scenes", "scene file")) {
    const std::string id = s.is_object() && s.contains("scene_id") && s.at("scene_id").is_string()
                               ? s.at("scene_id").get<std::string>()
                               : std::string("<unnamed>");
    try {
      if (!ids.insert(id).second) throw ValidationError("duplicate scene_id");
      out.file.scenes.push_back(detail::parse_scene(s, declared));
    } catch (const ValidationError& e) {
      out.rejected.push_back({id, e.what()});
    } catch (const json::exception& e) {
      out.rejected.push_back({id, std::string("malformed scene: ") + e.what()});
    }
  }
  return out;
}

inline LoadResult parse_scenes(const std::string& text, const std::string& origin = "<memory>") {
  return parse_scene_file(detail::parse_text(text, origin));
}

inline LoadResult load_scenes(const std::string& path) { return parse_scenes(detail::read_file(path), path); }

inline json to_json(const SceneFile& file) {
  json doc;
  doc["version"] = file.version;
  doc["categories"] = json::array();
  for (const auto& c : file.categories) doc["categories"].push_back({{"id", c.id}, {"name", c.name}});
  doc["scenes"] = json::array();
  for (const auto& scene : file.scenes) {
    json s;
    s["scene_id"] = scene.scene_id;
    s["image"] = scene.image ? json(*scene.image) : json(nullptr);
    s["objects"] = json::array();
    for (const auto& n : scene.graph.nodes()) {
      s["objects"].push_back({{"id", n.id}, {"category", n.category}, {"bbox_cxcywh", detail::box_json(n.bbox)}});
    }
    s["edges"] = json::array();
    for (const auto& e : scene.graph.edges()) s["edges"].push_back(json::array({e.from, e.to}));
    doc["scenes"].push_back(std::move(s));
  }
  return doc;
}

inline std::string dump_scenes(const SceneFile& file) { return to_json(file).dump(2) + "\n"; }

inline void save_scenes(const std::string& path, const SceneFile& file) { detail::write_file(path, dump_scenes(file)); }

// ----------------------------------------------------------------------------
// Prediction files

struct PredictionFile {
  std::string version = kFormatVersion;
  std::vector<ScenePrediction> predictions;
};

inline PredictionFile parse_prediction_file(const json& doc) {
  PredictionFile out;
  out.version = detail::field(doc, "version", "prediction file").get<std::string>();
  for (const auto& p : detail::field(doc, "predictions", "prediction file")) {
    ScenePrediction pred;
    pred.scene_id = detail::field(p, "scene_id", "prediction").get<std::string>();
    const std::string where = "prediction '" + pred.scene_id + "'";
    for (const auto& b : detail::field(p, "boxes", where)) pred.boxes.push_back(detail::parse_box(b, where));
    const auto n = static_cast<Eigen::Index>(pred.boxes.size());
    const auto& rows = detail::field(p, "class_probs", where);
    if (!rows.is_array() || static_cast<Eigen::Index>(rows.size()) != n || n == 0) {
      throw ValidationError(where + ": class_probs needs one row per box");
    }
    const auto classes = static_cast<Eigen::Index>(rows[0].size());
    pred.class_probs = Matrix::Zero(n, classes);
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto& row = rows[static_cast<std::size_t>(i)];
      if (static_cast<Eigen::Index>(row.size()) != classes) throw ValidationError(where + ": ragged class_probs");
      for (Eigen::Index c = 0; c < classes; ++c) {
        const double v = row[static_cast<std::size_t>(c)].get<double>();
        if (!(v >= 0.0 && v <= 1.0)) throw ValidationError(where + ": class probability outside [0,1]");
        pred.class_probs(i, c) = v;
      }
    }
    if (p.contains("scores")) {
      for (const auto& s : p.at("scores")) {
        const double v = s.get<double>();
        if (!(v >= 0.0 && v <= 1.0)) throw ValidationError(where + ": score outside [0,1]");
        pred.scores.push_back(v);
      }
    }
    pred.relation_probs = Matrix::Zero(n, n);
    for (const auto& r : detail::field(p, "relations", where)) {
      if (!r.is_array() || r.size() != 3) throw ValidationError(where + ": relation must be [i, j, p]");
      const int i = r[0].get<int>();
      const int j = r[1].get<int>();
      const double v = r[2].get<double>();
      if (i < 0 || j < 0 || i >= n || j >= n) throw ValidationError(where + ": relation index out of range");
      if (i == j) throw ValidationError(where + ": self relation (" + std::to_string(i) + ", " + std::to_string(i) + ")");
      if (!(v >= 0.0 && v <= 1.0)) throw ValidationError(where + ": relation probability outside [0,1]");
      pred.relation_probs(i, j) = v;
    }
    pred.validate();
    out.predictions.push_back(std::move(pred));
  }
  return out;
}

inline PredictionFile load_predictions(const std::string& path) {
  return parse_prediction_file(detail::parse_text(detail::read_file(path), path));
}

inline json to_json(const PredictionFile& file) {
  json doc;
  doc["version"] = file.version;
  doc["predictions"] = json::array();
  for (const auto& p : file.predictions) {
    json j;
    j["scene_id"] = p.scene_id;
    j["boxes"] = json::array();
    for (const auto& b : p.boxes) j["boxes"].push_back(detail::box_json(b));
    j["class_probs"] = json::array();
    for (Eigen::Index i = 0; i < p.class_probs.rows(); ++i) {
      json row = json::array();
      for (Eigen::Index c = 0; c < p.class_probs.cols(); ++c) row.push_back(p.class_probs(i, c));
      j["class_probs"].push_back(std::move(row));
    }
    j["scores"] = json::array();
    for (std::size_t q = 0; q < p.size(); ++q) j["scores"].push_back(p.score(q));
    j["relations"] = json::array();
    for (Eigen::Index r = 0; r < p.relation_probs.rows(); ++r) {
      for (Eigen::Index c = 0; c < p.relation_probs.cols(); ++c) {
        if (r != c && p.relation_probs(r, c) > 0.0) j["relations"].push_back(json::array({r, c, p.relation_probs(r, c)}));
      }
    }
    doc["predictions"].push_back(std::move(j));
  }
  return doc;
}

inline void save_predictions(const std::string& path, const PredictionFile& file) {
  detail::write_file(path, to_json(file).dump(2) + "\n");
}

// Reorders predictions to follow the ground-truth scene order. Missing or
// unknown scene ids are reported together.
inline std::vector<ScenePrediction> align_predictions(const std::vector<SceneRecord>& gt, const PredictionFile& preds) {
  std::map<std::string, const ScenePrediction*> by_id;
  std::vector<std::string> problems;
  for (const auto& p : preds.predictions) {
    if (!by_id.emplace(p.scene_id, &p).second) problems.push_back("duplicate prediction for scene '" + p.scene_id + "'");
  }
  std::set<std::string> gt_ids;
  std::vector<ScenePrediction> out;
  for (const auto& scene : gt) {
    gt_ids.insert(scene.scene_id);
    auto it = by_id.find(scene.scene_id);
    if (it == by_id.end()) {
      problems.push_back("no prediction for scene '" + scene.scene_id + "'");
    } else {
      out.push_back(*it->second);
    }
  }
  for (const auto& p : preds.predictions) {
    if (!gt_ids.count(p.scene_id)) problems.push_back("prediction references unknown scene '" + p.scene_id + "'");
  }
  if (!problems.empty()) {
    std::string msg = "scene id mismatch:";
    for (const auto& p : problems) msg += "\n  " + p;
    throw ValidationError(msg);
  }
  return out;
}

// ----------------------------------------------------------------------------
// Statistics and splits

struct DatasetStats {
  double avg_relations = 0.0;
  double avg_objects = 0.0;
  double avg_clutter_depth = 0.0;
  double avg_clutter_width = 0.0;
  std::map<DifficultyLevel, std::size_t> counts;
};

inline DatasetStats dataset_stats(const std::vector<SceneRecord>& scenes) {
  if (scenes.empty()) throw ValidationError("dataset_stats: no scenes");
  DatasetStats out;
  for (auto level : kAllLevels) out.counts[level] = 0;
  for (const auto& scene : scenes) {
    const auto c = complexity(scene.graph);
    out.avg_relations += static_cast<double>(scene.graph.edges().size());
    out.avg_objects += static_cast<double>(scene.graph.size());
    out.avg_clutter_depth += c.clutter_depth;
    out.avg_clutter_width += c.clutter_width;
    ++out.counts[classify_difficulty(c)];
  }
  const auto n = static_cast<double>(scenes.size());
  out.avg_relations /= n;
  out.avg_objects /= n;
  out.avg_clutter_depth /= n;
  out.avg_clutter_width /= n;
  return out;
}

inline json to_json(const DatasetStats& s) {
  json counts;
  for (const auto& [level, count] : s.counts) counts[std::string(to_string(level))] = count;
  return {{"avg_relations", s.avg_relations},
          {"avg_objects", s.avg_objects},
          {"avg_clutter_depth", s.avg_clutter_depth},
          {"avg_clutter_width", s.avg_clutter_width},
          {"counts", counts}};
}

// Every level is present in the result, possibly with an empty bucket.
inline std::map<DifficultyLevel, std::vector<SceneRecord>> split_by_difficulty(const std::vector<SceneRecord>& scenes) {
  std::map<DifficultyLevel, std::vector<SceneRecord>> out;
  for (auto level : kAllLevels) out[level];
  for (const auto& scene : scenes) out[classify_difficulty(scene.graph)].push_back(scene);
  return out;
}

// ----------------------------------------------------------------------------
// Synthetic scenes

struct SynthConfig {
  int min_objects = 1;
  int max_objects = 10;
  double overlap_threshold = 0.3;  // intersection / smaller-box area
  int num_categories = 5;
  double min_extent = 0.1;
  double max_extent = 0.4;

  void validate() const {
    if (min_objects < 1 || max_objects < min_objects) throw ValidationError("synth: need 1 <= min_objects <= max_objects");
    if (num_categories < 1) throw ValidationError("synth: num_categories must be positive");
    if (!(min_extent > 0.0 && max_extent >= min_extent && max_extent <= 1.0)) {
      throw ValidationError("synth: extents must satisfy 0 < min <= max <= 1");
    }
  }
};

inline double overlap_ratio(const BBox& a, const BBox& b) {
  const double smaller = std::min(a.area(), b.area());
  return smaller > 0.0 ? intersection_area(a, b) / smaller : 0.0;
}

// For every pair whose overlap ratio exceeds the threshold, an edge from the
// lower object to the upper one. height[k] is the z position of object k+1
// (larger is higher, all distinct).
inline std::vector<Edge> edges_from_stacking(const std::vector<BBox>& boxes, const std::vector<int>& height,
                                             double overlap_threshold) {
  std::vector<Edge> edges;
  for (std::size_t a = 0; a < boxes.size(); ++a) {
    for (std::size_t b = a + 1; b < boxes.size(); ++b) {
      if (overlap_ratio(boxes[a], boxes[b]) <= overlap_threshold) continue;
      const int ia = static_cast<int>(a) + 1;
      const int ib = static_cast<int>(b) + 1;
      edges.push_back(height[a] < height[b] ? Edge{ia, ib} : Edge{ib, ia});
    }
  }
  std::sort(edges.begin(), edges.end());
  return edges;
}

inline SceneRecord synth_scene(const std::string& scene_id, const SynthConfig& cfg, Rng& rng) {
  const int n = rng.uniform_int(cfg.min_objects, cfg.max_objects);
  std::vector<ObjectNode> nodes;
  std::vector<BBox> boxes;
  for (int k = 1; k <= n; ++k) {
    const double w = rng.uniform(cfg.min_extent, cfg.max_extent);
    const double h = rng.uniform(cfg.min_extent, cfg.max_extent);
    const BBox box{rng.uniform(w / 2, 1.0 - w / 2), rng.uniform(h / 2, 1.0 - h / 2), w, h};
    nodes.push_back({k, rng.uniform_int(0, cfg.num_categories - 1), box});
    boxes.push_back(box);
  }
  const auto height = rng.permutation(n);
  SceneRecord scene;
  scene.scene_id = scene_id;
  scene.graph = DependencyGraph(std::move(nodes), edges_from_stacking(boxes, height, cfg.overlap_threshold));
  return scene;
}

inline std::vector<Category> synth_categories(const SynthConfig& cfg) {
  std::vector<Category> out;
  for (int c = 0; c < cfg.num_categories; ++c) out.push_back({c, "class_" + std::to_string(c)});
  return out;
}

inline SceneFile synth_dataset(int n_scenes, std::uint64_t seed, const SynthConfig& cfg = {}) {
  if (n_scenes < 1) throw ValidationError("synth: n_scenes must be at least 1");
  cfg.validate();
  Rng rng(seed);
  SceneFile file;
  file.categories = synth_categories(cfg);
  for (int i = 0; i < n_scenes; ++i) {
    file.scenes.push_back(synth_scene("synth_" + std::to_string(i), cfg, rng));
  }
  return file;
}

}  // namespace relgraph

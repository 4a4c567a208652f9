#include <catch_amalgamated.hpp>

#include <fstream>

#include "test_support.hpp"

using namespace relgraph;
using Catch::Approx;
using Catch::Matchers::ContainsSubstring;

namespace {

const char* kTwoScenes = R"({
  "version": "1.0",
  "categories": [{"id": 0, "name": "box"}, {"id": 1, "name": "cup"}],
  "scenes": [
    {"scene_id": "a", "image": "a.png",
     "objects": [{"id": 1, "category": 0, "bbox_cxcywh": [0.5, 0.5, 0.4, 0.4]},
                 {"id": 2, "category": 1, "bbox_cxcywh": [0.5, 0.45, 0.2, 0.2]}],
     "edges": [[1, 2]]},
    {"scene_id": "b", "image": null,
     "objects": [{"id": 1, "category": 1, "bbox_cxcywh": [0.2, 0.2, 0.1, 0.1]}],
     "edges": []}
  ]
})";

std::string scene_file_with(const std::string& scenes) {
  return R"({"version": "1.0", "categories": [{"id": 0, "name": "box"}], "scenes": [)" + scenes + "]}";
}

std::string object_json(int id) {
  return R"({"id": )" + std::to_string(id) + R"(, "category": 0, "bbox_cxcywh": [0.5, 0.5, 0.2, 0.2]})";
}

SceneRecord scene_of(const std::string& id, DependencyGraph g) {
  SceneRecord s;
  s.scene_id = id;
  s.graph = std::move(g);
  return s;
}

DependencyGraph chain(int n, int extra_isolated = 0) {
  std::vector<Edge> edges;
  for (int k = 1; k < n; ++k) edges.push_back({k, k + 1});
  return DependencyGraph::with_nodes(n + extra_isolated, edges);
}

}  // namespace

TEST_CASE("load well-formed scenes") {
  const auto r = parse_scenes(kTwoScenes);
  CHECK(r.rejected.empty());
  REQUIRE(r.file.scenes.size() == 2);
  CHECK(r.file.categories.size() == 2);
  CHECK(r.file.scenes[0].image == std::optional<std::string>("a.png"));
  CHECK_FALSE(r.file.scenes[1].image.has_value());
  CHECK(r.file.scenes[0].graph.edges() == std::vector<Edge>{{1, 2}});
  CHECK(r.file.scenes[0].graph.node(2).bbox == BBox{0.5, 0.45, 0.2, 0.2});
}

TEST_CASE("cyclic and dangling scenes are rejected with reasons") {
  const std::string text = scene_file_with(
      R"({"scene_id": "ok", "objects": [)" + object_json(1) + R"(], "edges": []},)"
      R"({"scene_id": "loop", "objects": [)" + object_json(1) + "," + object_json(2) + "," + object_json(3) +
      R"(], "edges": [[1, 2], [2, 3], [3, 1]]},)"
      R"({"scene_id": "dangling", "objects": [)" + object_json(1) + R"(], "edges": [[1, 7]]})");
  const auto r = parse_scenes(text);
  REQUIRE(r.file.scenes.size() == 1);
  CHECK(r.file.scenes[0].scene_id == "ok");
  REQUIRE(r.rejected.size() == 2);
  CHECK(r.rejected[0].scene_id == "loop");
  CHECK_THAT(r.rejected[0].reason, ContainsSubstring("1 -> 2 -> 3 -> 1"));
  CHECK(r.rejected[1].scene_id == "dangling");
  CHECK_THAT(r.rejected[1].reason, ContainsSubstring("unknown endpoint"));
}

TEST_CASE("structural problems are rejected per scene") {
  const std::string bad_box = R"({"scene_id": "big", "objects": [{"id": 1, "category": 0, "bbox_cxcywh": [0.5, 0.5, 1.5, 0.2]}], "edges": []})";
  const std::string bad_cat = R"({"scene_id": "cat", "objects": [{"id": 1, "category": 4, "bbox_cxcywh": [0.5, 0.5, 0.2, 0.2]}], "edges": []})";
  const std::string dup = R"({"scene_id": "cat", "objects": [], "edges": []})";
  const std::string no_edges = R"({"scene_id": "noedges", "objects": []})";
  const auto r = parse_scenes(scene_file_with(bad_box + "," + bad_cat + "," + dup + "," + no_edges));
  CHECK(r.file.scenes.empty());
  REQUIRE(r.rejected.size() == 4);
  CHECK_THAT(r.rejected[0].reason, ContainsSubstring("box"));
  CHECK_THAT(r.rejected[1].reason, ContainsSubstring("undeclared category"));
  CHECK_THAT(r.rejected[2].reason, ContainsSubstring("duplicate scene_id"));
  CHECK_THAT(r.rejected[3].reason, ContainsSubstring("edges"));
}

TEST_CASE("parse errors report line and column") {
  try {
    parse_scenes("{\n  \"version\": \"1.0\",\n  \"scenes\": [,]\n}", "broken.json");
    FAIL("expected a parse error");
  } catch (const ValidationError& e) {
    CHECK_THAT(e.what(), ContainsSubstring("broken.json"));
    CHECK_THAT(e.what(), ContainsSubstring("line 3"));
  }
  CHECK_THROWS_AS(parse_scenes(R"({"version": "1.0", "scenes": []})"), ValidationError);
  CHECK_THROWS_AS(load_scenes("/nonexistent/scenes.json"), ValidationError);
}

TEST_CASE("save then load reproduces scenes exactly") {
  const auto file = synth_dataset(50, 3);
  const auto dir = testing_support::temp_dir("roundtrip");
  const auto path = (dir / "scenes.json").string();
  save_scenes(path, file);
  const auto back = load_scenes(path);
  CHECK(back.rejected.empty());
  CHECK(back.file == file);

  auto with_image = parse_scenes(kTwoScenes).file;
  CHECK(parse_scenes(dump_scenes(with_image)).file == with_image);
}

TEST_CASE("dataset stats examples") {
  const auto one = scene_of("chain", chain(3));
  auto s = dataset_stats({one});
  CHECK(s.avg_relations == 2.0);
  CHECK(s.avg_objects == 3.0);
  CHECK(s.avg_clutter_depth == 3.0);
  CHECK(s.avg_clutter_width == 3.0);
  CHECK(s.counts.at(DifficultyLevel::Easy) == 1);

  const auto twice = dataset_stats({one, one});
  CHECK(twice.avg_relations == s.avg_relations);
  CHECK(twice.avg_objects == s.avg_objects);
  CHECK(twice.avg_clutter_depth == s.avg_clutter_depth);
  CHECK(twice.avg_clutter_width == s.avg_clutter_width);

  // Mixed set: chain of 3, two isolated objects, a fork 1->2, 1->3 plus one isolated.
  const auto mixed = dataset_stats({one, scene_of("pair", DependencyGraph::with_nodes(2)),
                                    scene_of("fork", DependencyGraph::with_nodes(4, {{1, 2}, {1, 3}}))});
  CHECK(mixed.avg_relations == Approx((2.0 + 0.0 + 2.0) / 3.0).margin(1e-15));
  CHECK(mixed.avg_objects == Approx((3.0 + 2.0 + 4.0) / 3.0).margin(1e-15));
  CHECK(mixed.avg_clutter_depth == Approx((3.0 + 1.0 + 2.0) / 3.0).margin(1e-15));
  CHECK(mixed.avg_clutter_width == Approx((3.0 + 1.0 + 3.0) / 3.0).margin(1e-15));
  CHECK(mixed.counts.at(DifficultyLevel::Trivial) == 1);
  CHECK(mixed.counts.at(DifficultyLevel::Easy) == 2);

  CHECK_THROWS_AS(dataset_stats({}), ValidationError);
  const auto j = to_json(mixed);
  CHECK(j.at("counts").at("Easy") == 2);
  CHECK(j.at("counts").at("Hard") == 0);
}

TEST_CASE("split by difficulty partitions the scenes") {
  const auto hard = scene_of("hard", chain(7, 5));      // 12 objects, width 7/12, depth 7
  const auto medium = scene_of("medium", chain(3, 3));  // 6 objects, width 3/6, depth 3
  const auto trivial = scene_of("trivial", chain(2));
  auto buckets = split_by_difficulty({hard, medium, trivial});
  CHECK(buckets.size() == 4);
  CHECK(buckets.at(DifficultyLevel::Hard) == std::vector<SceneRecord>{hard});
  CHECK(buckets.at(DifficultyLevel::Medium) == std::vector<SceneRecord>{medium});
  CHECK(buckets.at(DifficultyLevel::Trivial) == std::vector<SceneRecord>{trivial});
  CHECK(buckets.at(DifficultyLevel::Easy).empty());

  const auto many = synth_dataset(300, 9).scenes;
  buckets = split_by_difficulty(many);
  std::size_t total = 0;
  std::set<std::string> seen;
  for (const auto& [level, scenes] : buckets) {
    total += scenes.size();
    for (const auto& s : scenes) {
      CHECK(classify_difficulty(s.graph) == level);
      CHECK(seen.insert(s.scene_id).second);
    }
  }
  CHECK(total == many.size());

  std::vector<SceneRecord> pairs;
  for (int k = 0; k < 5; ++k) pairs.push_back(scene_of("p" + std::to_string(k), chain(2)));
  CHECK(split_by_difficulty(pairs).at(DifficultyLevel::Trivial).size() == 5);
}

TEST_CASE("synthetic edges follow stacking order") {
  const BBox box{0.5, 0.5, 0.3, 0.3};
  CHECK(edges_from_stacking({box, box}, {0, 1}, 0.5) == std::vector<Edge>{{1, 2}});
  CHECK(edges_from_stacking({box, box}, {1, 0}, 0.5) == std::vector<Edge>{{2, 1}});
  CHECK(edges_from_stacking({box, box}, {1, 0}, 1.01).empty());
  // Small box fully on a large one: coverage of the smaller box is 1 although IoU is small.
  const BBox small{0.5, 0.5, 0.1, 0.1};
  CHECK(overlap_ratio(box, small) == Approx(1.0).margin(1e-15));
  CHECK(edges_from_stacking({box, small}, {0, 1}, 0.9).size() == 1);

  SynthConfig never;
  never.overlap_threshold = 1.01;
  for (const auto& s : synth_dataset(200, 4, never).scenes) CHECK(s.graph.edges().empty());
}

TEST_CASE("synthetic data is deterministic and valid") {
  CHECK(dump_scenes(synth_dataset(40, 11)) == dump_scenes(synth_dataset(40, 11)));
  CHECK_FALSE(dump_scenes(synth_dataset(40, 11)) == dump_scenes(synth_dataset(40, 12)));
  SynthConfig cfg;
  cfg.min_objects = 2;
  cfg.max_objects = 4;
  for (const auto& s : synth_dataset(500, 13, cfg).scenes) {
    REQUIRE(validate_dag(s.graph).acyclic());
    REQUIRE(s.graph.size() >= 2);
    REQUIRE(s.graph.size() <= 4);
    for (const auto& n : s.graph.nodes()) REQUIRE(n.bbox.valid());
  }
  cfg.max_objects = 1;
  CHECK_THROWS_AS(synth_dataset(1, 0, cfg), ValidationError);
  CHECK_THROWS_AS(synth_dataset(0, 0), ValidationError);
}

TEST_CASE("prediction files") {
  const std::string text = R"({"version": "1.0", "predictions": [
    {"scene_id": "a", "boxes": [[0.5, 0.5, 0.4, 0.4], [0.5, 0.45, 0.2, 0.2]],
     "class_probs": [[0.8, 0.1, 0.1], [0.1, 0.7, 0.2]],
     "relations": [[0, 1, 0.9]]}]})";
  const auto file = parse_prediction_file(json::parse(text));
  REQUIRE(file.predictions.size() == 1);
  const auto& p = file.predictions[0];
  CHECK(p.relation_probs(0, 1) == 0.9);
  CHECK(p.relation_probs(1, 0) == 0.0);
  CHECK(p.score(1) == 0.7);

  const auto back = parse_prediction_file(to_json(file));
  CHECK(back.predictions[0].boxes == p.boxes);
  CHECK(back.predictions[0].class_probs == p.class_probs);
  CHECK(back.predictions[0].relation_probs == p.relation_probs);

  auto bad = json::parse(text);
  bad["predictions"][0]["relations"] = json::parse("[[1, 1, 0.5]]");
  CHECK_THROWS_AS(parse_prediction_file(bad), ValidationError);
  bad["predictions"][0]["relations"] = json::parse("[[0, 1, 1.5]]");
  CHECK_THROWS_AS(parse_prediction_file(bad), ValidationError);
  bad["predictions"][0]["relations"] = json::parse("[[0, 2, 0.5]]");
  CHECK_THROWS_AS(parse_prediction_file(bad), ValidationError);
  bad = json::parse(text);
  bad["predictions"][0]["class_probs"][0][0] = -0.1;
  CHECK_THROWS_AS(parse_prediction_file(bad), ValidationError);
}

TEST_CASE("align predictions to ground truth") {
  const auto gt = parse_scenes(kTwoScenes).file.scenes;
  auto make = [](const std::string& id) {
    ScenePrediction p;
    p.scene_id = id;
    p.boxes = {BBox{0.5, 0.5, 0.1, 0.1}};
    p.class_probs = Matrix::Constant(1, 3, 1.0 / 3.0);
    p.relation_probs = Matrix::Zero(1, 1);
    return p;
  };
  PredictionFile preds;
  preds.predictions = {make("b"), make("a")};
  const auto aligned = align_predictions(gt, preds);
  CHECK(aligned[0].scene_id == "a");
  CHECK(aligned[1].scene_id == "b");

  preds.predictions = {make("a"), make("zzz")};
  try {
    align_predictions(gt, preds);
    FAIL("expected a mismatch");
  } catch (const ValidationError& e) {
    CHECK_THAT(e.what(), ContainsSubstring("'zzz'"));
    CHECK_THAT(e.what(), ContainsSubstring("no prediction for scene 'b'"));
  }
}

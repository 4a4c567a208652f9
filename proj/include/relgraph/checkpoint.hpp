#pragma once

#include <map>
#include <string>

#include <json.hpp>

#include "relgraph/dataset_io.hpp"
#include "relgraph/errors.hpp"
#include "relgraph/model.hpp"

namespace relgraph {

inline json to_json(const ModelConfig& cfg) {
  return {{"num_queries", cfg.num_queries}, {"query_dim", cfg.query_dim},
          {"feature_dim", cfg.feature_dim}, {"num_heads", cfg.num_heads},
          {"num_layers", cfg.num_layers},   {"edge_init", std::string(to_string(cfg.edge_init))},
          {"ffn_hidden", cfg.ffn_hidden},   {"num_classes", cfg.num_classes}};
}

// Missing keys keep their defaults; unknown keys are rejected.
inline ModelConfig model_config_from_json(const json& j, ModelConfig cfg = {}) {
  if (!j.is_object()) throw ValidationError("model config must be an object");
  for (const auto& [key, value] : j.items()) {
    if (key == "num_queries") cfg.num_queries = value.get<int>();
    else if (key == "query_dim") cfg.query_dim = value.get<int>();
    else if (key == "feature_dim") cfg.feature_dim = value.get<int>();
    else if (key == "num_heads") cfg.num_heads = value.get<int>();
    else if (key == "num_layers") cfg.num_layers = value.get<int>();
    else if (key == "edge_init") cfg.edge_init = parse_edge_init(value.get<std::string>());
    else if (key == "ffn_hidden") cfg.ffn_hidden = value.get<int>();
    else if (key == "num_classes") cfg.num_classes = value.get<int>();
    else throw ValidationError("unknown model config key '" + key + "'");
  }
  cfg.validate();
  return cfg;
}

struct Checkpoint {
  ModelConfig config;
  ModelParams params;
};

inline json to_json(const Checkpoint& ckpt) {
  json tensors = json::array();
  for_each_tensor(
      [&](const std::string& name, const Matrix& m) {
        json data = json::array();
        for (Eigen::Index i = 0; i < m.size(); ++i) data.push_back(m.data()[i]);
        tensors.push_back({{"name", name}, {"shape", {m.rows(), m.cols()}}, {"data", std::move(data)}});
      },
      ckpt.params);
  return {{"version", kFormatVersion}, {"config", to_json(ckpt.config)}, {"tensors", std::move(tensors)}};
}

inline Checkpoint checkpoint_from_json(const json& doc) {
  Checkpoint ckpt;
  ckpt.config = model_config_from_json(detail::field(doc, "config", "checkpoint"));
  ckpt.params = init_params(ckpt.config, 0);
  std::map<std::string, const json*> by_name;
  for (const auto& t : detail::field(doc, "tensors", "checkpoint")) {
    by_name[detail::field(t, "name", "tensor").get<std::string>()] = &t;
  }
  std::size_t used = 0;
  for_each_tensor(
      [&](const std::string& name, Matrix& m) {
        auto it = by_name.find(name);
        if (it == by_name.end()) throw ValidationError("checkpoint: missing tensor '" + name + "'");
        const json& t = *it->second;
        const auto& shape = detail::field(t, "shape", name);
        const auto& data = detail::field(t, "data", name);
        if (shape.size() != 2 || shape[0].get<Eigen::Index>() != m.rows() || shape[1].get<Eigen::Index>() != m.cols() ||
            static_cast<Eigen::Index>(data.size()) != m.size()) {
          throw ValidationError("checkpoint: tensor '" + name + "' has the wrong shape");
        }
        for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = data[static_cast<std::size_t>(i)].get<double>();
        ++used;
      },
      ckpt.params);
  if (used != by_name.size()) throw ValidationError("checkpoint: unexpected extra tensors");
  return ckpt;
}

inline void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  detail::write_file(path, to_json(ckpt).dump() + "\n");
}

inline Checkpoint load_checkpoint(const std::string& path) {
  return checkpoint_from_json(detail::parse_text(detail::read_file(path), path));
}

}  // namespace relgraph

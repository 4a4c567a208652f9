#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "relgraph/autodiff.hpp"
#include "relgraph/depgraph.hpp"
#include "relgraph/errors.hpp"
#include "relgraph/matrix.hpp"
#include "relgraph/rng.hpp"

// Edge-aware graph transformer that turns N object queries into an N x N
// matrix of relation logits, plus the class/box heads of the emulated detector.
//
// Layout conventions: node features are N x F matrices; edge features are
// stored as an (N*N) x F matrix whose row i*N + j holds edge (i, j).
namespace relgraph {

enum class EdgeInit { PairwiseConcat, Hadamard, Sum, Difference };

inline constexpr EdgeInit kAllEdgeInits[] = {EdgeInit::PairwiseConcat, EdgeInit::Hadamard, EdgeInit::Sum,
                                             EdgeInit::Difference};

inline std::string_view to_string(EdgeInit s) {
  switch (s) {
    case EdgeInit::PairwiseConcat: return "pairwise_concat";
    case EdgeInit::Hadamard: return "hadamard";
    case EdgeInit::Sum: return "sum";
    case EdgeInit::Difference: return "difference";
  }
  return "unknown";
}

inline EdgeInit parse_edge_init(std::string_view name) {
  for (EdgeInit s : kAllEdgeInits) {
    if (to_string(s) == name) return s;
  }
  throw ValidationError("unknown edge init strategy '" + std::string(name) + "'");
}

// Diagonal (self-relation) logit of e_pred.
inline constexpr double kMaskedLogit = -1e4;

struct ModelConfig {
  int num_queries = 12;  // N
  int query_dim = 32;    // F0
  int feature_dim = 32;  // F
  int num_heads = 2;     // S
  int num_layers = 2;    // L
  EdgeInit edge_init = EdgeInit::PairwiseConcat;
  int ffn_hidden = 64;
  int num_classes = 6;  // last index is the no-object class

  int head_dim() const { return feature_dim / num_heads; }
  int no_object() const { return num_classes - 1; }

  void validate() const {
    auto positive = [](int v, const char* what) {
      if (v <= 0) throw ValidationError(std::string(what) + " must be positive");
    };
    positive(num_queries, "num_queries");
    positive(query_dim, "query_dim");
    positive(feature_dim, "feature_dim");
    positive(num_heads, "num_heads");
    positive(num_layers, "num_layers");
    positive(ffn_hidden, "ffn_hidden");
    if (num_classes < 2) throw ValidationError("num_classes must include at least one class plus no-object");
    if (feature_dim % num_heads != 0) throw ValidationError("feature_dim must be divisible by num_heads");
  }

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

// Parameter structures are templated on the tensor type: Matrix for stored
// parameters and gradients, ad::Var for parameters bound to a tape.
template <class T>
struct LinearT {
  T weight;  // in x out
  T bias;    // 1 x out
};

template <class T>
struct FeedForwardT {
  LinearT<T> hidden;
  LinearT<T> out;
};

template <class T>
struct NormT {
  T scale;  // 1 x F
  T shift;  // 1 x F
};

template <class T>
struct AttentionHeadT {
  T query;  // F x z
  T key;
  T edge;
  T value;
};

template <class T>
struct LayerParamsT {
  std::vector<AttentionHeadT<T>> heads;
  T node_out;  // F x F
  T edge_out;  // F x F
  NormT<T> node_norm1, node_norm2, edge_norm1, edge_norm2;
  FeedForwardT<T> node_ffn, edge_ffn;
};

template <class T>
struct EdgeInitParamsT {
  T node_map;  // F0 x F
  T src_map;   // F0 x F
  T dst_map;   // F0 x F
  LinearT<T> edge_map;  // (2F or F) x F
};

template <class T>
struct ModelParamsT {
  FeedForwardT<T> class_head;
  FeedForwardT<T> box_head;
  EdgeInitParamsT<T> edge_init;
  std::vector<LayerParamsT<T>> layers;
  FeedForwardT<T> edge_head;
};

using LayerParams = LayerParamsT<Matrix>;
using EdgeInitParams = EdgeInitParamsT<Matrix>;
using ModelParams = ModelParamsT<Matrix>;
using ModelVars = ModelParamsT<ad::Var>;

// ---------------------------------------------------------------------------
// Visitors. f(name, tensor...) is called for every tensor, in a fixed order,
// zipping any number of structurally identical parameter sets.

template <class F, class... P>
void visit_linear(F&& f, const std::string& name, P&... p) {
  f(name + ".weight", p.weight...);
  f(name + ".bias", p.bias...);
}

template <class F, class... P>
void visit_ffn(F&& f, const std::string& name, P&... p) {
  visit_linear(f, name + ".hidden", p.hidden...);
  visit_linear(f, name + ".out", p.out...);
}

template <class F, class... P>
void visit_norm(F&& f, const std::string& name, P&... p) {
  f(name + ".scale", p.scale...);
  f(name + ".shift", p.shift...);
}

template <class F, class First, class... P>
void visit_layer(F&& f, const std::string& name, First& first, P&... p) {
  for (std::size_t s = 0; s < first.heads.size(); ++s) {
    const std::string head = name + ".heads." + std::to_string(s);
    f(head + ".query", first.heads[s].query, p.heads[s].query...);
    f(head + ".key", first.heads[s].key, p.heads[s].key...);
    f(head + ".edge", first.heads[s].edge, p.heads[s].edge...);
    f(head + ".value", first.heads[s].value, p.heads[s].value...);
  }
  f(name + ".node_out", first.node_out, p.node_out...);
  f(name + ".edge_out", first.edge_out, p.edge_out...);
  visit_norm(f, name + ".node_norm1", first.node_norm1, p.node_norm1...);
  visit_norm(f, name + ".node_norm2", first.node_norm2, p.node_norm2...);
  visit_norm(f, name + ".edge_norm1", first.edge_norm1, p.edge_norm1...);
  visit_norm(f, name + ".edge_norm2", first.edge_norm2, p.edge_norm2...);
  visit_ffn(f, name + ".node_ffn", first.node_ffn, p.node_ffn...);
  visit_ffn(f, name + ".edge_ffn", first.edge_ffn, p.edge_ffn...);
}

template <class F, class... P>
void visit_edge_init(F&& f, const std::string& name, P&... p) {
  f(name + ".node_map", p.node_map...);
  f(name + ".src_map", p.src_map...);
  f(name + ".dst_map", p.dst_map...);
  visit_linear(f, name + ".edge_map", p.edge_map...);
}

template <class F, class First, class... P>
void for_each_tensor(F&& f, First& first, P&... p) {
  visit_ffn(f, "class_head", first.class_head, p.class_head...);
  visit_ffn(f, "box_head", first.box_head, p.box_head...);
  visit_edge_init(f, "edge_init", first.edge_init, p.edge_init...);
  for (std::size_t l = 0; l < first.layers.size(); ++l) {
    visit_layer(f, "layers." + std::to_string(l), first.layers[l], p.layers[l]...);
  }
  visit_ffn(f, "edge_head", first.edge_head, p.edge_head...);
}

// Same structure as `like` with every tensor default-constructed.
template <class T, class U>
ModelParamsT<T> shaped_like(const ModelParamsT<U>& like) {
  ModelParamsT<T> out;
  out.layers.resize(like.layers.size());
  for (std::size_t l = 0; l < like.layers.size(); ++l) out.layers[l].heads.resize(like.layers[l].heads.size());
  return out;
}

template <class T, class U>
LayerParamsT<T> shaped_like(const LayerParamsT<U>& like) {
  LayerParamsT<T> out;
  out.heads.resize(like.heads.size());
  return out;
}

inline ModelParams zeros_like(const ModelParams& params) {
  ModelParams out = shaped_like<Matrix>(params);
  for_each_tensor([](const std::string&, Matrix& dst, const Matrix& src) { dst.setZero(src.rows(), src.cols()); },
                  out, params);
  return out;
}

inline std::size_t parameter_count(const ModelParams& params) {
  std::size_t n = 0;
  for_each_tensor([&](const std::string&, const Matrix& m) { n += static_cast<std::size_t>(m.size()); }, params);
  return n;
}

// Binds stored parameters to tape leaves (trainable) or constants.
inline ModelVars bind(ad::Tape& tape, const ModelParams& params, bool trainable = true) {
  ModelVars vars = shaped_like<ad::Var>(params);
  for_each_tensor([&](const std::string&, ad::Var& v,
                      const Matrix& m) { v = trainable ? tape.variable(m) : tape.constant(m); },
                  vars, params);
  return vars;
}

inline LayerParamsT<ad::Var> bind(ad::Tape& tape, const LayerParams& params, bool trainable = true) {
  auto vars = shaped_like<ad::Var>(params);
  visit_layer([&](const std::string&, ad::Var& v,
                  const Matrix& m) { v = trainable ? tape.variable(m) : tape.constant(m); },
              "layer", vars, params);
  return vars;
}

// Gradients of every bound leaf, in the layout of the stored parameters.
inline ModelParams gradients(const ModelVars& vars, const ModelParams& like) {
  ModelParams out = shaped_like<Matrix>(like);
  for_each_tensor(
      [](const std::string&, Matrix& dst, const ad::Var& v, const Matrix& src) {
        if (v.tape()->requires_grad(v.id()) && v.grad().size() == src.size()) {
          dst = v.grad();
        } else {
          dst.setZero(src.rows(), src.cols());
        }
      },
      out, vars, like);
  return out;
}

// ---------------------------------------------------------------------------
// Initialization: uniform in +-1/sqrt(fan_in); norms start at identity and the
// edge-map bias at 1 so the multiplicative edge gate starts open.

namespace detail {

inline Matrix uniform_matrix(Rng& rng, int rows, int cols, double bound) {
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(-bound, bound);
  return m;
}

inline LinearT<Matrix> init_linear(Rng& rng, int in, int out) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  return {uniform_matrix(rng, in, out, bound), uniform_matrix(rng, 1, out, bound)};
}

inline FeedForwardT<Matrix> init_ffn(Rng& rng, int in, int hidden, int out) {
  return {init_linear(rng, in, hidden), init_linear(rng, hidden, out)};
}

inline NormT<Matrix> init_norm(int width) { return {Matrix::Ones(1, width), Matrix::Zero(1, width)}; }

}  // namespace detail

inline ModelParams init_params(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Rng rng(seed);
  const int f0 = cfg.query_dim;
  const int f = cfg.feature_dim;
  const int z = cfg.head_dim();
  const double b0 = 1.0 / std::sqrt(static_cast<double>(f0));
  const double bf = 1.0 / std::sqrt(static_cast<double>(f));

  ModelParams p;
  p.class_head = detail::init_ffn(rng, f0, f, cfg.num_classes);
  p.box_head = detail::init_ffn(rng, f0, f, 4);
  p.edge_init.node_map = detail::uniform_matrix(rng, f0, f, b0);
  p.edge_init.src_map = detail::uniform_matrix(rng, f0, f, b0);
  p.edge_init.dst_map = detail::uniform_matrix(rng, f0, f, b0);
  const int edge_in = cfg.edge_init == EdgeInit::PairwiseConcat ? 2 * f : f;
  p.edge_init.edge_map = detail::init_linear(rng, edge_in, f);
  p.edge_init.edge_map.bias.setOnes();
  for (int l = 0; l < cfg.num_layers; ++l) {
    LayerParams layer;
    for (int s = 0; s < cfg.num_heads; ++s) {
      layer.heads.push_back({detail::uniform_matrix(rng, f, z, bf), detail::uniform_matrix(rng, f, z, bf),
                             detail::uniform_matrix(rng, f, z, bf), detail::uniform_matrix(rng, f, z, bf)});
    }
    layer.node_out = detail::uniform_matrix(rng, f, f, bf);
    layer.edge_out = detail::uniform_matrix(rng, f, f, bf);
    layer.node_norm1 = detail::init_norm(f);
    layer.node_norm2 = detail::init_norm(f);
    layer.edge_norm1 = detail::init_norm(f);
    layer.edge_norm2 = detail::init_norm(f);
    layer.node_ffn = detail::init_ffn(rng, f, cfg.ffn_hidden, f);
    layer.edge_ffn = detail::init_ffn(rng, f, cfg.ffn_hidden, f);
    p.layers.push_back(std::move(layer));
  }
  p.edge_head = detail::init_ffn(rng, f, f, 1);
  return p;
}

// ---------------------------------------------------------------------------
// Forward pass.

namespace detail {

// Row i*n + j -> i, and row i*n + j -> j.
inline std::vector<int> repeat_index(int n) {
  std::vector<int> out(static_cast<std::size_t>(n * n));
  for (int i = 0; i < n * n; ++i) out[static_cast<std::size_t>(i)] = i / n;
  return out;
}

inline std::vector<int> tile_index(int n) {
  std::vector<int> out(static_cast<std::size_t>(n * n));
  for (int i = 0; i < n * n; ++i) out[static_cast<std::size_t>(i)] = i % n;
  return out;
}

inline ad::Var linear(ad::Var x, const LinearT<ad::Var>& p) { return ad::add_row(ad::matmul(x, p.weight), p.bias); }

inline ad::Var feed_forward(ad::Var x, const FeedForwardT<ad::Var>& p) {
  return linear(ad::relu(linear(x, p.hidden)), p.out);
}

inline void require_finite(const ad::Var& v, const char* where) {
  if (!v.value().allFinite()) throw NumericalError(std::string("non-finite values in ") + where);
}

}  // namespace detail

struct GraphState {
  ad::Var nodes;  // N x F
  ad::Var edges;  // (N*N) x F
};

// h0 = h_dec M_h; e0(i,j) = M_e(eps1_i (+) eps2_j) with (+) the chosen combination.
inline GraphState init_edges(ad::Var h_dec, const EdgeInitParamsT<ad::Var>& p, EdgeInit strategy) {
  if (h_dec.cols() != p.node_map.rows()) throw ValidationError("init_edges: query width does not match M_h");
  const auto n = static_cast<int>(h_dec.rows());
  const ad::Var h0 = ad::matmul(h_dec, p.node_map);
  const ad::Var src = ad::gather_rows(ad::matmul(h_dec, p.src_map), detail::repeat_index(n));
  const ad::Var dst = ad::gather_rows(ad::matmul(h_dec, p.dst_map), detail::tile_index(n));
  ad::Var combined;
  switch (strategy) {
    case EdgeInit::PairwiseConcat: combined = ad::concat_cols({src, dst}); break;
    case EdgeInit::Hadamard: combined = ad::mul(src, dst); break;
    case EdgeInit::Sum: combined = ad::add(src, dst); break;
    case EdgeInit::Difference: combined = ad::sub(src, dst); break;
  }
  if (combined.cols() != p.edge_map.weight.rows()) {
    throw ValidationError("init_edges: edge map shape does not match strategy " + std::string(to_string(strategy)));
  }
  return {h0, detail::linear(combined, p.edge_map)};
}

// Optional per-head intermediates, for inspection in tests.
struct AttentionTrace {
  std::vector<ad::Var> pseudo_attention;  // (N*N) x z per head
  std::vector<ad::Var> attention;         // N x N per head, rows sum to 1
};

// One graph-transformer layer. With keep_nodes=false the node stream output
// is not computed (the last layer only feeds the edge head).
inline GraphState layer_forward(const GraphState& in, const LayerParamsT<ad::Var>& p, bool keep_nodes = true,
                                AttentionTrace* trace = nullptr) {
  const auto n = static_cast<int>(in.nodes.rows());
  const auto f = in.nodes.cols();
  if (in.edges.rows() != static_cast<Eigen::Index>(n) * n || in.edges.cols() != f) {
    throw ValidationError("layer_forward: edge tensor shape does not match node count");
  }
  const auto rep = detail::repeat_index(n);
  const auto tile = detail::tile_index(n);
  std::vector<ad::Var> node_heads;
  std::vector<ad::Var> edge_heads;
  for (const auto& head : p.heads) {
    const double inv_sqrt_z = 1.0 / std::sqrt(static_cast<double>(head.query.cols()));
    const ad::Var q = ad::gather_rows(ad::matmul(in.nodes, head.query), rep);
    const ad::Var k = ad::gather_rows(ad::matmul(in.nodes, head.key), tile);
    const ad::Var gate = ad::matmul(in.edges, head.edge);
    const ad::Var pseudo = ad::mul(ad::scale(ad::mul(q, k), inv_sqrt_z), gate);
    edge_heads.push_back(pseudo);
    const ad::Var scores = ad::reshape(ad::row_sum(pseudo), n, n);
    const ad::Var attention = ad::softmax_rows(scores);
    if (trace) {
      trace->pseudo_attention.push_back(pseudo);
      trace->attention.push_back(attention);
    }
    if (keep_nodes) node_heads.push_back(ad::matmul(attention, ad::matmul(in.nodes, head.value)));
  }

  auto residual_block = [](ad::Var x, ad::Var update, const NormT<ad::Var>& n1, const FeedForwardT<ad::Var>& ffn,
                           const NormT<ad::Var>& n2) {
    const ad::Var mid = ad::layer_norm(ad::add(x, update), n1.scale, n1.shift);
    return ad::layer_norm(ad::add(mid, detail::feed_forward(mid, ffn)), n2.scale, n2.shift);
  };

  GraphState out;
  const ad::Var edge_update = ad::matmul(ad::concat_cols(edge_heads), p.edge_out);
  out.edges = residual_block(in.edges, edge_update, p.edge_norm1, p.edge_ffn, p.edge_norm2);
  detail::require_finite(out.edges, "layer_forward edge stream");
  if (keep_nodes) {
    const ad::Var node_update = ad::matmul(ad::concat_cols(node_heads), p.node_out);
    out.nodes = residual_block(in.nodes, node_update, p.node_norm1, p.node_ffn, p.node_norm2);
    detail::require_finite(out.nodes, "layer_forward node stream");
  }
  return out;
}

// Two-layer perceptron on every edge feature; N x N logits with the diagonal masked.
inline ad::Var edge_head(ad::Var edges, const FeedForwardT<ad::Var>& p, int n) {
  const ad::Var logits = detail::feed_forward(edges, p);
  if (logits.cols() != 1) throw ValidationError("edge_head must produce one logit per edge");
  return ad::mask_diagonal(ad::reshape(logits, n, n), kMaskedLogit);
}

struct ModelOutputs {
  ad::Var class_probs;  // N x num_classes, rows sum to 1
  ad::Var boxes;        // N x 4 (cx, cy, w, h) in (0, 1)
  ad::Var edge_logits;  // N x N, diagonal masked
};

inline ModelOutputs model_forward(ad::Tape& tape, const Matrix& features, const ModelVars& params,
                                  const ModelConfig& cfg) {
  if (features.rows() != cfg.num_queries || features.cols() != cfg.query_dim) {
    throw ValidationError("model_forward: query features must be " + std::to_string(cfg.num_queries) + "x" +
                          std::to_string(cfg.query_dim));
  }
  const ad::Var h_dec = tape.constant(features);
  ModelOutputs out;
  out.class_probs = ad::softmax_rows(detail::feed_forward(h_dec, params.class_head));
  out.boxes = ad::sigmoid(detail::feed_forward(h_dec, params.box_head));
  GraphState state = init_edges(h_dec, params.edge_init, cfg.edge_init);
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    state = layer_forward(state, params.layers[l], l + 1 < params.layers.size());
  }
  out.edge_logits = edge_head(state.edges, params.edge_head, cfg.num_queries);
  detail::require_finite(out.edge_logits, "edge head");
  return out;
}

// Plain-value model output for one scene.
struct Prediction {
  Matrix class_probs;
  std::vector<BBox> boxes;
  Matrix edge_logits;
};

inline std::vector<BBox> boxes_from_matrix(const Matrix& m) {
  std::vector<BBox> out;
  out.reserve(static_cast<std::size_t>(m.rows()));
  for (Eigen::Index r = 0; r < m.rows(); ++r) out.push_back(BBox{m(r, 0), m(r, 1), m(r, 2), m(r, 3)});
  return out;
}

inline Prediction predict(const Matrix& features, const ModelParams& params, const ModelConfig& cfg) {
  ad::Tape tape;
  const ModelVars vars = bind(tape, params, false);
  const ModelOutputs out = model_forward(tape, features, vars, cfg);
  return Prediction{out.class_probs.value(), boxes_from_matrix(out.boxes.value()), out.edge_logits.value()};
}

}  // namespace relgraph

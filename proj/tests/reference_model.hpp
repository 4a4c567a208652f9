#pragma once

// Scalar-loop reimplementation of the model forward pass: no tape, no
// vectorized kernels, one explicit loop per index. Used as an independent
// oracle for the tape-based implementation.

#include <cmath>
#include <vector>

#include "relgraph/model.hpp"

namespace reference {

using relgraph::Matrix;
using Vec = std::vector<double>;
using Grid = std::vector<std::vector<Vec>>;  // [i][j][feature]

inline Vec row_of(const Matrix& m, Eigen::Index r) {
  Vec out(static_cast<std::size_t>(m.cols()));
  for (Eigen::Index c = 0; c < m.cols(); ++c) out[static_cast<std::size_t>(c)] = m(r, c);
  return out;
}

inline Vec times(const Vec& x, const Matrix& w) {
  Vec out(static_cast<std::size_t>(w.cols()), 0.0);
  for (Eigen::Index o = 0; o < w.cols(); ++o) {
    double acc = 0.0;
    for (Eigen::Index i = 0; i < w.rows(); ++i) acc += x[static_cast<std::size_t>(i)] * w(i, o);
    out[static_cast<std::size_t>(o)] = acc;
  }
  return out;
}

inline Vec affine(const Vec& x, const relgraph::LinearT<Matrix>& p) {
  Vec out = times(x, p.weight);
  for (std::size_t o = 0; o < out.size(); ++o) out[o] += p.bias(0, static_cast<Eigen::Index>(o));
  return out;
}

inline Vec ffn(const Vec& x, const relgraph::FeedForwardT<Matrix>& p) {
  Vec hidden = affine(x, p.hidden);
  for (double& v : hidden) v = v > 0.0 ? v : 0.0;
  return affine(hidden, p.out);
}

inline Vec add(const Vec& a, const Vec& b) {
  Vec out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
  return out;
}

inline Vec norm(const Vec& x, const relgraph::NormT<Matrix>& p, double eps = 1e-5) {
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= static_cast<double>(x.size());
  double var = 0.0;
  for (double v : x) var += (v - mean) * (v - mean);
  var /= static_cast<double>(x.size());
  Vec out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    out[i] = (x[i] - mean) / std::sqrt(var + eps) * p.scale(0, static_cast<Eigen::Index>(i)) +
             p.shift(0, static_cast<Eigen::Index>(i));
  }
  return out;
}

inline Vec softmax(const Vec& x) {
  double top = x[0];
  for (double v : x) top = std::max(top, v);
  Vec out(x.size());
  double total = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    out[i] = std::exp(x[i] - top);
    total += out[i];
  }
  for (double& v : out) v /= total;
  return out;
}

struct State {
  std::vector<Vec> nodes;
  Grid edges;
};

inline State init_edges(const Matrix& h_dec, const relgraph::EdgeInitParams& p, relgraph::EdgeInit strategy) {
  const auto n = static_cast<std::size_t>(h_dec.rows());
  State s;
  std::vector<Vec> src, dst;
  for (std::size_t i = 0; i < n; ++i) {
    const Vec x = row_of(h_dec, static_cast<Eigen::Index>(i));
    s.nodes.push_back(times(x, p.node_map));
    src.push_back(times(x, p.src_map));
    dst.push_back(times(x, p.dst_map));
  }
  s.edges.assign(n, std::vector<Vec>(n));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      Vec combined;
      const Vec& a = src[i];
      const Vec& b = dst[j];
      switch (strategy) {
        case relgraph::EdgeInit::PairwiseConcat:
          combined = a;
          combined.insert(combined.end(), b.begin(), b.end());
          break;
        case relgraph::EdgeInit::Hadamard:
          for (std::size_t c = 0; c < a.size(); ++c) combined.push_back(a[c] * b[c]);
          break;
        case relgraph::EdgeInit::Sum:
          for (std::size_t c = 0; c < a.size(); ++c) combined.push_back(a[c] + b[c]);
          break;
        case relgraph::EdgeInit::Difference:
          for (std::size_t c = 0; c < a.size(); ++c) combined.push_back(a[c] - b[c]);
          break;
      }
      s.edges[i][j] = affine(combined, p.edge_map);
    }
  }
  return s;
}

struct LayerTrace {
  std::vector<std::vector<Vec>> attention;  // [head][i][j]
};

inline State layer(const State& in, const relgraph::LayerParams& p, bool keep_nodes = true,
                   LayerTrace* trace = nullptr) {
  const std::size_t n = in.nodes.size();
  std::vector<Vec> node_cat(n);
  std::vector<std::vector<Vec>> edge_cat(n, std::vector<Vec>(n));
  for (const auto& head : p.heads) {
    const auto z = static_cast<std::size_t>(head.query.cols());
    std::vector<Vec> q, k, v;
    for (std::size_t i = 0; i < n; ++i) {
      q.push_back(times(in.nodes[i], head.query));
      k.push_back(times(in.nodes[i], head.key));
      v.push_back(times(in.nodes[i], head.value));
    }
    std::vector<Vec> attention(n);
    for (std::size_t i = 0; i < n; ++i) {
      Vec scores(n);
      for (std::size_t j = 0; j < n; ++j) {
        const Vec gate = times(in.edges[i][j], head.edge);
        double total = 0.0;
        for (std::size_t c = 0; c < z; ++c) {
          const double pseudo = q[i][c] * k[j][c] / std::sqrt(static_cast<double>(z)) * gate[c];
          edge_cat[i][j].push_back(pseudo);
          total += pseudo;
        }
        scores[j] = total;
      }
      attention[i] = softmax(scores);
      for (std::size_t c = 0; c < z; ++c) {
        double acc = 0.0;
        for (std::size_t j = 0; j < n; ++j) acc += attention[i][j] * v[j][c];
        node_cat[i].push_back(acc);
      }
    }
    if (trace) trace->attention.push_back(attention);
  }
  State out;
  out.edges.assign(n, std::vector<Vec>(n));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const Vec mid = norm(add(in.edges[i][j], times(edge_cat[i][j], p.edge_out)), p.edge_norm1);
      out.edges[i][j] = norm(add(mid, ffn(mid, p.edge_ffn)), p.edge_norm2);
    }
  }
  if (keep_nodes) {
    for (std::size_t i = 0; i < n; ++i) {
      const Vec mid = norm(add(in.nodes[i], times(node_cat[i], p.node_out)), p.node_norm1);
      out.nodes.push_back(norm(add(mid, ffn(mid, p.node_ffn)), p.node_norm2));
    }
  }
  return out;
}

struct Output {
  Matrix class_probs;
  Matrix boxes;
  Matrix edge_logits;
};

inline Matrix edge_logits(const Grid& edges, const relgraph::FeedForwardT<Matrix>& head) {
  const auto n = static_cast<Eigen::Index>(edges.size());
  Matrix out(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      out(i, j) = i == j ? relgraph::kMaskedLogit
                         : ffn(edges[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)], head)[0];
    }
  }
  return out;
}

inline Output forward(const Matrix& features, const relgraph::ModelParams& p, const relgraph::ModelConfig& cfg) {
  Output out;
  const auto n = features.rows();
  out.class_probs = Matrix(n, cfg.num_classes);
  out.boxes = Matrix(n, 4);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Vec x = row_of(features, i);
    const Vec probs = softmax(ffn(x, p.class_head));
    for (int c = 0; c < cfg.num_classes; ++c) out.class_probs(i, c) = probs[static_cast<std::size_t>(c)];
    const Vec raw = ffn(x, p.box_head);
    for (int c = 0; c < 4; ++c) out.boxes(i, c) = 1.0 / (1.0 + std::exp(-raw[static_cast<std::size_t>(c)]));
  }
  State s = init_edges(features, p.edge_init, cfg.edge_init);
  for (std::size_t l = 0; l < p.layers.size(); ++l) s = layer(s, p.layers[l], l + 1 < p.layers.size());
  out.edge_logits = edge_logits(s.edges, p.edge_head);
  return out;
}

}  // namespace reference

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "relgraph/depgraph.hpp"
#include "relgraph/errors.hpp"
#include "relgraph/matrix.hpp"

namespace relgraph {

inline double intersection_area(const BBox& a, const BBox& b) {
  const double iw = std::max(0.0, std::min(a.x2(), b.x2()) - std::max(a.x1(), b.x1()));
  const double ih = std::max(0.0, std::min(a.y2(), b.y2()) - std::max(a.y1(), b.y1()));
  return iw * ih;
}

inline double iou(const BBox& a, const BBox& b) {
  const double inter = intersection_area(a, b);
  const double uni = a.area() + b.area() - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

// IoU minus the fraction of the tightest enclosing box not covered by the union.
inline double giou(const BBox& a, const BBox& b) {
  const double inter = intersection_area(a, b);
  const double uni = a.area() + b.area() - inter;
  const double ew = std::max(a.x2(), b.x2()) - std::min(a.x1(), b.x1());
  const double eh = std::max(a.y2(), b.y2()) - std::min(a.y1(), b.y1());
  const double enclosure = ew * eh;
  const double plain = uni > 0.0 ? inter / uni : 0.0;
  return enclosure > 0.0 ? plain - (enclosure - uni) / enclosure : plain;
}

// Box-loss coefficients; the class-probability term always has weight 1.
struct MatchCostWeights {
  double l1 = 5.0;
  double giou = 2.0;

  void validate() const {
    if (!(l1 >= 0.0) || !(giou >= 0.0) || (l1 == 0.0 && giou == 0.0)) {
      throw ValidationError("match cost weights must be non-negative and not both zero");
    }
  }
};

inline double box_loss(const BBox& gt, const BBox& pred, const MatchCostWeights& w) {
  const double l1 = std::abs(gt.cx - pred.cx) + std::abs(gt.cy - pred.cy) +
                    std::abs(gt.w - pred.w) + std::abs(gt.h - pred.h);
  return w.l1 * l1 + w.giou * (1.0 - giou(gt, pred));
}

// Matching cost between a ground-truth slot (class or no-object) and one
// prediction: -p(class) + box_loss, or 0 for a no-object slot.
inline double match_cost(std::optional<int> gt_class, const BBox& gt_box,
                         std::span<const double> pred_probs, const BBox& pred_box,
                         const MatchCostWeights& w) {
  if (!gt_class) return 0.0;
  if (*gt_class < 0 || static_cast<std::size_t>(*gt_class) >= pred_probs.size()) {
    throw ValidationError("class index " + std::to_string(*gt_class) + " out of range");
  }
  return -pred_probs[static_cast<std::size_t>(*gt_class)] + box_loss(gt_box, pred_box, w);
}

// sigma[j] is the (0-based) prediction matched to ground-truth slot j.
struct Assignment {
  std::vector<int> sigma;
  double total_cost = 0.0;
};

namespace detail {

// Minimum-cost perfect matching of rows to columns of a square matrix
// (shortest augmenting paths with potentials). Returns column per row.
inline std::vector<int> solve_assignment(const Matrix& a) {
  const auto n = static_cast<int>(a.rows());
  constexpr double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1);
  std::vector<int> p(n + 1, 0), way(n + 1, 0);
  std::vector<char> used(n + 1);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::fill(minv.begin(), minv.end(), inf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[j0] = 1;
      const int i0 = p[j0];
      double delta = inf;
      int j1 = 0;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = a(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<int> col_of_row(n, 0);
  for (int j = 1; j <= n; ++j) col_of_row[p[j] - 1] = j - 1;
  return col_of_row;
}

inline double optimal_cost(const Matrix& a) {
  if (a.rows() == 0) return 0.0;
  const auto cols = solve_assignment(a);
  double total = 0.0;
  for (int r = 0; r < a.rows(); ++r) total += a(r, cols[r]);
  return total;
}

}  // namespace detail

// Optimal bipartite assignment over cost[prediction][gt slot]. Among optimal
// assignments the lexicographically smallest sigma is returned.
inline Assignment hungarian_match(const Matrix& cost) {
  if (cost.rows() != cost.cols()) throw ValidationError("cost matrix must be square");
  if (!cost.allFinite()) throw ValidationError("cost matrix has non-finite entries");
  const auto n = static_cast<int>(cost.rows());
  Assignment out;
  if (n == 0) return out;

  // Rows = gt slots, columns = predictions.
  const Matrix by_slot = cost.transpose();
  const double best = detail::optimal_cost(by_slot);
  const double tol = 1e-12 * n * (1.0 + by_slot.cwiseAbs().maxCoeff());

  std::vector<bool> taken(n, false);
  double fixed = 0.0;
  out.sigma.assign(n, -1);
  for (int slot = 0; slot < n; ++slot) {
    const int rest = n - slot - 1;
    for (int pred = 0; pred < n; ++pred) {
      if (taken[pred]) continue;
      double total = fixed + by_slot(slot, pred);
      if (rest > 0) {
        Matrix sub(rest, rest);
        for (int r = 0; r < rest; ++r) {
          int c = 0;
          for (int q = 0; q < n; ++q) {
            if (taken[q] || q == pred) continue;
            sub(r, c++) = by_slot(slot + 1 + r, q);
          }
        }
        total += detail::optimal_cost(sub);
      }
      if (total <= best + tol) {
        out.sigma[slot] = pred;
        taken[pred] = true;
        fixed += by_slot(slot, pred);
        break;
      }
    }
    if (out.sigma[slot] < 0) {
      // Rounding pushed every candidate past the tolerance; keep the plain optimum.
      const auto cols = detail::solve_assignment(by_slot);
      out.sigma.assign(cols.begin(), cols.end());
      break;
    }
  }
  out.total_cost = 0.0;
  for (int j = 0; j < n; ++j) out.total_cost += cost(out.sigma[j], j);
  return out;
}

}  // namespace relgraph

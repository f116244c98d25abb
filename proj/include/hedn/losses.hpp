#ifndef HEDN_LOSSES_HPP
#define HEDN_LOSSES_HPP

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <vector>

#include "hedn/matrix.hpp"

namespace hedn {

struct LossResult {
  double loss = 0.0;
  Matrix grad;
};

/// Mean softmax cross-entropy over the rows of `logits` against one-hot targets.
inline LossResult softmax_cross_entropy(const Matrix& logits, const Matrix& onehot) {
  require_same_shape(logits, onehot, "softmax_cross_entropy");
  const std::size_t b = logits.rows();
  const std::size_t c = logits.cols();
  LossResult res{0.0, Matrix(b, c)};
  if (b == 0) return res;
  const double inv_b = 1.0 / static_cast<double>(b);
  for (std::size_t i = 0; i < b; ++i) {
    const auto y = onehot.row(i);
    int ones = 0;
    for (double v : y) {
      if (v == 1.0) {
        ++ones;
      } else if (v != 0.0) {
        ones = -1;
        break;
      }
    }
    if (ones != 1) {
      throw DataError("softmax_cross_entropy: row " + std::to_string(i) + " is not one-hot");
    }
    const auto z = logits.row(i);
    const double zmax = *std::max_element(z.begin(), z.end());
    double sum = 0.0;
    for (double v : z) sum += std::exp(v - zmax);
    const double log_sum = std::log(sum);
    auto g = res.grad.row(i);
    for (std::size_t j = 0; j < c; ++j) {
      const double log_p = z[j] - zmax - log_sum;
      if (y[j] == 1.0) res.loss -= log_p;
      g[j] = (std::exp(log_p) - y[j]) * inv_b;
    }
  }
  res.loss *= inv_b;
  return res;
}

/// One-hot encoding of class ids into a labels.size() x classes matrix.
inline Matrix one_hot(std::span<const int> labels, std::size_t classes) {
  Matrix m(labels.size(), classes);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= classes) {
      throw DataError("one_hot: label " + std::to_string(labels[i]) + " outside 0.." +
                      std::to_string(classes - 1));
    }
    m(i, static_cast<std::size_t>(labels[i])) = 1.0;
  }
  return m;
}

inline constexpr double kBceClamp = 1e-7;

/// Mean binary cross-entropy. `pred` is an n x 1 column (or any shape with
/// n entries); predictions are clamped to [1e-7, 1 - 1e-7].
inline LossResult binary_cross_entropy(const Matrix& pred, std::span<const double> target) {
  if (pred.size() != target.size()) {
    throw ShapeError("binary_cross_entropy: " + std::to_string(pred.size()) + " predictions vs " +
                     std::to_string(target.size()) + " targets");
  }
  LossResult res{0.0, Matrix(pred.rows(), pred.cols())};
  const std::size_t n = pred.size();
  if (n == 0) return res;
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double p = std::clamp(pred.data()[i], kBceClamp, 1.0 - kBceClamp);
    const double t = target[i];
    res.loss -= t * std::log(p) + (1.0 - t) * std::log(1.0 - p);
    res.grad.data()[i] = -(t / p - (1.0 - t) / (1.0 - p)) * inv_n;
  }
  res.loss *= inv_n;
  return res;
}

inline constexpr double kNormFloor = 1e-12;

/// Cosine similarity with norms floored at 1e-12 (a zero vector scores 0).
inline double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ShapeError("cosine_similarity: length mismatch");
  const double na = std::max(norm2(a), kNormFloor);
  const double nb = std::max(norm2(b), kNormFloor);
  return dot(a, b) / (na * nb);
}

struct SupConResult {
  double loss = 0.0;
  Matrix grad;
  std::size_t anchors = 0;  // rows that had at least one positive
};

/**
 * Supervised contrastive loss over cosine similarities.
 *
 * For every anchor i with a non-empty positive set P(i) (other rows sharing
 * its group id):
 *   l_i = -1/|P(i)| * sum_{p in P(i)} log( exp(s_ip/tau) / sum_{j != i} exp(s_ij/tau) )
 * and the loss is the mean of l_i over those anchors. Anchors without
 * positives still act as negatives for the others. When no anchor has a
 * positive the loss is 0 with a zero gradient and `anchors == 0`.
 */
inline SupConResult supcon_loss(const Matrix& embeddings, std::span<const int> group_ids,
                                double tau) {
  if (!(tau > 0.0)) throw ConfigError("supcon_loss: temperature must be positive");
  const std::size_t b = embeddings.rows();
  const std::size_t e = embeddings.cols();
  if (group_ids.size() != b) throw ShapeError("supcon_loss: group id count != batch rows");
  SupConResult res{0.0, Matrix(b, e), 0};
  if (b < 2) return res;

  std::vector<double> norms(b);
  Matrix unit(b, e);
  for (std::size_t i = 0; i < b; ++i) {
    norms[i] = std::max(norm2(embeddings.row(i)), kNormFloor);
    for (std::size_t k = 0; k < e; ++k) unit(i, k) = embeddings(i, k) / norms[i];
  }
  const Matrix sim = matmul_nt(unit, unit);

  std::vector<std::size_t> positives(b, 0);
  for (std::size_t i = 0; i < b; ++i)
    for (std::size_t j = 0; j < b; ++j)
      if (j != i && group_ids[i] == group_ids[j]) ++positives[i];
  for (std::size_t p : positives)
    if (p > 0) ++res.anchors;
  if (res.anchors == 0) return res;
  const double inv_a = 1.0 / static_cast<double>(res.anchors);

  // dL/ds_ij accumulated as a full matrix, then pushed through s = U U^T.
  Matrix grad_sim(b, b);
  std::vector<double> weights(b);
  for (std::size_t i = 0; i < b; ++i) {
    if (positives[i] == 0) continue;
    double smax = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < b; ++j)
      if (j != i) smax = std::max(smax, sim(i, j) / tau);
    double denom = 0.0;
    for (std::size_t j = 0; j < b; ++j) {
      weights[j] = j == i ? 0.0 : std::exp(sim(i, j) / tau - smax);
      denom += weights[j];
    }
    const double lse = smax + std::log(denom);
    const double inv_p = 1.0 / static_cast<double>(positives[i]);
    double li = 0.0;
    for (std::size_t j = 0; j < b; ++j) {
      if (j == i) continue;
      const bool pos = group_ids[j] == group_ids[i];
      if (pos) li -= (sim(i, j) / tau - lse) * inv_p;
      grad_sim(i, j) = inv_a * (weights[j] / denom - (pos ? inv_p : 0.0)) / tau;
    }
    res.loss += li;
  }
  res.loss *= inv_a;

  // s_ij = u_i . u_j  =>  dU = (G + G^T) U
  Matrix sym = grad_sim;
  for (std::size_t i = 0; i < b; ++i)
    for (std::size_t j = 0; j < b; ++j) sym(i, j) += grad_sim(j, i);
  const Matrix grad_unit = matmul(sym, unit);

  // u = x / |x|  =>  dx = (du - u (u . du)) / |x|
  for (std::size_t i = 0; i < b; ++i) {
    const double proj = dot(unit.row(i), grad_unit.row(i));
    for (std::size_t k = 0; k < e; ++k) {
      res.grad(i, k) = (grad_unit(i, k) - unit(i, k) * proj) / norms[i];
    }
  }
  return res;
}

}  // namespace hedn

#endif  // HEDN_LOSSES_HPP

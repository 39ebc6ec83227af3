#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "lsa/alignment.hpp"
#include "lsa/core.hpp"

namespace lsa {

struct LossConfig {
  double margin = 0.3;
  double center_weight = 0.05;  // lambda
  double triplet_weight = 0.3;  // per-branch scale on the triplet terms
  double smoothing = 0.1;       // label smoothing epsilon
  std::size_t num_classes = 0;

  void validate() const {
    if (!(margin >= 0.0)) throw validation_error("loss config: margin must be >= 0");
    if (!(center_weight >= 0.0)) throw validation_error("loss config: center weight must be >= 0");
    if (!(triplet_weight >= 0.0)) throw validation_error("loss config: triplet weight must be >= 0");
    if (!(smoothing >= 0.0 && smoothing < 1.0)) {
      throw validation_error("loss config: smoothing must be in [0, 1)");
    }
  }
};

// Scalar loss and its gradient with respect to the differentiated input.
struct LossResult {
  double value = 0.0;
  Matrix grad;
};

// ---------------------------------------------------------------------------
// ID loss: mean label-smoothed cross-entropy over rows of `logits`.
// Target q puts 1 - eps + eps/C on the true class and eps/C elsewhere.
// Gradient w.r.t. logits is (softmax - q) / n.

inline LossResult id_loss(const Matrix& logits, std::span<const std::int64_t> labels,
                          double smoothing) {
  const std::size_t n = logits.rows();
  const std::size_t classes = logits.cols();
  if (classes < 2) throw validation_error("id_loss: need at least 2 classes");
  if (labels.size() != n) throw validation_error("id_loss: labels length does not match logits rows");
  if (!(smoothing >= 0.0 && smoothing < 1.0)) throw validation_error("id_loss: smoothing must be in [0, 1)");
  if (n == 0) return {0.0, Matrix(0, classes)};

  const double off = smoothing / static_cast<double>(classes);
  const double on = 1.0 - smoothing + off;
  LossResult out{0.0, Matrix(n, classes)};
  for (std::size_t i = 0; i < n; ++i) {
    const auto y = labels[i];
    if (y < 0 || static_cast<std::size_t>(y) >= classes) {
      throw validation_error("id_loss: label " + std::to_string(y) + " out of range [0, " +
                             std::to_string(classes) + ")");
    }
    const auto z = logits.row(i);
    const double zmax = *std::max_element(z.begin(), z.end());
    double denom = 0.0;
    for (double v : z) denom += std::exp(v - zmax);
    const double lse = zmax + std::log(denom);

    double row_loss = 0.0;
    for (std::size_t c = 0; c < classes; ++c) {
      const double q = c == static_cast<std::size_t>(y) ? on : off;
      const double log_p = z[c] - lse;
      if (q != 0.0) row_loss -= q * log_p;
      out.grad(i, c) = (std::exp(log_p) - q) / static_cast<double>(n);
    }
    out.value += row_loss;
  }
  out.value /= static_cast<double>(n);
  return out;
}

// ---------------------------------------------------------------------------
// Batch view for the metric-learning terms.

class LossBatchView {
 public:
  LossBatchView(Matrix features, std::vector<std::int64_t> labels, Matrix distance)
      : features_(std::move(features)), labels_(std::move(labels)), distance_(std::move(distance)) {
    const std::size_t n = labels_.size();
    if (features_.rows() != n) throw validation_error("loss batch: features rows != labels");
    if (distance_.rows() != n || distance_.cols() != n) {
      throw validation_error("loss batch: distance must be n x n");
    }
    for (std::size_t a = 0; a < n; ++a) {
      if (distance_(a, a) != 0.0) throw validation_error("loss batch: distance diagonal must be zero");
      for (std::size_t b = a + 1; b < n; ++b) {
        if (distance_(a, b) != distance_(b, a)) {
          throw validation_error("loss batch: distance must be symmetric");
        }
      }
    }
  }

  std::size_t size() const noexcept { return labels_.size(); }
  const Matrix& features() const noexcept { return features_; }
  const std::vector<std::int64_t>& labels() const noexcept { return labels_; }
  const Matrix& distance() const noexcept { return distance_; }

  // P(a): same label, anchor excluded.
  std::vector<std::size_t> positives(std::size_t a) const {
    std::vector<std::size_t> out;
    for (std::size_t x = 0; x < size(); ++x) {
      if (x != a && labels_[x] == labels_[a]) out.push_back(x);
    }
    return out;
  }
  // N(a): different label.
  std::vector<std::size_t> negatives(std::size_t a) const {
    std::vector<std::size_t> out;
    for (std::size_t x = 0; x < size(); ++x) {
      if (labels_[x] != labels_[a]) out.push_back(x);
    }
    return out;
  }

 private:
  Matrix features_;
  std::vector<std::int64_t> labels_;
  Matrix distance_;
};

// Euclidean distances between rows, symmetric with an exact zero diagonal.
inline Matrix row_distances(const Matrix& features) {
  const std::size_t n = features.rows();
  Matrix d(n, n);
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t b = a + 1; b < n; ++b) {
      d(a, b) = d(b, a) = stripe_distance(features.row(a), features.row(b));
    }
  }
  return d;
}

// Global-branch batch: global features and their Euclidean distances.
inline LossBatchView global_loss_batch(const EmbeddingSet& set, std::span<const std::size_t> indices) {
  Matrix features(indices.size(), set.d_global());
  std::vector<std::int64_t> labels;
  for (std::size_t r = 0; r < indices.size(); ++r) {
    const auto& rec = set.at(indices[r]);
    std::copy(rec.global_feat.begin(), rec.global_feat.end(), features.row(r).begin());
    labels.push_back(rec.id);
  }
  Matrix dist = row_distances(features);
  return {std::move(features), std::move(labels), std::move(dist)};
}

// Local-branch batch: flattened stripe features with sliding-alignment distances.
inline LossBatchView local_loss_batch(const EmbeddingSet& set, std::span<const std::size_t> indices,
                                      const AlignmentConfig& cfg) {
  const std::size_t n = indices.size();
  Matrix features(n, set.k() * set.d_local());
  std::vector<std::int64_t> labels;
  for (std::size_t r = 0; r < n; ++r) {
    const auto& rec = set.at(indices[r]);
    std::copy(rec.stripe_feats.data().begin(), rec.stripe_feats.data().end(), features.row(r).begin());
    labels.push_back(rec.id);
  }
  Matrix dist(n, n);
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t b = a + 1; b < n; ++b) {
      dist(a, b) = dist(b, a) = lsa_distance(set.at(indices[a]), set.at(indices[b]), cfg).lsa;
    }
  }
  return {std::move(features), std::move(labels), std::move(dist)};
}

// ---------------------------------------------------------------------------
// Adaptive-weight triplet loss. For anchor a:
//   w_p = softmax_{P(a)}(d(a,p)),  w_n = softmax_{N(a)}(-d(a,n))
//   L_a = [m + sum w_p d(a,p) - sum w_n d(a,n)]_+
// and the loss is the mean of L_a over anchors.

struct AnchorTerms {
  std::vector<std::size_t> positives;
  std::vector<std::size_t> negatives;
  std::vector<double> w_pos;
  std::vector<double> w_neg;
  double pos_term = 0.0;
  double neg_term = 0.0;
  double pre_hinge = 0.0;
};

namespace detail {

// softmax(sign * values), shifted by the max for stability.
inline std::vector<double> signed_softmax(const std::vector<double>& values, double sign) {
  double top = -std::numeric_limits<double>::infinity();
  for (double v : values) top = std::max(top, sign * v);
  std::vector<double> w(values.size());
  double total = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    w[i] = std::exp(sign * values[i] - top);
    total += w[i];
  }
  for (double& x : w) x /= total;
  return w;
}

}  // namespace detail

inline AnchorTerms anchor_terms(const Matrix& distance, std::span<const std::int64_t> labels,
                                std::size_t a, double margin) {
  AnchorTerms t;
  for (std::size_t x = 0; x < labels.size(); ++x) {
    if (x == a) continue;
    (labels[x] == labels[a] ? t.positives : t.negatives).push_back(x);
  }
  if (t.positives.empty() || t.negatives.empty()) {
    throw validation_error("triplethard_loss: anchor " + std::to_string(a) +
                           (t.positives.empty() ? " has no positive" : " has no negative"));
  }
  std::vector<double> dp, dn;
  for (auto p : t.positives) dp.push_back(distance(a, p));
  for (auto n : t.negatives) dn.push_back(distance(a, n));
  t.w_pos = detail::signed_softmax(dp, +1.0);
  t.w_neg = detail::signed_softmax(dn, -1.0);
  for (std::size_t i = 0; i < dp.size(); ++i) t.pos_term += t.w_pos[i] * dp[i];
  for (std::size_t i = 0; i < dn.size(); ++i) t.neg_term += t.w_neg[i] * dn[i];
  t.pre_hinge = margin + t.pos_term - t.neg_term;
  return t;
}

// Works on any n x n distance table (rows are read per anchor); the gradient
// is with respect to each entry independently.
inline LossResult triplethard_from_distances(const Matrix& distance,
                                             std::span<const std::int64_t> labels, double margin) {
  const std::size_t n = labels.size();
  if (distance.rows() != n || distance.cols() != n) {
    throw validation_error("triplethard_loss: distance must be n x n");
  }
  if (!(margin >= 0.0)) throw validation_error("triplethard_loss: margin must be >= 0");
  LossResult out{0.0, Matrix(n, n)};
  if (n == 0) return out;
  const double scale = 1.0 / static_cast<double>(n);
  for (std::size_t a = 0; a < n; ++a) {
    const auto t = anchor_terms(distance, labels, a, margin);
    if (t.pre_hinge <= 0.0) continue;
    out.value += t.pre_hinge;
    // d/dd_k of sum_j w_j d_j with w = softmax(s * d) is w_k (1 + s (d_k - weighted mean)).
    for (std::size_t i = 0; i < t.positives.size(); ++i) {
      const double d = distance(a, t.positives[i]);
      out.grad(a, t.positives[i]) = scale * t.w_pos[i] * (1.0 + d - t.pos_term);
    }
    for (std::size_t i = 0; i < t.negatives.size(); ++i) {
      const double d = distance(a, t.negatives[i]);
      out.grad(a, t.negatives[i]) = -scale * t.w_neg[i] * (1.0 - d + t.neg_term);
    }
  }
  out.value *= scale;
  return out;
}

inline LossResult triplethard_loss(const LossBatchView& batch, double margin) {
  return triplethard_from_distances(batch.distance(), batch.labels(), margin);
}

// ---------------------------------------------------------------------------
// Center loss: 0.5 * sum_i ||f_i - c_{y_i}||^2, gradient (f_i - c_{y_i}).

struct CenterTable {
  Matrix centers;  // row y = center of class y
  std::vector<std::size_t> counts;

  CenterTable() = default;
  explicit CenterTable(Matrix c) : centers(std::move(c)), counts(centers.rows(), 0) {}
  CenterTable(std::size_t classes, std::size_t dim) : CenterTable(Matrix(classes, dim)) {}

  std::size_t classes() const noexcept { return centers.rows(); }
  std::size_t dim() const noexcept { return centers.cols(); }
};

namespace detail {

inline void require_centers(const Matrix& features, std::span<const std::int64_t> labels,
                            const CenterTable& table, const char* who) {
  if (labels.size() != features.rows()) {
    throw validation_error(std::string(who) + ": labels length does not match features rows");
  }
  if (features.rows() > 0 && features.cols() != table.dim()) {
    throw validation_error(std::string(who) + ": feature dimension does not match centers");
  }
  for (auto y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= table.classes()) {
      throw validation_error(std::string(who) + ": unknown label " + std::to_string(y));
    }
  }
}

}  // namespace detail

inline LossResult center_loss(const Matrix& features, std::span<const std::int64_t> labels,
                              const CenterTable& table) {
  detail::require_centers(features, labels, table, "center_loss");
  LossResult out{0.0, Matrix(features.rows(), features.cols())};
  for (std::size_t i = 0; i < features.rows(); ++i) {
    const auto c = table.centers.row(static_cast<std::size_t>(labels[i]));
    const auto f = features.row(i);
    for (std::size_t j = 0; j < f.size(); ++j) {
      const double diff = f[j] - c[j];
      out.value += diff * diff;
      out.grad(i, j) = diff;
    }
  }
  out.value *= 0.5;
  return out;
}

// c_j += alpha * sum_{y_i = j}(f_i - c_j) / (1 + n_j); classes absent from the batch are untouched.
inline CenterTable center_update(const CenterTable& table, const Matrix& features,
                                 std::span<const std::int64_t> labels, double alpha) {
  if (!(alpha > 0.0 && alpha <= 1.0)) throw validation_error("center_update: alpha must be in (0, 1]");
  detail::require_centers(features, labels, table, "center_update");
  CenterTable next = table;
  Matrix delta(table.classes(), table.dim());
  std::vector<std::size_t> batch_counts(table.classes(), 0);
  for (std::size_t i = 0; i < features.rows(); ++i) {
    const auto y = static_cast<std::size_t>(labels[i]);
    ++batch_counts[y];
    const auto f = features.row(i);
    const auto c = table.centers.row(y);
    for (std::size_t j = 0; j < f.size(); ++j) delta(y, j) += f[j] - c[j];
  }
  for (std::size_t y = 0; y < table.classes(); ++y) {
    if (batch_counts[y] == 0) continue;
    const double scale = alpha / (1.0 + static_cast<double>(batch_counts[y]));
    for (std::size_t j = 0; j < table.dim(); ++j) next.centers(y, j) += scale * delta(y, j);
    next.counts[y] += batch_counts[y];
  }
  return next;
}

// ---------------------------------------------------------------------------
// Total: id + beta * (tri_g + tri_l) + lambda * (cen_g + cen_l).

struct TotalLoss {
  double total = 0.0;
  double id = 0.0;
  double tri_g = 0.0;
  double tri_l = 0.0;
  double cen_g = 0.0;
  double cen_l = 0.0;

  double recombine(const LossConfig& cfg) const {
    return id + cfg.triplet_weight * tri_g + cfg.triplet_weight * tri_l +
           cfg.center_weight * cen_g + cfg.center_weight * cen_l;
  }
};

inline TotalLoss total_loss(const LossBatchView& global_batch, const LossBatchView& local_batch,
                            const Matrix& logits, std::span<const std::int64_t> labels,
                            const CenterTable& centers_g, const CenterTable& centers_l,
                            const LossConfig& cfg) {
  cfg.validate();
  const std::size_t n = labels.size();
  if (global_batch.size() != n || local_batch.size() != n || logits.rows() != n) {
    throw validation_error("total_loss: inconsistent batch sizes");
  }
  if (cfg.num_classes != 0 && logits.cols() != cfg.num_classes) {
    throw validation_error("total_loss: logits have " + std::to_string(logits.cols()) +
                           " classes, config expects " + std::to_string(cfg.num_classes));
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (global_batch.labels()[i] != labels[i] || local_batch.labels()[i] != labels[i]) {
      throw validation_error("total_loss: branch labels disagree with id labels");
    }
  }
  TotalLoss out;
  out.id = id_loss(logits, labels, cfg.smoothing).value;
  out.tri_g = triplethard_loss(global_batch, cfg.margin).value;
  out.tri_l = triplethard_loss(local_batch, cfg.margin).value;
  out.cen_g = center_loss(global_batch.features(), labels, centers_g).value;
  out.cen_l = center_loss(local_batch.features(), labels, centers_l).value;
  out.total = out.recombine(cfg);
  return out;
}

}  // namespace lsa

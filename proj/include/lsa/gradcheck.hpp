#pragma once

// Central finite-difference checks of the analytic loss gradients on seeded
// random batches. Backs the `loss-check` command.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "lsa/losses.hpp"
#include "lsa/random.hpp"

namespace lsa {

// Central differences of f at x, one coordinate at a time.
inline Matrix finite_difference(const std::function<double(const Matrix&)>& f, Matrix x,
                                double step = 1e-5) {
  Matrix grad(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = x.data()[i];
    x.data()[i] = orig + step;
    const double up = f(x);
    x.data()[i] = orig - step;
    const double down = f(x);
    x.data()[i] = orig;
    grad.data()[i] = (up - down) / (2.0 * step);
  }
  return grad;
}

// ||a - b|| / max(||a||, ||b||), or the absolute difference norm when both are ~0.
inline double relative_error(const Matrix& a, const Matrix& b) {
  double diff = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a.data()[i] - b.data()[i]) * (a.data()[i] - b.data()[i]);
    na += a.data()[i] * a.data()[i];
    nb += b.data()[i] * b.data()[i];
  }
  const double denom = std::max(std::sqrt(na), std::sqrt(nb));
  return denom < 1e-12 ? std::sqrt(diff) : std::sqrt(diff) / denom;
}

struct GradCheckRow {
  std::string loss;
  std::uint64_t seed = 0;
  double value = 0.0;
  double rel_error = 0.0;
  double tolerance = 0.0;
  bool pass() const { return rel_error < tolerance; }
};

inline Matrix random_matrix(Rng& rng, std::size_t rows, std::size_t cols, double sigma = 1.0) {
  Matrix m(rows, cols);
  for (double& v : m.data()) v = rng.normal(0.0, sigma);
  return m;
}

inline GradCheckRow check_id_loss(std::uint64_t seed, double tolerance = 1e-5) {
  Rng rng(seed);
  const std::size_t n = 6, classes = 5;
  const double eps = 0.1;
  Matrix logits = random_matrix(rng, n, classes, 2.0);
  std::vector<std::int64_t> labels(n);
  for (auto& y : labels) y = static_cast<std::int64_t>(rng.below(classes));
  const auto analytic = id_loss(logits, labels, eps);
  const auto numeric = finite_difference(
      [&](const Matrix& z) { return id_loss(z, labels, eps).value; }, logits);
  return {"id_loss", seed, analytic.value, relative_error(analytic.grad, numeric), tolerance};
}

inline GradCheckRow check_triplethard_loss(std::uint64_t seed, double tolerance = 1e-5) {
  Rng rng(seed);
  const std::size_t ids = 2, per_id = 4, dim = 4;
  Matrix features = random_matrix(rng, ids * per_id, dim);
  std::vector<std::int64_t> labels;
  for (std::size_t i = 0; i < ids; ++i) {
    for (std::size_t j = 0; j < per_id; ++j) labels.push_back(static_cast<std::int64_t>(i));
  }
  const Matrix dist = row_distances(features);
  // Large margin keeps every anchor active so the check exercises the full gradient.
  const double margin = 2.0;
  const auto analytic = triplethard_from_distances(dist, labels, margin);
  const auto numeric = finite_difference(
      [&](const Matrix& d) { return triplethard_from_distances(d, labels, margin).value; }, dist);
  return {"triplethard_loss", seed, analytic.value, relative_error(analytic.grad, numeric), tolerance};
}

inline GradCheckRow check_center_loss(std::uint64_t seed, double tolerance = 1e-5) {
  Rng rng(seed);
  const std::size_t n = 6, dim = 4, classes = 3;
  CenterTable table(random_matrix(rng, classes, dim));
  Matrix features = random_matrix(rng, n, dim);
  std::vector<std::int64_t> labels(n);
  for (auto& y : labels) y = static_cast<std::int64_t>(rng.below(classes));
  const auto analytic = center_loss(features, labels, table);
  const auto numeric = finite_difference(
      [&](const Matrix& f) { return center_loss(f, labels, table).value; }, features);
  return {"center_loss", seed, analytic.value, relative_error(analytic.grad, numeric), tolerance};
}

inline std::vector<GradCheckRow> run_loss_check(std::uint64_t base_seed, std::size_t seeds = 10,
                                                double tolerance = 1e-5) {
  std::vector<GradCheckRow> rows;
  for (std::size_t s = 0; s < seeds; ++s) rows.push_back(check_id_loss(base_seed + s, tolerance));
  for (std::size_t s = 0; s < seeds; ++s) rows.push_back(check_triplethard_loss(base_seed + s, tolerance));
  for (std::size_t s = 0; s < seeds; ++s) rows.push_back(check_center_loss(base_seed + s, tolerance));
  return rows;
}

}  // namespace lsa

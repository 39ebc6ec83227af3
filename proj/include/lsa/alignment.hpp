#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "lsa/core.hpp"

namespace lsa {

// Inclusive, 1-based stripe range searched for stripe i.
struct WindowBounds {
  std::size_t lo = 1;
  std::size_t hi = 1;

  bool contains(std::size_t j) const noexcept { return lo <= j && j <= hi; }
  friend bool operator==(const WindowBounds&, const WindowBounds&) = default;
};

enum class Direction { a_to_b, b_to_a };

struct AlignmentBreakdown {
  std::vector<double> per_stripe_ab;  // D_A: stripe i of A against B's window
  std::vector<double> per_stripe_ba;  // D_B: stripe i of B against A's window
  Direction chosen_direction = Direction::a_to_b;
  double lsa = 0.0;
};

// w_i = [max(1, i - W/2), min(k, i + W/2)] with integer division.
inline WindowBounds window_bounds(std::size_t i, std::size_t k, std::size_t window) {
  if (k < 1) throw validation_error("window_bounds: k must be >= 1");
  if (window < 1) throw validation_error("window_bounds: window must be >= 1");
  if (i < 1 || i > k) {
    throw validation_error("window_bounds: stripe index " + std::to_string(i) +
                           " out of range [1, " + std::to_string(k) + "]");
  }
  const std::size_t half = window / 2;
  return {i > half ? std::max<std::size_t>(1, i - half) : 1, std::min(k, i + half)};
}

inline double stripe_distance(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw validation_error("stripe_distance: length mismatch (" + std::to_string(a.size()) +
                           " vs " + std::to_string(b.size()) + ")");
  }
  double sum = 0.0;
  for (std::size_t c = 0; c < a.size(); ++c) {
    const double diff = a[c] - b[c];
    sum += diff * diff;
  }
  return std::sqrt(sum);
}

inline double stripe_distance(const std::vector<double>& a, const std::vector<double>& b) {
  return stripe_distance(std::span<const double>(a), std::span<const double>(b));
}

namespace detail {

inline void require_stripes(const Matrix& m, const AlignmentConfig& cfg, const char* who) {
  if (m.rows() != cfg.k) {
    throw validation_error(std::string(who) + ": expected " + std::to_string(cfg.k) +
                           " stripes, got " + std::to_string(m.rows()));
  }
}

}  // namespace detail

// For each stripe i of `a`, the smallest distance to any stripe of `b` inside
// window_bounds(i). Starts from the diagonal pair; ties keep the lower index.
inline std::vector<double> directed_align(const Matrix& a, const Matrix& b,
                                          const AlignmentConfig& cfg) {
  cfg.validate();
  detail::require_stripes(a, cfg, "directed_align");
  detail::require_stripes(b, cfg, "directed_align");
  if (a.cols() != b.cols()) throw validation_error("directed_align: stripe dimension mismatch");

  std::vector<double> out(cfg.k);
  for (std::size_t i = 1; i <= cfg.k; ++i) {
    const auto ai = a.row(i - 1);
    double best = stripe_distance(ai, b.row(i - 1));
    const auto w = window_bounds(i, cfg.k, cfg.window);
    for (std::size_t j = w.lo; j <= w.hi; ++j) {
      if (j == i) continue;
      const double d = stripe_distance(ai, b.row(j - 1));
      if (d < best) best = d;
    }
    out[i - 1] = best;
  }
  return out;
}

inline double sequential_sum(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s;
}

// Local sliding alignment distance: min of the two directed per-stripe sums.
inline AlignmentBreakdown lsa_distance(const EmbeddingRecord& a, const EmbeddingRecord& b,
                                       const AlignmentConfig& cfg) {
  AlignmentBreakdown out;
  out.per_stripe_ab = directed_align(a.stripe_feats, b.stripe_feats, cfg);
  out.per_stripe_ba = directed_align(b.stripe_feats, a.stripe_feats, cfg);
  const double ab = sequential_sum(out.per_stripe_ab);
  const double ba = sequential_sum(out.per_stripe_ba);
  if (ba < ab) {
    out.chosen_direction = Direction::b_to_a;
    out.lsa = ba;
  } else {
    out.chosen_direction = Direction::a_to_b;
    out.lsa = ab;
  }
  return out;
}

// Stripe i matched only to stripe i.
inline double hard_align_distance(const EmbeddingRecord& a, const EmbeddingRecord& b) {
  if (a.stripes() != b.stripes()) throw validation_error("hard_align_distance: stripe count mismatch");
  if (a.stripe_feats.cols() != b.stripe_feats.cols()) {
    throw validation_error("hard_align_distance: stripe dimension mismatch");
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < a.stripes(); ++i) sum += stripe_distance(a.stripe(i), b.stripe(i));
  return sum;
}

inline double global_distance(const EmbeddingRecord& a, const EmbeddingRecord& b) {
  if (a.global_feat.size() != b.global_feat.size()) {
    throw validation_error("global_distance: length mismatch");
  }
  return stripe_distance(a.global_feat, b.global_feat);
}

inline double combined_distance(const EmbeddingRecord& a, const EmbeddingRecord& b,
                                 const AlignmentConfig& cfg) {
  return cfg.global_weight * global_distance(a, b) + cfg.local_weight * lsa_distance(a, b, cfg).lsa;
}

inline double pair_distance(const EmbeddingRecord& a, const EmbeddingRecord& b,
                            const AlignmentConfig& cfg, Metric metric) {
  switch (metric) {
    case Metric::global: return global_distance(a, b);
    case Metric::lsa: return lsa_distance(a, b, cfg).lsa;
    case Metric::hard: return hard_align_distance(a, b);
    case Metric::combined: return combined_distance(a, b, cfg);
    case Metric::reranked: break;
  }
  throw validation_error("pair_distance: metric '" + to_string(metric) +
                         "' is not a pairwise metric");
}

// Query x gallery distances. Rows are split into contiguous blocks across
// `threads` workers; each entry depends only on its pair, so the result does
// not depend on the thread count. threads == 0 uses hardware concurrency.
inline DistanceMatrix pairwise_matrix(const EmbeddingSet& queries, const EmbeddingSet& gallery,
                                      const AlignmentConfig& cfg, Metric metric,
                                      std::size_t threads = 1) {
  require_conformant(queries, gallery);
  if (queries.k() != cfg.k) {
    throw validation_error("pairwise_matrix: sets have k=" + std::to_string(queries.k()) +
                           " but config has k=" + std::to_string(cfg.k));
  }
  cfg.validate();
  if (metric == Metric::reranked) {
    throw validation_error("pairwise_matrix: 'reranked' is produced by rerank, not computed pairwise");
  }

  DistanceMatrix out{Matrix(queries.size(), gallery.size()), metric};
  const std::size_t nq = queries.size();
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = std::max<std::size_t>(1, std::min(threads, nq));

  auto fill_rows = [&](std::size_t begin, std::size_t end) {
    for (std::size_t q = begin; q < end; ++q) {
      for (std::size_t g = 0; g < gallery.size(); ++g) {
        out.values(q, g) = pair_distance(queries[q], gallery[g], cfg, metric);
      }
    }
  };

  if (threads == 1) {
    fill_rows(0, nq);
    return out;
  }
  std::vector<std::exception_ptr> errors(threads);
  {
    std::vector<std::jthread> workers;
    const std::size_t block = (nq + threads - 1) / threads;
    for (std::size_t t = 0; t < threads; ++t) {
      const std::size_t begin = t * block;
      const std::size_t end = std::min(nq, begin + block);
      if (begin >= end) break;
      workers.emplace_back([&, t, begin, end] {
        try {
          fill_rows(begin, end);
        } catch (...) {
          errors[t] = std::current_exception();
        }
      });
    }
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

}  // namespace lsa

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "lsa/alignment.hpp"
#include "lsa/core.hpp"

namespace lsa {

struct LabelView {
  std::span<const std::int64_t> ids;
  std::span<const std::int64_t> cams;
};

// Gallery indices sorted by ascending distance, ties by index.
inline std::vector<std::size_t> argsort_row(std::span<const double> row) {
  std::vector<std::size_t> order(row.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return row[a] < row[b]; });
  return order;
}

// Single-query cross-camera protocol. Gallery entries sharing both id and
// camera with the query are junk and removed before scoring. Queries without
// any valid correct match are left out of the cmc and map denominators.
inline RankingResult rank_queries(const DistanceMatrix& dist, LabelView query, LabelView gallery) {
  const std::size_t nq = dist.n_query();
  const std::size_t ng = dist.n_gallery();
  if (query.ids.size() != nq || query.cams.size() != nq) {
    throw validation_error("rank_queries: query labels do not match matrix rows");
  }
  if (gallery.ids.size() != ng || gallery.cams.size() != ng) {
    throw validation_error("rank_queries: gallery labels do not match matrix columns");
  }

  RankingResult out;
  out.per_query_order.resize(nq);
  std::vector<std::size_t> hits_at(ng, 0);
  double ap_sum = 0.0;

  for (std::size_t q = 0; q < nq; ++q) {
    auto& kept = out.per_query_order[q];
    for (auto g : argsort_row(dist.values.row(q))) {
      const bool same_id = gallery.ids[g] == query.ids[q];
      if (same_id && gallery.cams[g] == query.cams[q]) continue;
      kept.push_back(g);
    }
    std::size_t found = 0;
    double precision_sum = 0.0;
    std::size_t first = kept.size();
    for (std::size_t pos = 0; pos < kept.size(); ++pos) {
      if (gallery.ids[kept[pos]] != query.ids[q]) continue;
      if (found == 0) first = pos;
      ++found;
      precision_sum += static_cast<double>(found) / static_cast<double>(pos + 1);
    }
    if (found == 0) continue;
    ++out.n_valid_queries;
    ++hits_at[first];
    ap_sum += precision_sum / static_cast<double>(found);
  }

  out.cmc.assign(ng, 0.0);
  if (out.n_valid_queries == 0) return out;
  const double denom = static_cast<double>(out.n_valid_queries);
  std::size_t cumulative = 0;
  for (std::size_t r = 0; r < ng; ++r) {
    cumulative += hits_at[r];
    out.cmc[r] = static_cast<double>(cumulative) / denom;
  }
  out.map = ap_sum / denom;
  return out;
}

inline RankingResult rank_queries(const DistanceMatrix& dist, const EmbeddingSet& query,
                                  const EmbeddingSet& gallery) {
  const auto qi = query.ids(), qc = query.cams(), gi = gallery.ids(), gc = gallery.cams();
  return rank_queries(dist, {qi, qc}, {gi, gc});
}

// ---------------------------------------------------------------------------
// k-reciprocal re-ranking with local query expansion. Neighbourhoods and the
// Gaussian weights use the squared, row-max-normalised joint distance; the
// returned matrix blends the caller's query-gallery distances with the
// Jaccard distance: lambda * original + (1 - lambda) * jaccard.

struct RerankParams {
  std::size_t k1 = 20;
  std::size_t k2 = 6;
  double lambda = 0.3;
};

namespace detail {

class RerankState {
 public:
  RerankState(const Matrix& qg, const Matrix& qq, const Matrix& gg)
      : nq_(qg.rows()), all_(qg.rows() + qg.cols()), dist_(all_, all_) {
    const std::size_t ng = qg.cols();
    for (std::size_t i = 0; i < nq_; ++i) {
      for (std::size_t j = 0; j < nq_; ++j) dist_(i, j) = qq(i, j);
      for (std::size_t j = 0; j < ng; ++j) {
        dist_(i, nq_ + j) = qg(i, j);
        dist_(nq_ + j, i) = qg(i, j);
      }
    }
    for (std::size_t i = 0; i < ng; ++i) {
      for (std::size_t j = 0; j < ng; ++j) dist_(nq_ + i, nq_ + j) = gg(i, j);
    }
    for (std::size_t i = 0; i < all_; ++i) {
      auto row = dist_.row(i);
      double top = 0.0;
      for (double& v : row) {
        v *= v;
        top = std::max(top, v);
      }
      if (top > 0.0) {
        for (double& v : row) v /= top;
      }
    }
    rank_.reserve(all_);
    for (std::size_t i = 0; i < all_; ++i) rank_.push_back(argsort_row(dist_.row(i)));
  }

  std::size_t size() const noexcept { return all_; }
  const Matrix& distance() const noexcept { return dist_; }
  const std::vector<std::size_t>& rank(std::size_t i) const noexcept { return rank_[i]; }

  // Members of i's top-(k+1) list whose own top-(k+1) list contains i.
  std::vector<std::size_t> reciprocal(std::size_t i, std::size_t k) const {
    const std::size_t width = std::min(k + 1, all_);
    std::vector<std::size_t> out;
    for (std::size_t a = 0; a < width; ++a) {
      const auto cand = rank_[i][a];
      const auto& back = rank_[cand];
      if (std::find(back.begin(), back.begin() + static_cast<std::ptrdiff_t>(width), i) !=
          back.begin() + static_cast<std::ptrdiff_t>(width)) {
        out.push_back(cand);
      }
    }
    return out;
  }

 private:
  std::size_t nq_;
  std::size_t all_;
  Matrix dist_;
  std::vector<std::vector<std::size_t>> rank_;
};

}  // namespace detail

// Expanded k-reciprocal set for probe i over the joint (query + gallery) index
// space. Exposed for tests.
inline std::vector<std::size_t> expanded_reciprocal_set(const detail::RerankState& st,
                                                        std::size_t i, std::size_t k1) {
  const auto base = st.reciprocal(i, k1);
  std::vector<std::size_t> expansion = base;
  const auto half = static_cast<std::size_t>(std::nearbyint(static_cast<double>(k1) / 2.0));
  std::vector<std::size_t> base_sorted = base;
  std::sort(base_sorted.begin(), base_sorted.end());
  for (auto cand : base) {
    const auto cand_set = st.reciprocal(cand, half);
    std::size_t overlap = 0;
    for (auto x : cand_set) {
      if (std::binary_search(base_sorted.begin(), base_sorted.end(), x)) ++overlap;
    }
    if (static_cast<double>(overlap) > 2.0 / 3.0 * static_cast<double>(cand_set.size())) {
      expansion.insert(expansion.end(), cand_set.begin(), cand_set.end());
    }
  }
  std::sort(expansion.begin(), expansion.end());
  expansion.erase(std::unique(expansion.begin(), expansion.end()), expansion.end());
  return expansion;
}

inline DistanceMatrix rerank(const DistanceMatrix& dist_qg, const DistanceMatrix& dist_qq,
                             const DistanceMatrix& dist_gg, const RerankParams& params = {}) {
  const std::size_t nq = dist_qg.n_query();
  const std::size_t ng = dist_qg.n_gallery();
  if (dist_qq.n_query() != nq || dist_qq.n_gallery() != nq) {
    throw validation_error("rerank: query-query matrix must be " + std::to_string(nq) + " x " +
                           std::to_string(nq));
  }
  if (dist_gg.n_query() != ng || dist_gg.n_gallery() != ng) {
    throw validation_error("rerank: gallery-gallery matrix must be " + std::to_string(ng) + " x " +
                           std::to_string(ng));
  }
  if (!(params.k2 >= 1 && params.k1 > params.k2)) throw validation_error("rerank: need k1 > k2 >= 1");
  if (params.k1 >= ng) {
    throw validation_error("rerank: k1=" + std::to_string(params.k1) + " must be smaller than gallery size " +
                           std::to_string(ng));
  }
  if (!(params.lambda >= 0.0 && params.lambda <= 1.0)) throw validation_error("rerank: lambda must be in [0, 1]");

  const detail::RerankState st(dist_qg.values, dist_qq.values, dist_gg.values);
  const std::size_t all = st.size();

  Matrix v(all, all);
  for (std::size_t i = 0; i < all; ++i) {
    const auto members = expanded_reciprocal_set(st, i, params.k1);
    double total = 0.0;
    for (auto j : members) {
      v(i, j) = std::exp(-st.distance()(i, j));
      total += v(i, j);
    }
    for (auto j : members) v(i, j) /= total;
  }

  if (params.k2 != 1) {
    Matrix expanded(all, all);
    const double inv = 1.0 / static_cast<double>(params.k2);
    for (std::size_t i = 0; i < all; ++i) {
      for (std::size_t a = 0; a < params.k2 && a < all; ++a) {
        const auto src = v.row(st.rank(i)[a]);
        auto dst = expanded.row(i);
        for (std::size_t j = 0; j < all; ++j) dst[j] += src[j];
      }
      for (double& x : expanded.row(i)) x *= inv;
    }
    v = std::move(expanded);
  }

  // Inverted index: for each column, the rows with non-zero weight.
  std::vector<std::vector<std::size_t>> inverted(all);
  for (std::size_t i = 0; i < all; ++i) {
    for (std::size_t j = 0; j < all; ++j) {
      if (v(i, j) != 0.0) inverted[j].push_back(i);
    }
  }

  DistanceMatrix out{Matrix(nq, ng), Metric::reranked};
  std::vector<double> shared(all);
  for (std::size_t q = 0; q < nq; ++q) {
    std::fill(shared.begin(), shared.end(), 0.0);
    for (std::size_t col = 0; col < all; ++col) {
      const double vq = v(q, col);
      if (vq == 0.0) continue;
      for (auto other : inverted[col]) shared[other] += std::min(vq, v(other, col));
    }
    for (std::size_t g = 0; g < ng; ++g) {
      const double s = shared[nq + g];
      const double jaccard = 1.0 - s / (2.0 - s);
      out.values(q, g) = params.lambda * dist_qg(q, g) + (1.0 - params.lambda) * jaccard;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Parameter sweep over stripe count or window size.

enum class SweepParam { stripes, window };

inline SweepParam parse_sweep_param(const std::string& s) {
  if (s == "stripes") return SweepParam::stripes;
  if (s == "window") return SweepParam::window;
  throw validation_error("unknown sweep parameter '" + s + "' (expected stripes|window)");
}

struct SweepRow {
  std::size_t value = 0;
  double rank1 = 0.0;
  double rank5 = 0.0;
  double rank10 = 0.0;
  double map = 0.0;
};

// Re-partitions stored stripes into `k` stripes by averaging adjacent groups.
// `k` must divide the stored stripe count.
inline EmbeddingSet pool_stripes(const EmbeddingSet& set, std::size_t k) {
  if (k == 0 || set.k() % k != 0) {
    throw validation_error("pool_stripes: k=" + std::to_string(k) + " does not divide stored k=" +
                           std::to_string(set.k()));
  }
  const std::size_t group = set.k() / k;
  std::vector<EmbeddingRecord> records;
  records.reserve(set.size());
  for (const auto& rec : set) {
    EmbeddingRecord out;
    out.id = rec.id;
    out.cam = rec.cam;
    out.global_feat = rec.global_feat;
    out.stripe_feats = Matrix(k, set.d_local());
    for (std::size_t r = 0; r < k; ++r) {
      auto dst = out.stripe_feats.row(r);
      for (std::size_t s = 0; s < group; ++s) {
        const auto src = rec.stripe(r * group + s);
        for (std::size_t c = 0; c < dst.size(); ++c) dst[c] += src[c];
      }
      for (double& x : dst) x /= static_cast<double>(group);
    }
    records.push_back(std::move(out));
  }
  return {std::move(records), k, set.d_local(), set.d_global()};
}

inline SweepRow summarize(std::size_t value, const RankingResult& r) {
  return {value, r.rank(1), r.rank(5), r.rank(10), r.map};
}

// One evaluation per value. Window sweeps keep the stored stripes; stripe
// sweeps pool to k and use window max(1, k/2).
inline std::vector<SweepRow> sweep(SweepParam param, std::span<const std::size_t> values,
                                   const EmbeddingSet& query, const EmbeddingSet& gallery,
                                   AlignmentConfig cfg, Metric metric = Metric::lsa,
                                   std::size_t threads = 1) {
  require_conformant(query, gallery);
  std::vector<SweepRow> rows;
  rows.reserve(values.size());
  for (auto value : values) {
    if (value == 0) throw validation_error("sweep: values must be positive");
    if (param == SweepParam::window) {
      cfg.k = query.k();
      cfg.window = value;
      const auto dist = pairwise_matrix(query, gallery, cfg, metric, threads);
      rows.push_back(summarize(value, rank_queries(dist, query, gallery)));
    } else {
      const auto q = pool_stripes(query, value);
      const auto g = pool_stripes(gallery, value);
      auto local = cfg;
      local.k = value;
      local.window = std::max<std::size_t>(1, value / 2);
      const auto dist = pairwise_matrix(q, g, local, metric, threads);
      rows.push_back(summarize(value, rank_queries(dist, q, g)));
    }
  }
  return rows;
}

inline void write_sweep_csv(std::ostream& out, std::span<const SweepRow> rows) {
  out << "value,rank1,rank5,rank10,map\n";
  out.precision(17);
  for (const auto& r : rows) {
    out << r.value << ',' << r.rank1 << ',' << r.rank5 << ',' << r.rank10 << ',' << r.map << '\n';
  }
}

}  // namespace lsa

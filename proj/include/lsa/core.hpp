#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace lsa {

// Error hierarchy. validation_error maps to CLI exit code 1, io_error to 2.
struct error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct validation_error : error {
  using error::error;
};

struct io_error : error {
  using error::error;
};

struct dimension_mismatch : validation_error {
  std::size_t record;
  dimension_mismatch(std::size_t rec, const std::string& what)
      : validation_error("dimension mismatch at record " + std::to_string(rec) + ": " + what),
        record(rec) {}
};

struct non_finite_value : validation_error {
  std::size_t record;
  // stripe == npos means the global feature.
  std::size_t stripe;
  std::size_t coord;
  static constexpr std::size_t npos = static_cast<std::size_t>(-1);

  non_finite_value(std::size_t rec, std::size_t str, std::size_t c)
      : validation_error("non-finite value at record " + std::to_string(rec) +
                         (str == npos ? std::string(", global") : ", stripe " + std::to_string(str)) +
                         ", coord " + std::to_string(c)),
        record(rec), stripe(str), coord(c) {}
};

struct size_mismatch : io_error {
  using io_error::io_error;
};

// Dense row-major matrix of doubles.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) {
      throw validation_error("matrix data size does not match shape");
    }
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }

  double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const noexcept {
    return {data_.data() + r * cols_, cols_};
  }

  std::vector<double>& data() noexcept { return data_; }
  const std::vector<double>& data() const noexcept { return data_; }

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// One image embedding: a global vector plus k stripe vectors, top-to-bottom.
struct EmbeddingRecord {
  std::int64_t id = 0;
  std::int64_t cam = 0;
  std::vector<double> global_feat;
  Matrix stripe_feats;

  std::size_t stripes() const noexcept { return stripe_feats.rows(); }
  std::span<const double> stripe(std::size_t i) const noexcept { return stripe_feats.row(i); }

  friend bool operator==(const EmbeddingRecord&, const EmbeddingRecord&) = default;
};

// Immutable, index-addressable collection of records sharing one shape.
// Construction does not validate; call validate_set before trusting the shape.
class EmbeddingSet {
 public:
  EmbeddingSet() = default;
  EmbeddingSet(std::vector<EmbeddingRecord> records, std::size_t k, std::size_t d_local,
               std::size_t d_global)
      : records_(std::move(records)), k_(k), d_local_(d_local), d_global_(d_global) {}

  std::size_t size() const noexcept { return records_.size(); }
  bool empty() const noexcept { return records_.empty(); }
  std::size_t k() const noexcept { return k_; }
  std::size_t d_local() const noexcept { return d_local_; }
  std::size_t d_global() const noexcept { return d_global_; }

  const EmbeddingRecord& operator[](std::size_t i) const noexcept { return records_[i]; }
  const EmbeddingRecord& at(std::size_t i) const { return records_.at(i); }
  const std::vector<EmbeddingRecord>& records() const noexcept { return records_; }

  auto begin() const noexcept { return records_.begin(); }
  auto end() const noexcept { return records_.end(); }

  std::vector<std::int64_t> ids() const {
    std::vector<std::int64_t> out;
    out.reserve(records_.size());
    for (const auto& r : records_) out.push_back(r.id);
    return out;
  }
  std::vector<std::int64_t> cams() const {
    std::vector<std::int64_t> out;
    out.reserve(records_.size());
    for (const auto& r : records_) out.push_back(r.cam);
    return out;
  }

  friend bool operator==(const EmbeddingSet&, const EmbeddingSet&) = default;

 private:
  std::vector<EmbeddingRecord> records_;
  std::size_t k_ = 0;
  std::size_t d_local_ = 0;
  std::size_t d_global_ = 0;
};

// Sliding-alignment parameters. `step` is kept for completeness; the window
// formula enumerates every stripe, so it has no effect on any distance.
struct AlignmentConfig {
  std::size_t k = 8;
  std::size_t window = 4;
  std::size_t step = 1;
  double local_weight = 1.0;
  double global_weight = 1.0;

  static AlignmentConfig for_stripes(std::size_t k) {
    AlignmentConfig cfg;
    cfg.k = k;
    cfg.window = k / 2 == 0 ? 1 : k / 2;
    return cfg;
  }

  void validate() const {
    if (k < 1) throw validation_error("alignment config: k must be >= 1");
    if (window < 1) throw validation_error("alignment config: window must be >= 1");
    if (!(local_weight >= 0.0) || !(global_weight >= 0.0) || !std::isfinite(local_weight) ||
        !std::isfinite(global_weight)) {
      throw validation_error("alignment config: weights must be finite and non-negative");
    }
  }
};

enum class Metric { global, lsa, hard, combined, reranked };

inline std::string to_string(Metric m) {
  switch (m) {
    case Metric::global: return "global";
    case Metric::lsa: return "lsa";
    case Metric::hard: return "hard";
    case Metric::combined: return "combined";
    case Metric::reranked: return "reranked";
  }
  return "unknown";
}

inline Metric parse_metric(const std::string& s) {
  if (s == "global") return Metric::global;
  if (s == "lsa") return Metric::lsa;
  if (s == "hard") return Metric::hard;
  if (s == "combined") return Metric::combined;
  if (s == "reranked") return Metric::reranked;
  throw validation_error("unknown metric '" + s + "'");
}

struct DistanceMatrix {
  Matrix values;
  Metric metric = Metric::lsa;

  std::size_t n_query() const noexcept { return values.rows(); }
  std::size_t n_gallery() const noexcept { return values.cols(); }
  double operator()(std::size_t q, std::size_t g) const noexcept { return values(q, g); }

  void validate() const {
    for (double v : values.data()) {
      if (!std::isfinite(v) || v < 0.0) {
        throw validation_error("distance matrix entries must be finite and non-negative");
      }
    }
  }
};

struct RankingResult {
  // Valid (non-junk) gallery indices per query, ascending distance.
  std::vector<std::vector<std::size_t>> per_query_order;
  // cmc[r] = fraction of evaluated queries with a correct match in the top r+1.
  std::vector<double> cmc;
  double map = 0.0;
  // Queries with at least one valid correct match; the denominator of cmc and map.
  std::size_t n_valid_queries = 0;

  double rank(std::size_t r) const noexcept {
    if (cmc.empty()) return 0.0;
    return r <= cmc.size() ? cmc[r - 1] : cmc.back();
  }
};

// Checks every record against the set's (k, d_local, d_global) and rejects
// non-finite entries. Shape errors are reported before value errors per record.
inline void validate_set(const EmbeddingSet& set) {
  for (std::size_t r = 0; r < set.size(); ++r) {
    const auto& rec = set[r];
    if (rec.id < 0 || rec.cam < 0) {
      throw validation_error("record " + std::to_string(r) + ": labels must be non-negative");
    }
    if (rec.stripe_feats.rows() != set.k()) {
      throw dimension_mismatch(r, "expected " + std::to_string(set.k()) + " stripes, got " +
                                      std::to_string(rec.stripe_feats.rows()));
    }
    if (rec.stripe_feats.cols() != set.d_local()) {
      throw dimension_mismatch(r, "expected stripe dimension " + std::to_string(set.d_local()) +
                                      ", got " + std::to_string(rec.stripe_feats.cols()));
    }
    if (rec.global_feat.size() != set.d_global()) {
      throw dimension_mismatch(r, "expected global dimension " + std::to_string(set.d_global()) +
                                      ", got " + std::to_string(rec.global_feat.size()));
    }
    for (std::size_t i = 0; i < rec.stripe_feats.rows(); ++i) {
      auto row = rec.stripe(i);
      for (std::size_t c = 0; c < row.size(); ++c) {
        if (!std::isfinite(row[c])) throw non_finite_value(r, i, c);
      }
    }
    for (std::size_t c = 0; c < rec.global_feat.size(); ++c) {
      if (!std::isfinite(rec.global_feat[c])) throw non_finite_value(r, non_finite_value::npos, c);
    }
  }
}

// Throws unless the two sets can be compared pairwise.
inline void require_conformant(const EmbeddingSet& a, const EmbeddingSet& b) {
  if (a.k() != b.k() || a.d_local() != b.d_local() || a.d_global() != b.d_global()) {
    throw validation_error("sets are not conformant: (k, d_local, d_global) = (" +
                           std::to_string(a.k()) + ", " + std::to_string(a.d_local()) + ", " +
                           std::to_string(a.d_global()) + ") vs (" + std::to_string(b.k()) + ", " +
                           std::to_string(b.d_local()) + ", " + std::to_string(b.d_global()) + ")");
  }
}

}  // namespace lsa

#pragma once

// Synthetic stripe embeddings with identity clusters, vertical misalignment
// (cyclic stripe shifts) and partial occlusion / cropping at stripe
// granularity.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "lsa/core.hpp"
#include "lsa/random.hpp"

namespace lsa {

struct FracRange {
  double lo = 0.0;
  double hi = 0.0;
};

struct SynthSpec {
  std::size_t n_ids = 20;
  std::size_t per_id = 4;
  std::size_t k = 8;
  std::size_t d_local = 16;
  std::size_t d_global = 16;  // the global feature is the stripe mean, so must equal d_local
  double noise_sigma = 0.1;
  double shift_prob = 0.5;
  std::size_t max_shift = 2;
  double occl_prob = 0.0;
  FracRange occl_frac_range{0.1, 0.3};
  FracRange crop_frac_range{0.2, 0.3};
  std::uint64_t seed = 0;

  void validate() const {
    auto prob = [](double p) { return p >= 0.0 && p <= 1.0; };
    auto range = [](FracRange r) { return r.lo >= 0.0 && r.hi <= 1.0 && r.lo <= r.hi; };
    if (n_ids < 1) throw validation_error("synth spec: need at least one identity");
    if (per_id < 2) throw validation_error("synth spec: per_id must be >= 2 (one query, one gallery)");
    if (k < 1 || d_local < 1) throw validation_error("synth spec: k and d must be >= 1");
    if (d_global != d_local) throw validation_error("synth spec: d_global must equal d_local");
    if (!(noise_sigma >= 0.0) || !std::isfinite(noise_sigma)) {
      throw validation_error("synth spec: noise_sigma must be finite and >= 0");
    }
    if (!prob(shift_prob) || !prob(occl_prob)) throw validation_error("synth spec: probabilities must be in [0, 1]");
    if (!range(occl_frac_range) || !range(crop_frac_range)) {
      throw validation_error("synth spec: fraction ranges must satisfy 0 <= lo <= hi <= 1");
    }
    if (max_shift >= k) throw validation_error("synth spec: max_shift must be < k");
    if (shift_prob > 0.0 && max_shift < 1) throw validation_error("synth spec: shift_prob > 0 needs max_shift >= 1");
  }
};

struct SynthData {
  EmbeddingSet query;
  EmbeddingSet gallery;
  // Index of each query's true identity prototype; equals the id label.
  std::vector<std::int64_t> query_ids;
};

namespace detail {

// Row i of the result is row (i - s) mod k of the input: content moves down by s.
inline void cyclic_shift_down(Matrix& m, std::size_t s) {
  const std::size_t k = m.rows();
  if (k == 0 || s % k == 0) return;
  Matrix out(k, m.cols());
  for (std::size_t i = 0; i < k; ++i) {
    const auto src = m.row((i + k - s % k) % k);
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  m = std::move(out);
}

inline std::size_t stripes_for(double frac, std::size_t k) {
  return static_cast<std::size_t>(std::ceil(frac * static_cast<double>(k) - 1e-12));
}

inline double rms(const Matrix& m) {
  if (m.size() == 0) return 0.0;
  double s = 0.0;
  for (double v : m.data()) s += v * v;
  return std::sqrt(s / static_cast<double>(m.size()));
}

// Replaces a contiguous block of `count` stripes at a random start with iid noise.
inline void erase_block(Matrix& m, std::size_t count, double scale, Rng& rng) {
  const std::size_t k = m.rows();
  count = std::min(count, k);
  if (count == 0) return;
  const std::size_t start = rng.below(k - count + 1);
  for (std::size_t r = start; r < start + count; ++r) {
    for (double& v : m.row(r)) v = rng.normal(0.0, scale);
  }
}

// Drops the bottom `count` stripes and stretches the rest back to k rows.
inline void crop_bottom(Matrix& m, std::size_t count) {
  const std::size_t k = m.rows();
  if (count == 0 || k == 0) return;
  count = std::min(count, k - 1);
  const std::size_t kept = k - count;
  Matrix out(k, m.cols());
  for (std::size_t i = 0; i < k; ++i) {
    const auto src = m.row(i * kept / k);
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  m = std::move(out);
}

inline std::vector<double> stripe_mean(const Matrix& m) {
  std::vector<double> g(m.cols(), 0.0);
  for (std::size_t r = 0; r < m.rows(); ++r) {
    const auto row = m.row(r);
    for (std::size_t c = 0; c < g.size(); ++c) g[c] += row[c];
  }
  for (double& v : g) v /= static_cast<double>(m.rows());
  return g;
}

}  // namespace detail

// Record 0 of each identity is the query (camera 0); records 1..per_id-1 go to
// the gallery on cameras 1..per_id-1, so every query has cross-camera matches.
inline SynthData generate(const SynthSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);

  std::vector<Matrix> prototypes;
  prototypes.reserve(spec.n_ids);
  for (std::size_t id = 0; id < spec.n_ids; ++id) {
    Matrix p(spec.k, spec.d_local);
    for (double& v : p.data()) v = rng.normal();
    prototypes.push_back(std::move(p));
  }

  std::vector<EmbeddingRecord> query, gallery;
  for (std::size_t id = 0; id < spec.n_ids; ++id) {
    const double scale = detail::rms(prototypes[id]);
    for (std::size_t j = 0; j < spec.per_id; ++j) {
      Matrix stripes = prototypes[id];
      for (double& v : stripes.data()) v += rng.normal(0.0, spec.noise_sigma);
      if (rng.bernoulli(spec.shift_prob)) {
        detail::cyclic_shift_down(stripes, 1 + rng.below(spec.max_shift));
      }
      if (rng.bernoulli(spec.occl_prob)) {
        const double frac = rng.uniform(spec.occl_frac_range.lo, spec.occl_frac_range.hi);
        detail::erase_block(stripes, detail::stripes_for(frac, spec.k), scale, rng);
      }
      EmbeddingRecord rec;
      rec.id = static_cast<std::int64_t>(id);
      rec.cam = static_cast<std::int64_t>(j);
      rec.global_feat = detail::stripe_mean(stripes);
      rec.stripe_feats = std::move(stripes);
      (j == 0 ? query : gallery).push_back(std::move(rec));
    }
  }

  SynthData out{EmbeddingSet(std::move(query), spec.k, spec.d_local, spec.d_global),
                EmbeddingSet(std::move(gallery), spec.k, spec.d_local, spec.d_global),
                {}};
  out.query_ids = out.query.ids();
  return out;
}

enum class CorruptMode { erase, crop };

inline CorruptMode parse_corrupt_mode(const std::string& s) {
  if (s == "erase") return CorruptMode::erase;
  if (s == "crop") return CorruptMode::crop;
  throw validation_error("unknown corruption mode '" + s + "' (expected erase|crop)");
}

// erase: a contiguous block of ceil(frac*k) stripes becomes noise at the
// record's RMS scale. crop: the bottom ceil(frac*k) stripes are dropped and
// the rest repeated to fill k rows. frac is drawn per record from the range;
// each record is affected with probability `prob`. Global features and labels
// are left as they are.
inline EmbeddingSet corrupt_partial(const EmbeddingSet& set, CorruptMode mode, FracRange range,
                                    std::uint64_t seed, double prob = 1.0) {
  if (set.empty()) throw validation_error("corrupt_partial: empty set");
  if (!(range.lo >= 0.0 && range.hi <= 1.0 && range.lo <= range.hi)) {
    throw validation_error("corrupt_partial: fraction range must satisfy 0 <= lo <= hi <= 1");
  }
  if (!(prob >= 0.0 && prob <= 1.0)) throw validation_error("corrupt_partial: prob must be in [0, 1]");
  Rng rng(seed);
  std::vector<EmbeddingRecord> records;
  records.reserve(set.size());
  for (const auto& rec : set) {
    EmbeddingRecord out = rec;
    if (rng.bernoulli(prob)) {
      const double frac = rng.uniform(range.lo, range.hi);
      const std::size_t count = detail::stripes_for(frac, out.stripes());
      if (mode == CorruptMode::erase) {
        detail::erase_block(out.stripe_feats, count, detail::rms(rec.stripe_feats), rng);
      } else {
        detail::crop_bottom(out.stripe_feats, count);
      }
    }
    records.push_back(std::move(out));
  }
  return {std::move(records), set.k(), set.d_local(), set.d_global()};
}

// The desk-scale misalignment benchmark: 20 identities x 4 images, k=8, d=16,
// shifts of at most 2 stripes.
inline SynthSpec benchmark_spec(std::uint64_t seed, double shift_prob = 0.5,
                                double noise_sigma = 0.1, double occl_prob = 0.0) {
  SynthSpec spec;
  spec.n_ids = 20;
  spec.per_id = 4;
  spec.k = 8;
  spec.d_local = 16;
  spec.d_global = 16;
  spec.max_shift = 2;
  spec.shift_prob = shift_prob;
  spec.noise_sigma = noise_sigma;
  spec.occl_prob = occl_prob;
  spec.seed = seed;
  return spec;
}

}  // namespace lsa

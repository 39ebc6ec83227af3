#pragma once

#include <algorithm>
#include <vector>

#include "lsa/core.hpp"
#include "lsa/random.hpp"
#include "oracles.hpp"

namespace fixture {

// Two overlapping 2-D Gaussian identity clusters. The first `queries_per`
// points of each cluster are queries (camera 0); the rest form the gallery
// (camera 1).
struct TwoClusters {
  lsa::DistanceMatrix qg, qq, gg;
  std::vector<std::int64_t> qi, qc, gi, gc;
};

inline TwoClusters two_clusters(std::uint64_t seed, std::size_t per, std::size_t queries_per,
                                double sigma, double separation = 3.0) {
  lsa::Rng rng(seed);
  std::vector<std::vector<double>> q_pts, g_pts;
  TwoClusters out;
  for (std::size_t c = 0; c < 2; ++c) {
    for (std::size_t i = 0; i < per; ++i) {
      std::vector<double> p{c * separation + rng.normal(0, sigma), rng.normal(0, sigma)};
      if (i < queries_per) {
        q_pts.push_back(p);
        out.qi.push_back(static_cast<std::int64_t>(c));
        out.qc.push_back(0);
      } else {
        g_pts.push_back(p);
        out.gi.push_back(static_cast<std::int64_t>(c));
        out.gc.push_back(1);
      }
    }
  }
  auto block = [](const auto& a, const auto& b) {
    lsa::DistanceMatrix m{lsa::Matrix(a.size(), b.size()), lsa::Metric::global};
    for (std::size_t i = 0; i < a.size(); ++i) {
      for (std::size_t j = 0; j < b.size(); ++j) m.values(i, j) = oracle::l2(a[i], b[j]);
    }
    return m;
  };
  out.qg = block(q_pts, g_pts);
  out.qq = block(q_pts, q_pts);
  out.gg = block(g_pts, g_pts);
  return out;
}

}  // namespace fixture

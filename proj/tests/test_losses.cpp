#include <algorithm>
#include <cmath>
#include <numeric>

#include <gtest/gtest.h>

#include "lsa/losses.hpp"
#include "oracles.hpp"

namespace {

lsa::Matrix random_matrix(lsa::Rng& rng, std::size_t r, std::size_t c, double sigma = 1.0) {
  lsa::Matrix m(r, c);
  for (double& v : m.data()) v = rng.normal(0.0, sigma);
  return m;
}

std::vector<std::int64_t> grouped_labels(std::size_t ids, std::size_t per_id) {
  std::vector<std::int64_t> labels;
  for (std::size_t i = 0; i < ids; ++i) {
    for (std::size_t j = 0; j < per_id; ++j) labels.push_back(static_cast<std::int64_t>(i));
  }
  return labels;
}

}  // namespace

// ---------------------------------------------------------------------------
// ID loss

TEST(IdLoss, SaturatedTrueClassGivesZero) {
  lsa::Matrix z(2, 3, std::vector<double>{1000, 0, 0, 0, 0, 1000});
  std::vector<std::int64_t> y{0, 2};
  EXPECT_EQ(lsa::id_loss(z, y, 0.0).value, 0.0);
}

TEST(IdLoss, UniformLogitsGiveLogC) {
  lsa::Matrix z(3, 4, 0.5);
  std::vector<std::int64_t> y{0, 3, 1};
  EXPECT_NEAR(lsa::id_loss(z, y, 0.0).value, std::log(4.0), 1e-15);
  // Uniform prediction has the same loss under any smoothing.
  EXPECT_NEAR(lsa::id_loss(z, y, 0.1).value, std::log(4.0), 1e-15);
}

TEST(IdLoss, ZeroSmoothingEqualsPlainCrossEntropy) {
  lsa::Rng rng(21);
  const auto z = random_matrix(rng, 7, 5, 2.0);
  std::vector<std::int64_t> y{0, 1, 2, 3, 4, 0, 2};
  EXPECT_NEAR(lsa::id_loss(z, y, 0.0).value, oracle::cross_entropy(z, y), 1e-12);
}

TEST(IdLoss, GradientMatchesFiniteDifferences) {
  lsa::Rng rng(22);
  const auto z = random_matrix(rng, 6, 5, 1.5);
  std::vector<std::int64_t> y(6);
  for (auto& v : y) v = static_cast<std::int64_t>(rng.below(5));
  const auto analytic = lsa::id_loss(z, y, 0.1);
  const auto numeric = oracle::central_difference(
      [&](const lsa::Matrix& m) { return lsa::id_loss(m, y, 0.1).value; }, z);
  EXPECT_LT(oracle::max_relative_error(analytic.grad, numeric), 1e-6);
}

TEST(IdLoss, Errors) {
  lsa::Matrix z(2, 3);
  EXPECT_THROW(lsa::id_loss(z, std::vector<std::int64_t>{0, 3}, 0.1), lsa::validation_error);
  EXPECT_THROW(lsa::id_loss(z, std::vector<std::int64_t>{0, -1}, 0.1), lsa::validation_error);
  EXPECT_THROW(lsa::id_loss(lsa::Matrix(2, 1), std::vector<std::int64_t>{0, 0}, 0.1), lsa::validation_error);
  EXPECT_THROW(lsa::id_loss(z, std::vector<std::int64_t>{0, 1}, 1.0), lsa::validation_error);
}

// ---------------------------------------------------------------------------
// Triplet loss

TEST(TripletHard, SingletonSetsReduceToClassicTriplet) {
  // Two identities, two samples each: |P(a)| = 1 and |N(a)| = 2; use three
  // samples where anchor 0 has one positive and one negative.
  lsa::Matrix d(3, 3, std::vector<double>{0, 1.0, 2.5, 1.0, 0, 0.7, 2.5, 0.7, 0});
  std::vector<std::int64_t> y{0, 0, 1};
  const auto t = lsa::anchor_terms(d, y, 0, 0.3);
  ASSERT_EQ(t.w_pos.size(), 1u);
  ASSERT_EQ(t.w_neg.size(), 1u);
  EXPECT_EQ(t.w_pos[0], 1.0);
  EXPECT_EQ(t.w_neg[0], 1.0);
  EXPECT_DOUBLE_EQ(t.pre_hinge, 0.3 + 1.0 - 2.5);
}

TEST(TripletHard, EqualDistancesGiveMargin) {
  const auto y = grouped_labels(2, 4);
  lsa::Matrix d(8, 8, 1.7);
  for (std::size_t i = 0; i < 8; ++i) d(i, i) = 0.0;
  lsa::LossBatchView batch(lsa::Matrix(8, 1), y, d);
  EXPECT_NEAR(lsa::triplethard_loss(batch, 0.3).value, 0.3, 1e-15);
}

TEST(TripletHard, MatchesExplicitSumOracleAndFiniteDifferences) {
  lsa::Rng rng(31);
  const auto y = grouped_labels(2, 4);
  const auto features = random_matrix(rng, 8, 4);
  const auto d = lsa::row_distances(features);
  lsa::LossBatchView batch(features, y, d);
  for (double m : {0.3, 1.0, 3.0}) {
    const auto analytic = lsa::triplethard_loss(batch, m);
    EXPECT_NEAR(analytic.value, oracle::triplethard(d, y, m), 1e-12);
    const auto numeric = oracle::central_difference(
        [&](const lsa::Matrix& x) { return oracle::triplethard(x, y, m); }, d);
    EXPECT_LT(oracle::max_relative_error(analytic.grad, numeric), 1e-6) << "margin " << m;
  }
}

TEST(TripletHard, WeightsAreDistributions) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    lsa::Rng rng(seed);
    const auto y = grouped_labels(4, 3);
    const auto d = lsa::row_distances(random_matrix(rng, 12, 5));
    for (std::size_t a = 0; a < 12; ++a) {
      const auto t = lsa::anchor_terms(d, y, a, 0.3);
      EXPECT_NEAR(std::accumulate(t.w_pos.begin(), t.w_pos.end(), 0.0), 1.0, 1e-12);
      EXPECT_NEAR(std::accumulate(t.w_neg.begin(), t.w_neg.end(), 0.0), 1.0, 1e-12);
      // Hard positives (far) and hard negatives (near) get the most weight.
      const auto far = std::max_element(t.w_pos.begin(), t.w_pos.end()) - t.w_pos.begin();
      for (auto p : t.positives) EXPECT_LE(d(a, p), d(a, t.positives[far]));
      const auto near = std::max_element(t.w_neg.begin(), t.w_neg.end()) - t.w_neg.begin();
      for (auto n : t.negatives) EXPECT_GE(d(a, n), d(a, t.negatives[near]));
    }
  }
}

TEST(TripletHard, NonNegativeOnRandomBatches) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    lsa::Rng rng(seed);
    const auto y = grouped_labels(3, 3);
    const auto d = lsa::row_distances(random_matrix(rng, 9, 3, 0.5 + seed * 0.1));
    EXPECT_GE(lsa::triplethard_from_distances(d, y, 0.3).value, 0.0);
  }
}

TEST(TripletHard, ShiftingPositivesShiftsPreHinge) {
  lsa::Rng rng(33);
  const auto y = grouped_labels(2, 4);
  auto d = lsa::row_distances(random_matrix(rng, 8, 4));
  const auto before = lsa::anchor_terms(d, y, 2, 0.3);
  const double shift = 0.75;
  for (auto p : before.positives) d(2, p) += shift;
  const auto after = lsa::anchor_terms(d, y, 2, 0.3);
  EXPECT_NEAR(after.pre_hinge, before.pre_hinge + shift, 1e-12);
  for (std::size_t i = 0; i < before.w_pos.size(); ++i) EXPECT_NEAR(after.w_pos[i], before.w_pos[i], 1e-15);
}

TEST(TripletHard, MissingPositiveOrNegative) {
  lsa::Matrix d(3, 3);
  EXPECT_THROW(lsa::triplethard_from_distances(d, std::vector<std::int64_t>{0, 1, 1}, 0.3),
               lsa::validation_error);
  EXPECT_THROW(lsa::triplethard_from_distances(d, std::vector<std::int64_t>{0, 0, 0}, 0.3),
               lsa::validation_error);
}

TEST(LossBatchView, RejectsAsymmetricDistance) {
  lsa::Matrix d(2, 2, std::vector<double>{0, 1, 2, 0});
  EXPECT_THROW(lsa::LossBatchView(lsa::Matrix(2, 1), {0, 1}, d), lsa::validation_error);
  lsa::Matrix diag(2, 2, std::vector<double>{0.1, 1, 1, 0});
  EXPECT_THROW(lsa::LossBatchView(lsa::Matrix(2, 1), {0, 1}, diag), lsa::validation_error);
}

TEST(LossBatchView, PositiveAndNegativeSets) {
  lsa::LossBatchView b(lsa::Matrix(4, 1), {0, 1, 0, 1}, lsa::Matrix(4, 4));
  EXPECT_EQ(b.positives(0), (std::vector<std::size_t>{2}));
  EXPECT_EQ(b.negatives(0), (std::vector<std::size_t>{1, 3}));
}

// ---------------------------------------------------------------------------
// Center loss

TEST(CenterLoss, ZeroAtCentersAndSimpleValue) {
  lsa::CenterTable table(lsa::Matrix(2, 2, std::vector<double>{1, 2, 3, 4}));
  lsa::Matrix at(2, 2, std::vector<double>{3, 4, 1, 2});
  EXPECT_EQ(lsa::center_loss(at, std::vector<std::int64_t>{1, 0}, table).value, 0.0);

  lsa::CenterTable origin(1, 2);
  lsa::Matrix f(1, 2, std::vector<double>{3, 4});
  const auto r = lsa::center_loss(f, std::vector<std::int64_t>{0}, origin);
  EXPECT_EQ(r.value, 12.5);
  EXPECT_EQ(r.grad, f);
}

TEST(CenterLoss, GradientMatchesFiniteDifferences) {
  lsa::Rng rng(41);
  lsa::CenterTable table(random_matrix(rng, 3, 5));
  const auto f = random_matrix(rng, 7, 5);
  std::vector<std::int64_t> y{0, 1, 2, 0, 1, 2, 2};
  const auto analytic = lsa::center_loss(f, y, table);
  const auto numeric = oracle::central_difference(
      [&](const lsa::Matrix& x) { return lsa::center_loss(x, y, table).value; }, f);
  EXPECT_LT(oracle::max_relative_error(analytic.grad, numeric), 1e-8);
}

TEST(CenterLoss, PermutationInvariant) {
  lsa::Rng rng(42);
  lsa::CenterTable table(random_matrix(rng, 3, 4));
  const auto f = random_matrix(rng, 6, 4);
  std::vector<std::int64_t> y{0, 1, 2, 2, 1, 0};
  std::vector<std::size_t> perm{5, 3, 1, 0, 4, 2};
  lsa::Matrix pf(6, 4);
  std::vector<std::int64_t> py;
  for (std::size_t i = 0; i < 6; ++i) {
    std::copy(f.row(perm[i]).begin(), f.row(perm[i]).end(), pf.row(i).begin());
    py.push_back(y[perm[i]]);
  }
  EXPECT_NEAR(lsa::center_loss(f, y, table).value, lsa::center_loss(pf, py, table).value, 1e-12);
}

TEST(CenterLoss, UnknownLabel) {
  lsa::CenterTable table(2, 3);
  EXPECT_THROW(lsa::center_loss(lsa::Matrix(1, 3), std::vector<std::int64_t>{2}, table), lsa::validation_error);
}

TEST(CenterUpdate, AbsentClassUnchangedAndSingleSampleHalfway) {
  lsa::CenterTable table(lsa::Matrix(2, 2, std::vector<double>{0, 0, 5, 5}));
  lsa::Matrix f(1, 2, std::vector<double>{2, 4});
  const auto next = lsa::center_update(table, f, std::vector<std::int64_t>{0}, 1.0);
  EXPECT_EQ(next.centers(0, 0), 1.0);
  EXPECT_EQ(next.centers(0, 1), 2.0);
  EXPECT_EQ(next.centers(1, 0), 5.0);
  EXPECT_EQ(next.centers(1, 1), 5.0);
  EXPECT_EQ(next.counts[0], 1u);
  EXPECT_EQ(next.counts[1], 0u);
  // Input table untouched.
  EXPECT_EQ(table.centers(0, 0), 0.0);
}

TEST(CenterUpdate, ConvergesMonotonicallyToClassMean) {
  lsa::Rng rng(43);
  const auto f = random_matrix(rng, 6, 3);
  std::vector<std::int64_t> y{0, 0, 0, 1, 1, 1};
  lsa::CenterTable table(random_matrix(rng, 2, 3, 5.0));
  auto class_mean = [&](std::int64_t c) {
    std::vector<double> m(3, 0.0);
    for (std::size_t i = 0; i < 6; ++i) {
      if (y[i] != c) continue;
      for (std::size_t j = 0; j < 3; ++j) m[j] += f(i, j) / 3.0;
    }
    return m;
  };
  auto gap = [&](const lsa::CenterTable& t, std::int64_t c) {
    std::vector<double> row(t.centers.row(static_cast<std::size_t>(c)).begin(),
                            t.centers.row(static_cast<std::size_t>(c)).end());
    return oracle::l2(row, class_mean(c));
  };
  double g0 = gap(table, 0), g1 = gap(table, 1);
  for (int step = 0; step < 100; ++step) {
    table = lsa::center_update(table, f, y, 0.5);
    const double n0 = gap(table, 0), n1 = gap(table, 1);
    if (g0 > 1e-300) EXPECT_LT(n0, g0) << "step " << step;
    if (g1 > 1e-300) EXPECT_LT(n1, g1) << "step " << step;
    g0 = n0;
    g1 = n1;
    if (g0 < 1e-12 && g1 < 1e-12) break;
  }
  EXPECT_LT(g0, 1e-6);
  EXPECT_LT(g1, 1e-6);
}

TEST(CenterUpdate, RejectsBadAlpha) {
  lsa::CenterTable table(1, 1);
  EXPECT_THROW(lsa::center_update(table, lsa::Matrix(1, 1), std::vector<std::int64_t>{0}, 0.0),
               lsa::validation_error);
  EXPECT_THROW(lsa::center_update(table, lsa::Matrix(1, 1), std::vector<std::int64_t>{0}, 1.5),
               lsa::validation_error);
}

// ---------------------------------------------------------------------------
// Total loss

namespace {

struct TotalFixture {
  std::vector<std::int64_t> labels = grouped_labels(2, 4);
  lsa::Matrix logits;
  lsa::LossBatchView global{lsa::Matrix(0, 0), {}, lsa::Matrix(0, 0)};
  lsa::LossBatchView local{lsa::Matrix(0, 0), {}, lsa::Matrix(0, 0)};
  lsa::CenterTable cg, cl;
};

TotalFixture random_fixture(std::uint64_t seed) {
  lsa::Rng rng(seed);
  TotalFixture fx;
  const auto fg = random_matrix(rng, 8, 4);
  const auto fl = random_matrix(rng, 8, 6);
  fx.global = lsa::LossBatchView(fg, fx.labels, lsa::row_distances(fg));
  fx.local = lsa::LossBatchView(fl, fx.labels, lsa::row_distances(fl));
  fx.logits = random_matrix(rng, 8, 2);
  fx.cg = lsa::CenterTable(random_matrix(rng, 2, 4));
  fx.cl = lsa::CenterTable(random_matrix(rng, 2, 6));
  return fx;
}

}  // namespace

TEST(TotalLoss, ZeroWhenEveryTermIsSatisfied) {
  const auto labels = grouped_labels(2, 4);
  lsa::Matrix f(8, 2);
  for (std::size_t i = 0; i < 8; ++i) f(i, 0) = labels[i] == 0 ? 0.0 : 10.0;
  lsa::CenterTable centers(lsa::Matrix(2, 2, std::vector<double>{0, 0, 10, 0}));
  const lsa::LossBatchView batch(f, labels, lsa::row_distances(f));
  lsa::Matrix logits(8, 2);
  for (std::size_t i = 0; i < 8; ++i) logits(i, static_cast<std::size_t>(labels[i])) = 1000.0;
  lsa::LossConfig cfg;
  cfg.smoothing = 0.0;
  cfg.num_classes = 2;
  const auto t = lsa::total_loss(batch, batch, logits, labels, centers, centers, cfg);
  EXPECT_EQ(t.total, 0.0);
}

TEST(TotalLoss, EqualsHandAssembledTerms) {
  const auto fx = random_fixture(51);
  lsa::LossConfig cfg;
  cfg.num_classes = 2;
  const auto t = lsa::total_loss(fx.global, fx.local, fx.logits, fx.labels, fx.cg, fx.cl, cfg);
  const double id = lsa::id_loss(fx.logits, fx.labels, 0.1).value;
  const double tg = oracle::triplethard(fx.global.distance(), fx.labels, 0.3);
  const double tl = oracle::triplethard(fx.local.distance(), fx.labels, 0.3);
  const double cg = lsa::center_loss(fx.global.features(), fx.labels, fx.cg).value;
  const double cl = lsa::center_loss(fx.local.features(), fx.labels, fx.cl).value;
  EXPECT_NEAR(t.total, id + 0.3 * (tg + tl) + 0.05 * (cg + cl), 1e-12);
  EXPECT_NEAR(t.recombine(cfg), t.total, 1e-12);
  EXPECT_NEAR(t.tri_g, tg, 1e-12);
  EXPECT_NEAR(t.tri_l, tl, 1e-12);
}

TEST(TotalLoss, ZeroCenterWeightIgnoresCenters) {
  const auto fx = random_fixture(52);
  lsa::LossConfig cfg;
  cfg.center_weight = 0.0;
  const auto a = lsa::total_loss(fx.global, fx.local, fx.logits, fx.labels, fx.cg, fx.cl, cfg);
  lsa::Rng rng(9);
  const lsa::CenterTable other_g(random_matrix(rng, 2, 4, 10.0));
  const lsa::CenterTable other_l(random_matrix(rng, 2, 6, 10.0));
  const auto b = lsa::total_loss(fx.global, fx.local, fx.logits, fx.labels, other_g, other_l, cfg);
  EXPECT_EQ(a.total, b.total);
}

TEST(TotalLoss, InconsistentSizes) {
  const auto fx = random_fixture(53);
  lsa::LossConfig cfg;
  cfg.num_classes = 3;
  EXPECT_THROW(lsa::total_loss(fx.global, fx.local, fx.logits, fx.labels, fx.cg, fx.cl, cfg),
               lsa::validation_error);
  cfg.num_classes = 0;
  EXPECT_THROW(lsa::total_loss(fx.global, fx.local, lsa::Matrix(7, 2), fx.labels, fx.cg, fx.cl, cfg),
               lsa::validation_error);
}

TEST(LossBatches, LocalBatchUsesSlidingAlignment) {
  lsa::Rng rng(54);
  const auto set = oracle::random_set(rng, 6, 8, 4, 4, 2);
  std::vector<std::size_t> idx{0, 1, 2, 3, 4, 5};
  lsa::AlignmentConfig cfg;
  const auto local = lsa::local_loss_batch(set, idx, cfg);
  const auto global = lsa::global_loss_batch(set, idx);
  for (std::size_t a = 0; a < 6; ++a) {
    for (std::size_t b = 0; b < 6; ++b) {
      if (a == b) continue;
      EXPECT_NEAR(local.distance()(a, b), oracle::lsa(set[a], set[b], 4), 1e-12);
      EXPECT_NEAR(global.distance()(a, b), oracle::l2(set[a].global_feat, set[b].global_feat), 1e-12);
    }
  }
  EXPECT_EQ(local.features().cols(), 32u);
}

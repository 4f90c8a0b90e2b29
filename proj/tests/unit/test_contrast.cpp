#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include "belx/contrast.hpp"
#include "belx/error.hpp"
#include "belx/random.hpp"

using namespace belx;

namespace {

Matrix random_matrix(std::mt19937_64& rng, std::size_t n, std::size_t d) {
  Matrix m(n, d);
  for (auto& x : m.data()) x = uniform01(rng) * 2.0 - 1.0;
  return m;
}

std::vector<std::int64_t> random_labels(std::mt19937_64& rng, std::size_t n, std::size_t k) {
  std::vector<std::int64_t> labels(n);
  for (auto& l : labels) l = static_cast<std::int64_t>(uniform_below(rng, k));
  return labels;
}

// Straight transcription of the loss with no shifting, in long double.
long double oracle_loss(const Matrix& unit, const IndexSets& sets, const MSLossParams& p) {
  const std::size_t n = unit.rows();
  long double total = 0.0L;
  for (std::size_t i = 0; i < n; ++i) {
    const auto cos = [&](std::size_t j) {
      long double s = 0.0L;
      for (std::size_t k = 0; k < unit.cols(); ++k) s += (long double)unit(i, k) * unit(j, k);
      return s;
    };
    long double neg = 0.0L, pos = 0.0L;
    for (const auto j : sets.negatives[i]) neg += std::exp(p.alpha * (cos(j) - p.epsilon));
    for (const auto j : sets.positives[i]) pos += std::exp(-p.beta * (cos(j) - p.epsilon));
    total += std::log1p(neg) / p.alpha + std::log1p(pos) / p.beta;
  }
  return total / static_cast<long double>(n);
}

}  // namespace

TEST(IndexSets, PartitionEveryOtherItem) {
  const std::vector<std::int64_t> labels = {4, 4, 9, 4, 9};
  const auto s = build_index_sets(labels);
  EXPECT_EQ(s.positives[0], (std::vector<std::size_t>{1, 3}));
  EXPECT_EQ(s.negatives[0], (std::vector<std::size_t>{2, 4}));
  EXPECT_EQ(s.positives[2], (std::vector<std::size_t>{4}));
  EXPECT_THROW(build_index_sets(std::vector<std::int64_t>{1}), Error);
}

TEST(PairwiseCosine, RequiresUnitRows) {
  Matrix m(2, 2);
  m(0, 0) = 1.0;
  m(1, 1) = 2.0;
  EXPECT_THROW(pairwise_cosine(m), Error);
  m(1, 1) = 1.0;
  const auto s = pairwise_cosine(m);
  EXPECT_DOUBLE_EQ(s(0, 1), 0.0);
  EXPECT_DOUBLE_EQ(s(1, 1), 1.0);
}

TEST(NormalizeRows, ZeroRowIsDegenerate) {
  Matrix m(2, 3, 1.0);
  m(1, 0) = m(1, 1) = m(1, 2) = 0.0;
  try {
    normalize_rows(m);
    ADD_FAILURE();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kDegenerateVector);
  }
}

TEST(MSLoss, MatchesDirectFormula) {
  std::mt19937_64 rng(101);
  const MSLossParams p;
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 2 + uniform_below(rng, 20);
    const auto unit = normalize_rows(random_matrix(rng, n, 16));
    const auto labels = random_labels(rng, n, 1 + uniform_below(rng, 5));
    const auto sets = build_index_sets(labels);
    const double got = ms_loss(pairwise_cosine(unit), sets, p);
    EXPECT_NEAR(got, static_cast<double>(oracle_loss(unit, sets, p)), 1e-12);
  }
}

TEST(MSLoss, StableForLargeScales) {
  // exp(beta * 2) overflows naive double evaluation when beta is huge
  Matrix unit(2, 2);
  unit(0, 0) = 1.0;
  unit(1, 0) = -1.0;
  MSLossParams p;
  p.beta = 500.0;
  const double loss = ms_loss(pairwise_cosine(unit), build_index_sets(std::vector<std::int64_t>{1, 1}), p);
  EXPECT_TRUE(std::isfinite(loss));
  EXPECT_NEAR(loss, 1.5, 1e-9);  // (1/beta) * beta * (eps - (-1)) per anchor
}

TEST(MSLoss, HyperparameterValidation) {
  MSLossParams p;
  p.alpha = 0.0;
  EXPECT_THROW(p.validate(), Error);
  p = MSLossParams{};
  p.margin_lambda = -0.1;
  EXPECT_THROW(p.validate(), Error);
}

// The loss is a mean over anchors, so permuting the batch leaves it unchanged.
TEST(MSLoss, InvariantUnderBatchPermutation) {
  std::mt19937_64 rng(7);
  const MSLossParams p;
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t n = 4 + uniform_below(rng, 12);
    const auto raw = random_matrix(rng, n, 8);
    const auto labels = random_labels(rng, n, 3);
    std::vector<std::size_t> perm(n);
    for (std::size_t i = 0; i < n; ++i) perm[i] = i;
    shuffle(std::span<std::size_t>(perm), rng);
    Matrix raw2(n, 8);
    std::vector<std::int64_t> labels2(n);
    for (std::size_t i = 0; i < n; ++i) {
      std::copy(raw.row(perm[i]).begin(), raw.row(perm[i]).end(), raw2.row(i).begin());
      labels2[i] = labels[perm[i]];
    }
    const auto a = ms_loss_grad(raw, build_index_sets(labels), p);
    const auto b = ms_loss_grad(raw2, build_index_sets(labels2), p);
    EXPECT_NEAR(a.loss, b.loss, 1e-12);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t k = 0; k < 8; ++k) EXPECT_NEAR(a.grad(perm[i], k), b.grad(i, k), 1e-12);
    }
  }
}

// Scaling a raw row does not change its direction, so the gradient is
// orthogonal to the row.
TEST(MSLossGrad, OrthogonalToRawRows) {
  std::mt19937_64 rng(8);
  const MSLossParams p;
  for (int trial = 0; trial < 30; ++trial) {
    const auto raw = random_matrix(rng, 10, 6);
    const auto g = ms_loss_grad(raw, build_index_sets(random_labels(rng, 10, 3)), p);
    for (std::size_t i = 0; i < 10; ++i) {
      double dot = 0.0;
      for (std::size_t k = 0; k < 6; ++k) dot += g.grad(i, k) * raw(i, k);
      EXPECT_NEAR(dot, 0.0, 1e-12);
    }
  }
}

TEST(MSLossGrad, MatchesCentralDifferences) {
  std::mt19937_64 rng(2024);
  const MSLossParams p;
  const double h = 1e-4;
  double worst = 0.0;
  for (int batch = 0; batch < 20; ++batch) {
    const auto raw = random_matrix(rng, 8, 8);
    const auto sets = build_index_sets(random_labels(rng, 8, 3));
    const auto analytic = ms_loss_grad(raw, sets, p);
    double scale = 0.0;
    for (const double g : analytic.grad.data()) scale = std::max(scale, std::abs(g));
    for (std::size_t i = 0; i < 8; ++i) {
      for (std::size_t k = 0; k < 8; ++k) {
        Matrix plus = raw, minus = raw;
        plus(i, k) += h;
        minus(i, k) -= h;
        const double fd = (ms_loss_grad(plus, sets, p).loss - ms_loss_grad(minus, sets, p).loss) /
                          (2.0 * h);
        worst = std::max(worst, std::abs(fd - analytic.grad(i, k)) / std::max(scale, 1e-12));
      }
    }
  }
  std::printf("max relative error %.3e\n", worst);
  EXPECT_LE(worst, 1e-5);
}

TEST(Mining, TripletsSetEqualExhaustiveEnumeration) {
  std::mt19937_64 rng(55);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 2 + uniform_below(rng, 31);
    const auto unit = normalize_rows(random_matrix(rng, n, 8));
    const auto labels = random_labels(rng, n, 1 + uniform_below(rng, 6));
    const double lambda = 0.2;
    std::set<Triplet> expected;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t p = 0; p < n; ++p) {
        for (std::size_t q = 0; q < n; ++q) {
          if (p == i || q == i || labels[p] != labels[i] || labels[q] == labels[i]) continue;
          long double dp = 0.0L, dn = 0.0L;
          for (std::size_t k = 0; k < 8; ++k) {
            dp += std::pow((long double)unit(i, k) - unit(p, k), 2);
            dn += std::pow((long double)unit(i, k) - unit(q, k), 2);
          }
          if (std::sqrt(dp) + lambda >= std::sqrt(dn)) expected.insert({i, p, q});
        }
      }
    }
    const auto got = mine_hard_triplets(unit, labels, lambda);
    EXPECT_EQ(std::set<Triplet>(got.triplets.begin(), got.triplets.end()), expected);
    EXPECT_TRUE(std::is_sorted(got.triplets.begin(), got.triplets.end()));
    // mined sets are exactly the members of surviving triplets
    for (std::size_t i = 0; i < n; ++i) {
      std::set<std::size_t> mp, mn;
      for (const auto& t : expected) {
        if (t.anchor == i) {
          mp.insert(t.positive);
          mn.insert(t.negative);
        }
      }
      EXPECT_EQ(got.mined.positives[i], std::vector<std::size_t>(mp.begin(), mp.end()));
      EXPECT_EQ(got.mined.negatives[i], std::vector<std::size_t>(mn.begin(), mn.end()));
    }
  }
}

TEST(Mining, LargerMarginKeepsASuperset) {
  std::mt19937_64 rng(56);
  for (int trial = 0; trial < 30; ++trial) {
    const auto unit = normalize_rows(random_matrix(rng, 16, 8));
    const auto labels = random_labels(rng, 16, 4);
    const auto a = mine_hard_triplets(unit, labels, 0.1);
    const auto b = mine_hard_triplets(unit, labels, 0.4);
    EXPECT_TRUE(std::includes(b.triplets.begin(), b.triplets.end(), a.triplets.begin(),
                              a.triplets.end()));
  }
}

TEST(Mining, HardTripletPredicate) {
  EXPECT_TRUE(is_hard_triplet(0.5, 0.7, 0.2));
  EXPECT_FALSE(is_hard_triplet(0.5, 0.71, 0.2));
  EXPECT_TRUE(is_hard_triplet(0.9, 0.3, 0.0));
}

#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "belx/matrix.hpp"

namespace belx {

/// Multi-similarity loss hyperparameters. alpha scales the negative term,
/// beta the positive term, epsilon is the similarity offset and
/// margin_lambda the hard-mining margin.
struct MSLossParams {
  double alpha = 2.0;
  double beta = 50.0;
  double epsilon = 0.5;
  double margin_lambda = 0.2;

  /// Throws Error(kConfig) unless alpha > 0, beta > 0, margin_lambda >= 0.
  void validate() const;
};

/// Cosine similarities S = E E^T of unit rows.
class SimilarityMatrix {
 public:
  explicit SimilarityMatrix(Matrix values) : values_(std::move(values)) {}

  std::size_t size() const noexcept { return values_.rows(); }
  double operator()(std::size_t i, std::size_t j) const { return values_(i, j); }
  const Matrix& values() const noexcept { return values_; }

 private:
  Matrix values_;
};

/// Throws Error(kPrecondition) if any row norm differs from 1 by more than
/// `tolerance`.
SimilarityMatrix pairwise_cosine(const Matrix& unit_rows, double tolerance = 1e-6);

/// Per-anchor in-batch index sets: positives share the anchor's label,
/// negatives do not; the anchor itself is in neither.
struct IndexSets {
  std::vector<std::vector<std::size_t>> positives;
  std::vector<std::vector<std::size_t>> negatives;

  std::size_t size() const noexcept { return positives.size(); }
};

/// Requires labels.size() >= 2.
IndexSets build_index_sets(std::span<const std::int64_t> labels);

struct Triplet {
  std::size_t anchor = 0;
  std::size_t positive = 0;
  std::size_t negative = 0;

  friend auto operator<=>(const Triplet&, const Triplet&) = default;
};

/// d(anchor, positive) + margin >= d(anchor, negative).
constexpr bool is_hard_triplet(double d_pos, double d_neg, double margin) {
  return d_pos + margin >= d_neg;
}

struct MiningOutcome {
  IndexSets all;                 // unfiltered positive / negative sets
  std::vector<Triplet> triplets; // surviving hard triplets, lexicographic order
  IndexSets mined;               // members of >= 1 surviving triplet, ascending
};

/// Keeps exactly the (i, p, n) with p in P_i, n in N_i satisfying the margin
/// constraint on Euclidean distances between the unit rows.
MiningOutcome mine_hard_triplets(const Matrix& unit_rows,
                                 std::span<const std::int64_t> labels,
                                 double margin_lambda);

/// Mean over anchors of
///   (1/alpha) log(1 + sum_n exp(alpha (S_in - eps)))
/// + (1/beta)  log(1 + sum_p exp(-beta (S_ip - eps))),
/// evaluated with a shifted log-sum-exp. Throws Error(kNumeric) if the result
/// is not finite.
double ms_loss(const SimilarityMatrix& similarities, const IndexSets& sets,
               const MSLossParams& params);

struct LossAndGrad {
  double loss = 0.0;
  Matrix grad;  // d loss / d raw embedding, same shape as the input
};

/// Loss and analytic gradient with respect to the raw (pre-normalization)
/// embeddings. The gradient flows through row normalization and cosine.
LossAndGrad ms_loss_grad(const Matrix& raw_embeddings, const IndexSets& sets,
                         const MSLossParams& params);

/// Row-normalizes a copy of `raw`; throws Error(kDegenerateVector) on a zero row.
Matrix normalize_rows(const Matrix& raw);

}  // namespace belx

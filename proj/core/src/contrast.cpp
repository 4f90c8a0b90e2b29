#include "belx/contrast.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "belx/error.hpp"

namespace belx {

void MSLossParams::validate() const {
  if (!(alpha > 0.0)) throw Error(ErrorKind::kConfig, "alpha must be > 0");
  if (!(beta > 0.0)) throw Error(ErrorKind::kConfig, "beta must be > 0");
  if (!std::isfinite(epsilon)) throw Error(ErrorKind::kConfig, "epsilon must be finite");
  if (!(margin_lambda >= 0.0)) {
    throw Error(ErrorKind::kConfig, "margin_lambda must be >= 0");
  }
}

namespace {

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += a[k] * b[k];
  return s;
}

// log(1 + sum_k exp(a_k)) with weights w_k = exp(a_k) / (1 + sum exp(a)).
double log1p_sum_exp(std::span<const double> a, std::vector<double>* weights) {
  if (a.empty()) {
    if (weights) weights->clear();
    return 0.0;
  }
  double shift = 0.0;  // the implicit "1" is exp(0)
  for (const double x : a) shift = std::max(shift, x);
  double denom = std::exp(-shift);
  for (const double x : a) denom += std::exp(x - shift);
  if (weights) {
    weights->resize(a.size());
    for (std::size_t k = 0; k < a.size(); ++k) {
      (*weights)[k] = std::exp(a[k] - shift) / denom;
    }
  }
  return shift + std::log(denom);
}

void check_sets(const IndexSets& sets, std::size_t n) {
  if (sets.positives.size() != n || sets.negatives.size() != n) {
    throw Error(ErrorKind::kPrecondition, "index sets do not match the batch size");
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (const auto* set : {&sets.positives[i], &sets.negatives[i]}) {
      for (const auto j : *set) {
        if (j >= n || j == i) {
          throw Error(ErrorKind::kPrecondition, "index set entry out of range");
        }
      }
    }
  }
}

// Per-anchor loss terms plus dL/dS_ij (as used by anchor i) when requested.
double loss_and_similarity_grad(const Matrix& s, const IndexSets& sets,
                                const MSLossParams& params, Matrix* d_sim) {
  const std::size_t n = s.rows();
  check_sets(sets, n);
  const double inv_n = 1.0 / static_cast<double>(n);
  std::vector<double> args;
  std::vector<double> weights;
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& neg = sets.negatives[i];
    args.clear();
    for (const auto j : neg) args.push_back(params.alpha * (s(i, j) - params.epsilon));
    total += log1p_sum_exp(args, d_sim ? &weights : nullptr) / params.alpha;
    if (d_sim) {
      for (std::size_t k = 0; k < neg.size(); ++k) (*d_sim)(i, neg[k]) += weights[k] * inv_n;
    }

    const auto& pos = sets.positives[i];
    args.clear();
    for (const auto j : pos) args.push_back(-params.beta * (s(i, j) - params.epsilon));
    total += log1p_sum_exp(args, d_sim ? &weights : nullptr) / params.beta;
    if (d_sim) {
      for (std::size_t k = 0; k < pos.size(); ++k) (*d_sim)(i, pos[k]) -= weights[k] * inv_n;
    }
  }
  const double loss = total * inv_n;
  if (!std::isfinite(loss)) {
    throw Error(ErrorKind::kNumeric, "multi-similarity loss is not finite");
  }
  return loss;
}

Matrix gram(const Matrix& unit_rows) {
  const std::size_t n = unit_rows.rows();
  Matrix s(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i; j < n; ++j) {
      const double v = dot(unit_rows.row(i), unit_rows.row(j));
      s(i, j) = v;
      s(j, i) = v;
    }
  }
  return s;
}

}  // namespace

Matrix normalize_rows(const Matrix& raw) {
  Matrix out = raw;
  for (std::size_t i = 0; i < raw.rows(); ++i) {
    const double norm = std::sqrt(dot(raw.row(i), raw.row(i)));
    if (!(norm > 0.0) || !std::isfinite(norm)) {
      throw Error(ErrorKind::kDegenerateVector,
                  "embedding row " + std::to_string(i) + " has zero or non-finite norm");
    }
    for (auto& v : out.row(i)) v /= norm;
  }
  return out;
}

SimilarityMatrix pairwise_cosine(const Matrix& unit_rows, double tolerance) {
  for (std::size_t i = 0; i < unit_rows.rows(); ++i) {
    const double norm = std::sqrt(dot(unit_rows.row(i), unit_rows.row(i)));
    if (std::abs(norm - 1.0) > tolerance) {
      throw Error(ErrorKind::kPrecondition,
                  "row " + std::to_string(i) + " is not unit-normalized");
    }
  }
  return SimilarityMatrix(gram(unit_rows));
}

IndexSets build_index_sets(std::span<const std::int64_t> labels) {
  const std::size_t n = labels.size();
  if (n < 2) throw Error(ErrorKind::kPrecondition, "a batch needs at least 2 items");
  IndexSets sets;
  sets.positives.resize(n);
  sets.negatives.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      (labels[j] == labels[i] ? sets.positives : sets.negatives)[i].push_back(j);
    }
  }
  return sets;
}

MiningOutcome mine_hard_triplets(const Matrix& unit_rows,
                                 std::span<const std::int64_t> labels,
                                 double margin_lambda) {
  const std::size_t n = unit_rows.rows();
  if (labels.size() != n) {
    throw Error(ErrorKind::kPrecondition, "label count does not match embedding rows");
  }
  MiningOutcome out;
  out.all = build_index_sets(labels);
  out.mined.positives.resize(n);
  out.mined.negatives.resize(n);

  std::vector<double> dist(n);
  std::vector<char> pos_used(n);
  std::vector<char> neg_used(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double sq = 0.0;
      const auto a = unit_rows.row(i);
      const auto b = unit_rows.row(j);
      for (std::size_t k = 0; k < a.size(); ++k) sq += (a[k] - b[k]) * (a[k] - b[k]);
      dist[j] = std::sqrt(sq);
    }
    std::fill(pos_used.begin(), pos_used.end(), 0);
    std::fill(neg_used.begin(), neg_used.end(), 0);
    for (const auto p : out.all.positives[i]) {
      for (const auto q : out.all.negatives[i]) {
        if (is_hard_triplet(dist[p], dist[q], margin_lambda)) {
          out.triplets.push_back({i, p, q});
          pos_used[p] = 1;
          neg_used[q] = 1;
        }
      }
    }
    for (std::size_t j = 0; j < n; ++j) {
      if (pos_used[j]) out.mined.positives[i].push_back(j);
      if (neg_used[j]) out.mined.negatives[i].push_back(j);
    }
  }
  return out;
}

double ms_loss(const SimilarityMatrix& similarities, const IndexSets& sets,
               const MSLossParams& params) {
  params.validate();
  return loss_and_similarity_grad(similarities.values(), sets, params, nullptr);
}

LossAndGrad ms_loss_grad(const Matrix& raw_embeddings, const IndexSets& sets,
                         const MSLossParams& params) {
  params.validate();
  const std::size_t n = raw_embeddings.rows();
  const std::size_t d = raw_embeddings.cols();
  const Matrix unit = normalize_rows(raw_embeddings);
  const Matrix s = gram(unit);

  Matrix d_sim(n, n);
  LossAndGrad out;
  out.loss = loss_and_similarity_grad(s, sets, params, &d_sim);

  // dL/du_i = sum_j (G_ij + G_ji) u_j
  Matrix d_unit(n, d);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const double g = d_sim(i, j) + d_sim(j, i);
      if (g == 0.0) continue;
      auto dst = d_unit.row(i);
      const auto src = unit.row(j);
      for (std::size_t k = 0; k < d; ++k) dst[k] += g * src[k];
    }
  }

  // Through u = z / |z|: dL/dz = (g - (g.u) u) / |z|
  out.grad = Matrix(n, d);
  for (std::size_t i = 0; i < n; ++i) {
    const double norm = std::sqrt(dot(raw_embeddings.row(i), raw_embeddings.row(i)));
    const double proj = dot(d_unit.row(i), unit.row(i));
    auto dst = out.grad.row(i);
    for (std::size_t k = 0; k < d; ++k) {
      dst[k] = (d_unit(i, k) - proj * unit(i, k)) / norm;
      if (!std::isfinite(dst[k])) {
        throw Error(ErrorKind::kNumeric, "non-finite gradient");
      }
    }
  }
  return out;
}

}  // namespace belx

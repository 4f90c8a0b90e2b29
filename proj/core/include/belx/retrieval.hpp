#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "belx/encoder.hpp"
#include "belx/kb.hpp"
#include "belx/wikidata.hpp"

namespace belx {

struct IndexedAlias {
  std::string alias;
  std::string cui;
  std::string language;
  std::size_t vector_row = 0;
};

struct RetrievalHit {
  IndexedAlias record;
  double score = 0.0;  // cosine similarity
};

/// Frozen matrix of unit alias embeddings answering exact top-k cosine
/// queries. Immutable after build/load; concurrent searches are safe.
class VectorIndex {
 public:
  /// One row per distinct (alias, cui); later duplicates are dropped and row
  /// order follows input order. Encoder failures name the offending alias.
  static VectorIndex build(std::span<const AliasTuple> aliases, const Encoder& encoder,
                           std::size_t embed_batch = 256);
  static VectorIndex build(const KnowledgeBase& kb, const Encoder& encoder,
                           std::size_t embed_batch = 256);

  /// Takes ownership of precomputed rows (row-major, rows x dimension).
  /// Rows are re-normalized. Throws on shape mismatch.
  static VectorIndex from_rows(std::size_t dimension, std::vector<float> matrix,
                               std::vector<IndexedAlias> records);

  std::size_t dimension() const noexcept { return dimension_; }
  std::size_t size() const noexcept { return records_.size(); }
  const IndexedAlias& record(std::size_t row) const { return records_.at(row); }
  std::span<const float> row(std::size_t r) const {
    return {matrix_.data() + r * dimension_, dimension_};
  }
  std::span<const float> matrix() const noexcept { return matrix_; }

  /// Exactly min(k, size()) hits, score descending, ties by ascending row.
  /// Scores are float32 rows dotted with 64-bit accumulation.
  /// Throws Error(kPrecondition) on dimension mismatch, a non-unit query or k == 0.
  std::vector<RetrievalHit> search(std::span<const float> query, std::size_t k) const;

  /// FNV-1a over the serialized bytes.
  std::uint64_t content_hash() const;

  /// "BELXIDX1", u32 d, u64 M, M x d float32, u64 byte length, JSONL
  /// metadata ({"alias","cui","lang"} per row).
  void save(const std::filesystem::path& path) const;
  static VectorIndex load(const std::filesystem::path& path);

 private:
  std::string serialize() const;

  std::size_t dimension_ = 0;
  std::vector<float> matrix_;
  std::vector<IndexedAlias> records_;
};

struct Candidate {
  std::string cui;
  std::string alias;          // best-scoring alias of this cui
  double score = 0.0;         // s_ret of that alias
  std::size_t alias_rank = 0; // position of that alias among the hits
};

/// C_k(m): distinct CUIs in retrieval order.
struct CandidateSet {
  std::string mention;
  std::vector<Candidate> hits;
  std::size_t k = 0;
};

/// Walks hits in order keeping the first occurrence of each cui until k_cui
/// are collected.
CandidateSet dedup_to_cuis(std::span<const RetrievalHit> hits, std::size_t k_cui);

/// Embeds the mention string alone, searches k_cui * overscan aliases and
/// dedups; doubles the alias budget until k_cui CUIs are found or the whole
/// index has been scanned.
CandidateSet retrieve(const VectorIndex& index, std::string_view mention,
                      const Encoder& encoder, std::size_t k_cui, std::size_t overscan = 4);

/// Same, with a precomputed (unit) mention embedding.
CandidateSet retrieve(const VectorIndex& index, std::string_view mention,
                      std::span<const float> query, std::size_t k_cui,
                      std::size_t overscan = 4);

}  // namespace belx

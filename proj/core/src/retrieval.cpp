#include "belx/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <json.hpp>
#include <set>
#include <sstream>
#include <unordered_set>

#include "belx/error.hpp"
#include "belx/text.hpp"
#include "binary_io.hpp"

namespace belx {

using nlohmann::json;

namespace {

struct AliasEntry {
  std::string alias;
  std::string cui;
  std::string language;
};

std::vector<float> embed_entries(const std::vector<AliasEntry>& entries,
                                 const Encoder& encoder, std::size_t embed_batch) {
  const std::size_t d = encoder.dimension();
  std::vector<float> matrix;
  matrix.reserve(entries.size() * d);
  std::vector<std::string> texts;
  for (std::size_t start = 0; start < entries.size(); start += embed_batch) {
    const std::size_t end = std::min(entries.size(), start + embed_batch);
    texts.clear();
    for (std::size_t i = start; i < end; ++i) texts.push_back(entries[i].alias);
    std::vector<Embedding> vectors;
    try {
      vectors = encoder.embed(texts);
    } catch (const Error& e) {
      // Re-run one by one to name the failing alias.
      for (const auto& t : texts) {
        try {
          encoder.embed_one(t);
        } catch (const Error& inner) {
          throw Error(inner.kind(), "embedding alias '" + t + "' failed: " + inner.what());
        }
      }
      throw;
    }
    for (const auto& v : vectors) matrix.insert(matrix.end(), v.begin(), v.end());
  }
  return matrix;
}

VectorIndex build_from_entries(std::vector<AliasEntry> entries, const Encoder& encoder,
                               std::size_t embed_batch) {
  std::set<std::pair<std::string, std::string>> seen;
  std::vector<AliasEntry> unique;
  for (auto& e : entries) {
    if (e.alias.empty() || e.cui.empty()) {
      throw Error(ErrorKind::kPrecondition, "index entries need a non-empty alias and cui");
    }
    if (seen.emplace(e.alias, e.cui).second) unique.push_back(std::move(e));
  }
  if (unique.empty()) throw Error(ErrorKind::kPrecondition, "cannot index zero aliases");
  auto matrix = embed_entries(unique, encoder, std::max<std::size_t>(1, embed_batch));
  std::vector<IndexedAlias> records;
  records.reserve(unique.size());
  for (std::size_t r = 0; r < unique.size(); ++r) {
    records.push_back({std::move(unique[r].alias), std::move(unique[r].cui),
                       std::move(unique[r].language), r});
  }
  return VectorIndex::from_rows(encoder.dimension(), std::move(matrix), std::move(records));
}

double dot_f32(const float* a, const float* b, std::size_t d) {
  double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
  std::size_t k = 0;
  for (; k + 4 <= d; k += 4) {
    s0 += static_cast<double>(a[k]) * b[k];
    s1 += static_cast<double>(a[k + 1]) * b[k + 1];
    s2 += static_cast<double>(a[k + 2]) * b[k + 2];
    s3 += static_cast<double>(a[k + 3]) * b[k + 3];
  }
  for (; k < d; ++k) s0 += static_cast<double>(a[k]) * b[k];
  return (s0 + s1) + (s2 + s3);
}

}  // namespace

VectorIndex VectorIndex::build(std::span<const AliasTuple> aliases, const Encoder& encoder,
                               std::size_t embed_batch) {
  std::vector<AliasEntry> entries;
  entries.reserve(aliases.size());
  for (const auto& t : aliases) entries.push_back({t.alias, t.cui, t.language});
  return build_from_entries(std::move(entries), encoder, embed_batch);
}

VectorIndex VectorIndex::build(const KnowledgeBase& kb, const Encoder& encoder,
                               std::size_t embed_batch) {
  std::vector<AliasEntry> entries;
  for (const auto& e : kb.entities()) {
    entries.push_back({e.canonical_name, e.cui, "und"});
    for (const auto& a : e.aliases) entries.push_back({a.text, e.cui, a.language});
  }
  return build_from_entries(std::move(entries), encoder, embed_batch);
}

VectorIndex VectorIndex::from_rows(std::size_t dimension, std::vector<float> matrix,
                                   std::vector<IndexedAlias> records) {
  if (dimension == 0 || matrix.size() != dimension * records.size()) {
    throw Error(ErrorKind::kPrecondition, "index matrix shape does not match records");
  }
  VectorIndex index;
  index.dimension_ = dimension;
  index.matrix_ = std::move(matrix);
  index.records_ = std::move(records);
  for (std::size_t r = 0; r < index.records_.size(); ++r) {
    index.records_[r].vector_row = r;
    const std::span<float> row(index.matrix_.data() + r * dimension, dimension);
    const auto unit = l2_normalize(std::span<const float>(row));
    std::copy(unit.begin(), unit.end(), row.begin());
  }
  return index;
}

std::vector<RetrievalHit> VectorIndex::search(std::span<const float> query,
                                              std::size_t k) const {
  if (query.size() != dimension_) {
    throw Error(ErrorKind::kPrecondition,
                "query dimension " + std::to_string(query.size()) +
                    " does not match index dimension " + std::to_string(dimension_));
  }
  if (k == 0) throw Error(ErrorKind::kPrecondition, "k must be >= 1");
  double norm = 0.0;
  for (const float v : query) norm += static_cast<double>(v) * v;
  if (std::abs(std::sqrt(norm) - 1.0) > 1e-4) {
    throw Error(ErrorKind::kPrecondition, "query vector is not unit-normalized");
  }

  const std::size_t m = records_.size();
  std::vector<std::pair<double, std::size_t>> scored(m);
  for (std::size_t r = 0; r < m; ++r) {
    scored[r] = {dot_f32(matrix_.data() + r * dimension_, query.data(), dimension_), r};
  }
  const std::size_t take = std::min(k, m);
  const auto better = [](const auto& a, const auto& b) {
    return a.first > b.first || (a.first == b.first && a.second < b.second);
  };
  std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(take),
                    scored.end(), better);

  std::vector<RetrievalHit> hits;
  hits.reserve(take);
  for (std::size_t i = 0; i < take; ++i) {
    hits.push_back({records_[scored[i].second], scored[i].first});
  }
  return hits;
}

std::string VectorIndex::serialize() const {
  std::ostringstream out(std::ios::binary);
  binary::put_magic(out, "BELXIDX1");
  binary::put<std::uint32_t>(out, static_cast<std::uint32_t>(dimension_));
  binary::put<std::uint64_t>(out, records_.size());
  out.write(reinterpret_cast<const char*>(matrix_.data()),
            static_cast<std::streamsize>(matrix_.size() * sizeof(float)));
  std::string meta;
  for (const auto& r : records_) {
    meta += json{{"alias", r.alias}, {"cui", r.cui}, {"lang", r.language}}.dump();
    meta += '\n';
  }
  binary::put<std::uint64_t>(out, meta.size());
  out.write(meta.data(), static_cast<std::streamsize>(meta.size()));
  return std::move(out).str();
}

std::uint64_t VectorIndex::content_hash() const { return text::fnv1a64(serialize()); }

void VectorIndex::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::kIo, "cannot write " + path.string());
  const auto bytes = serialize();
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorKind::kIo, "failed writing " + path.string());
}

VectorIndex VectorIndex::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kIo, "cannot open index " + path.string());
  binary::expect_magic(in, "BELXIDX1");
  const auto d = binary::get<std::uint32_t>(in, "dimension");
  const auto m = binary::get<std::uint64_t>(in, "row count");
  VectorIndex index;
  index.dimension_ = d;
  index.matrix_.resize(static_cast<std::size_t>(m) * d);
  in.read(reinterpret_cast<char*>(index.matrix_.data()),
          static_cast<std::streamsize>(index.matrix_.size() * sizeof(float)));
  if (static_cast<std::size_t>(in.gcount()) != index.matrix_.size() * sizeof(float)) {
    throw Error(ErrorKind::kFormat, "truncated index matrix in " + path.string());
  }
  const auto meta_len = binary::get<std::uint64_t>(in, "metadata length");
  const auto meta = binary::get_bytes(in, static_cast<std::size_t>(meta_len), "metadata");
  std::size_t row = 0;
  for (const auto line : text::split(meta, '\n')) {
    if (line.empty()) continue;
    try {
      const auto j = json::parse(line);
      index.records_.push_back({j.at("alias").get<std::string>(),
                                j.at("cui").get<std::string>(),
                                j.at("lang").get<std::string>(), row++});
    } catch (const json::exception& ex) {
      throw Error(ErrorKind::kFormat, "index metadata row " + std::to_string(row) + ": " +
                                          ex.what());
    }
  }
  if (index.records_.size() != m) {
    throw Error(ErrorKind::kFormat, "index metadata has " +
                                        std::to_string(index.records_.size()) +
                                        " rows, matrix has " + std::to_string(m));
  }
  return index;
}

CandidateSet dedup_to_cuis(std::span<const RetrievalHit> hits, std::size_t k_cui) {
  CandidateSet out;
  out.k = k_cui;
  std::unordered_set<std::string> seen;
  for (std::size_t rank = 0; rank < hits.size() && out.hits.size() < k_cui; ++rank) {
    const auto& h = hits[rank];
    if (seen.insert(h.record.cui).second) {
      out.hits.push_back({h.record.cui, h.record.alias, h.score, rank});
    }
  }
  return out;
}

CandidateSet retrieve(const VectorIndex& index, std::string_view mention,
                      std::span<const float> query, std::size_t k_cui,
                      std::size_t overscan) {
  if (k_cui == 0) throw Error(ErrorKind::kPrecondition, "k_cui must be >= 1");
  const std::size_t m = index.size();
  std::size_t k_alias = std::min(m, k_cui * std::max<std::size_t>(1, overscan));
  while (true) {
    const auto hits = index.search(query, k_alias);
    auto candidates = dedup_to_cuis(hits, k_cui);
    if (candidates.hits.size() >= k_cui || k_alias >= m) {
      candidates.mention = std::string(mention);
      return candidates;
    }
    k_alias = std::min(m, k_alias * 2);
  }
}

CandidateSet retrieve(const VectorIndex& index, std::string_view mention,
                      const Encoder& encoder, std::size_t k_cui, std::size_t overscan) {
  if (text::trim(mention).empty()) {
    throw Error(ErrorKind::kPrecondition, "mention is empty");
  }
  const auto query = encoder.embed_one(mention);
  return retrieve(index, mention, query, k_cui, overscan);
}

}  // namespace belx

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <istream>
#include <map>
#include <ostream>
#include <set>
#include <string>
#include <unordered_set>
#include <vector>

namespace belx {

struct SiteTriple {
  std::uint64_t qid = 0;
  std::string alias;
  std::string site;

  friend bool operator==(const SiteTriple&, const SiteTriple&) = default;
};

struct AliasTuple {
  std::uint64_t qid = 0;
  std::string alias;
  std::string language;
  std::string cui;

  friend bool operator==(const AliasTuple&, const AliasTuple&) = default;
};

/// All aliases sharing one QID. `members` holds distinct alias strings (first
/// occurrence wins); `raw_count` is the member count before deduplication.
struct PositiveGroup {
  std::uint64_t qid = 0;
  std::vector<AliasTuple> members;
  std::size_t raw_count = 0;

  /// A single distinct alias contributes no positive pair.
  bool single_alias() const noexcept { return members.size() < 2; }
};

// ---------------------------------------------------------------------------
// Sitelink dump parsing

enum class DumpFormat { kAuto, kSql, kTsv };

DumpFormat parse_dump_format(const std::string& name);

struct DumpParseStats {
  DumpFormat format = DumpFormat::kAuto;  // detected format
  std::size_t rows = 0;                   // rows seen, valid or not
  std::size_t triples = 0;
  std::size_t malformed = 0;
};

/// Streams sitelink rows from either the SQL INSERT dump of the items-per-site
/// table or the simplified TSV mirror ("qid\talias\tsite_key"). Aliases are
/// normalized; malformed rows are counted and skipped. Memory use is bounded
/// by the longest input line.
///
/// Throws Error(kPipeline) on stream failure (message carries rows processed)
/// and Error(kFormat) when more than half of the rows are malformed.
DumpParseStats parse_sitelink_dump(
    std::istream& in, DumpFormat format,
    const std::function<void(SiteTriple&&)>& sink);

std::vector<SiteTriple> parse_sitelink_dump(std::istream& in,
                                            DumpFormat format = DumpFormat::kAuto);

// ---------------------------------------------------------------------------
// QID -> CUI mapping

using CuiMapping = std::map<std::uint64_t, std::set<std::string>>;

struct MappingLoad {
  CuiMapping mapping;
  std::size_t rows = 0;
  std::size_t skipped = 0;
};

/// Accepts SPARQL results JSON (variables "item" and "cui") or TSV
/// "qid\tcui". QIDs may be bare integers, "Q42" or entity URIs.
MappingLoad load_cui_mapping(std::istream& in);
MappingLoad load_cui_mapping(const std::filesystem::path& path);

/// Extracts the trailing integer of ".../Q42" or "Q42" or "42"; 0 on failure.
std::uint64_t parse_qid(std::string_view s);

// ---------------------------------------------------------------------------
// Join, filter, group

/// One AliasTuple per (triple, cui); unmapped QIDs are dropped. CUIs for a
/// QID are emitted in ascending order.
std::vector<AliasTuple> join_aliases_with_cuis(const std::vector<SiteTriple>& triples,
                                               const CuiMapping& mapping);
void join_aliases_with_cuis(const SiteTriple& triple, const CuiMapping& mapping,
                            const std::function<void(AliasTuple&&)>& sink);

class EvalMentionSet {
 public:
  EvalMentionSet() = default;
  /// Raw mention surfaces; normalized on insertion.
  explicit EvalMentionSet(const std::vector<std::string>& raw_mentions);

  void insert(std::string_view raw_mention);
  bool contains_alias(std::string_view alias) const;
  std::size_t size() const noexcept { return normalized_.size(); }
  bool empty() const noexcept { return normalized_.empty(); }

 private:
  std::unordered_set<std::string> normalized_;
};

EvalMentionSet load_eval_mentions(std::istream& in);

struct FilterResult {
  std::vector<AliasTuple> kept;
  std::size_t removed = 0;
};

/// Drops tuples whose normalized alias equals a normalized eval mention.
/// Relative order is preserved.
FilterResult filter_eval_overlap(const std::vector<AliasTuple>& tuples,
                                 const EvalMentionSet& eval_mentions);

/// One group per QID, ascending by QID; members keep input order.
std::vector<PositiveGroup> group_positives(const std::vector<AliasTuple>& tuples);

struct ExternalGroupStats {
  std::size_t tuples = 0;
  std::size_t groups = 0;
  std::size_t single_alias_groups = 0;
  std::size_t runs = 0;  // sorted runs spilled to disk
};

/// Out-of-core variant of group_positives over an AliasTuple TSV stream:
/// sorts runs of at most `max_rows_in_memory` tuples by (qid, input order),
/// spills them under `temp_dir`, and k-way merges into groups JSONL. Output is
/// byte-identical to writing group_positives() of the whole input.
ExternalGroupStats group_positives_external(std::istream& tuples_tsv,
                                            std::ostream& groups_jsonl,
                                            std::size_t max_rows_in_memory,
                                            const std::filesystem::path& temp_dir);

// ---------------------------------------------------------------------------
// Statistics

struct LanguageShare {
  std::string language;
  std::size_t count = 0;
  double percent = 0.0;
};

struct CorpusStats {
  std::size_t total = 0;
  std::size_t languages = 0;
  std::size_t distinct_qids = 0;
  std::size_t distinct_cuis = 0;
  std::size_t multi_cui_qids = 0;  // QIDs mapped to more than one CUI
  std::vector<LanguageShare> per_language;  // descending count, then tag

  double percent_of(std::string_view language) const;
};

class CorpusStatsAccumulator {
 public:
  void add(const AliasTuple& t);
  CorpusStats finish() const;

 private:
  std::size_t total_ = 0;
  std::map<std::string, std::size_t> by_language_;
  std::map<std::uint64_t, std::set<std::string>> cuis_by_qid_;
  std::set<std::string> cuis_;
};

CorpusStats corpus_stats(const std::vector<AliasTuple>& tuples);

/// Reference figures for the 2025-12-01 Wikidata dump joined with P2892.
struct ReferenceCorpusStats {
  static constexpr std::size_t kTotalAliases = 3'834'319;
  static constexpr std::size_t kLanguages = 597;
  static constexpr double kEnglishPercent = 6.3;
};

// ---------------------------------------------------------------------------
// File formats

void write_triple_tsv(std::ostream& out, const SiteTriple& t);
void write_tuple_tsv(std::ostream& out, const AliasTuple& t);

/// Reads "qid\talias\tlanguage\tcui" rows. Throws Error(kFormat) on a bad row.
std::vector<AliasTuple> read_tuples_tsv(std::istream& in);
void for_each_tuple_tsv(std::istream& in,
                        const std::function<void(AliasTuple&&)>& sink);
bool parse_tuple_line(std::string_view line, AliasTuple& out);

void write_group_jsonl(std::ostream& out, const PositiveGroup& g);
std::vector<PositiveGroup> read_groups_jsonl(std::istream& in);

}  // namespace belx

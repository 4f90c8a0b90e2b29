#pragma once

#include <cstddef>
#include <filesystem>
#include <istream>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "belx/encoder.hpp"
#include "belx/kb.hpp"
#include "belx/reranker.hpp"
#include "belx/retrieval.hpp"

namespace belx {

struct LinkRecord {
  std::string id;
  DocumentText text;
  MentionSpan span;
  std::string gold_cui;
  std::string language;

  std::string_view mention() const { return span.surface(text); }
};

enum class DatasetFormat { kJsonl, kXlbelTsv };
DatasetFormat parse_dataset_format(std::string_view name);

struct DatasetLoad {
  std::vector<LinkRecord> records;
  std::size_t skipped = 0;
  std::vector<std::string> problems;  // first few skip reasons, "line N: why"
};

/// jsonl: {"id","text","start","end","cui","lang"} per line (byte offsets).
/// xlbel_tsv: "id \t lang \t cui \t mention \t sentence"; the span is the
/// first occurrence of the mention in the sentence.
/// Invalid rows are skipped and counted; zero valid rows is Error(kFormat).
DatasetLoad load_dataset(std::istream& in, DatasetFormat format);
DatasetLoad load_dataset(const std::filesystem::path& path, DatasetFormat format);

/// 100 * |{i : golds[i] in first k of ranked[i]}| / n. Throws
/// Error(kPrecondition) for k == 0, empty input or mismatched lengths.
double recall_at_k(std::span<const std::vector<std::string>> ranked,
                   std::span<const std::string> golds, std::size_t k);

/// Produces C_k(m) for a record.
class CandidateSource {
 public:
  virtual ~CandidateSource() = default;
  virtual CandidateSet candidates(const LinkRecord& record, std::size_t k) const = 0;
  virtual std::string describe() const = 0;
};

/// Embeds the mention alone and searches the index exactly.
class ExactRetriever final : public CandidateSource {
 public:
  ExactRetriever(const VectorIndex& index, const Encoder& encoder, std::size_t overscan = 4);
  CandidateSet candidates(const LinkRecord& record, std::size_t k) const override;
  std::string describe() const override;

 private:
  const VectorIndex& index_;
  const Encoder& encoder_;
  std::size_t overscan_;
};

/// Precomputed hit lists, JSONL {"id": str, "candidates": [cui | {"cui",
/// "alias", "score"}, ...]}, already ranked. Records absent from the file get
/// an empty candidate set.
class FileCandidates final : public CandidateSource {
 public:
  explicit FileCandidates(const std::filesystem::path& path);
  explicit FileCandidates(std::istream& in, std::string name = "stream");
  CandidateSet candidates(const LinkRecord& record, std::size_t k) const override;
  std::string describe() const override { return "candidates-file:" + name_; }

 private:
  void read(std::istream& in);
  std::string name_;
  std::map<std::string, std::vector<Candidate>> by_id_;
};

struct EvalOptions {
  std::vector<std::size_t> k_set = {1, 5, 64};
  std::size_t k_candidates = 64;  // |C_k| handed to the reranker
  const Scorer* scorer = nullptr;  // null: retriever only
  RerankOptions rerank;
  const KnowledgeBase* kb = nullptr;
  std::size_t threads = 1;
  std::map<std::string, std::string> fingerprint;  // extra entries for the report
};

struct RecallRow {
  std::string language;  // "ALL" overall, "Avg" macro average
  std::size_t records = 0;
  std::map<std::size_t, double> retrieval;  // k -> R@k
  double retrieval_at_candidates = 0.0;     // R@k_candidates
  std::optional<double> reranked_r1;
};

struct EvalReport {
  std::map<std::string, std::string> fingerprint;
  std::vector<std::size_t> k_set;
  std::size_t k_candidates = 0;
  std::size_t records = 0;
  std::size_t degraded_records = 0;
  std::size_t scoring_failures = 0;
  RecallRow overall;
  std::vector<RecallRow> per_language;  // ascending tag
  RecallRow average;                    // unweighted mean over per_language
};

struct PredictionRow {
  std::string id;
  std::vector<std::string> retrieved;
  std::optional<std::vector<std::string>> reranked;
  std::string gold;

  friend bool operator==(const PredictionRow&, const PredictionRow&) = default;
};

struct LinkStats {
  std::size_t degraded_records = 0;
  std::size_t scoring_failures = 0;
};

struct EvalResult {
  EvalReport report;
  std::vector<PredictionRow> predictions;
  LinkStats stats;
};

/// Retrieves C_k for every record in input order.
std::vector<CandidateSet> collect_candidates(std::span<const LinkRecord> records,
                                             const CandidateSource& source, std::size_t k,
                                             std::size_t threads = 1);

/// Prediction rows for precomputed candidate sets; reranks the first
/// k_candidates of each set when options.scorer is set.
std::vector<PredictionRow> link_records(std::span<const LinkRecord> records,
                                        std::span<const CandidateSet> candidates,
                                        const EvalOptions& options, LinkStats* stats = nullptr);

/// Recall table from prediction rows (matched to records by position and id).
/// Checks recall monotonicity in k and the bound reranked R@1 <=
/// R@k_candidates overall and per language; a violation is Error(kInvariant).
EvalReport build_report(std::span<const LinkRecord> records,
                        std::span<const PredictionRow> predictions, const EvalOptions& options,
                        std::size_t degraded_records = 0, std::size_t scoring_failures = 0);

/// Scores precomputed candidate sets. Checks recall monotonicity in k and the
/// bound reranked R@1 <= R@k_candidates overall and per language; a
/// violation is Error(kInvariant).
EvalResult evaluate_candidates(std::span<const LinkRecord> records,
                               std::span<const CandidateSet> candidates,
                               const EvalOptions& options);

EvalResult evaluate(std::span<const LinkRecord> records, const CandidateSource& source,
                    const EvalOptions& options);

/// Throws Error(kInvariant) when a row breaks monotonicity or the upper bound.
void check_report_invariants(const EvalReport& report);

std::string report_to_json(const EvalReport& report);
std::string format_report_table(const EvalReport& report);

void write_predictions(std::ostream& out, std::span<const PredictionRow> rows);
std::vector<PredictionRow> read_predictions(std::istream& in);

struct AblationAxes {
  std::vector<std::string> retrievers;  // names of the supplied sources
  std::vector<MarkerStyle> markers = {MarkerStyle::kTgt};
  std::vector<DocumentFields> fields = {DocumentFields::kNameOnly};
};

struct AblationCell {
  std::string retriever;
  MarkerStyle marker = MarkerStyle::kTgt;
  DocumentFields fields = DocumentFields::kNameOnly;
  std::optional<EvalReport> report;
  std::string error;
};

struct AblationResult {
  std::vector<AblationCell> cells;
};

/// One evaluation per (retriever, marker, fields) cell. Candidate sets are
/// computed once per retriever and shared by its cells. A failing cell
/// records its error and the rest proceed.
AblationResult run_ablation(std::span<const LinkRecord> records,
                            const std::map<std::string, const CandidateSource*>& sources,
                            const AblationAxes& axes, const EvalOptions& base);

std::string format_ablation_table(const AblationResult& result);
std::string ablation_to_json(const AblationResult& result);

}  // namespace belx

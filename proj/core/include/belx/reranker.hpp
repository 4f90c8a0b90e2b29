#pragma once

#include <chrono>
#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "belx/http.hpp"
#include "belx/kb.hpp"
#include "belx/retrieval.hpp"

namespace belx {

enum class MarkerStyle { kTgt, kMentionTag, kAsterisk, kNone };

/// "tgt", "mention_tag", "asterisk", "none".
MarkerStyle parse_marker_style(std::string_view name);
std::string_view to_string(MarkerStyle style);

struct MarkerPair {
  std::string_view open;
  std::string_view close;
};
MarkerPair marker_pair(MarkerStyle style);

enum class DocumentFields { kNameOnly, kNameType, kNameTypeDescription };

/// "name", "name_type", "name_type_description" (also "n", "n+t", "n+t+d").
DocumentFields parse_document_fields(std::string_view name);
std::string_view to_string(DocumentFields fields);

/// Which alias names the candidate in its document.
enum class DocAlias { kRetrieved, kCanonical };
DocAlias parse_doc_alias(std::string_view name);
std::string_view to_string(DocAlias alias);

/// Context window around the span with the mention wrapped in markers.
/// window_chars = 0 keeps the whole text; otherwise up to window_chars code
/// points are kept on each side. Throws Error(kPrecondition) on a bad span.
std::string build_query(const DocumentText& doc, MentionSpan span, MarkerStyle style,
                        std::size_t window_chars = 0);

/// name_only: the alias. name_type: "alias | type: T" when T is known.
/// name_type_description: additionally " | description: D" when D is known.
/// `entity` may be null, in which case only the alias is used.
std::string build_document(const EntityRecord* entity, std::string_view chosen_alias,
                           DocumentFields fields);

struct PromptTemplate {
  std::string id;
  std::string instruction;
  std::string text;  // holds {instruction}, {query} and {document} once each
};

inline constexpr std::string_view kDefaultTemplateId = "qwen3-yes-no";
extern const std::string kDefaultInstruction;

class PromptRegistry {
 public:
  /// Registry holding the built-in templates.
  PromptRegistry();

  /// Throws Error(kConfig) unless each placeholder occurs exactly once, or
  /// when the id is taken.
  void add(PromptTemplate tmpl);
  const PromptTemplate& get(std::string_view id) const;
  std::vector<std::string> ids() const;

 private:
  std::map<std::string, PromptTemplate, std::less<>> templates_;
};

const PromptRegistry& builtin_prompts();

struct PromptInput {
  std::string instruction;
  std::string query;
  std::string document;
  std::string assembled;
};

/// Single-pass placeholder substitution, so text inside the query or
/// document is never re-expanded. Unknown ids throw Error(kConfig).
PromptInput assemble_prompt(const PromptRegistry& registry, std::string_view template_id,
                            std::string query, std::string document);
PromptInput assemble_prompt(std::string_view template_id, std::string query,
                            std::string document);

struct ScorerResponse {
  double yes_logit = 0.0;
  double no_logit = 0.0;
};

/// exp(y) / (exp(y) + exp(n)) evaluated as 1 / (1 + exp(n - y)).
/// Throws Error(kPrecondition) on non-finite logits.
double softmax_yes(const ScorerResponse& response);

/// Character-trigram Jaccard over code points. A string shorter than three
/// code points counts as a single gram.
double trigram_jaccard(std::string_view a, std::string_view b);

struct ScoreItem {
  std::string record_id;
  std::string cui;
  std::string mention;  // bare mention surface
  PromptInput prompt;
};

struct ScoreOutcome {
  std::optional<ScorerResponse> response;
  std::string error;  // set when response is empty
};

class Scorer {
 public:
  virtual ~Scorer() = default;
  /// One outcome per item, in order. Per-item failures are reported in the
  /// outcome rather than thrown.
  virtual std::vector<ScoreOutcome> score(std::span<const ScoreItem> items) const = 0;
  virtual std::string describe() const = 0;
};

/// yes = 4 * J(mention, document) - 2, no = 0.
class MockScorer final : public Scorer {
 public:
  std::vector<ScoreOutcome> score(std::span<const ScoreItem> items) const override;
  std::string describe() const override { return "mock"; }
};

/// Awards yes = 1, no = 0 to the gold (record, cui) pair and yes = no = 0
/// otherwise. Test oracle for the reranking upper bound.
class GoldScorer final : public Scorer {
 public:
  explicit GoldScorer(std::map<std::string, std::string> gold_by_record);
  std::vector<ScoreOutcome> score(std::span<const ScoreItem> items) const override;
  std::string describe() const override { return "gold"; }

 private:
  std::map<std::string, std::string> gold_;
};

struct HttpScorerConfig {
  std::string url;
  RetryPolicy retry;
  std::chrono::milliseconds timeout{30000};
  std::size_t max_in_flight = 4;
  bool use_batch_endpoint = false;
  std::size_t batch_size = 16;
};

/// POST /score {"instruction","query","document"} -> {"yes_logit","no_logit"},
/// or POST /score_batch {"items": [...]} -> {"results": [...]}.
class HttpScorer final : public Scorer {
 public:
  explicit HttpScorer(HttpScorerConfig config);
  std::vector<ScoreOutcome> score(std::span<const ScoreItem> items) const override;
  std::string describe() const override;

 private:
  HttpScorerConfig config_;
  HttpEndpoint endpoint_;
};

struct RerankOptions {
  MarkerStyle marker = MarkerStyle::kTgt;
  DocumentFields fields = DocumentFields::kNameOnly;
  DocAlias doc_alias = DocAlias::kRetrieved;
  std::string template_id{kDefaultTemplateId};
  std::size_t window_chars = 0;
};

struct RankedCandidate {
  std::string cui;
  std::string alias;
  double s_rank = 0.0;
  std::size_t retrieval_rank = 0;  // position in the candidate set
  std::string error;               // non-empty when scoring failed
};

struct RankedPrediction {
  std::vector<RankedCandidate> ranked;  // s_rank descending, ties by retrieval rank
  std::string top1;
  bool degraded = false;
  std::size_t failures = 0;
};

/// Builds one prompt per candidate, scores them, and sorts. Candidates whose
/// scoring failed get s_rank = -inf and sink. Throws Error(kPrecondition)
/// for an empty candidate set and Error(kPipeline) when every candidate failed.
RankedPrediction rerank(const CandidateSet& candidates, const DocumentText& doc,
                        MentionSpan span, const RerankOptions& options, const Scorer& scorer,
                        const KnowledgeBase* kb = nullptr, std::string_view record_id = {},
                        const PromptRegistry& prompts = builtin_prompts());

/// Orders already-scored candidates: s_rank descending, retrieval rank ascending.
void sort_ranked(std::vector<RankedCandidate>& ranked);

}  // namespace belx

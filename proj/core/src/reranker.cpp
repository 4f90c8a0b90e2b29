#include "belx/reranker.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <json.hpp>
#include <limits>
#include <set>

#include "belx/error.hpp"
#include "belx/text.hpp"

namespace belx {

using nlohmann::json;

const std::string kDefaultInstruction =
    "Given the query with a highlighted target mention, judge whether the document names "
    "the concept the mention refers to. Answer yes or no.";

MarkerStyle parse_marker_style(std::string_view name) {
  if (name == "tgt") return MarkerStyle::kTgt;
  if (name == "mention_tag" || name == "mention") return MarkerStyle::kMentionTag;
  if (name == "asterisk") return MarkerStyle::kAsterisk;
  if (name == "none") return MarkerStyle::kNone;
  throw Error(ErrorKind::kConfig, "unknown marker style '" + std::string(name) + "'");
}

std::string_view to_string(MarkerStyle style) {
  switch (style) {
    case MarkerStyle::kTgt: return "tgt";
    case MarkerStyle::kMentionTag: return "mention_tag";
    case MarkerStyle::kAsterisk: return "asterisk";
    case MarkerStyle::kNone: return "none";
  }
  return "?";
}

MarkerPair marker_pair(MarkerStyle style) {
  switch (style) {
    case MarkerStyle::kTgt: return {"<tgt>", "</tgt>"};
    case MarkerStyle::kMentionTag: return {"<mention>", "</mention>"};
    case MarkerStyle::kAsterisk: return {"*", "*"};
    case MarkerStyle::kNone: return {"", ""};
  }
  return {"", ""};
}

DocumentFields parse_document_fields(std::string_view name) {
  if (name == "name" || name == "name_only" || name == "n") return DocumentFields::kNameOnly;
  if (name == "name_type" || name == "n+t") return DocumentFields::kNameType;
  if (name == "name_type_description" || name == "n+t+d") {
    return DocumentFields::kNameTypeDescription;
  }
  throw Error(ErrorKind::kConfig, "unknown document fields '" + std::string(name) + "'");
}

std::string_view to_string(DocumentFields fields) {
  switch (fields) {
    case DocumentFields::kNameOnly: return "name";
    case DocumentFields::kNameType: return "name_type";
    case DocumentFields::kNameTypeDescription: return "name_type_description";
  }
  return "?";
}

DocAlias parse_doc_alias(std::string_view name) {
  if (name == "retrieved") return DocAlias::kRetrieved;
  if (name == "canonical") return DocAlias::kCanonical;
  throw Error(ErrorKind::kConfig, "unknown doc alias '" + std::string(name) + "'");
}

std::string_view to_string(DocAlias alias) {
  return alias == DocAlias::kRetrieved ? "retrieved" : "canonical";
}

namespace {

std::size_t step_back(std::string_view s, std::size_t pos, std::size_t chars) {
  while (chars > 0 && pos > 0) {
    --pos;
    while (pos > 0 && !text::is_char_boundary(s, pos)) --pos;
    --chars;
  }
  return pos;
}

std::size_t step_forward(std::string_view s, std::size_t pos, std::size_t chars) {
  while (chars > 0 && pos < s.size()) {
    ++pos;
    while (pos < s.size() && !text::is_char_boundary(s, pos)) ++pos;
    --chars;
  }
  return pos;
}

}  // namespace

std::string build_query(const DocumentText& doc, MentionSpan span, MarkerStyle style,
                        std::size_t window_chars) {
  if (!MentionSpan::valid_in(doc, span.start, span.end)) {
    throw Error(ErrorKind::kPrecondition, "mention span [" + std::to_string(span.start) + ", " +
                                              std::to_string(span.end) + ") is invalid in " +
                                              doc.id());
  }
  const std::string_view t = doc.text();
  std::size_t left = 0;
  std::size_t right = t.size();
  if (window_chars > 0) {
    left = step_back(t, span.start, window_chars);
    right = step_forward(t, span.end, window_chars);
  }
  const auto [open, close] = marker_pair(style);
  std::string out;
  out.reserve(right - left + open.size() + close.size());
  out += t.substr(left, span.start - left);
  out += open;
  out += t.substr(span.start, span.end - span.start);
  out += close;
  out += t.substr(span.end, right - span.end);
  return out;
}

std::string build_document(const EntityRecord* entity, std::string_view chosen_alias,
                           DocumentFields fields) {
  if (chosen_alias.empty()) throw Error(ErrorKind::kPrecondition, "document alias is empty");
  std::string out(chosen_alias);
  if (entity == nullptr || fields == DocumentFields::kNameOnly) return out;
  if (entity->semantic_type && !entity->semantic_type->empty()) {
    out += " | type: " + *entity->semantic_type;
  }
  if (fields == DocumentFields::kNameTypeDescription && entity->description &&
      !entity->description->empty()) {
    out += " | description: " + *entity->description;
  }
  return out;
}

namespace {

constexpr std::array<std::string_view, 3> kPlaceholders = {"{instruction}", "{query}",
                                                           "{document}"};

std::size_t count_occurrences(std::string_view haystack, std::string_view needle) {
  std::size_t n = 0;
  for (auto pos = haystack.find(needle); pos != std::string_view::npos;
       pos = haystack.find(needle, pos + needle.size())) {
    ++n;
  }
  return n;
}

}  // namespace

PromptRegistry::PromptRegistry() {
  add({std::string(kDefaultTemplateId), kDefaultInstruction,
       "<|im_start|>system\nJudge whether the Document meets the requirements based on the "
       "Query and the Instruct provided. Note that the answer can only be \"yes\" or "
       "\"no\".<|im_end|>\n<|im_start|>user\n<Instruct>: {instruction}\n<Query>: "
       "{query}\n<Document>: {document}<|im_end|>\n<|im_start|>assistant\n<think>\n\n"
       "</think>\n\n"});
  add({"plain", kDefaultInstruction,
       "{instruction}\nQuery: {query}\nDocument: {document}\nAnswer:"});
}

void PromptRegistry::add(PromptTemplate tmpl) {
  if (tmpl.id.empty()) throw Error(ErrorKind::kConfig, "template id is empty");
  for (const auto p : kPlaceholders) {
    const auto n = count_occurrences(tmpl.text, p);
    if (n != 1) {
      throw Error(ErrorKind::kConfig, "template '" + tmpl.id + "' must contain " +
                                          std::string(p) + " exactly once (found " +
                                          std::to_string(n) + ")");
    }
  }
  auto id = tmpl.id;
  if (!templates_.emplace(id, std::move(tmpl)).second) {
    throw Error(ErrorKind::kConfig, "template '" + id + "' is already registered");
  }
}

const PromptTemplate& PromptRegistry::get(std::string_view id) const {
  const auto it = templates_.find(id);
  if (it == templates_.end()) {
    throw Error(ErrorKind::kConfig, "unknown prompt template '" + std::string(id) + "'");
  }
  return it->second;
}

std::vector<std::string> PromptRegistry::ids() const {
  std::vector<std::string> out;
  for (const auto& [id, t] : templates_) out.push_back(id);
  return out;
}

const PromptRegistry& builtin_prompts() {
  static const PromptRegistry registry;
  return registry;
}

PromptInput assemble_prompt(const PromptRegistry& registry, std::string_view template_id,
                            std::string query, std::string document) {
  const auto& tmpl = registry.get(template_id);
  PromptInput out{tmpl.instruction, std::move(query), std::move(document), {}};
  const std::string_view src = tmpl.text;
  std::size_t pos = 0;
  while (pos < src.size()) {
    std::size_t best = std::string_view::npos;
    std::size_t which = 0;
    for (std::size_t k = 0; k < kPlaceholders.size(); ++k) {
      const auto at = src.find(kPlaceholders[k], pos);
      if (at < best) {
        best = at;
        which = k;
      }
    }
    if (best == std::string_view::npos) {
      out.assembled += src.substr(pos);
      break;
    }
    out.assembled += src.substr(pos, best - pos);
    out.assembled += which == 0 ? out.instruction : which == 1 ? out.query : out.document;
    pos = best + kPlaceholders[which].size();
  }
  return out;
}

PromptInput assemble_prompt(std::string_view template_id, std::string query,
                            std::string document) {
  return assemble_prompt(builtin_prompts(), template_id, std::move(query),
                         std::move(document));
}

double softmax_yes(const ScorerResponse& r) {
  if (!std::isfinite(r.yes_logit) || !std::isfinite(r.no_logit)) {
    throw Error(ErrorKind::kPrecondition, "scorer logits must be finite");
  }
  return 1.0 / (1.0 + std::exp(r.no_logit - r.yes_logit));
}

double trigram_jaccard(std::string_view a, std::string_view b) {
  const auto grams = [](std::string_view s) {
    const auto cps = text::decode_utf8(s);
    std::set<std::u32string> out;
    if (cps.size() < 3) {
      out.insert(cps);
    } else {
      for (std::size_t i = 0; i + 3 <= cps.size(); ++i) out.insert(cps.substr(i, 3));
    }
    return out;
  };
  const auto ga = grams(a);
  const auto gb = grams(b);
  std::size_t common = 0;
  for (const auto& g : ga) common += gb.count(g);
  const std::size_t uni = ga.size() + gb.size() - common;
  return uni == 0 ? 0.0 : static_cast<double>(common) / static_cast<double>(uni);
}

std::vector<ScoreOutcome> MockScorer::score(std::span<const ScoreItem> items) const {
  std::vector<ScoreOutcome> out;
  out.reserve(items.size());
  for (const auto& item : items) {
    const double j = trigram_jaccard(item.mention, item.prompt.document);
    out.push_back({ScorerResponse{4.0 * j - 2.0, 0.0}, {}});
  }
  return out;
}

GoldScorer::GoldScorer(std::map<std::string, std::string> gold_by_record)
    : gold_(std::move(gold_by_record)) {}

std::vector<ScoreOutcome> GoldScorer::score(std::span<const ScoreItem> items) const {
  std::vector<ScoreOutcome> out;
  out.reserve(items.size());
  for (const auto& item : items) {
    const auto it = gold_.find(item.record_id);
    const bool gold = it != gold_.end() && it->second == item.cui;
    out.push_back({ScorerResponse{gold ? 1.0 : 0.0, 0.0}, {}});
  }
  return out;
}

HttpScorer::HttpScorer(HttpScorerConfig config)
    : config_(std::move(config)), endpoint_(HttpEndpoint::parse(config_.url)) {}

std::string HttpScorer::describe() const { return "http:" + config_.url; }

namespace {

json request_body(const ScoreItem& item) {
  return {{"instruction", item.prompt.instruction},
          {"query", item.prompt.query},
          {"document", item.prompt.document}};
}

ScorerResponse parse_response(const json& j) {
  ScorerResponse r{j.at("yes_logit").get<double>(), j.at("no_logit").get<double>()};
  if (!std::isfinite(r.yes_logit) || !std::isfinite(r.no_logit)) {
    throw Error(ErrorKind::kFormat, "scorer returned non-finite logits");
  }
  return r;
}

}  // namespace

std::vector<ScoreOutcome> HttpScorer::score(std::span<const ScoreItem> items) const {
  const JsonHttpClient client(endpoint_, config_.retry, config_.timeout);
  std::vector<ScoreOutcome> out(items.size());
  const std::size_t chunk =
      config_.use_batch_endpoint ? std::max<std::size_t>(1, config_.batch_size) : 1;
  const std::size_t chunks = (items.size() + chunk - 1) / chunk;

  run_bounded(chunks, config_.max_in_flight, [&](std::size_t c) {
    const std::size_t begin = c * chunk;
    const std::size_t end = std::min(items.size(), begin + chunk);
    try {
      if (config_.use_batch_endpoint) {
        json req = {{"items", json::array()}};
        for (std::size_t i = begin; i < end; ++i) req["items"].push_back(request_body(items[i]));
        const auto res = json::parse(client.post("/score_batch", req.dump()));
        const auto& results = res.at("results");
        if (!results.is_array() || results.size() != end - begin) {
          throw Error(ErrorKind::kFormat, "/score_batch returned the wrong number of results");
        }
        for (std::size_t i = begin; i < end; ++i) {
          out[i].response = parse_response(results[i - begin]);
        }
      } else {
        const auto res = json::parse(client.post("/score", request_body(items[begin]).dump()));
        out[begin].response = parse_response(res);
      }
    } catch (const std::exception& ex) {
      for (std::size_t i = begin; i < end; ++i) {
        out[i].response.reset();
        out[i].error = ex.what();
      }
    }
  });
  return out;
}

void sort_ranked(std::vector<RankedCandidate>& ranked) {
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const RankedCandidate& a, const RankedCandidate& b) {
                     if (a.s_rank != b.s_rank) return a.s_rank > b.s_rank;
                     return a.retrieval_rank < b.retrieval_rank;
                   });
}

RankedPrediction rerank(const CandidateSet& candidates, const DocumentText& doc,
                        MentionSpan span, const RerankOptions& options, const Scorer& scorer,
                        const KnowledgeBase* kb, std::string_view record_id,
                        const PromptRegistry& prompts) {
  if (candidates.hits.empty()) {
    throw Error(ErrorKind::kPrecondition, "cannot rerank an empty candidate set");
  }
  const auto query = build_query(doc, span, options.marker, options.window_chars);
  const std::string mention(span.surface(doc));

  std::vector<ScoreItem> items;
  items.reserve(candidates.hits.size());
  for (const auto& c : candidates.hits) {
    const EntityRecord* entity = kb ? kb->find(c.cui) : nullptr;
    const std::string& alias =
        options.doc_alias == DocAlias::kCanonical && entity ? entity->canonical_name : c.alias;
    items.push_back({std::string(record_id), c.cui, mention,
                     assemble_prompt(prompts, options.template_id, query,
                                     build_document(entity, alias, options.fields))});
  }

  const auto outcomes = scorer.score(items);
  if (outcomes.size() != items.size()) {
    throw Error(ErrorKind::kInvariant, "scorer returned the wrong number of outcomes");
  }

  RankedPrediction pred;
  pred.ranked.reserve(items.size());
  for (std::size_t r = 0; r < items.size(); ++r) {
    RankedCandidate rc{candidates.hits[r].cui, candidates.hits[r].alias, 0.0, r, {}};
    if (outcomes[r].response) {
      rc.s_rank = softmax_yes(*outcomes[r].response);
    } else {
      rc.s_rank = -std::numeric_limits<double>::infinity();
      rc.error = outcomes[r].error.empty() ? "scoring failed" : outcomes[r].error;
      ++pred.failures;
    }
    pred.ranked.push_back(std::move(rc));
  }
  if (pred.failures == pred.ranked.size()) {
    throw Error(ErrorKind::kPipeline, "every candidate failed scoring for '" +
                                          std::string(record_id) +
                                          "': " + pred.ranked.front().error);
  }
  pred.degraded = pred.failures > 0;
  sort_ranked(pred.ranked);
  pred.top1 = pred.ranked.front().cui;
  return pred;
}

}  // namespace belx

#include "belx/eval.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <json.hpp>
#include <set>
#include <sstream>

#include "belx/error.hpp"
#include "belx/text.hpp"

namespace belx {

using nlohmann::json;
using ordered_json = nlohmann::ordered_json;

DatasetFormat parse_dataset_format(std::string_view name) {
  if (name == "jsonl") return DatasetFormat::kJsonl;
  if (name == "xlbel_tsv" || name == "xlbel") return DatasetFormat::kXlbelTsv;
  throw Error(ErrorKind::kConfig, "unknown dataset format '" + std::string(name) + "'");
}

namespace {

constexpr std::size_t kMaxProblems = 20;

std::string trimmed(std::string_view s) { return std::string(text::trim(s)); }

std::optional<LinkRecord> make_record(std::string id, std::string text, std::size_t start,
                                      std::size_t end, std::string cui, std::string lang,
                                      std::string& why) {
  cui = trimmed(cui);
  if (id.empty()) {
    why = "empty id";
    return std::nullopt;
  }
  if (cui.empty()) {
    why = "empty cui";
    return std::nullopt;
  }
  if (text.empty() || !text::is_valid_utf8(text)) {
    why = "empty or invalid UTF-8 text";
    return std::nullopt;
  }
  DocumentText doc(std::move(id), std::move(text));
  if (!MentionSpan::valid_in(doc, start, end)) {
    why = "invalid span [" + std::to_string(start) + ", " + std::to_string(end) + ")";
    return std::nullopt;
  }
  auto record_id = doc.id();
  return LinkRecord{std::move(record_id), std::move(doc), MentionSpan{start, end},
                    std::move(cui), std::move(lang)};
}

}  // namespace

DatasetLoad load_dataset(std::istream& in, DatasetFormat format) {
  DatasetLoad out;
  std::string line;
  std::size_t line_no = 0;
  const auto skip = [&](const std::string& why) {
    ++out.skipped;
    if (out.problems.size() < kMaxProblems) {
      out.problems.push_back("line " + std::to_string(line_no) + ": " + why);
    }
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (text::trim(line).empty()) continue;
    std::string why;
    std::optional<LinkRecord> rec;
    if (format == DatasetFormat::kJsonl) {
      try {
        const auto j = json::parse(line);
        const auto start = j.at("start").get<std::int64_t>();
        const auto end = j.at("end").get<std::int64_t>();
        if (start < 0 || end <= start) {
          why = "end <= start";
        } else {
          rec = make_record(j.at("id").get<std::string>(), j.at("text").get<std::string>(),
                            static_cast<std::size_t>(start), static_cast<std::size_t>(end),
                            j.at("cui").get<std::string>(), j.value("lang", std::string("und")),
                            why);
        }
      } catch (const json::exception& ex) {
        why = ex.what();
      }
    } else {
      const auto f = text::split(line, '\t');
      if (f.size() != 5) {
        why = "expected 5 tab-separated fields, got " + std::to_string(f.size());
      } else {
        const std::string sentence(f[4]);
        const std::string mention(f[3]);
        const auto at = mention.empty() ? std::string::npos : sentence.find(mention);
        if (at == std::string::npos) {
          why = "mention not found in sentence";
        } else {
          rec = make_record(std::string(f[0]), sentence, at, at + mention.size(),
                            std::string(f[2]), std::string(f[1]), why);
        }
      }
    }
    if (rec) {
      out.records.push_back(std::move(*rec));
    } else {
      skip(why);
    }
  }
  if (in.bad()) throw Error(ErrorKind::kIo, "read error in dataset");
  if (out.records.empty()) {
    throw Error(ErrorKind::kFormat, "dataset has no valid records (" +
                                        std::to_string(out.skipped) + " skipped)");
  }
  return out;
}

DatasetLoad load_dataset(const std::filesystem::path& path, DatasetFormat format) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kIo, "cannot open dataset " + path.string());
  try {
    return load_dataset(in, format);
  } catch (const Error& e) {
    throw Error(e.kind(), path.string() + ": " + e.what());
  }
}

double recall_at_k(std::span<const std::vector<std::string>> ranked,
                   std::span<const std::string> golds, std::size_t k) {
  if (k == 0) throw Error(ErrorKind::kPrecondition, "k must be >= 1");
  if (ranked.empty()) throw Error(ErrorKind::kPrecondition, "no results to score");
  if (ranked.size() != golds.size()) {
    throw Error(ErrorKind::kPrecondition, "result and gold counts differ");
  }
  std::size_t hits = 0;
  for (std::size_t i = 0; i < ranked.size(); ++i) {
    const auto& list = ranked[i];
    const auto end = list.begin() + static_cast<std::ptrdiff_t>(std::min(k, list.size()));
    const auto gold = text::trim(golds[i]);
    if (std::any_of(list.begin(), end, [&](const std::string& c) { return text::trim(c) == gold; })) {
      ++hits;
    }
  }
  return 100.0 * static_cast<double>(hits) / static_cast<double>(ranked.size());
}

// ---------------------------------------------------------------------------

ExactRetriever::ExactRetriever(const VectorIndex& index, const Encoder& encoder,
                               std::size_t overscan)
    : index_(index), encoder_(encoder), overscan_(overscan) {}

CandidateSet ExactRetriever::candidates(const LinkRecord& record, std::size_t k) const {
  return retrieve(index_, record.mention(), encoder_, k, overscan_);
}

std::string ExactRetriever::describe() const {
  return "exact:" + encoder_.describe() + ":" + text::hex64(index_.content_hash());
}

FileCandidates::FileCandidates(const std::filesystem::path& path) : name_(path.filename().string()) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kIo, "cannot open candidates file " + path.string());
  read(in);
}

FileCandidates::FileCandidates(std::istream& in, std::string name) : name_(std::move(name)) {
  read(in);
}

void FileCandidates::read(std::istream& in) {
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (text::trim(line).empty()) continue;
    try {
      const auto j = json::parse(line);
      std::vector<Candidate> list;
      std::set<std::string> seen;
      std::size_t rank = 0;
      for (const auto& c : j.at("candidates")) {
        Candidate cand;
        if (c.is_string()) {
          cand.cui = c.get<std::string>();
          cand.alias = cand.cui;
        } else {
          cand.cui = c.at("cui").get<std::string>();
          cand.alias = c.value("alias", cand.cui);
          cand.score = c.value("score", 0.0);
        }
        cand.alias_rank = rank++;
        if (cand.cui.empty() || !seen.insert(cand.cui).second) continue;
        list.push_back(std::move(cand));
      }
      by_id_[j.at("id").get<std::string>()] = std::move(list);
    } catch (const json::exception& ex) {
      throw Error(ErrorKind::kFormat, "candidates " + name_ + " line " +
                                          std::to_string(line_no) + ": " + ex.what());
    }
  }
}

CandidateSet FileCandidates::candidates(const LinkRecord& record, std::size_t k) const {
  CandidateSet out;
  out.mention = std::string(record.mention());
  out.k = k;
  const auto it = by_id_.find(record.id);
  if (it == by_id_.end()) return out;
  const auto n = std::min(k, it->second.size());
  out.hits.assign(it->second.begin(), it->second.begin() + static_cast<std::ptrdiff_t>(n));
  return out;
}

// ---------------------------------------------------------------------------

std::vector<CandidateSet> collect_candidates(std::span<const LinkRecord> records,
                                             const CandidateSource& source, std::size_t k,
                                             std::size_t threads) {
  std::vector<CandidateSet> out(records.size());
  run_bounded(records.size(), std::max<std::size_t>(1, threads),
              [&](std::size_t i) { out[i] = source.candidates(records[i], k); });
  return out;
}

namespace {

RecallRow make_row(std::string language, const std::vector<std::size_t>& idx,
                   const std::vector<PredictionRow>& preds, const EvalOptions& options,
                   bool reranked) {
  RecallRow row;
  row.language = std::move(language);
  row.records = idx.size();
  std::vector<std::vector<std::string>> retrieved;
  std::vector<std::vector<std::string>> rr;
  std::vector<std::string> golds;
  for (const auto i : idx) {
    retrieved.push_back(preds[i].retrieved);
    golds.push_back(preds[i].gold);
    if (reranked) rr.push_back(*preds[i].reranked);
  }
  for (const auto k : options.k_set) row.retrieval[k] = recall_at_k(retrieved, golds, k);
  row.retrieval_at_candidates = recall_at_k(retrieved, golds, options.k_candidates);
  if (reranked) row.reranked_r1 = recall_at_k(rr, golds, 1);
  return row;
}

std::string format_value(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f", v);
  return buf;
}

}  // namespace

void check_report_invariants(const EvalReport& report) {
  std::vector<const RecallRow*> rows{&report.overall, &report.average};
  for (const auto& r : report.per_language) rows.push_back(&r);
  for (const auto* r : rows) {
    double prev = -1.0;
    for (const auto& [k, v] : r->retrieval) {
      if (v < 0.0 || v > 100.0) {
        throw Error(ErrorKind::kInvariant, "R@" + std::to_string(k) + " out of range for " +
                                               r->language);
      }
      if (v + 1e-9 < prev) {
        throw Error(ErrorKind::kInvariant, "recall is not monotone in k for " + r->language);
      }
      prev = v;
    }
    if (r->reranked_r1 && *r->reranked_r1 > r->retrieval_at_candidates + 1e-9) {
      throw Error(ErrorKind::kInvariant,
                  "reranked R@1 " + format_value(*r->reranked_r1) + " exceeds retrieval R@" +
                      std::to_string(report.k_candidates) + " " +
                      format_value(r->retrieval_at_candidates) + " for " + r->language);
    }
  }
}

namespace {

void fill_fingerprint(EvalReport& report, const EvalOptions& options, bool reranking) {
  report.fingerprint = options.fingerprint;
  report.fingerprint["k_candidates"] = std::to_string(options.k_candidates);
  if (reranking && options.scorer) {
    report.fingerprint["scorer"] = options.scorer->describe();
  } else if (!reranking) {
    report.fingerprint["scorer"] = "none";
  }
  if (reranking) {
    report.fingerprint["marker"] = std::string(to_string(options.rerank.marker));
    report.fingerprint["fields"] = std::string(to_string(options.rerank.fields));
    report.fingerprint["template"] = options.rerank.template_id;
    report.fingerprint["doc_alias"] = std::string(to_string(options.rerank.doc_alias));
    report.fingerprint["window_chars"] = std::to_string(options.rerank.window_chars);
  }
}

}  // namespace

EvalReport build_report(std::span<const LinkRecord> records,
                        std::span<const PredictionRow> predictions, const EvalOptions& options,
                        std::size_t degraded_records, std::size_t scoring_failures) {
  if (records.empty()) throw Error(ErrorKind::kPrecondition, "no records to evaluate");
  if (records.size() != predictions.size()) {
    throw Error(ErrorKind::kIntegrity, "dataset has " + std::to_string(records.size()) +
                                           " records but predictions have " +
                                           std::to_string(predictions.size()));
  }
  if (options.k_set.empty() || options.k_candidates == 0) {
    throw Error(ErrorKind::kConfig, "k values must be >= 1");
  }
  const bool reranking = predictions.front().reranked.has_value();
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (predictions[i].id != records[i].id) {
      throw Error(ErrorKind::kIntegrity, "prediction " + std::to_string(i) + " has id '" +
                                             predictions[i].id + "', dataset has '" +
                                             records[i].id + "'");
    }
    if (predictions[i].reranked.has_value() != reranking) {
      throw Error(ErrorKind::kIntegrity, "predictions mix reranked and retrieval-only rows");
    }
  }

  EvalReport report;
  report.k_set = options.k_set;
  std::sort(report.k_set.begin(), report.k_set.end());
  report.k_set.erase(std::unique(report.k_set.begin(), report.k_set.end()), report.k_set.end());
  report.k_candidates = options.k_candidates;
  report.records = records.size();
  report.degraded_records = degraded_records;
  report.scoring_failures = scoring_failures;
  fill_fingerprint(report, options, reranking);

  const std::vector<PredictionRow> preds(predictions.begin(), predictions.end());
  std::map<std::string, std::vector<std::size_t>> by_lang;
  std::vector<std::size_t> all(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    all[i] = i;
    by_lang[records[i].language].push_back(i);
  }
  EvalOptions opts = options;
  opts.k_set = report.k_set;
  report.overall = make_row("ALL", all, preds, opts, reranking);
  for (const auto& [lang, idx] : by_lang) {
    report.per_language.push_back(make_row(lang, idx, preds, opts, reranking));
  }
  auto& avg = report.average;
  avg.language = "Avg";
  avg.records = records.size();
  const double n = static_cast<double>(report.per_language.size());
  for (const auto k : report.k_set) {
    double s = 0.0;
    for (const auto& r : report.per_language) s += r.retrieval.at(k);
    avg.retrieval[k] = s / n;
  }
  double cand = 0.0;
  double rr = 0.0;
  for (const auto& r : report.per_language) {
    cand += r.retrieval_at_candidates;
    if (r.reranked_r1) rr += *r.reranked_r1;
  }
  avg.retrieval_at_candidates = cand / n;
  if (reranking) avg.reranked_r1 = rr / n;

  check_report_invariants(report);
  return report;
}

EvalResult evaluate_candidates(std::span<const LinkRecord> records,
                               std::span<const CandidateSet> candidates,
                               const EvalOptions& options) {
  if (records.size() != candidates.size()) {
    throw Error(ErrorKind::kPrecondition, "record and candidate-set counts differ");
  }
  EvalResult result;
  result.predictions = link_records(records, candidates, options, &result.stats);
  result.report = build_report(records, result.predictions, options,
                               result.stats.degraded_records, result.stats.scoring_failures);
  return result;
}

std::vector<PredictionRow> link_records(std::span<const LinkRecord> records,
                                        std::span<const CandidateSet> candidates,
                                        const EvalOptions& options, LinkStats* stats) {
  if (records.size() != candidates.size()) {
    throw Error(ErrorKind::kPrecondition, "record and candidate-set counts differ");
  }
  LinkStats local;
  std::vector<PredictionRow> out(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    auto& row = out[i];
    row.id = records[i].id;
    row.gold = std::string(text::trim(records[i].gold_cui));
    for (const auto& h : candidates[i].hits) row.retrieved.push_back(h.cui);
    if (options.scorer == nullptr) continue;

    CandidateSet top = candidates[i];
    if (top.hits.size() > options.k_candidates) top.hits.resize(options.k_candidates);
    row.reranked.emplace();
    if (top.hits.empty()) continue;
    const auto pred = rerank(top, records[i].text, records[i].span, options.rerank,
                             *options.scorer, options.kb, records[i].id);
    for (const auto& c : pred.ranked) row.reranked->push_back(c.cui);
    if (pred.degraded) ++local.degraded_records;
    local.scoring_failures += pred.failures;
  }
  if (stats) *stats = local;
  return out;
}

EvalResult evaluate(std::span<const LinkRecord> records, const CandidateSource& source,
                    const EvalOptions& options) {
  std::size_t k = options.k_candidates;
  for (const auto v : options.k_set) k = std::max(k, v);
  const auto cands = collect_candidates(records, source, k, options.threads);
  EvalOptions opts = options;
  if (!opts.fingerprint.contains("retriever")) opts.fingerprint["retriever"] = source.describe();
  return evaluate_candidates(records, cands, opts);
}

// ---------------------------------------------------------------------------

namespace {

ordered_json row_json(const RecallRow& r) {
  ordered_json j;
  j["language"] = r.language;
  j["records"] = r.records;
  ordered_json rec = ordered_json::object();
  for (const auto& [k, v] : r.retrieval) rec["R@" + std::to_string(k)] = v;
  j["retrieval"] = rec;
  j["retrieval_at_candidates"] = r.retrieval_at_candidates;
  j["reranked_r1"] = r.reranked_r1 ? ordered_json(*r.reranked_r1) : ordered_json(nullptr);
  return j;
}

}  // namespace

std::string report_to_json(const EvalReport& report) {
  ordered_json j;
  ordered_json fp = ordered_json::object();
  for (const auto& [k, v] : report.fingerprint) fp[k] = v;
  j["fingerprint"] = fp;
  j["k"] = report.k_set;
  j["k_candidates"] = report.k_candidates;
  j["counts"] = {{"records", report.records},
                 {"languages", report.per_language.size()},
                 {"degraded_records", report.degraded_records},
                 {"scoring_failures", report.scoring_failures}};
  j["overall"] = row_json(report.overall);
  ordered_json langs = ordered_json::array();
  for (const auto& r : report.per_language) langs.push_back(row_json(r));
  j["per_language"] = langs;
  j["average"] = row_json(report.average);
  return j.dump(2) + "\n";
}

std::string format_report_table(const EvalReport& report) {
  std::vector<std::string> header{"lang", "n"};
  for (const auto k : report.k_set) header.push_back("R@" + std::to_string(k));
  const bool rr = report.overall.reranked_r1.has_value();
  if (rr) header.push_back("rerank R@1");

  std::vector<std::vector<std::string>> rows{header};
  const auto add = [&](const RecallRow& r) {
    std::vector<std::string> cells{r.language, std::to_string(r.records)};
    for (const auto k : report.k_set) cells.push_back(format_value(r.retrieval.at(k)));
    if (rr) cells.push_back(r.reranked_r1 ? format_value(*r.reranked_r1) : "-");
    rows.push_back(std::move(cells));
  };
  for (const auto& r : report.per_language) add(r);
  add(report.average);
  add(report.overall);

  std::vector<std::size_t> width(header.size(), 0);
  for (const auto& r : rows) {
    for (std::size_t c = 0; c < r.size(); ++c) width[c] = std::max(width[c], r[c].size());
  }
  std::ostringstream out;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t c = 0; c < rows[i].size(); ++c) {
      const auto& cell = rows[i][c];
      if (c == 0) {
        out << cell << std::string(width[c] - cell.size(), ' ');
      } else {
        out << "  " << std::string(width[c] - cell.size(), ' ') << cell;
      }
    }
    out << '\n';
    if (i == 0 || i == rows.size() - 3) {
      std::size_t total = 0;
      for (const auto w : width) total += w + 2;
      out << std::string(total - 2, '-') << '\n';
    }
  }
  return out.str();
}

void write_predictions(std::ostream& out, std::span<const PredictionRow> rows) {
  for (const auto& r : rows) {
    ordered_json j;
    j["id"] = r.id;
    j["retrieved"] = r.retrieved;
    j["reranked"] = r.reranked ? ordered_json(*r.reranked) : ordered_json(nullptr);
    j["gold"] = r.gold;
    out << j.dump() << '\n';
  }
}

std::vector<PredictionRow> read_predictions(std::istream& in) {
  std::vector<PredictionRow> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (text::trim(line).empty()) continue;
    try {
      const auto j = json::parse(line);
      PredictionRow r;
      r.id = j.at("id").get<std::string>();
      r.retrieved = j.at("retrieved").get<std::vector<std::string>>();
      if (!j.at("reranked").is_null()) r.reranked = j["reranked"].get<std::vector<std::string>>();
      r.gold = j.at("gold").get<std::string>();
      out.push_back(std::move(r));
    } catch (const json::exception& ex) {
      throw Error(ErrorKind::kFormat,
                  "predictions line " + std::to_string(line_no) + ": " + ex.what());
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

AblationResult run_ablation(std::span<const LinkRecord> records,
                            const std::map<std::string, const CandidateSource*>& sources,
                            const AblationAxes& axes, const EvalOptions& base) {
  AblationResult result;
  std::size_t k = base.k_candidates;
  for (const auto v : base.k_set) k = std::max(k, v);

  for (const auto& name : axes.retrievers) {
    std::vector<CandidateSet> cands;
    std::string retrieval_error;
    const auto it = sources.find(name);
    try {
      if (it == sources.end() || it->second == nullptr) {
        throw Error(ErrorKind::kConfig, "no retriever named '" + name + "'");
      }
      cands = collect_candidates(records, *it->second, k, base.threads);
    } catch (const std::exception& ex) {
      retrieval_error = ex.what();
    }
    for (const auto marker : axes.markers) {
      for (const auto fields : axes.fields) {
        AblationCell cell{name, marker, fields, std::nullopt, retrieval_error};
        if (retrieval_error.empty()) {
          try {
            EvalOptions opts = base;
            opts.rerank.marker = marker;
            opts.rerank.fields = fields;
            opts.fingerprint["retriever"] = it->second->describe();
            cell.report = evaluate_candidates(records, cands, opts).report;
          } catch (const std::exception& ex) {
            cell.error = ex.what();
          }
        }
        result.cells.push_back(std::move(cell));
      }
    }
  }
  return result;
}

std::string format_ablation_table(const AblationResult& result) {
  std::vector<std::vector<std::string>> rows{
      {"retriever", "marker", "fields", "R@1", "R@k", "rerank R@1", "status"}};
  for (const auto& c : result.cells) {
    std::vector<std::string> r{c.retriever, std::string(to_string(c.marker)),
                               std::string(to_string(c.fields))};
    if (c.report) {
      const auto& o = c.report->average;
      r.push_back(o.retrieval.contains(1) ? format_value(o.retrieval.at(1)) : "-");
      r.push_back(format_value(o.retrieval_at_candidates));
      r.push_back(o.reranked_r1 ? format_value(*o.reranked_r1) : "-");
      r.push_back("ok");
    } else {
      r.insert(r.end(), {"-", "-", "-", "error: " + c.error});
    }
    rows.push_back(std::move(r));
  }
  std::vector<std::size_t> width(rows[0].size(), 0);
  for (const auto& r : rows) {
    for (std::size_t i = 0; i < r.size(); ++i) width[i] = std::max(width[i], r[i].size());
  }
  std::ostringstream out;
  for (const auto& r : rows) {
    for (std::size_t i = 0; i < r.size(); ++i) {
      out << r[i];
      if (i + 1 < r.size()) out << std::string(width[i] - r[i].size() + 2, ' ');
    }
    out << '\n';
  }
  return out.str();
}

std::string ablation_to_json(const AblationResult& result) {
  ordered_json cells = ordered_json::array();
  for (const auto& c : result.cells) {
    ordered_json j;
    j["retriever"] = c.retriever;
    j["marker"] = std::string(to_string(c.marker));
    j["fields"] = std::string(to_string(c.fields));
    j["report"] = c.report ? ordered_json::parse(report_to_json(*c.report)) : ordered_json(nullptr);
    j["error"] = c.error.empty() ? ordered_json(nullptr) : ordered_json(c.error);
    cells.push_back(std::move(j));
  }
  return ordered_json{{"cells", cells}}.dump(2) + "\n";
}

}  // namespace belx

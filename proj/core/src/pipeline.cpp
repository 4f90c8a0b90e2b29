#include "belx/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <functional>
#include <json.hpp>
#include <sstream>

#include "belx/error.hpp"
#include "belx/text.hpp"
#include "belx/trainer.hpp"

namespace belx {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

const std::vector<std::string>& pipeline_stages() {
  static const std::vector<std::string> stages = {"ingest", "map",   "filter", "group",
                                                  "train",  "index", "link",   "eval"};
  return stages;
}

std::string file_checksum(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kIo, "cannot open " + path.string());
  std::uint64_t h = text::kFnvOffset;
  std::vector<char> buf(1 << 16);
  while (in) {
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    h = text::fnv1a64(std::string_view(buf.data(), static_cast<std::size_t>(in.gcount())), h);
  }
  return text::hex64(h);
}

std::string config_hash(const PipelineConfig& config) {
  return text::hex64(text::fnv1a64(config.canonical()));
}

std::string corpus_stats_to_json(const CorpusStats& stats) {
  ordered_json j;
  j["total_aliases"] = stats.total;
  j["languages"] = stats.languages;
  j["distinct_qids"] = stats.distinct_qids;
  j["distinct_cuis"] = stats.distinct_cuis;
  j["multi_cui_qids"] = stats.multi_cui_qids;
  j["english_percent"] = stats.percent_of("en");
  auto langs = ordered_json::array();
  for (const auto& l : stats.per_language) {
    langs.push_back({{"lang", l.language}, {"count", l.count}, {"percent", l.percent}});
  }
  j["per_language"] = std::move(langs);
  return j.dump(2) + "\n";
}

namespace {

using Counts = std::map<std::string, std::uint64_t>;

std::ofstream open_out(const fs::path& p) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::kIo, "cannot write " + p.string());
  return out;
}

std::ifstream open_in(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error(ErrorKind::kIo, "cannot open " + p.string());
  return in;
}

void close_out(std::ofstream& out, const fs::path& p) {
  out.close();
  if (!out) throw Error(ErrorKind::kIo, "write failed for " + p.string());
}

// Canonical config lines whose key starts with one of the prefixes.
std::string config_slice(const std::string& canonical,
                         std::initializer_list<std::string_view> prefixes) {
  std::string out;
  for (const auto line : text::split(canonical, '\n')) {
    if (std::any_of(prefixes.begin(), prefixes.end(),
                    [&](std::string_view p) { return line.starts_with(p); })) {
      out += line;
      out += '\n';
    }
  }
  return out;
}

bool trains(const PipelineConfig& c) {
  return c.train_enabled && c.encoder.backend == EncoderBackend::kHashedNgram;
}

class Pipeline {
 public:
  Pipeline(const PipelineConfig& config, const RunOptions& options)
      : c_(config), opt_(options), work_(config.resolve(config.work_dir)) {}

  RunSummary run();

 private:
  struct Stage {
    std::string name;
    std::vector<std::string> upstream;
    std::vector<std::string> outputs;
    std::function<Counts()> body;
  };

  void define_stages();
  void compute_fingerprints();
  fs::path manifest_path(const std::string& stage) const {
    return work_ / "manifests" / (stage + ".json");
  }
  std::optional<ordered_json> read_manifest(const std::string& stage) const;
  // Empty when every output verifies; otherwise the first offending output.
  std::string failed_output(const ordered_json& manifest) const;
  void write_manifest(const Stage& s, const Counts& counts) const;
  void require_upstream(const Stage& s) const;
  StageOutcome run_stage(const Stage& s);
  void log(ordered_json event);
  void write_state(const std::string& status, const std::string& failed,
                   const std::string& message, const std::string& kind) const;

  std::unique_ptr<Encoder> make_stage_encoder() const;
  std::vector<LinkRecord> dataset_records() const;

  Counts ingest();
  Counts map();
  Counts filter();
  Counts group();
  Counts train();
  Counts index();
  Counts link();
  Counts eval();
  EvalReport make_report() const;

  const PipelineConfig& c_;
  const RunOptions& opt_;
  fs::path work_;
  std::string canonical_;
  std::string config_hash_;
  std::vector<Stage> stages_;
  std::map<std::string, std::string> fingerprints_;
  std::vector<std::string> completed_;
  std::optional<EvalReport> report_;
  std::ofstream log_file_;
};

void Pipeline::define_stages() {
  stages_ = {
      {"ingest", {}, {"triples.tsv"}, [this] { return ingest(); }},
      {"map", {"ingest"}, {"tuples.tsv", "stats.json"}, [this] { return map(); }},
      {"filter", {"map"}, {"filtered.tsv", "filter_report.json"}, [this] { return filter(); }},
      {"group", {"filter"}, {"groups.jsonl"}, [this] { return group(); }},
      {"train", {"group"}, {}, [this] { return train(); }},
      {"index", {"filter", "train"}, {"index.bin"}, [this] { return index(); }},
      {"link", {"index"}, {"predictions.jsonl"}, [this] { return link(); }},
      {"eval", {"link"}, {"report.json"}, [this] { return eval(); }},
  };
  if (trains(c_)) stages_[4].outputs = {"head.bin", "train_report.json"};
}

void Pipeline::compute_fingerprints() {
  const auto input = [&](const fs::path& p) {
    const auto r = c_.resolve(p);
    if (!fs::exists(r)) throw Error(ErrorKind::kConfig, "input not found: " + r.string());
    return file_checksum(r);
  };
  std::map<std::string, std::string> own;
  own["ingest"] = config_slice(canonical_, {"paths.dump_format"}) + "dump " + input(c_.dump);
  own["map"] = "mapping " + input(c_.mapping);
  {
    std::string s = config_slice(canonical_, {"inputs.eval_mentions", "paths.dataset_format"});
    s += c_.eval_mentions.empty() ? "dataset " + input(c_.dataset)
                                  : "mentions " + input(c_.eval_mentions);
    own["filter"] = s;
  }
  own["group"] = "";
  own["train"] = config_slice(canonical_, {"encoder.", "train.", "run.seed"});
  {
    std::string s = config_slice(canonical_, {"encoder."});
    if (c_.encoder.backend == EncoderBackend::kFile) s += "emb " + input(c_.encoder.embedding_file);
    own["index"] = s;
  }
  {
    std::string s = config_slice(canonical_, {"retrieval.", "rerank.", "inputs.kb",
                                              "paths.dataset_format", "run.seed"});
    s += "dataset " + input(c_.dataset);
    if (!c_.kb.empty()) s += "kb " + input(c_.kb);
    own["link"] = s;
  }
  own["eval"] = config_slice(canonical_, {"retrieval.", "rerank.scorer"}) + "config " + config_hash_;

  for (const auto& s : stages_) {
    std::string material = s.name + "\n" + own[s.name];
    for (const auto& u : s.upstream) material += "\nupstream " + u + " " + fingerprints_.at(u);
    fingerprints_[s.name] = text::hex64(text::fnv1a64(material));
  }
}

std::optional<ordered_json> Pipeline::read_manifest(const std::string& stage) const {
  const auto p = manifest_path(stage);
  if (!fs::exists(p)) return std::nullopt;
  std::ifstream in(p, std::ios::binary);
  try {
    return ordered_json::parse(in);
  } catch (const nlohmann::json::exception&) {
    return std::nullopt;
  }
}

std::string Pipeline::failed_output(const ordered_json& manifest) const {
  for (const auto& [name, sum] : manifest.at("outputs").items()) {
    const auto p = work_ / name;
    if (!fs::exists(p)) return name + " (missing)";
    if (file_checksum(p) != sum.get<std::string>()) return name;
  }
  return {};
}

void Pipeline::write_manifest(const Stage& s, const Counts& counts) const {
  ordered_json j;
  j["stage"] = s.name;
  j["config_hash"] = config_hash_;
  j["fingerprint"] = fingerprints_.at(s.name);
  j["seed"] = c_.seed;
  ordered_json outs = ordered_json::object();
  for (const auto& o : s.outputs) outs[o] = file_checksum(work_ / o);
  j["outputs"] = std::move(outs);
  j["counts"] = counts;
  const auto p = manifest_path(s.name);
  auto out = open_out(p);
  out << j.dump(2) << "\n";
  close_out(out, p);
}

void Pipeline::require_upstream(const Stage& s) const {
  for (const auto& u : s.upstream) {
    const auto m = read_manifest(u);
    if (!m || m->value("fingerprint", "") != fingerprints_.at(u)) {
      throw Error(ErrorKind::kPipeline, "stage '" + s.name + "' needs stage '" + u +
                                            "' run under the current config; run it first");
    }
    const auto bad = failed_output(*m);
    if (!bad.empty()) {
      throw Error(ErrorKind::kIntegrity, "output " + bad + " of stage '" + u +
                                             "' fails its checksum; re-run stage '" + u + "'");
    }
  }
}

void Pipeline::log(ordered_json event) {
  const auto line = event.dump();
  if (log_file_) log_file_ << line << "\n" << std::flush;
  if (opt_.log) *opt_.log << line << "\n" << std::flush;
}

void Pipeline::write_state(const std::string& status, const std::string& failed,
                           const std::string& message, const std::string& kind) const {
  ordered_json j;
  j["status"] = status;
  j["config_hash"] = config_hash_;
  j["completed"] = completed_;
  if (!failed.empty()) {
    j["failed_stage"] = failed;
    j["error_kind"] = kind;
    j["error"] = message;
    j["resume"] = "belx run --config <config> --stage " + failed +
                  (kind == to_string(ErrorKind::kIntegrity) ? " --force" : "");
  }
  std::ofstream out(work_ / "state.json", std::ios::binary | std::ios::trunc);
  out << j.dump(2) << "\n";
}

StageOutcome Pipeline::run_stage(const Stage& s) {
  StageOutcome outcome;
  outcome.stage = s.name;
  outcome.fingerprint = fingerprints_.at(s.name);

  if (const auto m = read_manifest(s.name);
      m && m->value("fingerprint", "") == outcome.fingerprint) {
    const auto bad = failed_output(*m);
    if (bad.empty() && !opt_.force) {
      outcome.skipped = true;
      if (m->contains("counts")) outcome.counts = m->at("counts").get<Counts>();
      log({{"event", "skip"}, {"stage", s.name}, {"fingerprint", outcome.fingerprint}});
      return outcome;
    }
    if (!bad.empty() && !opt_.force) {
      throw Error(ErrorKind::kIntegrity,
                  "output " + bad + " of stage '" + s.name +
                      "' fails its checksum; re-run with --stage " + s.name + " --force");
    }
  }
  require_upstream(s);
  log({{"event", "start"}, {"stage", s.name}, {"fingerprint", outcome.fingerprint}});
  const auto t0 = std::chrono::steady_clock::now();
  fs::remove(manifest_path(s.name));
  outcome.counts = s.body();
  write_manifest(s, outcome.counts);
  const auto ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0);
  log({{"event", "done"}, {"stage", s.name}, {"wall_ms", ms.count()}, {"counts", outcome.counts}});
  return outcome;
}

RunSummary Pipeline::run() {
  c_.validate();
  fs::create_directories(work_ / "manifests");
  log_file_.open(work_ / "log.jsonl", std::ios::binary | std::ios::app);
  canonical_ = c_.canonical();
  config_hash_ = config_hash(c_);
  define_stages();

  RunSummary summary;
  summary.config_hash = config_hash_;
  const auto& names = pipeline_stages();
  if (opt_.only_stage &&
      std::find(names.begin(), names.end(), *opt_.only_stage) == names.end()) {
    throw Error(ErrorKind::kConfig, "unknown stage '" + *opt_.only_stage + "'");
  }

  std::string current = "setup";
  try {
    compute_fingerprints();
    log({{"event", "run"}, {"config_hash", config_hash_}, {"seed", c_.seed}});
    for (const auto& s : stages_) {
      if (opt_.only_stage && *opt_.only_stage != s.name) continue;
      current = s.name;
      summary.stages.push_back(run_stage(s));
      completed_.push_back(s.name);
    }
  } catch (const Error& e) {
    log({{"event", "error"}, {"stage", current}, {"kind", to_string(e.kind())}, {"message", e.what()}});
    write_state("failed", current, e.what(), std::string(to_string(e.kind())));
    throw;
  } catch (const std::exception& e) {
    log({{"event", "error"}, {"stage", current}, {"message", e.what()}});
    write_state("failed", current, e.what(), "internal");
    throw Error(ErrorKind::kPipeline, "stage '" + current + "': " + e.what());
  }
  write_state("ok", "", "", "");

  const bool eval_selected = !opt_.only_stage || *opt_.only_stage == "eval";
  if (!report_ && eval_selected) {
    // eval was skipped; its inputs verified, so the same report is rebuilt for display
    report_ = make_report();
    if (opt_.report) *opt_.report << format_report_table(*report_);
  }
  summary.report = report_;
  return summary;
}

// ---------------------------------------------------------------------------

std::unique_ptr<Encoder> Pipeline::make_stage_encoder() const {
  auto ec = c_.encoder;
  if (!ec.embedding_file.empty()) ec.embedding_file = c_.resolve(ec.embedding_file);
  std::optional<ProjectionHead> head;
  if (trains(c_)) head = ProjectionHead::load(work_ / "head.bin");
  return make_encoder(ec, std::move(head));
}

std::vector<LinkRecord> Pipeline::dataset_records() const {
  return load_dataset(c_.resolve(c_.dataset), c_.dataset_format).records;
}

Counts Pipeline::ingest() {
  auto in = open_in(c_.resolve(c_.dump));
  const auto p = work_ / "triples.tsv";
  auto out = open_out(p);
  const auto st = parse_sitelink_dump(in, c_.dump_format,
                                      [&](SiteTriple&& t) { write_triple_tsv(out, t); });
  close_out(out, p);
  return {{"rows", st.rows}, {"triples", st.triples}, {"malformed", st.malformed}};
}

Counts Pipeline::map() {
  const auto mapping = load_cui_mapping(c_.resolve(c_.mapping));
  auto in = open_in(work_ / "triples.tsv");
  const auto p = work_ / "tuples.tsv";
  auto out = open_out(p);
  CorpusStatsAccumulator acc;
  std::size_t triples = 0;
  parse_sitelink_dump(in, DumpFormat::kTsv, [&](SiteTriple&& t) {
    ++triples;
    join_aliases_with_cuis(t, mapping.mapping, [&](AliasTuple&& a) {
      acc.add(a);
      write_tuple_tsv(out, a);
    });
  });
  close_out(out, p);
  const auto stats = acc.finish();
  const auto sp = work_ / "stats.json";
  auto so = open_out(sp);
  so << corpus_stats_to_json(stats);
  close_out(so, sp);
  return {{"mapping_rows", mapping.rows},
          {"mapping_skipped", mapping.skipped},
          {"triples", triples},
          {"tuples", stats.total},
          {"languages", stats.languages}};
}

Counts Pipeline::filter() {
  EvalMentionSet mentions;
  if (c_.eval_mentions.empty()) {
    for (const auto& r : dataset_records()) mentions.insert(r.mention());
  } else {
    auto in = open_in(c_.resolve(c_.eval_mentions));
    mentions = load_eval_mentions(in);
  }
  auto in = open_in(work_ / "tuples.tsv");
  const auto tuples = read_tuples_tsv(in);
  const auto result = filter_eval_overlap(tuples, mentions);
  const auto p = work_ / "filtered.tsv";
  auto out = open_out(p);
  for (const auto& t : result.kept) write_tuple_tsv(out, t);
  close_out(out, p);

  ordered_json j;
  j["input_tuples"] = tuples.size();
  j["eval_mentions"] = mentions.size();
  j["removed"] = result.removed;
  j["kept"] = result.kept.size();
  const auto rp = work_ / "filter_report.json";
  auto ro = open_out(rp);
  ro << j.dump(2) << "\n";
  close_out(ro, rp);
  return {{"input_tuples", tuples.size()},
          {"eval_mentions", mentions.size()},
          {"removed", result.removed},
          {"kept", result.kept.size()}};
}

Counts Pipeline::group() {
  auto in = open_in(work_ / "filtered.tsv");
  const auto p = work_ / "groups.jsonl";
  auto out = open_out(p);
  Counts counts;
  if (c_.external_sort_rows > 0) {
    const auto tmp = work_ / "group-tmp";
    fs::create_directories(tmp);
    const auto st = group_positives_external(in, out, c_.external_sort_rows, tmp);
    fs::remove_all(tmp);
    counts = {{"tuples", st.tuples},
              {"groups", st.groups},
              {"single_alias_groups", st.single_alias_groups},
              {"runs", st.runs}};
  } else {
    const auto tuples = read_tuples_tsv(in);
    const auto groups = group_positives(tuples);
    std::size_t single = 0;
    for (const auto& g : groups) {
      write_group_jsonl(out, g);
      if (g.single_alias()) ++single;
    }
    counts = {{"tuples", tuples.size()},
              {"groups", groups.size()},
              {"single_alias_groups", single}};
  }
  close_out(out, p);
  return counts;
}

Counts Pipeline::train() {
  if (!trains(c_)) {
    log({{"event", "note"}, {"stage", "train"}, {"message", "no trainable head for this encoder"}});
    return {{"trained", 0}};
  }
  auto in = open_in(work_ / "groups.jsonl");
  const auto groups = read_groups_jsonl(in);
  auto hp = c_.train;
  hp.seed = c_.seed;
  hp.checkpoint.reset();
  const auto result = train_projection(groups, c_.encoder, hp, [&](const EpochStats& e) {
    log({{"event", "epoch"},
         {"stage", "train"},
         {"epoch", e.epoch},
         {"batches", e.batches},
         {"mean_loss", e.mean_loss},
         {"surviving_triplets", e.surviving_triplets}});
  });
  result.head.save(work_ / "head.bin");

  ordered_json j;
  j["seed"] = c_.seed;
  j["eligible_groups"] = result.report.eligible_groups;
  j["steps"] = result.report.steps;
  auto epochs = ordered_json::array();
  for (const auto& e : result.report.epochs) {
    epochs.push_back({{"epoch", e.epoch},
                      {"batches", e.batches},
                      {"mean_loss", e.mean_loss},
                      {"surviving_triplets", e.surviving_triplets}});
  }
  j["epochs"] = std::move(epochs);
  const auto rp = work_ / "train_report.json";
  auto ro = open_out(rp);
  ro << j.dump(2) << "\n";
  close_out(ro, rp);
  return {{"trained", 1}, {"eligible_groups", result.report.eligible_groups},
          {"steps", result.report.steps}};
}

Counts Pipeline::index() {
  auto in = open_in(work_ / "filtered.tsv");
  const auto tuples = read_tuples_tsv(in);
  const auto encoder = make_stage_encoder();
  const auto idx = VectorIndex::build(tuples, *encoder, c_.embed_batch);
  idx.save(work_ / "index.bin");
  return {{"rows", idx.size()}, {"dimension", idx.dimension()}};
}

Counts Pipeline::link() {
  const auto records = dataset_records();
  const auto idx = VectorIndex::load(work_ / "index.bin");
  const auto encoder = make_stage_encoder();
  const ExactRetriever retriever(idx, *encoder, c_.overscan);

  std::optional<KnowledgeBase> kb;
  if (!c_.kb.empty()) kb.emplace(load_knowledge_base(c_.resolve(c_.kb).string()));

  std::unique_ptr<Scorer> scorer;
  switch (c_.scorer) {
    case ScorerKind::kNone: break;
    case ScorerKind::kMock: scorer = std::make_unique<MockScorer>(); break;
    case ScorerKind::kGold: {
      std::map<std::string, std::string> gold;
      for (const auto& r : records) gold[r.id] = r.gold_cui;
      scorer = std::make_unique<GoldScorer>(std::move(gold));
      break;
    }
    case ScorerKind::kHttp: scorer = std::make_unique<HttpScorer>(c_.http_scorer); break;
  }

  EvalOptions opts;
  opts.k_set = c_.k_eval;
  opts.k_candidates = c_.k_candidates;
  opts.scorer = scorer.get();
  opts.rerank = c_.rerank;
  opts.kb = kb ? &*kb : nullptr;
  opts.threads = c_.threads;

  const auto depth = std::max(c_.k_candidates, *std::max_element(c_.k_eval.begin(), c_.k_eval.end()));
  const auto sets = collect_candidates(records, retriever, depth, c_.threads);
  LinkStats stats;
  const auto preds = link_records(records, sets, opts, &stats);
  const auto p = work_ / "predictions.jsonl";
  auto out = open_out(p);
  write_predictions(out, preds);
  close_out(out, p);
  return {{"records", records.size()},
          {"degraded_records", stats.degraded_records},
          {"scoring_failures", stats.scoring_failures}};
}

EvalReport Pipeline::make_report() const {
  const auto records = dataset_records();
  auto in = open_in(work_ / "predictions.jsonl");
  const auto preds = read_predictions(in);
  const auto link_manifest = read_manifest("link");
  Counts link_counts;
  if (link_manifest && link_manifest->contains("counts")) {
    link_counts = link_manifest->at("counts").get<Counts>();
  }

  EvalOptions opts;
  opts.k_set = c_.k_eval;
  opts.k_candidates = c_.k_candidates;
  opts.rerank = c_.rerank;
  opts.fingerprint["config_hash"] = config_hash_;
  opts.fingerprint["seed"] = std::to_string(c_.seed);
  opts.fingerprint["encoder"] = std::string(to_string(c_.encoder.backend));
  opts.fingerprint["index"] = file_checksum(work_ / "index.bin");
  const bool reranked = !preds.empty() && preds.front().reranked.has_value();
  auto report = build_report(records, preds, opts, link_counts["degraded_records"],
                             link_counts["scoring_failures"]);
  if (reranked) report.fingerprint["scorer"] = std::string(to_string(c_.scorer));
  return report;
}

Counts Pipeline::eval() {
  auto report = make_report();
  const auto p = work_ / "report.json";
  auto out = open_out(p);
  out << report_to_json(report);
  close_out(out, p);
  if (opt_.report) *opt_.report << format_report_table(report);
  report_ = report;
  return {{"records", report.records}};
}

}  // namespace

RunSummary run_pipeline(const PipelineConfig& config, const RunOptions& options) {
  Pipeline p(config, options);
  return p.run();
}

}  // namespace belx

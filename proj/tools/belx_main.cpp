#include <CLI11.hpp>
#include <algorithm>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "belx/config.hpp"
#include "belx/error.hpp"
#include "belx/eval.hpp"
#include "belx/pipeline.hpp"
#include "belx/reranker.hpp"
#include "belx/retrieval.hpp"
#include "belx/synthetic.hpp"
#include "belx/text.hpp"
#include "belx/trainer.hpp"
#include "belx/wikidata.hpp"

namespace fs = std::filesystem;
using namespace belx;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitStage = 3;
constexpr int kExitInvariant = 4;

std::ofstream open_out(const std::string& p) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::kIo, "cannot write " + p);
  return out;
}

std::ifstream open_in(const std::string& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error(ErrorKind::kIo, "cannot open " + p);
  return in;
}

std::vector<std::size_t> parse_k_list(const std::string& s) {
  std::vector<std::size_t> out;
  for (const auto part : text::split(s, ',')) {
    const auto t = std::string(text::trim(part));
    if (t.empty()) continue;
    try {
      std::size_t used = 0;
      const auto v = std::stoul(t, &used);
      if (used != t.size() || v == 0) throw std::invalid_argument(t);
      out.push_back(v);
    } catch (const std::exception&) {
      throw Error(ErrorKind::kConfig, "bad k value '" + t + "'");
    }
  }
  if (out.empty()) throw Error(ErrorKind::kConfig, "empty k list");
  return out;
}

struct EncoderOptions {
  std::string backend = "hashed_ngram";
  std::size_t dim = 64;
  std::size_t buckets = 4096;
  std::size_t max_chars = 128;
  std::string head;
  std::string embedding_file;
  std::string endpoint;

  void add(CLI::App* app, bool with_head = true) {
    app->add_option("--encoder", backend, "file | hashed_ngram | remote")->capture_default_str();
    app->add_option("--dim", dim, "embedding dimension")->capture_default_str();
    app->add_option("--buckets", buckets, "hashed n-gram buckets")->capture_default_str();
    app->add_option("--max-chars", max_chars, "input truncation in code points")
        ->capture_default_str();
    if (with_head) app->add_option("--head", head, "trained projection head (BELXHEAD)");
    app->add_option("--embedding-file", embedding_file, "BELXEMB1 table for the file backend");
    app->add_option("--endpoint", endpoint, "embedding service URL for the remote backend");
  }

  EncoderConfig config() const {
    EncoderConfig c;
    c.backend = parse_encoder_backend(backend);
    c.dimension = dim;
    c.buckets = buckets;
    c.max_input_chars = max_chars;
    c.embedding_file = embedding_file;
    c.endpoint = endpoint;
    return c;
  }

  std::unique_ptr<Encoder> make() const {
    std::optional<ProjectionHead> h;
    if (!head.empty()) h = ProjectionHead::load(head);
    return make_encoder(config(), std::move(h));
  }
};

struct ScorerOptions {
  std::string kind = "mock";
  std::string url;
  bool batch = false;
  std::string marker = "tgt";
  std::string fields = "name";
  std::string doc_alias = "retrieved";
  std::string template_id{kDefaultTemplateId};
  std::size_t window = 0;

  void add(CLI::App* app) {
    app->add_option("--scorer", kind, "none | mock | gold | http")->capture_default_str();
    app->add_option("--scorer-url", url, "reranker service URL (implies --scorer http)");
    app->add_flag("--batch-endpoint", batch, "use POST /score_batch");
    app->add_option("--marker", marker, "tgt | mention_tag | asterisk | none")
        ->capture_default_str();
    app->add_option("--doc-fields", fields, "name | name_type | name_type_description")
        ->capture_default_str();
    app->add_option("--doc-alias", doc_alias, "retrieved | canonical")->capture_default_str();
    app->add_option("--template", template_id, "prompt template id")->capture_default_str();
    app->add_option("--window", window, "context code points per side, 0 keeps all")
        ->capture_default_str();
  }

  RerankOptions rerank() const {
    RerankOptions r;
    r.marker = parse_marker_style(marker);
    r.fields = parse_document_fields(fields);
    r.doc_alias = parse_doc_alias(doc_alias);
    builtin_prompts().get(template_id);
    r.template_id = template_id;
    r.window_chars = window;
    return r;
  }

  std::unique_ptr<Scorer> make(const std::vector<LinkRecord>& records) const {
    auto k = parse_scorer_kind(url.empty() ? kind : "http");
    switch (k) {
      case ScorerKind::kNone: return nullptr;
      case ScorerKind::kMock: return std::make_unique<MockScorer>();
      case ScorerKind::kGold: {
        std::map<std::string, std::string> gold;
        for (const auto& r : records) gold[r.id] = r.gold_cui;
        return std::make_unique<GoldScorer>(std::move(gold));
      }
      case ScorerKind::kHttp: {
        if (url.empty()) throw Error(ErrorKind::kConfig, "--scorer http needs --scorer-url");
        HttpScorerConfig c;
        c.url = url;
        c.use_batch_endpoint = batch;
        return std::make_unique<HttpScorer>(c);
      }
    }
    return nullptr;
  }
};

struct DatasetOptions {
  std::string path;
  std::string format = "jsonl";
  std::string kb;

  void add(CLI::App* app) {
    app->add_option("--dataset", path, "evaluation records")->required();
    app->add_option("--dataset-format", format, "jsonl | xlbel_tsv")->capture_default_str();
    app->add_option("--kb", kb, "knowledge base JSONL for document fields");
  }

  std::vector<LinkRecord> load() const {
    auto r = load_dataset(fs::path(path), parse_dataset_format(format));
    if (r.skipped > 0) {
      std::cerr << "dataset: skipped " << r.skipped << " invalid rows\n";
      for (const auto& p : r.problems) std::cerr << "  " << p << "\n";
    }
    return std::move(r.records);
  }

  std::optional<KnowledgeBase> load_kb() const {
    if (kb.empty()) return std::nullopt;
    return load_knowledge_base(kb);
  }
};

void write_text(const std::string& path, const std::string& s) {
  auto out = open_out(path);
  out << s;
}

int exit_code(const Error& e) {
  switch (e.kind()) {
    case ErrorKind::kConfig: return kExitConfig;
    case ErrorKind::kInvariant: return kExitInvariant;
    default: return kExitStage;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"belx: multilingual biomedical entity linking pipeline"};
  app.require_subcommand(1);

  // ingest
  std::string dump, dump_format = "auto", out, report;
  auto* ingest = app.add_subcommand("ingest", "sitelink dump -> (qid, alias, site) triples");
  ingest->add_option("--dump", dump)->required();
  ingest->add_option("--format", dump_format, "auto | sql | tsv")->capture_default_str();
  ingest->add_option("--out", out)->required();
  ingest->callback([&] {
    auto in = open_in(dump);
    auto o = open_out(out);
    const auto st = parse_sitelink_dump(in, parse_dump_format(dump_format),
                                        [&](SiteTriple&& t) { write_triple_tsv(o, t); });
    std::cout << "rows " << st.rows << ", triples " << st.triples << ", malformed "
              << st.malformed << "\n";
  });

  // map
  std::string mapping, triples, stats_out;
  auto* map = app.add_subcommand("map", "join triples with the QID -> CUI mapping");
  map->add_option("--mapping", mapping)->required();
  map->add_option("--triples", triples)->required();
  map->add_option("--out", out)->required();
  map->add_option("--stats", stats_out, "also write corpus statistics JSON");
  map->callback([&] {
    const auto m = load_cui_mapping(fs::path(mapping));
    auto in = open_in(triples);
    auto o = open_out(out);
    CorpusStatsAccumulator acc;
    parse_sitelink_dump(in, DumpFormat::kTsv, [&](SiteTriple&& t) {
      join_aliases_with_cuis(t, m.mapping, [&](AliasTuple&& a) {
        acc.add(a);
        write_tuple_tsv(o, a);
      });
    });
    const auto st = acc.finish();
    if (!stats_out.empty()) write_text(stats_out, corpus_stats_to_json(st));
    std::cout << "mapping rows " << m.rows << " (skipped " << m.skipped << "), tuples "
              << st.total << "\n";
  });

  // filter
  std::string tuples, eval_mentions;
  auto* filter = app.add_subcommand("filter", "drop tuples whose alias is an eval mention");
  filter->add_option("--tuples", tuples)->required();
  filter->add_option("--eval-mentions", eval_mentions)->required();
  filter->add_option("--out", out)->required();
  filter->add_option("--report", report);
  filter->callback([&] {
    auto min = open_in(eval_mentions);
    const auto mentions = load_eval_mentions(min);
    auto tin = open_in(tuples);
    const auto all = read_tuples_tsv(tin);
    const auto r = filter_eval_overlap(all, mentions);
    auto o = open_out(out);
    for (const auto& t : r.kept) write_tuple_tsv(o, t);
    if (!report.empty()) {
      nlohmann::ordered_json j;
      j["input_tuples"] = all.size();
      j["eval_mentions"] = mentions.size();
      j["removed"] = r.removed;
      j["kept"] = r.kept.size();
      write_text(report, j.dump(2) + "\n");
    }
    std::cout << "removed " << r.removed << " of " << all.size() << " tuples\n";
  });

  // group
  std::size_t external_rows = 0;
  std::string tmp_dir;
  auto* group = app.add_subcommand("group", "group tuples by QID into positive sets");
  group->add_option("--tuples", tuples)->required();
  group->add_option("--out", out)->required();
  group->add_option("--external-rows", external_rows,
                    "sort out of core with runs of this many rows (0 = in memory)");
  group->add_option("--tmp", tmp_dir, "spill directory for --external-rows");
  group->callback([&] {
    auto in = open_in(tuples);
    auto o = open_out(out);
    if (external_rows > 0) {
      const auto dir = tmp_dir.empty() ? fs::path(out).parent_path() / "group-tmp" : fs::path(tmp_dir);
      fs::create_directories(dir);
      const auto st = group_positives_external(in, o, external_rows, dir);
      std::cout << "groups " << st.groups << " (single-alias " << st.single_alias_groups
                << "), runs " << st.runs << "\n";
      return;
    }
    const auto groups = group_positives(read_tuples_tsv(in));
    std::size_t single = 0;
    for (const auto& g : groups) {
      write_group_jsonl(o, g);
      single += g.single_alias() ? 1 : 0;
    }
    std::cout << "groups " << groups.size() << " (single-alias " << single << ")\n";
  });

  // stats
  bool reference = false;
  auto* stats = app.add_subcommand("stats", "corpus statistics of a tuple file");
  stats->add_option("--tuples", tuples)->required();
  stats->add_option("--out", out, "write JSON here instead of stdout");
  stats->add_flag("--reference", reference, "compare with the 2025-12-01 dump figures");
  stats->callback([&] {
    auto in = open_in(tuples);
    CorpusStatsAccumulator acc;
    for_each_tuple_tsv(in, [&](AliasTuple&& t) { acc.add(t); });
    const auto st = acc.finish();
    const auto j = corpus_stats_to_json(st);
    if (out.empty()) {
      std::cout << j;
    } else {
      write_text(out, j);
    }
    if (reference) {
      using R = ReferenceCorpusStats;
      std::cout << "aliases   " << st.total << " (reference " << R::kTotalAliases << ")\n"
                << "languages " << st.languages << " (reference " << R::kLanguages << ")\n"
                << "english   " << st.percent_of("en") << "% (reference " << R::kEnglishPercent
                << "%)\n";
    }
  });

  // train
  std::string groups_path;
  EncoderOptions train_enc;
  TrainHyperparams hp;
  bool no_mining = false;
  auto* train = app.add_subcommand("train", "train the projection head with the MS loss");
  train->add_option("--groups", groups_path)->required();
  train_enc.add(train, false);
  train->add_option("--batch", hp.batch_size)->capture_default_str();
  train->add_option("--lr", hp.learning_rate)->capture_default_str();
  train->add_option("--wd", hp.weight_decay)->capture_default_str();
  train->add_option("--epochs", hp.epochs)->capture_default_str();
  train->add_option("--margin", hp.loss.margin_lambda)->capture_default_str();
  train->add_option("--alpha", hp.loss.alpha)->capture_default_str();
  train->add_option("--beta", hp.loss.beta)->capture_default_str();
  train->add_option("--epsilon", hp.loss.epsilon)->capture_default_str();
  train->add_option("--init-scale", hp.init_scale)->capture_default_str();
  train->add_option("--seed", hp.seed)->capture_default_str();
  train->add_flag("--no-mining", no_mining, "loss over the unfiltered in-batch sets");
  train->add_option("--checkpoint", [&](const CLI::results_t& r) {
    hp.checkpoint = r.front();
    return true;
  }, "write the head here after every epoch");
  train->add_option("--out", out)->required();
  train->add_option("--report", report);
  train->callback([&] {
    if (parse_encoder_backend(train_enc.backend) != EncoderBackend::kHashedNgram) {
      throw Error(ErrorKind::kConfig, "only the hashed_ngram encoder has a trainable head");
    }
    hp.mining = !no_mining;
    hp.validate();
    train_enc.config().validate();
    auto in = open_in(groups_path);
    const auto groups = read_groups_jsonl(in);
    const auto result = train_projection(groups, train_enc.config(), hp, [](const EpochStats& e) {
      std::cout << "epoch " << e.epoch << ": loss " << e.mean_loss << ", batches " << e.batches
                << ", triplets " << e.surviving_triplets << "\n";
    });
    result.head.save(out);
    if (!report.empty()) {
      nlohmann::ordered_json j;
      j["seed"] = hp.seed;
      j["eligible_groups"] = result.report.eligible_groups;
      j["steps"] = result.report.steps;
      auto ep = nlohmann::ordered_json::array();
      for (const auto& e : result.report.epochs) {
        ep.push_back({{"epoch", e.epoch},
                      {"batches", e.batches},
                      {"mean_loss", e.mean_loss},
                      {"surviving_triplets", e.surviving_triplets}});
      }
      j["epochs"] = std::move(ep);
      write_text(report, j.dump(2) + "\n");
    }
  });

  // index
  auto* index = app.add_subcommand("index", "build or query the alias index");
  index->require_subcommand(1);
  EncoderOptions index_enc;
  std::size_t embed_batch = 256;
  auto* build = index->add_subcommand("build", "embed aliases into an index file");
  build->add_option("--tuples", tuples)->required();
  index_enc.add(build);
  build->add_option("--embed-batch", embed_batch)->capture_default_str();
  build->add_option("--out", out)->required();
  build->callback([&] {
    auto in = open_in(tuples);
    const auto all = read_tuples_tsv(in);
    const auto enc = index_enc.make();
    const auto idx = VectorIndex::build(all, *enc, embed_batch);
    idx.save(out);
    std::cout << "indexed " << idx.size() << " aliases, d = " << idx.dimension() << "\n";
  });
  std::string index_path, query;
  std::size_t k = 64;
  auto* search = index->add_subcommand("search", "top-k aliases for a string");
  search->add_option("--index", index_path)->required();
  search->add_option("--text", query)->required();
  search->add_option("--k", k)->capture_default_str();
  index_enc.add(search);
  search->callback([&] {
    const auto idx = VectorIndex::load(index_path);
    const auto enc = index_enc.make();
    const auto q = enc->embed_one(query);
    for (const auto& h : idx.search(q, k)) {
      std::printf("%.6f\t%s\t%s\t%s\n", h.score, h.record.cui.c_str(), h.record.language.c_str(),
                  h.record.alias.c_str());
    }
  });

  // link
  DatasetOptions link_data;
  EncoderOptions link_enc;
  ScorerOptions link_scorer;
  std::size_t overscan = 4;
  std::size_t threads = 1;
  auto* link = app.add_subcommand("link", "retrieve and rerank candidates per mention");
  link->add_option("--index", index_path)->required();
  link_data.add(link);
  link_enc.add(link);
  link_scorer.add(link);
  link->add_option("--k", k, "candidates per mention")->capture_default_str();
  link->add_option("--overscan", overscan)->capture_default_str();
  link->add_option("--threads", threads)->capture_default_str();
  link->add_option("--out", out)->required();
  link->callback([&] {
    const auto records = link_data.load();
    const auto kb = link_data.load_kb();
    const auto idx = VectorIndex::load(index_path);
    const auto enc = link_enc.make();
    const ExactRetriever retriever(idx, *enc, overscan);
    const auto scorer = link_scorer.make(records);
    EvalOptions opts;
    opts.k_candidates = k;
    opts.scorer = scorer.get();
    opts.rerank = link_scorer.rerank();
    opts.kb = kb ? &*kb : nullptr;
    opts.threads = threads;
    LinkStats st;
    const auto sets = collect_candidates(records, retriever, k, threads);
    const auto preds = link_records(records, sets, opts, &st);
    auto o = open_out(out);
    write_predictions(o, preds);
    std::cout << "linked " << preds.size() << " mentions";
    if (st.degraded_records) std::cout << " (" << st.degraded_records << " degraded)";
    std::cout << "\n";
  });

  // eval
  DatasetOptions eval_data;
  EncoderOptions eval_enc;
  ScorerOptions eval_scorer;
  std::string k_list = "1,5,64", candidates_path, predictions_path;
  std::size_t k_candidates = 64;
  auto* eval = app.add_subcommand("eval", "recall report for a dataset");
  eval_data.add(eval);
  auto* eval_src = eval->add_option_group("source", "where candidates come from");
  eval_src->add_option("--index", index_path, "retrieve with this index");
  eval_src->add_option("--candidates", candidates_path, "precomputed candidate JSONL");
  eval_src->add_option("--predictions", predictions_path, "score an existing predictions file");
  eval_src->require_option(1);
  eval_enc.add(eval);
  eval_scorer.add(eval);
  eval->add_option("--k", k_list, "recall cutoffs")->capture_default_str();
  eval->add_option("--k-candidates", k_candidates, "candidates handed to the reranker")
      ->capture_default_str();
  eval->add_option("--overscan", overscan)->capture_default_str();
  eval->add_option("--threads", threads)->capture_default_str();
  eval->add_option("--report", report, "report JSON path");
  eval->add_option("--out", out, "also write predictions here");
  eval->callback([&] {
    const auto records = eval_data.load();
    const auto kb = eval_data.load_kb();
    EvalOptions opts;
    opts.k_set = parse_k_list(k_list);
    opts.k_candidates = k_candidates;
    opts.rerank = eval_scorer.rerank();
    opts.kb = kb ? &*kb : nullptr;
    opts.threads = threads;
    EvalReport rep;
    std::vector<PredictionRow> preds;
    if (!predictions_path.empty()) {
      auto in = open_in(predictions_path);
      preds = read_predictions(in);
      rep = build_report(records, preds, opts);
    } else {
      const auto scorer = eval_scorer.make(records);
      opts.scorer = scorer.get();
      std::optional<VectorIndex> idx;
      std::unique_ptr<Encoder> enc;
      std::unique_ptr<CandidateSource> src;
      if (!index_path.empty()) {
        idx.emplace(VectorIndex::load(index_path));
        enc = eval_enc.make();
        src = std::make_unique<ExactRetriever>(*idx, *enc, overscan);
      } else {
        src = std::make_unique<FileCandidates>(fs::path(candidates_path));
      }
      opts.fingerprint["retriever"] = src->describe();
      auto result = evaluate(records, *src, opts);
      rep = std::move(result.report);
      preds = std::move(result.predictions);
    }
    if (!report.empty()) write_text(report, report_to_json(rep));
    if (!out.empty()) {
      auto o = open_out(out);
      write_predictions(o, preds);
    }
    std::cout << format_report_table(rep);
  });

  // ablate
  DatasetOptions abl_data;
  EncoderOptions abl_enc;
  ScorerOptions abl_scorer;
  std::vector<std::string> axes, markers_list, fields_list, candidate_files;
  auto* ablate = app.add_subcommand("ablate", "grid over retrievers, markers and document fields");
  abl_data.add(ablate);
  abl_enc.add(ablate);
  abl_scorer.add(ablate);
  ablate->add_option("--axes", axes, "axes to vary: marker, fields")->delimiter(',');
  ablate->add_option("--markers", markers_list, "marker styles (default: all)")->delimiter(',');
  ablate->add_option("--fields-set", fields_list, "document field sets (default: all)")
      ->delimiter(',');
  ablate->add_option("--index", index_path, "exact retriever over this index");
  ablate->add_option("--candidates", candidate_files, "extra retrievers as NAME=PATH");
  ablate->add_option("--k", k_list, "recall cutoffs")->capture_default_str();
  ablate->add_option("--k-candidates", k_candidates)->capture_default_str();
  ablate->add_option("--overscan", overscan)->capture_default_str();
  ablate->add_option("--threads", threads)->capture_default_str();
  ablate->add_option("--report", report, "ablation JSON path");
  ablate->callback([&] {
    const auto records = abl_data.load();
    const auto kb = abl_data.load_kb();
    const auto scorer = abl_scorer.make(records);
    if (!scorer) throw Error(ErrorKind::kConfig, "ablation needs a scorer");
    EvalOptions opts;
    opts.k_set = parse_k_list(k_list);
    opts.k_candidates = k_candidates;
    opts.scorer = scorer.get();
    opts.rerank = abl_scorer.rerank();
    opts.kb = kb ? &*kb : nullptr;
    opts.threads = threads;

    AblationAxes ax;
    ax.markers = {opts.rerank.marker};
    ax.fields = {opts.rerank.fields};
    for (const auto& a : axes) {
      if (a == "marker") {
        ax.markers.clear();
        if (markers_list.empty()) markers_list = {"tgt", "mention_tag", "asterisk", "none"};
        for (const auto& m : markers_list) ax.markers.push_back(parse_marker_style(m));
      } else if (a == "fields") {
        ax.fields.clear();
        if (fields_list.empty()) fields_list = {"name", "name_type", "name_type_description"};
        for (const auto& f : fields_list) ax.fields.push_back(parse_document_fields(f));
      } else {
        throw Error(ErrorKind::kConfig, "unknown ablation axis '" + a + "'");
      }
    }

    std::optional<VectorIndex> idx;
    std::unique_ptr<Encoder> enc;
    std::vector<std::unique_ptr<CandidateSource>> owned;
    std::map<std::string, const CandidateSource*> sources;
    if (!index_path.empty()) {
      idx.emplace(VectorIndex::load(index_path));
      enc = abl_enc.make();
      owned.push_back(std::make_unique<ExactRetriever>(*idx, *enc, overscan));
      sources["exact"] = owned.back().get();
      ax.retrievers.push_back("exact");
    }
    for (const auto& entry : candidate_files) {
      const auto eq = entry.find('=');
      if (eq == std::string::npos || eq == 0) {
        throw Error(ErrorKind::kConfig, "--candidates expects NAME=PATH, got '" + entry + "'");
      }
      const auto name = entry.substr(0, eq);
      owned.push_back(std::make_unique<FileCandidates>(fs::path(entry.substr(eq + 1))));
      sources[name] = owned.back().get();
      ax.retrievers.push_back(name);
    }
    if (ax.retrievers.empty()) throw Error(ErrorKind::kConfig, "give --index or --candidates");
    const auto result = run_ablation(records, sources, ax, opts);
    if (!report.empty()) write_text(report, ablation_to_json(result));
    std::cout << format_ablation_table(result);
  });

  // run
  std::string config_path, stage;
  std::vector<std::string> overrides;
  bool force = false, quiet = false;
  auto* run = app.add_subcommand("run", "run the configured pipeline end to end");
  run->add_option("--config", config_path)->required();
  run->add_flag("--force", force, "re-run stages even when their fingerprint matches");
  run->add_option("--stage", stage, "run only this stage");
  run->add_option("--set", overrides, "override a config key: section.key=value");
  run->add_flag("--quiet", quiet, "do not mirror log lines to stderr");
  run->callback([&] {
    const auto cfg = PipelineConfig::load(config_path, overrides);
    RunOptions opt;
    opt.force = force;
    if (!stage.empty()) opt.only_stage = stage;
    opt.log = quiet ? nullptr : &std::cerr;
    opt.report = &std::cout;
    const auto summary = run_pipeline(cfg, opt);
    std::size_t skipped = 0;
    for (const auto& s : summary.stages) skipped += s.skipped ? 1 : 0;
    std::cout << "config " << summary.config_hash << ": " << summary.stages.size() - skipped
              << " stages run, " << skipped << " skipped\n";
  });

  // synth
  std::size_t n_concepts = 200, n_languages = 5;
  std::uint64_t seed = 42;
  auto* synth = app.add_subcommand("synth", "write the synthetic multilingual corpus");
  synth->add_option("--concepts", n_concepts)->capture_default_str();
  synth->add_option("--languages", n_languages)->capture_default_str();
  synth->add_option("--seed", seed)->capture_default_str();
  synth->add_option("--out", out, "output directory")->required();
  synth->callback([&] {
    const auto corpus = generate_synthetic_corpus(n_concepts, n_languages, seed);
    const auto files = write_synthetic_corpus(corpus, out, seed);
    std::cout << "wrote " << corpus.concepts.size() << " concepts, " << corpus.mentions.size()
              << " held-out mentions to " << files.dump.parent_path().string() << "\n";
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  } catch (const TransportError& e) {
    std::cerr << "belx: transport error after " << e.attempts() << " attempts: " << e.what()
              << "\n";
    return kExitStage;
  } catch (const Error& e) {
    std::cerr << "belx: " << to_string(e.kind()) << " error: " << e.what() << "\n";
    return exit_code(e);
  } catch (const std::exception& e) {
    std::cerr << "belx: " << e.what() << "\n";
    return kExitStage;
  }
  return 0;
}

#include <gtest/gtest.h>

#include <json.hpp>

#include <random>
#include <sstream>

#include "belx/error.hpp"
#include "belx/eval.hpp"
#include "belx/random.hpp"
#include "test_support.hpp"

using namespace belx;

namespace {

LinkRecord record(const std::string& id, const std::string& text, const std::string& mention,
                  const std::string& cui, const std::string& lang) {
  DocumentText doc(id, text);
  const auto at = text.find(mention);
  const auto span = MentionSpan::make(doc, at, at + mention.size());
  return LinkRecord{id, doc, span, cui, lang};
}

CandidateSet set_of(const std::vector<std::string>& cuis) {
  CandidateSet s;
  for (std::size_t i = 0; i < cuis.size(); ++i) s.hits.push_back({cuis[i], cuis[i] + "-alias", 0.0, i});
  s.k = cuis.size();
  return s;
}

// Naive recall: count golds appearing in the first k, by hand.
double oracle_recall(const std::vector<std::vector<std::string>>& ranked,
                     const std::vector<std::string>& golds, std::size_t k) {
  std::size_t hits = 0;
  for (std::size_t i = 0; i < golds.size(); ++i) {
    for (std::size_t j = 0; j < ranked[i].size() && j < k; ++j) {
      if (ranked[i][j] == golds[i]) {
        ++hits;
        break;
      }
    }
  }
  return 100.0 * static_cast<double>(hits) / static_cast<double>(golds.size());
}

}  // namespace

TEST(RecallAtK, MatchesCountingOracleAndIsMonotone) {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 1 + uniform_below(rng, 40);
    std::vector<std::vector<std::string>> ranked(n);
    std::vector<std::string> golds(n);
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t len = uniform_below(rng, 10);
      for (std::size_t j = 0; j < len; ++j) ranked[i].push_back("C" + std::to_string(uniform_below(rng, 12)));
      golds[i] = "C" + std::to_string(uniform_below(rng, 12));
    }
    double prev = 0.0;
    for (std::size_t k = 1; k <= 12; ++k) {
      const double r = recall_at_k(ranked, golds, k);
      EXPECT_DOUBLE_EQ(r, oracle_recall(ranked, golds, k));
      EXPECT_GE(r, prev);
      EXPECT_LE(r, 100.0);
      prev = r;
    }
  }
}

TEST(RecallAtK, Preconditions) {
  const std::vector<std::vector<std::string>> ranked = {{"A"}};
  const std::vector<std::string> golds = {"A"};
  const std::vector<std::string> two = {"A", "B"};
  EXPECT_THROW(recall_at_k(ranked, golds, 0), Error);
  EXPECT_THROW(recall_at_k(ranked, two, 1), Error);
  EXPECT_THROW(recall_at_k({}, {}, 1), Error);
  EXPECT_DOUBLE_EQ(recall_at_k(ranked, golds, 1), 100.0);
}

TEST(Dataset, JsonlSkipsBadRows) {
  std::istringstream in(
      R"({"id":"a","text":"fatigue ou essoufflement.","start":11,"end":24,"cui":"C0013404","lang":"fr"})"
      "\n"
      R"({"id":"b","text":"short","start":3,"end":99,"cui":"C1","lang":"en"})"
      "\n"
      "not json\n"
      R"({"id":"c","text":"héllo","start":1,"end":2,"cui":"C1","lang":"fr"})"
      "\n"
      R"({"id":"d","text":"gout flare","start":0,"end":4,"cui":"","lang":"en"})"
      "\n");
  const auto load = load_dataset(in, DatasetFormat::kJsonl);
  ASSERT_EQ(load.records.size(), 1u);
  EXPECT_EQ(load.records[0].mention(), "essoufflement");
  EXPECT_EQ(load.skipped, 4u);
  EXPECT_FALSE(load.problems.empty());
  std::istringstream empty("garbage\n");
  EXPECT_THROW(load_dataset(empty, DatasetFormat::kJsonl), Error);
}

TEST(Dataset, XlbelTsvUsesFirstOccurrence) {
  std::istringstream in("x1\tde\tC0018099\tGicht\tDie Gicht ist eine Gicht.\n"
                        "x2\tde\tC1\tmissing\tnot here\n");
  const auto load = load_dataset(in, DatasetFormat::kXlbelTsv);
  ASSERT_EQ(load.records.size(), 1u);
  EXPECT_EQ(load.records[0].span.start, 4u);
  EXPECT_EQ(load.records[0].language, "de");
  EXPECT_EQ(load.skipped, 1u);
}

TEST(Evaluate, RetrieverOnlyPerLanguageAndMacroAverage) {
  const std::vector<LinkRecord> recs = {
      record("1", "a gout b", "gout", "G", "en"), record("2", "a asthme b", "asthme", "A", "fr"),
      record("3", "a toux b", "toux", "T", "fr"), record("4", "x fever y", "fever", "F", "en"),
      record("5", "x fièvre y", "fièvre", "F", "fr")};
  const std::vector<CandidateSet> sets = {set_of({"G", "X"}), set_of({"X", "A"}),
                                          set_of({"X", "Y"}), set_of({"F"}), set_of({"F", "A"})};
  EvalOptions opt;
  opt.k_set = {1, 2};
  opt.k_candidates = 2;
  const auto result = evaluate_candidates(recs, sets, opt);
  const auto& r = result.report;
  EXPECT_EQ(r.records, 5u);
  EXPECT_DOUBLE_EQ(r.overall.retrieval.at(1), 60.0);
  EXPECT_DOUBLE_EQ(r.overall.retrieval.at(2), 80.0);
  ASSERT_EQ(r.per_language.size(), 2u);
  EXPECT_EQ(r.per_language[0].language, "en");
  EXPECT_DOUBLE_EQ(r.per_language[0].retrieval.at(1), 100.0);
  EXPECT_NEAR(r.per_language[1].retrieval.at(1), 100.0 / 3.0, 1e-12);
  EXPECT_NEAR(r.average.retrieval.at(1), (100.0 + 100.0 / 3.0) / 2.0, 1e-12);
  EXPECT_FALSE(r.overall.reranked_r1.has_value());
  ASSERT_EQ(result.predictions.size(), 5u);
  EXPECT_EQ(result.predictions[1].retrieved, (std::vector<std::string>{"X", "A"}));
}

TEST(Evaluate, GoldScorerAttainsTheBound) {
  const std::vector<LinkRecord> recs = {
      record("1", "a gout b", "gout", "G", "en"), record("2", "a asthme b", "asthme", "A", "fr"),
      record("3", "a toux b", "toux", "T", "fr")};
  const std::vector<CandidateSet> sets = {set_of({"X", "G"}), set_of({"X", "Y", "A"}),
                                          set_of({"X", "Y"})};
  GoldScorer gold({{"1", "G"}, {"2", "A"}, {"3", "T"}});
  EvalOptions opt;
  opt.k_set = {1, 3};
  opt.k_candidates = 3;
  opt.scorer = &gold;
  const auto r = evaluate_candidates(recs, sets, opt).report;
  ASSERT_TRUE(r.overall.reranked_r1);
  EXPECT_DOUBLE_EQ(*r.overall.reranked_r1, r.overall.retrieval_at_candidates);
  EXPECT_NEAR(*r.overall.reranked_r1, 200.0 / 3.0, 1e-12);
  EXPECT_DOUBLE_EQ(r.overall.retrieval.at(1), 0.0);
}

// Reranking only permutes the first k_candidates, so whatever the scorer does
// reranked R@1 never exceeds R@k.
TEST(Evaluate, UpperBoundHoldsForArbitraryScores) {
  std::mt19937_64 rng(23);
  struct RandomScorer final : Scorer {
    mutable std::mt19937_64 rng{5};
    std::vector<ScoreOutcome> score(std::span<const ScoreItem> items) const override {
      std::vector<ScoreOutcome> out;
      for (std::size_t i = 0; i < items.size(); ++i) {
        out.push_back({ScorerResponse{uniform01(rng) * 10 - 5, 0.0}, {}});
      }
      return out;
    }
    std::string describe() const override { return "random"; }
  } scorer;
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<LinkRecord> recs;
    std::vector<CandidateSet> sets;
    for (int i = 0; i < 30; ++i) {
      const auto gold = "C" + std::to_string(uniform_below(rng, 8));
      recs.push_back(record("r" + std::to_string(i), "see m here", "m", gold,
                            uniform_below(rng, 2) ? "en" : "fr"));
      std::vector<std::string> cuis;
      for (int c = 0; c < 8; ++c) {
        if (uniform_below(rng, 2)) cuis.push_back("C" + std::to_string(c));
      }
      if (cuis.empty()) cuis.push_back("C9");
      sets.push_back(set_of(cuis));
    }
    EvalOptions opt;
    opt.k_set = {1, 3, 8};
    opt.k_candidates = 3;
    opt.scorer = &scorer;
    const auto r = evaluate_candidates(recs, sets, opt).report;
    EXPECT_LE(*r.overall.reranked_r1, r.overall.retrieval_at_candidates);
    for (const auto& row : r.per_language) {
      EXPECT_LE(*row.reranked_r1, row.retrieval_at_candidates);
    }
  }
}

TEST(Invariants, ViolationsAreInvariantErrors) {
  EvalReport rep;
  rep.k_set = {1, 5};
  rep.k_candidates = 5;
  rep.overall.language = "ALL";
  rep.overall.retrieval = {{1, 50.0}, {5, 40.0}};
  rep.overall.retrieval_at_candidates = 40.0;
  try {
    check_report_invariants(rep);
    ADD_FAILURE();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kInvariant);
  }
  rep.overall.retrieval = {{1, 30.0}, {5, 40.0}};
  rep.overall.reranked_r1 = 45.0;
  EXPECT_THROW(check_report_invariants(rep), Error);
  rep.overall.reranked_r1 = 40.0;
  EXPECT_NO_THROW(check_report_invariants(rep));
}

TEST(Invariants, ForgedPredictionsRejected) {
  const std::vector<LinkRecord> recs = {record("1", "a gout b", "gout", "G", "en")};
  EvalOptions opt;
  opt.k_set = {1};
  opt.k_candidates = 2;
  GoldScorer gold({});
  opt.scorer = &gold;
  // reranked list introduces a cui absent from the retrieved top-k
  const std::vector<PredictionRow> rows = {{"1", {"X", "Y"}, std::vector<std::string>{"G", "X"}, "G"}};
  try {
    build_report(recs, rows, opt);
    ADD_FAILURE();
  } catch (const Error& e) {
    EXPECT_TRUE(e.kind() == ErrorKind::kIntegrity || e.kind() == ErrorKind::kInvariant);
  }
  const std::vector<PredictionRow> wrong_id = {{"2", {"G"}, std::nullopt, "G"}};
  opt.scorer = nullptr;
  EXPECT_THROW(build_report(recs, wrong_id, opt), Error);
}

TEST(Predictions, JsonlRoundTrip) {
  const std::vector<PredictionRow> rows = {
      {"a", {"C1", "C2"}, std::vector<std::string>{"C2", "C1"}, "C2"},
      {"b", {}, std::nullopt, "C3"},
      {"c", {"C\"q"}, std::vector<std::string>{}, "C\"q"}};
  std::ostringstream out;
  write_predictions(out, rows);
  std::istringstream in(out.str());
  EXPECT_EQ(read_predictions(in), rows);
}

TEST(FileCandidates, ParsesBothShapesAndMissingIds) {
  std::istringstream in(
      R"({"id":"1","candidates":["A","B","A","C"]})" "\n"
      R"({"id":"2","candidates":[{"cui":"Z","alias":"zed","score":0.5}]})" "\n");
  FileCandidates fc(in);
  const auto r1 = record("1", "a gout b", "gout", "G", "en");
  const auto r2 = record("2", "a gout b", "gout", "G", "en");
  const auto r3 = record("3", "a gout b", "gout", "G", "en");
  const auto s1 = fc.candidates(r1, 2);
  ASSERT_EQ(s1.hits.size(), 2u);
  EXPECT_EQ(s1.hits[1].cui, "B");
  EXPECT_EQ(fc.candidates(r2, 5).hits.at(0).alias, "zed");
  EXPECT_TRUE(fc.candidates(r3, 5).hits.empty());
}

TEST(Ablation, OneCellPerCombination) {
  const std::vector<LinkRecord> recs = {record("1", "a gout b", "gout", "G", "en"),
                                        record("2", "a toux b", "toux", "T", "fr")};
  std::istringstream a(R"({"id":"1","candidates":["G","X"]})" "\n" R"({"id":"2","candidates":["X","T"]})" "\n");
  std::istringstream b(R"({"id":"1","candidates":["X"]})" "\n");
  FileCandidates fa(a, "a"), fb(b, "b");
  AblationAxes axes;
  axes.retrievers = {"a", "b"};
  axes.markers = {MarkerStyle::kTgt, MarkerStyle::kNone};
  axes.fields = {DocumentFields::kNameOnly, DocumentFields::kNameType};
  MockScorer mock;
  EvalOptions base;
  base.k_set = {1, 2};
  base.k_candidates = 2;
  base.scorer = &mock;
  const auto res = run_ablation(recs, {{"a", &fa}, {"b", &fb}}, axes, base);
  ASSERT_EQ(res.cells.size(), 8u);
  for (const auto& c : res.cells) {
    ASSERT_TRUE(c.report) << c.error;
    EXPECT_LE(*c.report->overall.reranked_r1, c.report->overall.retrieval_at_candidates);
  }
  EXPECT_FALSE(format_ablation_table(res).empty());
  EXPECT_NO_THROW((void)nlohmann::json::parse(ablation_to_json(res)));
}

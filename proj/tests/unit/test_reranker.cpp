#include <gtest/gtest.h>

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <limits>
#include <random>
#include <set>

#include "belx/error.hpp"
#include "belx/random.hpp"
#include "belx/reranker.hpp"
#include "test_support.hpp"

using namespace belx;
using nlohmann::json;

namespace {

const std::string kFrench =
    "Une réduction du nombre de globules rouges peut entraîner des symptômes tels que "
    "fatigue ou essoufflement.";

MentionSpan span_of(const DocumentText& doc, const std::string& needle) {
  const auto at = doc.text().find(needle);
  return MentionSpan::make(doc, at, at + needle.size());
}

CandidateSet candidates(std::initializer_list<std::pair<const char*, const char*>> cui_alias) {
  CandidateSet set;
  set.mention = "m";
  std::size_t rank = 0;
  for (const auto& [cui, alias] : cui_alias) set.hits.push_back({cui, alias, 0.0, rank++});
  set.k = set.hits.size();
  return set;
}

// Replays fixed logits per cui.
class FixedScorer final : public Scorer {
 public:
  explicit FixedScorer(std::map<std::string, ScoreOutcome> by_cui) : by_cui_(std::move(by_cui)) {}
  std::vector<ScoreOutcome> score(std::span<const ScoreItem> items) const override {
    std::vector<ScoreOutcome> out;
    for (const auto& i : items) out.push_back(by_cui_.at(i.cui));
    return out;
  }
  std::string describe() const override { return "fixed"; }

 private:
  std::map<std::string, ScoreOutcome> by_cui_;
};

std::set<std::u32string> trigram_set(const std::u32string& s) {
  std::set<std::u32string> g;
  if (s.size() < 3) {
    g.insert(s);
  } else {
    for (std::size_t i = 0; i + 3 <= s.size(); ++i) g.insert(s.substr(i, 3));
  }
  return g;
}

}  // namespace

TEST(SoftmaxYes, ClosedFormValues) {
  EXPECT_NEAR(softmax_yes({std::log(3.0), 0.0}), 0.75, 1e-12);
  for (const double x : {-800.0, -1.5, 0.0, 3.25, 1e6}) EXPECT_EQ(softmax_yes({x, x}), 0.5);
  const double big = softmax_yes({1000.0, -1000.0});
  EXPECT_TRUE(std::isfinite(big));
  EXPECT_NEAR(big, 1.0, std::numeric_limits<float>::epsilon());
  EXPECT_EQ(softmax_yes({-1000.0, 1000.0}), 0.0);
  EXPECT_THROW(softmax_yes({std::nan(""), 0.0}), Error);
  EXPECT_THROW(softmax_yes({0.0, std::numeric_limits<double>::infinity()}), Error);
}

TEST(SoftmaxYes, StrictlyIncreasingInLogitGap) {
  double prev = -1.0;
  for (double gap = -30.0; gap <= 30.0; gap += 0.5) {
    const double p = softmax_yes({gap + 7.0, 7.0});
    EXPECT_GT(p, prev);
    prev = p;
  }
}

TEST(BuildQuery, FrenchExampleWithTgtMarkers) {
  const DocumentText doc("fr1", kFrench);
  const auto q = build_query(doc, span_of(doc, "essoufflement"), MarkerStyle::kTgt);
  EXPECT_NE(q.find("fatigue ou <tgt>essoufflement</tgt>."), std::string::npos);
  EXPECT_EQ(build_query(doc, span_of(doc, "essoufflement"), MarkerStyle::kNone), kFrench);
}

// Stripping the marker pair reproduces the unmarked window.
TEST(BuildQuery, MarkersWrapExactlyTheSurface) {
  const DocumentText doc("d", "Le patient présente une dyspnée sévère depuis hier.");
  const auto span = span_of(doc, "dyspnée");
  for (const auto style : {MarkerStyle::kTgt, MarkerStyle::kMentionTag, MarkerStyle::kAsterisk}) {
    const auto q = build_query(doc, span, style);
    const auto [open, close] = marker_pair(style);
    const auto o = q.find(open);
    const auto c = q.find(close, o + open.size());
    ASSERT_NE(o, std::string::npos);
    ASSERT_NE(c, std::string::npos);
    EXPECT_EQ(q.substr(o + open.size(), c - o - open.size()), "dyspnée");
    std::string stripped = q;
    stripped.erase(c, close.size());
    stripped.erase(o, open.size());
    EXPECT_EQ(stripped, doc.text());
    if (style != MarkerStyle::kAsterisk) {
      EXPECT_EQ(q.find(open, o + 1), std::string::npos);
    }
  }
}

TEST(BuildQuery, WindowKeepsCharactersEachSide) {
  const std::string text = "ééééééééééééééééééééé abcdef MENTION ghijkl ûûûûûûûûûûûûûûûûû";
  const DocumentText doc("w", text);
  const auto span = span_of(doc, "MENTION");
  const auto q = build_query(doc, span, MarkerStyle::kTgt, 10);
  // independent slicing over code points
  std::u32string cps;
  std::size_t start_cp = 0, end_cp = 0;
  {
    std::size_t byte = 0;
    for (std::size_t i = 0; i < text.size();) {
      if (i == span.start) start_cp = cps.size();
      if (i == span.end) end_cp = cps.size();
      const auto lead = static_cast<unsigned char>(text[i]);
      const std::size_t len = lead < 0x80 ? 1 : lead < 0xE0 ? 2 : lead < 0xF0 ? 3 : 4;
      cps.push_back(lead);
      i += len;
      byte = i;
    }
    (void)byte;
  }
  const std::size_t left = start_cp >= 10 ? start_cp - 10 : 0;
  const std::size_t right = std::min(cps.size(), end_cp + 10);
  // map code point positions back to bytes
  std::vector<std::size_t> offsets;
  for (std::size_t i = 0; i < text.size();) {
    offsets.push_back(i);
    const auto lead = static_cast<unsigned char>(text[i]);
    i += lead < 0x80 ? 1 : lead < 0xE0 ? 2 : lead < 0xF0 ? 3 : 4;
  }
  offsets.push_back(text.size());
  const std::string expected = text.substr(offsets[left], span.start - offsets[left]) +
                               "<tgt>MENTION</tgt>" +
                               text.substr(span.end, offsets[right] - span.end);
  EXPECT_EQ(q, expected);
  EXPECT_LE(q.size(), 7 + 20 * 2 + 11);  // each windowed char is at most two bytes here
}

TEST(BuildQuery, InvalidSpanRejected) {
  const DocumentText doc("x", "héllo");
  EXPECT_THROW(build_query(doc, MentionSpan{2, 3}, MarkerStyle::kTgt), Error);
  EXPECT_THROW(build_query(doc, MentionSpan{0, 99}, MarkerStyle::kTgt), Error);
}

TEST(BuildDocument, FieldVariants) {
  EntityRecord dysp{"C0013404", "Dyspnea", {}, std::string("Sign or Symptom"),
                    std::string("Difficult or labored breathing.")};
  EXPECT_EQ(build_document(&dysp, "Dyspnea", DocumentFields::kNameOnly), "Dyspnea");
  EXPECT_EQ(build_document(&dysp, "Dyspnée", DocumentFields::kNameType),
            "Dyspnée | type: Sign or Symptom");
  EXPECT_EQ(build_document(&dysp, "Dyspnea", DocumentFields::kNameTypeDescription),
            "Dyspnea | type: Sign or Symptom | description: Difficult or labored breathing.");
  EntityRecord bare{"C1", "X", {}, std::nullopt, std::nullopt};
  EXPECT_EQ(build_document(&bare, "alias", DocumentFields::kNameTypeDescription), "alias");
  EXPECT_EQ(build_document(nullptr, "alias", DocumentFields::kNameType), "alias");
}

TEST(Prompt, GoldenAssembledStrings) {
  std::ifstream in(belx::testing::fixture("golden/prompts.jsonl"));
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    const auto j = json::parse(line);
    const auto p = assemble_prompt(j.at("template").get<std::string>(),
                                   j.at("query").get<std::string>(),
                                   j.at("document").get<std::string>());
    EXPECT_EQ(p.assembled, j.at("prompt").get<std::string>()) << line;
    ++n;
  }
  EXPECT_EQ(n, 3u);
}

TEST(Prompt, SubstitutesEachPartOnce) {
  const auto p = assemble_prompt(kDefaultTemplateId, "qqqzz", "dddzz");
  auto count = [&](const std::string& s) {
    std::size_t c = 0;
    for (auto at = p.assembled.find(s); at != std::string::npos; at = p.assembled.find(s, at + 1)) ++c;
    return c;
  };
  EXPECT_EQ(count("qqqzz"), 1u);
  EXPECT_EQ(count("dddzz"), 1u);
  EXPECT_EQ(p.instruction, kDefaultInstruction);
  EXPECT_THROW(assemble_prompt("no-such-template", "q", "d"), Error);
}

TEST(Prompt, RegistryValidatesPlaceholders) {
  PromptRegistry reg;
  EXPECT_THROW(reg.add({"t1", "i", "{query} {document}"}), Error);
  EXPECT_THROW(reg.add({"t2", "i", "{instruction} {query} {query} {document}"}), Error);
  EXPECT_THROW(reg.add({std::string(kDefaultTemplateId), "i", "{instruction}{query}{document}"}),
               Error);
  reg.add({"t3", "I", "[{instruction}]({query})<{document}>"});
  EXPECT_EQ(assemble_prompt(reg, "t3", "a", "b").assembled, "[I](a)<b>");
}

TEST(TrigramJaccard, MatchesSetOracle) {
  const std::vector<std::pair<std::u32string, std::string>> words = {
      {U"essoufflement", "essoufflement"}, {U"souffle court", "souffle court"},
      {U"dyspnée", "dyspnée"},             {U"Dyspnea", "Dyspnea"},
      {U"ab", "ab"},                       {U"abab", "abab"}};
  for (const auto& [ua, a] : words) {
    for (const auto& [ub, b] : words) {
      const auto ga = trigram_set(ua), gb = trigram_set(ub);
      std::size_t inter = 0;
      for (const auto& g : ga) inter += gb.count(g);
      const double expect = static_cast<double>(inter) / static_cast<double>(ga.size() + gb.size() - inter);
      EXPECT_DOUBLE_EQ(trigram_jaccard(a, b), expect) << a << " / " << b;
    }
  }
}

TEST(Scorers, MockUsesDocumentedFormula) {
  MockScorer mock;
  std::vector<ScoreItem> items(2);
  items[0].mention = "dyspnée";
  items[0].prompt.document = "dyspnée";
  items[1].mention = "abc";
  items[1].prompt.document = "xyz";
  const auto out = mock.score(items);
  EXPECT_DOUBLE_EQ(out[0].response->yes_logit, 2.0);
  EXPECT_DOUBLE_EQ(out[1].response->yes_logit, -2.0);
  EXPECT_DOUBLE_EQ(out[1].response->no_logit, 0.0);
}

TEST(Rerank, GoldScorerPutsGoldFirstWhenPresent) {
  const DocumentText doc("r1", kFrench);
  const auto span = span_of(doc, "essoufflement");
  GoldScorer gold(std::map<std::string, std::string>{{"r1", "C0013404"}});
  const auto set = candidates({{"C0013998", "effleurage"}, {"C0013404", "dyspnée"},
                               {"C0002871", "anémie"}});
  const auto pred = rerank(set, doc, span, RerankOptions{}, gold, nullptr, "r1");
  EXPECT_EQ(pred.top1, "C0013404");
  EXPECT_EQ(pred.ranked[1].cui, "C0013998");  // tie falls back to retrieval order
  EXPECT_FALSE(pred.degraded);
}

TEST(Rerank, EqualScoresKeepRetrievalOrder) {
  const DocumentText doc("r", "foo bar");
  FixedScorer s({{"A", {ScorerResponse{1, 1}, {}}},
                 {"B", {ScorerResponse{1, 1}, {}}},
                 {"C", {ScorerResponse{1, 1}, {}}}});
  const auto pred = rerank(candidates({{"C", "c"}, {"A", "a"}, {"B", "b"}}), doc,
                           MentionSpan::make(doc, 0, 3), {}, s);
  EXPECT_EQ(pred.ranked[0].cui, "C");
  EXPECT_EQ(pred.ranked[1].cui, "A");
  EXPECT_EQ(pred.ranked[2].cui, "B");
}

TEST(Rerank, RandomScoresMatchStableSortOracle) {
  std::mt19937_64 rng(404);
  const DocumentText doc("r", "some mention here");
  for (int trial = 0; trial < 20; ++trial) {
    CandidateSet set;
    std::map<std::string, ScoreOutcome> table;
    std::vector<std::pair<double, std::size_t>> oracle;
    for (std::size_t i = 0; i < 64; ++i) {
      const auto cui = "C" + std::to_string(i);
      set.hits.push_back({cui, "alias" + std::to_string(i), 0.0, i});
      // coarse grid so ties happen
      const double y = static_cast<double>(uniform_below(rng, 8)) - 4.0;
      table[cui] = {ScorerResponse{y, 0.0}, {}};
      oracle.emplace_back(softmax_yes({y, 0.0}), i);
    }
    std::stable_sort(oracle.begin(), oracle.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    const auto pred = rerank(set, doc, MentionSpan::make(doc, 5, 12), {}, FixedScorer(table));
    for (std::size_t i = 0; i < 64; ++i) EXPECT_EQ(pred.ranked[i].retrieval_rank, oracle[i].second);

    // strictly increasing transform of both logits leaves the order unchanged
    std::map<std::string, ScoreOutcome> cubed;
    for (const auto& [cui, o] : table) {
      cubed[cui] = {ScorerResponse{std::pow(o.response->yes_logit, 3), 0.0}, {}};
    }
    const auto pred2 = rerank(set, doc, MentionSpan::make(doc, 5, 12), {}, FixedScorer(cubed));
    for (std::size_t i = 0; i < 64; ++i) EXPECT_EQ(pred2.ranked[i].cui, pred.ranked[i].cui);
  }
}

TEST(Rerank, FailedCandidatesSinkAndAllFailedIsPipelineError) {
  const DocumentText doc("r", "foo bar");
  const auto span = MentionSpan::make(doc, 0, 3);
  FixedScorer partial({{"A", {std::nullopt, "boom"}}, {"B", {ScorerResponse{-5, 0}, {}}}});
  const auto pred = rerank(candidates({{"A", "a"}, {"B", "b"}}), doc, span, {}, partial);
  EXPECT_EQ(pred.top1, "B");
  EXPECT_TRUE(pred.degraded);
  EXPECT_EQ(pred.failures, 1u);
  EXPECT_EQ(pred.ranked[1].error, "boom");
  EXPECT_TRUE(std::isinf(pred.ranked[1].s_rank));

  FixedScorer none({{"A", {std::nullopt, "down"}}});
  try {
    rerank(candidates({{"A", "a"}}), doc, span, {}, none);
    ADD_FAILURE();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kPipeline);
  }
  EXPECT_THROW(rerank(CandidateSet{}, doc, span, {}, none), Error);
}

TEST(Rerank, CanonicalDocAliasUsesKbName) {
  const DocumentText doc("r", "foo bar");
  KnowledgeBase kb({EntityRecord{"A", "Canonical A", {}, std::nullopt, std::nullopt}});
  struct Capture final : Scorer {
    mutable std::vector<std::string> docs;
    std::vector<ScoreOutcome> score(std::span<const ScoreItem> items) const override {
      std::vector<ScoreOutcome> out;
      for (const auto& i : items) {
        docs.push_back(i.prompt.document);
        out.push_back({ScorerResponse{0, 0}, {}});
      }
      return out;
    }
    std::string describe() const override { return "capture"; }
  } capture;
  RerankOptions opt;
  opt.doc_alias = DocAlias::kCanonical;
  rerank(candidates({{"A", "retrieved a"}}), doc, MentionSpan::make(doc, 0, 3), opt, capture, &kb);
  opt.doc_alias = DocAlias::kRetrieved;
  rerank(candidates({{"A", "retrieved a"}}), doc, MentionSpan::make(doc, 0, 3), opt, capture, &kb);
  EXPECT_EQ(capture.docs, (std::vector<std::string>{"Canonical A", "retrieved a"}));
}

TEST(HttpScorer, SingleAndBatchEndpoints) {
  std::atomic<int> singles{0}, batches{0};
  belx::testing::LocalServer server([&](httplib::Server& s) {
    s.Post("/score", [&](const httplib::Request& req, httplib::Response& res) {
      ++singles;
      const auto j = json::parse(req.body);
      const double y = j.at("document").get<std::string>() == "good" ? 3.0 : -3.0;
      res.set_content(json{{"yes_logit", y}, {"no_logit", 0.0}}.dump(), "application/json");
    });
    s.Post("/score_batch", [&](const httplib::Request& req, httplib::Response& res) {
      ++batches;
      json results = json::array();
      const auto body = json::parse(req.body);
      for (const auto& item : body.at("items")) {
        const double y = item.at("document").get<std::string>() == "good" ? 3.0 : -3.0;
        results.push_back({{"yes_logit", y}, {"no_logit", 0.0}});
      }
      res.set_content(json{{"results", results}}.dump(), "application/json");
    });
  });
  std::vector<ScoreItem> items(5);
  for (std::size_t i = 0; i < 5; ++i) items[i].prompt.document = i == 3 ? "good" : "bad";

  HttpScorerConfig cfg;
  cfg.url = server.url();
  const auto single = HttpScorer(cfg).score(items);
  cfg.use_batch_endpoint = true;
  cfg.batch_size = 2;
  const auto batched = HttpScorer(cfg).score(items);
  EXPECT_EQ(singles.load(), 5);
  EXPECT_EQ(batches.load(), 3);
  for (std::size_t i = 0; i < 5; ++i) {
    ASSERT_TRUE(single[i].response);
    ASSERT_TRUE(batched[i].response) << batched[i].error;
    EXPECT_EQ(single[i].response->yes_logit, i == 3 ? 3.0 : -3.0);
    EXPECT_EQ(batched[i].response->yes_logit, single[i].response->yes_logit);
  }
}

TEST(HttpScorer, FailuresAreReportedPerItem) {
  belx::testing::LocalServer server([&](httplib::Server& s) {
    s.Post("/score", [&](const httplib::Request& req, httplib::Response& res) {
      if (json::parse(req.body).at("document") == "bad") {
        res.status = 500;
        return;
      }
      res.set_content(R"({"yes_logit": 1, "no_logit": 0})", "application/json");
    });
  });
  HttpScorerConfig cfg;
  cfg.url = server.url();
  cfg.retry.max_attempts = 2;
  cfg.retry.initial_backoff = std::chrono::milliseconds(1);
  std::vector<ScoreItem> items(2);
  items[0].prompt.document = "bad";
  items[1].prompt.document = "ok";
  const auto out = HttpScorer(cfg).score(items);
  EXPECT_FALSE(out[0].response);
  EXPECT_FALSE(out[0].error.empty());
  ASSERT_TRUE(out[1].response);
  EXPECT_EQ(out[1].response->yes_logit, 1.0);
}

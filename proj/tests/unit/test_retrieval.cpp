#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <random>

#include "belx/error.hpp"
#include "belx/random.hpp"
#include "belx/retrieval.hpp"
#include "test_support.hpp"

using namespace belx;

namespace {

std::vector<float> random_unit(std::mt19937_64& rng, std::size_t d) {
  std::vector<float> v(d);
  for (auto& x : v) x = static_cast<float>(uniform01(rng) * 2.0 - 1.0);
  return l2_normalize(std::span<const float>(v));
}

VectorIndex random_index(std::mt19937_64& rng, std::size_t m, std::size_t d) {
  std::vector<float> matrix;
  std::vector<IndexedAlias> records;
  for (std::size_t r = 0; r < m; ++r) {
    const auto v = random_unit(rng, d);
    matrix.insert(matrix.end(), v.begin(), v.end());
    records.push_back({"alias" + std::to_string(r), "C" + std::to_string(r % 97), "en", 0});
  }
  return VectorIndex::from_rows(d, std::move(matrix), std::move(records));
}

// Brute force: every row scored in long double, full sort.
std::vector<std::size_t> oracle_top_k(const VectorIndex& index, std::span<const float> q,
                                      std::size_t k) {
  std::vector<std::pair<long double, std::size_t>> all;
  for (std::size_t r = 0; r < index.size(); ++r) {
    long double s = 0.0L;
    for (std::size_t j = 0; j < q.size(); ++j) s += (long double)index.row(r)[j] * q[j];
    all.emplace_back(s, r);
  }
  std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) {
    return a.first > b.first || (a.first == b.first && a.second < b.second);
  });
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < std::min(k, all.size()); ++i) rows.push_back(all[i].second);
  return rows;
}

class TableEncoder final : public Encoder {
 public:
  explicit TableEncoder(std::map<std::string, std::vector<float>> table)
      : Encoder(config_for(table)), table_(std::move(table)) {}
  std::size_t dimension() const override { return table_.begin()->second.size(); }
  std::string describe() const override { return "table"; }

 protected:
  std::vector<Embedding> embed_prepared(std::span<const std::string> batch) const override {
    std::vector<Embedding> out;
    for (const auto& s : batch) out.push_back(l2_normalize(std::span<const float>(table_.at(s))));
    return out;
  }

 private:
  static EncoderConfig config_for(const std::map<std::string, std::vector<float>>& t) {
    EncoderConfig c;
    c.dimension = t.begin()->second.size();
    return c;
  }
  std::map<std::string, std::vector<float>> table_;
};

}  // namespace

TEST(ExactSearch, MatchesBruteForceOracle) {
  std::mt19937_64 rng(31);
  const auto index = random_index(rng, 1000, 32);
  for (int q = 0; q < 50; ++q) {
    const auto query = random_unit(rng, 32);
    const auto hits = index.search(query, 64);
    const auto expected = oracle_top_k(index, query, 64);
    ASSERT_EQ(hits.size(), 64u);
    for (std::size_t i = 0; i < 64; ++i) EXPECT_EQ(hits[i].record.vector_row, expected[i]);
    for (std::size_t i = 1; i < hits.size(); ++i) EXPECT_GE(hits[i - 1].score, hits[i].score);
  }
}

TEST(ExactSearch, KBeyondSizeReturnsEverything) {
  std::mt19937_64 rng(32);
  const auto index = random_index(rng, 7, 5);
  EXPECT_EQ(index.search(random_unit(rng, 5), 100).size(), 7u);
}

TEST(ExactSearch, TiesBreakByAscendingRow) {
  std::vector<float> m = {1, 0, 0, 1, 1, 0, 1, 0};
  std::vector<IndexedAlias> recs = {{"a", "C1", "en", 0}, {"b", "C2", "en", 0},
                                    {"c", "C3", "en", 0}, {"d", "C4", "en", 0}};
  const auto index = VectorIndex::from_rows(2, m, recs);
  const std::vector<float> q = {1, 0};
  const auto hits = index.search(q, 3);
  EXPECT_EQ(hits[0].record.alias, "a");
  EXPECT_EQ(hits[1].record.alias, "c");
  EXPECT_EQ(hits[2].record.alias, "d");
}

TEST(ExactSearch, Preconditions) {
  std::mt19937_64 rng(33);
  const auto index = random_index(rng, 5, 4);
  const std::vector<float> wrong_dim = {1, 0, 0};
  const std::vector<float> not_unit = {2, 0, 0, 0};
  const auto ok = random_unit(rng, 4);
  for (const auto& call : std::vector<std::function<void()>>{
           [&] { index.search(wrong_dim, 1); }, [&] { index.search(not_unit, 1); },
           [&] { index.search(ok, 0); }}) {
    try {
      call();
      ADD_FAILURE();
    } catch (const Error& e) {
      EXPECT_EQ(e.kind(), ErrorKind::kPrecondition);
    }
  }
  EXPECT_THROW(VectorIndex::from_rows(4, std::vector<float>(7), {}), Error);
}

TEST(VectorIndex, SaveLoadRoundTrip) {
  belx::testing::TempDir dir;
  std::mt19937_64 rng(34);
  const auto index = random_index(rng, 30, 6);
  index.save(dir / "i.bin");
  const auto back = VectorIndex::load(dir / "i.bin");
  EXPECT_EQ(back.size(), 30u);
  EXPECT_EQ(back.content_hash(), index.content_hash());
  EXPECT_TRUE(std::equal(back.matrix().begin(), back.matrix().end(), index.matrix().begin()));
  EXPECT_EQ(back.record(17).alias, "alias17");
  auto bytes = belx::testing::read_file(dir / "i.bin");
  belx::testing::write_file(dir / "t.bin", bytes.substr(0, bytes.size() - 5));
  EXPECT_THROW(VectorIndex::load(dir / "t.bin"), Error);
}

TEST(VectorIndex, BuildDropsDuplicateAliasCuiPairs) {
  TableEncoder enc({{"x", {1, 0}}, {"y", {0, 1}}});
  const std::vector<AliasTuple> tuples = {
      {1, "x", "en", "C1"}, {1, "y", "fr", "C1"}, {2, "x", "de", "C1"}, {3, "x", "en", "C2"}};
  const auto index = VectorIndex::build(tuples, enc);
  ASSERT_EQ(index.size(), 3u);
  EXPECT_EQ(index.record(1).alias, "y");
  EXPECT_EQ(index.record(2).cui, "C2");
}

TEST(Dedup, KeepsFirstOccurrenceInOrder) {
  std::vector<RetrievalHit> hits;
  const char* cuis[] = {"A", "B", "A", "C", "B", "D"};
  for (std::size_t i = 0; i < 6; ++i) {
    hits.push_back({{"s" + std::to_string(i), cuis[i], "en", i}, 1.0 - 0.1 * i});
  }
  const auto set = dedup_to_cuis(hits, 3);
  ASSERT_EQ(set.hits.size(), 3u);
  EXPECT_EQ(set.hits[0].cui, "A");
  EXPECT_EQ(set.hits[1].cui, "B");
  EXPECT_EQ(set.hits[2].cui, "C");
  EXPECT_EQ(set.hits[2].alias_rank, 3u);
  EXPECT_EQ(set.hits[1].alias, "s1");
}

// All aliases of the first few CUIs crowd the top, so the first window
// cannot fill k CUIs and the budget has to grow.
TEST(Retrieve, WidensAliasBudgetUntilKCuisFound) {
  std::vector<float> matrix;
  std::vector<IndexedAlias> records;
  for (std::size_t r = 0; r < 40; ++r) {
    const float angle = 0.01f * static_cast<float>(r);
    matrix.push_back(std::cos(angle));
    matrix.push_back(std::sin(angle));
    records.push_back({"a" + std::to_string(r), r < 30 ? "C0" : "C" + std::to_string(r), "en", 0});
  }
  const auto index = VectorIndex::from_rows(2, matrix, records);
  const std::vector<float> q = {1, 0};
  const auto set = retrieve(index, "m", q, 4, 2);
  ASSERT_EQ(set.hits.size(), 4u);
  EXPECT_EQ(set.hits[0].cui, "C0");
  EXPECT_EQ(set.hits[1].cui, "C30");
  EXPECT_EQ(set.mention, "m");
  // asking for more CUIs than exist scans everything
  EXPECT_EQ(retrieve(index, "m", q, 50, 2).hits.size(), 11u);
}

TEST(Retrieve, EmptyMentionRejected) {
  TableEncoder enc({{"x", {1, 0}}});
  const std::vector<AliasTuple> tuples = {{1, "x", "en", "C1"}};
  const auto index = VectorIndex::build(tuples, enc);
  EXPECT_THROW(retrieve(index, "  ", enc, 1), Error);
  EXPECT_EQ(retrieve(index, "x", enc, 1).hits.at(0).cui, "C1");
}

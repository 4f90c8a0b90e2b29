#include <gtest/gtest.h>

#include "belx/config.hpp"
#include "belx/error.hpp"
#include "test_support.hpp"

using namespace belx;

namespace {

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no error";
  return ErrorKind::kPipeline;
}

}  // namespace

TEST(ConfigTable, ParsesTomlSubset) {
  const auto t = ConfigTable::parse(R"(
# comment
top = 1
[paths]
dump = "a b.tsv"   # trailing comment
mapping = 'lit#eral'
[retrieval]
k_eval = [1, 5, 64]
[train]
lr = 1.5e-3
mining = false
)");
  EXPECT_EQ(t.get("top"), "1");
  EXPECT_EQ(t.get("paths.dump"), "a b.tsv");
  EXPECT_EQ(t.get("paths.mapping"), "lit#eral");
  EXPECT_EQ(t.get("retrieval.k_eval"), "[1,5,64]");
  EXPECT_EQ(t.get("train.lr"), "1.5e-3");
  EXPECT_FALSE(t.has("train.nope"));
}

TEST(ConfigTable, SyntaxErrorsAreConfigErrors) {
  EXPECT_EQ(kind_of([] { ConfigTable::parse("[unclosed\n"); }), ErrorKind::kConfig);
  EXPECT_EQ(kind_of([] { ConfigTable::parse("novalue =\n"); }), ErrorKind::kConfig);
  EXPECT_EQ(kind_of([] { ConfigTable::parse("s = \"open\n"); }), ErrorKind::kConfig);
  EXPECT_EQ(kind_of([] { ConfigTable::parse("just words\n"); }), ErrorKind::kConfig);
}

TEST(PipelineConfig, BundledSyntheticConfigLoads) {
  const auto c = PipelineConfig::load(belx::testing::fixture("synthetic/belx.toml"));
  EXPECT_EQ(c.seed, 42u);
  EXPECT_EQ(c.encoder.dimension, 64u);
  EXPECT_EQ(c.train.batch_size, 64u);
  EXPECT_DOUBLE_EQ(c.train.learning_rate, 0.005);
  EXPECT_EQ(c.k_eval, (std::vector<std::size_t>{1, 5, 64}));
  EXPECT_EQ(c.scorer, ScorerKind::kMock);
  EXPECT_EQ(c.resolve(c.dump), belx::testing::fixture("synthetic/dump.tsv"));
}

TEST(PipelineConfig, OverridesWinAndUnknownKeysFail) {
  const auto path = belx::testing::fixture("synthetic/belx.toml");
  const auto c = PipelineConfig::load(path, {"train.epochs=2", "rerank.marker=asterisk"});
  EXPECT_EQ(c.train.epochs, 2u);
  EXPECT_EQ(c.rerank.marker, MarkerStyle::kAsterisk);
  EXPECT_EQ(kind_of([&] { PipelineConfig::load(path, {"train.epoch=2"}); }), ErrorKind::kConfig);
  EXPECT_EQ(kind_of([&] { PipelineConfig::load(path, {"train.epochs=many"}); }),
            ErrorKind::kConfig);
  EXPECT_EQ(kind_of([&] { PipelineConfig::load(path, {"noequals"}); }), ErrorKind::kConfig);
  EXPECT_EQ(kind_of([&] { PipelineConfig::load(path, {"train.batch=7"}); }), ErrorKind::kConfig);
}

TEST(PipelineConfig, CanonicalIgnoresLocationsButNotSettings) {
  const auto path = belx::testing::fixture("synthetic/belx.toml");
  const auto a = PipelineConfig::load(path);
  const auto b = PipelineConfig::load(path, {"paths.work_dir=elsewhere"});
  const auto c = PipelineConfig::load(path, {"run.seed=43"});
  EXPECT_EQ(a.canonical(), b.canonical());
  EXPECT_NE(a.canonical(), c.canonical());
  EXPECT_EQ(a.canonical(), PipelineConfig::load(path).canonical());
}

#include <gtest/gtest.h>

#include <set>

#include "belx/error.hpp"
#include "belx/synthetic.hpp"
#include "test_support.hpp"

using namespace belx;

TEST(Synthetic, ShapeAndCounts) {
  const auto c = generate_synthetic_corpus(200, 5, 42);
  ASSERT_EQ(c.concepts.size(), 200u);
  ASSERT_EQ(c.mentions.size(), 200u);
  for (const auto& k : c.concepts) EXPECT_EQ(k.variants.size(), 5u);
  const auto groups = c.groups();
  ASSERT_EQ(groups.size(), 200u);
  for (const auto& g : groups) EXPECT_EQ(g.members.size(), 5u);  // base + 4 retained
  EXPECT_EQ(c.alias_tuples().size(), 1000u);
  EXPECT_EQ(c.dump_rows().size(), 1200u);
  EXPECT_EQ(c.knowledge_base().size(), 200u);
}

TEST(Synthetic, HeldOutMentionsNeverIndexed) {
  const auto c = generate_synthetic_corpus(200, 5, 42);
  std::set<std::string> indexed;
  for (const auto& t : c.alias_tuples()) indexed.insert(t.alias);
  std::set<std::string> all;
  std::size_t strings = 0;
  for (const auto& k : c.concepts) {
    all.insert(k.base);
    ++strings;
    for (const auto& v : k.variants) {
      all.insert(v.text);
      ++strings;
    }
  }
  EXPECT_EQ(all.size(), strings);  // pairwise distinct
  for (std::size_t i = 0; i < c.mentions.size(); ++i) {
    const auto& m = c.mentions[i];
    const auto surface = m.text.substr(m.start, m.end - m.start);
    EXPECT_EQ(surface, c.concepts[i].mention().text);
    EXPECT_EQ(m.cui, c.concepts[i].cui);
    EXPECT_FALSE(indexed.count(surface)) << surface;
  }
}

TEST(Synthetic, DeterministicInSeed) {
  const auto a = generate_synthetic_corpus(30, 3, 7);
  const auto b = generate_synthetic_corpus(30, 3, 7);
  const auto c = generate_synthetic_corpus(30, 3, 8);
  for (std::size_t i = 0; i < 30; ++i) {
    EXPECT_EQ(a.concepts[i].base, b.concepts[i].base);
    EXPECT_EQ(a.mentions[i].text, b.mentions[i].text);
  }
  bool differs = false;
  for (std::size_t i = 0; i < 30; ++i) differs |= a.concepts[i].base != c.concepts[i].base;
  EXPECT_TRUE(differs);
}

TEST(Synthetic, MinimalCorpusAndPreconditions) {
  const auto c = generate_synthetic_corpus(2, 2, 1);
  EXPECT_EQ(c.groups().size(), 2u);
  for (const auto& g : c.groups()) EXPECT_EQ(g.members.size(), 2u);
  for (const auto& [n, l] : {std::pair{1, 5}, std::pair{10, 1}}) {
    try {
      generate_synthetic_corpus(n, l, 0);
      ADD_FAILURE();
    } catch (const Error& e) {
      EXPECT_EQ(e.kind(), ErrorKind::kPrecondition);
    }
  }
}

TEST(Synthetic, LanguagesCycleBeyondFive) {
  EXPECT_EQ(synthetic_language_tag(0), "xa");
  EXPECT_NE(synthetic_language_tag(5), synthetic_language_tag(0));
  const auto c = generate_synthetic_corpus(20, 7, 3);
  std::set<std::string> all;
  for (const auto& k : c.concepts) {
    for (const auto& v : k.variants) EXPECT_TRUE(all.insert(v.text).second) << v.text;
  }
}

TEST(Synthetic, WrittenFilesMatchBundledFixture) {
  belx::testing::TempDir dir;
  write_synthetic_corpus(generate_synthetic_corpus(200, 5, 42), dir.path(), 42);
  for (const char* name : {"dump.tsv", "mapping.tsv", "eval_mentions.txt", "groups.jsonl",
                           "kb.jsonl", "dataset.jsonl", "manifest.json"}) {
    EXPECT_EQ(belx::testing::read_file(dir / name),
              belx::testing::read_file(belx::testing::fixture(std::string("synthetic/") + name)))
        << name;
  }
}

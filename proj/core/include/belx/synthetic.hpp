#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "belx/kb.hpp"
#include "belx/wikidata.hpp"

namespace belx {

// Desk-scale multilingual corpus. Every concept has a random base string
// (tagged "en", built from CV syllables) plus one variant per synthetic
// language. Language i applies a fixed affix and letter respelling:
//
//   "xa"  "morbus " + base + "ina"
//   "xb"  "síndrome de " + base with a -> á
//   "xc"  base with k -> c, v -> w + "itis chronica"
//   "xd"  "krankheit " + base with u -> ou
//   "xe"  base with a -> á + "osis vulgaris"
//
// Beyond five languages the rules cycle with " 2", " 3", ... appended. One
// variant per concept is held out: it never appears in the groups or KB and
// becomes a test mention embedded in a template sentence.

struct SyntheticVariant {
  std::string text;
  std::string language;
};

struct SyntheticConcept {
  std::uint64_t qid = 0;
  std::string cui;
  std::string base;
  std::vector<SyntheticVariant> variants;  // one per language, in language order
  std::size_t held_out = 0;                // index into variants

  const SyntheticVariant& mention() const { return variants.at(held_out); }
};

struct SyntheticMention {
  std::string id;
  std::string text;
  std::size_t start = 0;  // byte offsets of the mention in text
  std::size_t end = 0;
  std::string cui;
  std::string language;
};

struct SyntheticCorpus {
  std::vector<SyntheticConcept> concepts;
  std::vector<SyntheticMention> mentions;  // one per concept, same order

  /// Training groups: base plus every non-held-out variant.
  std::vector<PositiveGroup> groups() const;
  /// Entity per concept: the base as canonical name, retained variants as aliases.
  KnowledgeBase knowledge_base() const;
  /// Index aliases, identical to the flattened groups.
  std::vector<AliasTuple> alias_tuples() const;
  /// Sitelink rows for every string, held-out variants included.
  std::vector<SiteTriple> dump_rows() const;
};

std::string synthetic_language_tag(std::size_t language);

/// Throws Error(kPrecondition) when n_concepts < 2 or n_languages < 2.
/// All strings are pairwise distinct across the corpus.
SyntheticCorpus generate_synthetic_corpus(std::size_t n_concepts, std::size_t n_languages,
                                          std::uint64_t seed);

struct SyntheticFiles {
  std::filesystem::path dump;           // qid \t alias \t site
  std::filesystem::path mapping;        // qid \t cui
  std::filesystem::path eval_mentions;  // one mention per line
  std::filesystem::path groups;         // groups JSONL
  std::filesystem::path kb;             // KB JSONL
  std::filesystem::path dataset;        // dataset JSONL
  std::filesystem::path manifest;       // {"n_concepts", "n_languages", "seed", "ids"}
};

SyntheticFiles synthetic_file_layout(const std::filesystem::path& dir);
SyntheticFiles write_synthetic_corpus(const SyntheticCorpus& corpus,
                                      const std::filesystem::path& dir,
                                      std::uint64_t seed);

}  // namespace belx

#include "belx/synthetic.hpp"

#include <algorithm>
#include <array>
#include <cstdio>
#include <fstream>
#include <json.hpp>
#include <random>
#include <unordered_set>

#include "belx/error.hpp"
#include "belx/random.hpp"
#include "belx/text.hpp"

namespace belx {

using nlohmann::json;

namespace {

constexpr std::string_view kConsonants = "bdfgklmnprstvz";
constexpr std::string_view kVowels = "aeiou";

constexpr std::array<std::string_view, 6> kTemplates = {
    "The patient was admitted with {} and recovered within a week.",
    "Symptoms consistent with {} were noted during the examination.",
    "A history of {} was reported by the family.",
    "Treatment for {} started on the second day.",
    "Follow-up imaging showed signs of {} in both cases.",
    "She denied any previous episode of {}.",
};

struct Respelling {
  char from;
  std::string_view to;
};

struct LanguageRule {
  std::string_view prefix;
  std::string_view suffix;
  std::array<Respelling, 2> letters;  // from == 0 marks an unused slot
};

constexpr std::array<LanguageRule, 5> kRules = {{
    {"morbus ", "ina", {}},
    {"síndrome de ", "", {{{'a', "á"}}}},
    {"", "itis chronica", {{{'k', "c"}, {'v', "w"}}}},
    {"krankheit ", "", {{{'u', "ou"}}}},
    {"", "osis vulgaris", {{{'a', "á"}}}},
}};

std::string apply_transform(std::size_t language, const std::string& base) {
  const auto& rule = kRules[language % kRules.size()];
  std::string out(rule.prefix);
  for (const char c : base) {
    const auto* hit = std::find_if(rule.letters.begin(), rule.letters.end(),
                                   [c](const Respelling& r) { return r.from == c; });
    if (hit != rule.letters.end()) {
      out += hit->to;
    } else {
      out += c;
    }
  }
  out += rule.suffix;
  if (language >= kRules.size()) out += " " + std::to_string(language / kRules.size());
  return out;
}

char pick(std::string_view from, std::mt19937_64& rng) {
  return from[static_cast<std::size_t>(uniform_below(rng, from.size()))];
}

std::vector<std::string> random_syllables(std::mt19937_64& rng) {
  const auto count = 3 + static_cast<std::size_t>(uniform_below(rng, 2));
  std::vector<std::string> out;
  for (std::size_t i = 0; i < count; ++i) {
    std::string syl{pick(kConsonants, rng), pick(kVowels, rng)};
    if (uniform01(rng) < 0.25) syl += pick("lnrs", rng);
    out.push_back(std::move(syl));
  }
  return out;
}

std::string format_cui(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "C%07zu", i);
  return buf;
}

}  // namespace

std::string synthetic_language_tag(std::size_t language) {
  if (language < 26) return std::string("x") + static_cast<char>('a' + language);
  return "x" + std::to_string(language);
}

SyntheticCorpus generate_synthetic_corpus(std::size_t n_concepts, std::size_t n_languages,
                                          std::uint64_t seed) {
  if (n_concepts < 2) throw Error(ErrorKind::kPrecondition, "n_concepts must be >= 2");
  if (n_languages < 2) throw Error(ErrorKind::kPrecondition, "n_languages must be >= 2");

  std::mt19937_64 rng(mix_seed(seed, 0x53594e));
  std::unordered_set<std::string> used;
  SyntheticCorpus corpus;
  corpus.concepts.reserve(n_concepts);

  for (std::size_t c = 0; c < n_concepts; ++c) {
    SyntheticConcept concept_;
    concept_.qid = 100001 + c;
    concept_.cui = format_cui(c + 1);
    while (true) {
      const auto syllables = random_syllables(rng);
      std::string base;
      for (const auto& s : syllables) base += s;
      std::vector<SyntheticVariant> variants;
      std::unordered_set<std::string> local{base};
      bool clash = used.contains(base);
      for (std::size_t l = 0; l < n_languages && !clash; ++l) {
        auto v = apply_transform(l, base);
        clash = used.contains(v) || !local.insert(v).second;
        variants.push_back({std::move(v), synthetic_language_tag(l)});
      }
      if (clash) continue;
      used.insert(local.begin(), local.end());
      concept_.base = std::move(base);
      concept_.variants = std::move(variants);
      break;
    }
    concept_.held_out = static_cast<std::size_t>(uniform_below(rng, n_languages));

    const auto& held = concept_.mention();
    const auto tmpl = kTemplates[static_cast<std::size_t>(uniform_below(rng, kTemplates.size()))];
    const auto slot = tmpl.find("{}");
    SyntheticMention m;
    char id[32];
    std::snprintf(id, sizeof id, "syn-%05zu", c + 1);
    m.id = id;
    m.text = std::string(tmpl.substr(0, slot)) + held.text + std::string(tmpl.substr(slot + 2));
    m.start = slot;
    m.end = slot + held.text.size();
    m.cui = concept_.cui;
    m.language = held.language;
    corpus.mentions.push_back(std::move(m));
    corpus.concepts.push_back(std::move(concept_));
  }
  return corpus;
}

std::vector<AliasTuple> SyntheticCorpus::alias_tuples() const {
  std::vector<AliasTuple> out;
  for (const auto& c : concepts) {
    out.push_back({c.qid, c.base, "en", c.cui});
    for (std::size_t l = 0; l < c.variants.size(); ++l) {
      if (l == c.held_out) continue;
      out.push_back({c.qid, c.variants[l].text, c.variants[l].language, c.cui});
    }
  }
  return out;
}

std::vector<PositiveGroup> SyntheticCorpus::groups() const {
  return group_positives(alias_tuples());
}

KnowledgeBase SyntheticCorpus::knowledge_base() const {
  std::vector<EntityRecord> entities;
  for (const auto& c : concepts) {
    EntityRecord e;
    e.cui = c.cui;
    e.canonical_name = c.base;
    e.semantic_type = "Synthetic Concept";
    for (std::size_t l = 0; l < c.variants.size(); ++l) {
      if (l != c.held_out) e.aliases.push_back({c.variants[l].text, c.variants[l].language});
    }
    entities.push_back(std::move(e));
  }
  return KnowledgeBase(std::move(entities));
}

std::vector<SiteTriple> SyntheticCorpus::dump_rows() const {
  std::vector<SiteTriple> out;
  for (const auto& c : concepts) {
    out.push_back({c.qid, c.base, "enwiki"});
    for (const auto& v : c.variants) out.push_back({c.qid, v.text, v.language + "wiki"});
  }
  return out;
}

SyntheticFiles synthetic_file_layout(const std::filesystem::path& dir) {
  return {dir / "dump.tsv",    dir / "mapping.tsv", dir / "eval_mentions.txt",
          dir / "groups.jsonl", dir / "kb.jsonl",   dir / "dataset.jsonl",
          dir / "manifest.json"};
}

SyntheticFiles write_synthetic_corpus(const SyntheticCorpus& corpus,
                                      const std::filesystem::path& dir, std::uint64_t seed) {
  std::filesystem::create_directories(dir);
  const auto files = synthetic_file_layout(dir);
  const auto open = [](const std::filesystem::path& p) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::kIo, "cannot write " + p.string());
    return out;
  };

  {
    auto out = open(files.dump);
    for (const auto& t : corpus.dump_rows()) write_triple_tsv(out, t);
  }
  {
    auto out = open(files.mapping);
    for (const auto& c : corpus.concepts) out << c.qid << '\t' << c.cui << '\n';
  }
  {
    auto out = open(files.eval_mentions);
    for (const auto& c : corpus.concepts) out << c.mention().text << '\n';
  }
  {
    auto out = open(files.groups);
    for (const auto& g : corpus.groups()) write_group_jsonl(out, g);
  }
  {
    auto out = open(files.kb);
    write_knowledge_base(out, corpus.knowledge_base());
  }
  json ids = json::array();
  {
    auto out = open(files.dataset);
    for (const auto& m : corpus.mentions) {
      out << json{{"id", m.id},   {"text", m.text}, {"start", m.start},
                  {"end", m.end}, {"cui", m.cui},   {"lang", m.language}}
                 .dump()
          << '\n';
      ids.push_back(m.id);
    }
  }
  {
    auto out = open(files.manifest);
    const auto n_languages = corpus.concepts.empty() ? 0 : corpus.concepts[0].variants.size();
    out << json{{"n_concepts", corpus.concepts.size()},
                {"n_languages", n_languages},
                {"seed", seed},
                {"ids", ids}}
               .dump(2)
        << '\n';
  }
  return files;
}

}  // namespace belx

#include "belx/kb.hpp"

#include <unicode/normalizer2.h>
#include <unicode/uchar.h>
#include <unicode/unistr.h>

#include <array>
#include <fstream>
#include <json.hpp>

#include "belx/error.hpp"
#include "belx/text.hpp"

namespace belx {

using nlohmann::json;

DocumentText::DocumentText(std::string id, std::string text)
    : id_(std::move(id)), text_(std::move(text)) {
  if (text_.empty()) {
    throw Error(ErrorKind::kPrecondition, "document '" + id_ + "' is empty");
  }
  if (!text::is_valid_utf8(text_)) {
    throw Error(ErrorKind::kPrecondition,
                "document '" + id_ + "' is not valid UTF-8");
  }
}

bool MentionSpan::valid_in(const DocumentText& doc, std::size_t start,
                           std::size_t end) noexcept {
  const std::string_view t = doc.text();
  return start < end && end <= t.size() && text::is_char_boundary(t, start) &&
         text::is_char_boundary(t, end);
}

MentionSpan MentionSpan::make(const DocumentText& doc, std::size_t start,
                              std::size_t end) {
  if (!valid_in(doc, start, end)) {
    throw Error(ErrorKind::kPrecondition,
                "invalid mention span [" + std::to_string(start) + ", " +
                    std::to_string(end) + ") in document '" + doc.id() + "'");
  }
  return MentionSpan{start, end};
}

std::string_view MentionSpan::surface(const DocumentText& doc) const {
  return std::string_view(doc.text()).substr(start, end - start);
}

KnowledgeBase::KnowledgeBase(std::vector<EntityRecord> entities)
    : entities_(std::move(entities)) {
  if (entities_.empty()) {
    throw Error(ErrorKind::kPrecondition, "knowledge base has no entities");
  }
  for (std::size_t i = 0; i < entities_.size(); ++i) {
    const auto& e = entities_[i];
    if (e.cui.empty()) {
      throw Error(ErrorKind::kPrecondition,
                  "entity #" + std::to_string(i) + " has an empty cui");
    }
    if (!by_cui_.emplace(e.cui, i).second) {
      throw Error(ErrorKind::kPrecondition, "duplicate cui " + e.cui);
    }
  }
}

const EntityRecord* KnowledgeBase::find(std::string_view cui) const {
  const auto it = by_cui_.find(cui);
  return it == by_cui_.end() ? nullptr : &entities_[it->second];
}

namespace {

std::optional<std::string> optional_string(const json& j, const char* key) {
  const auto it = j.find(key);
  if (it == j.end() || it->is_null()) return std::nullopt;
  return it->get<std::string>();
}

}  // namespace

KnowledgeBase load_knowledge_base(std::istream& in) {
  std::vector<EntityRecord> entities;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (text::trim(line).empty()) continue;
    try {
      const json j = json::parse(line);
      EntityRecord e;
      e.cui = std::string(text::trim(j.at("cui").get<std::string>()));
      e.canonical_name = j.at("name").get<std::string>();
      if (const auto it = j.find("aliases"); it != j.end() && !it->is_null()) {
        for (const auto& pair : *it) {
          e.aliases.push_back({pair.at(0).get<std::string>(),
                               pair.at(1).get<std::string>()});
        }
      }
      e.semantic_type = optional_string(j, "type");
      e.description = optional_string(j, "description");
      entities.push_back(std::move(e));
    } catch (const json::exception& ex) {
      throw Error(ErrorKind::kFormat, "knowledge base line " +
                                          std::to_string(line_no) + ": " +
                                          ex.what());
    }
  }
  if (in.bad()) throw Error(ErrorKind::kIo, "failed reading knowledge base");
  return KnowledgeBase(std::move(entities));
}

KnowledgeBase load_knowledge_base(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::kIo, "cannot open knowledge base " + path);
  return load_knowledge_base(in);
}

void write_knowledge_base(std::ostream& out, const KnowledgeBase& kb) {
  for (const auto& e : kb.entities()) {
    json aliases = json::array();
    for (const auto& a : e.aliases) aliases.push_back({a.text, a.language});
    json j = {{"cui", e.cui},
              {"name", e.canonical_name},
              {"aliases", aliases},
              {"type", e.semantic_type ? json(*e.semantic_type) : json(nullptr)},
              {"description",
               e.description ? json(*e.description) : json(nullptr)}};
    out << j.dump() << '\n';
  }
}

std::string normalize_alias(std::string_view raw) {
  UErrorCode status = U_ZERO_ERROR;
  const icu::Normalizer2* nfc = icu::Normalizer2::getNFCInstance(status);
  if (U_FAILURE(status)) {
    throw Error(ErrorKind::kInvariant, "ICU NFC normalizer unavailable");
  }
  if (!text::is_valid_utf8(raw)) {
    throw Error(ErrorKind::kFormat, "alias is not valid UTF-8");
  }
  const auto src = icu::UnicodeString::fromUTF8(
      icu::StringPiece(raw.data(), static_cast<int32_t>(raw.size())));
  const icu::UnicodeString composed = nfc->normalize(src, status);
  if (U_FAILURE(status)) {
    throw Error(ErrorKind::kFormat, "NFC normalization failed");
  }

  icu::UnicodeString collapsed;
  bool pending_space = false;
  for (int32_t i = 0; i < composed.length();) {
    const UChar32 cp = composed.char32At(i);
    i += U16_LENGTH(cp);
    if (u_isUWhiteSpace(cp)) {
      pending_space = !collapsed.isEmpty();
      continue;
    }
    if (pending_space) {
      collapsed.append(static_cast<UChar>(' '));
      pending_space = false;
    }
    collapsed.append(cp);
  }
  std::string out;
  collapsed.toUTF8String(out);
  return out;
}

LanguageTag parse_site_language(std::string_view site_key) {
  // Longest suffixes first so "wiki" never shadows a longer project name.
  static constexpr std::array<std::string_view, 6> kSuffixes = {
      "wikivoyage", "wikisource", "wikiquote", "wikibooks", "wikinews", "wiki"};
  for (const auto suffix : kSuffixes) {
    if (site_key.size() > suffix.size() && site_key.ends_with(suffix)) {
      std::string tag(site_key.substr(0, site_key.size() - suffix.size()));
      for (auto& c : tag) {
        if (c == '_') c = '-';
      }
      return {std::move(tag), true};
    }
  }
  return {std::string(site_key), false};
}

}  // namespace belx

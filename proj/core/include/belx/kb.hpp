#pragma once

#include <cstddef>
#include <istream>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace belx {

/// A biomedical text as raw UTF-8. Immutable once constructed.
class DocumentText {
 public:
  DocumentText(std::string id, std::string text);

  const std::string& id() const noexcept { return id_; }
  const std::string& text() const noexcept { return text_; }

 private:
  std::string id_;
  std::string text_;
};

/// Byte range [start, end) of a mention inside a DocumentText.
struct MentionSpan {
  std::size_t start = 0;
  std::size_t end = 0;

  /// Validates the span against `doc`: 0 <= start < end <= size, both ends
  /// on character boundaries. Throws Error(kPrecondition) otherwise.
  static MentionSpan make(const DocumentText& doc, std::size_t start,
                          std::size_t end);
  static bool valid_in(const DocumentText& doc, std::size_t start,
                       std::size_t end) noexcept;

  std::string_view surface(const DocumentText& doc) const;
};

struct LanguageAlias {
  std::string text;
  std::string language;

  friend bool operator==(const LanguageAlias&, const LanguageAlias&) = default;
};

struct EntityRecord {
  std::string cui;
  std::string canonical_name;
  std::vector<LanguageAlias> aliases;
  std::optional<std::string> semantic_type;
  std::optional<std::string> description;
};

class KnowledgeBase {
 public:
  /// Throws Error(kPrecondition) on empty input, empty cui or duplicate cui.
  explicit KnowledgeBase(std::vector<EntityRecord> entities);

  const EntityRecord* find(std::string_view cui) const;
  const std::vector<EntityRecord>& entities() const noexcept { return entities_; }
  std::size_t size() const noexcept { return entities_.size(); }

 private:
  std::vector<EntityRecord> entities_;
  std::map<std::string, std::size_t, std::less<>> by_cui_;
};

/// JSONL, one entity per line:
/// {"cui": str, "name": str, "aliases": [[str, str], ...], "type": str|null,
///  "description": str|null}
KnowledgeBase load_knowledge_base(std::istream& in);
KnowledgeBase load_knowledge_base(const std::string& path);
void write_knowledge_base(std::ostream& out, const KnowledgeBase& kb);

/// NFC composition, trimmed, internal whitespace runs collapsed to one space.
/// Case is preserved. Idempotent.
std::string normalize_alias(std::string_view raw);

struct LanguageTag {
  std::string tag;
  bool recognized = true;
};

/// "frwiki" -> "fr", "zh_yuewiki" -> "zh-yue". Unknown project suffixes pass
/// through unchanged with recognized = false.
LanguageTag parse_site_language(std::string_view site_key);

}  // namespace belx

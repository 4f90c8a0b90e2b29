#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "belx/encoder.hpp"
#include "belx/eval.hpp"
#include "belx/reranker.hpp"
#include "belx/trainer.hpp"
#include "belx/wikidata.hpp"

namespace belx {

// Config files are a small TOML subset:
//
//   # comment
//   [section]
//   key = "string" | 'string' | bare-word | 123 | 1.5e-3 | true | [1, 5, 64]
//
// Keys are addressed as "section.key". Later assignments win, so command-line
// overrides ("section.key=value") are simply applied after the file.

class ConfigTable {
 public:
  static ConfigTable parse(std::string_view text, const std::string& origin = "config");
  static ConfigTable load(const std::filesystem::path& path);

  /// "section.key=value" with the same value syntax as the file.
  void apply_override(std::string_view assignment);
  void set(const std::string& key, std::string value);

  bool has(std::string_view key) const;
  std::optional<std::string> get(std::string_view key) const;
  const std::map<std::string, std::string, std::less<>>& values() const noexcept {
    return values_;
  }

 private:
  std::map<std::string, std::string, std::less<>> values_;  // unquoted scalar or "[a,b]"
};

enum class ScorerKind { kNone, kMock, kGold, kHttp };
ScorerKind parse_scorer_kind(std::string_view name);
std::string_view to_string(ScorerKind kind);

struct PipelineConfig {
  std::filesystem::path base_dir;  // relative paths resolve against this
  std::filesystem::path work_dir = "belx-work";

  // inputs
  std::filesystem::path dump;
  DumpFormat dump_format = DumpFormat::kAuto;
  std::filesystem::path mapping;
  std::filesystem::path eval_mentions;  // empty: mention surfaces of the dataset
  std::filesystem::path dataset;
  DatasetFormat dataset_format = DatasetFormat::kJsonl;
  std::filesystem::path kb;  // optional; document metadata and canonical names

  std::uint64_t seed = 0;
  std::size_t external_sort_rows = 0;  // 0 groups in memory

  EncoderConfig encoder;
  TrainHyperparams train;
  bool train_enabled = true;

  std::size_t embed_batch = 256;
  std::size_t k_candidates = 64;
  std::size_t overscan = 4;
  std::vector<std::size_t> k_eval = {1, 5, 64};
  std::size_t threads = 1;

  ScorerKind scorer = ScorerKind::kMock;
  HttpScorerConfig http_scorer;
  RerankOptions rerank;

  /// Unknown keys and malformed values are Error(kConfig).
  static PipelineConfig from_table(const ConfigTable& table,
                                   const std::filesystem::path& base_dir);
  static PipelineConfig load(const std::filesystem::path& path,
                             const std::vector<std::string>& overrides = {});

  std::filesystem::path resolve(const std::filesystem::path& p) const;
  std::filesystem::path artifact(std::string_view name) const;  // under work_dir

  /// Canonical "key=value" lines of every setting that affects results.
  /// Locations (work_dir, input paths) are excluded; inputs enter
  /// fingerprints through their content checksums instead.
  std::string canonical() const;

  void validate() const;
};

}  // namespace belx

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "belx/config.hpp"
#include "belx/eval.hpp"
#include "belx/wikidata.hpp"

namespace belx {

// Stages, in dependency order, and what each writes under work_dir:
//
//   ingest  triples.tsv
//   map     tuples.tsv, stats.json
//   filter  filtered.tsv, filter_report.json
//   group   groups.jsonl
//   train   head.bin, train_report.json   (hashed_ngram backend with training on)
//   index   index.bin
//   link    predictions.jsonl
//   eval    report.json
//
// Each stage leaves manifests/<stage>.json recording the config hash, the
// stage fingerprint, the seed and a checksum per output. A stage is skipped
// when its fingerprint matches and every output still verifies.

const std::vector<std::string>& pipeline_stages();

struct RunOptions {
  bool force = false;
  std::optional<std::string> only_stage;
  std::ostream* log = nullptr;     // JSONL log lines are mirrored here
  std::ostream* report = nullptr;  // recall table after eval
};

struct StageOutcome {
  std::string stage;
  bool skipped = false;
  std::string fingerprint;
  std::map<std::string, std::uint64_t> counts;
};

struct RunSummary {
  std::string config_hash;
  std::vector<StageOutcome> stages;
  std::optional<EvalReport> report;
};

/// Runs the stages in order, or only options.only_stage. Any failure writes
/// work_dir/state.json naming the failed stage and the command that resumes
/// it, then rethrows. A fingerprint match whose outputs fail their checksum
/// is Error(kIntegrity) unless options.force.
RunSummary run_pipeline(const PipelineConfig& config, const RunOptions& options = {});

/// Hex FNV-1a 64 of a file's bytes.
std::string file_checksum(const std::filesystem::path& path);

std::string config_hash(const PipelineConfig& config);

std::string corpus_stats_to_json(const CorpusStats& stats);

}  // namespace belx

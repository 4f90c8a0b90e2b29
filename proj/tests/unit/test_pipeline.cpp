#include <gtest/gtest.h>

#include <json.hpp>

#include <sys/wait.h>

#include <cstdlib>

#include "belx/config.hpp"
#include "belx/error.hpp"
#include "belx/pipeline.hpp"
#include "test_support.hpp"

using namespace belx;
using nlohmann::json;

namespace {

PipelineConfig synthetic_config(const belx::testing::TempDir& dir,
                                std::vector<std::string> extra = {}) {
  extra.push_back("paths.work_dir=\"" + (dir / "work").string() + "\"");
  extra.push_back("train.epochs=1");
  return PipelineConfig::load(belx::testing::fixture("synthetic/belx.toml"), extra);
}

ErrorKind run_kind(const PipelineConfig& c, const RunOptions& o) {
  try {
    run_pipeline(c, o);
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "pipeline did not fail";
  return ErrorKind::kConfig;
}

int cli(const std::string& args) {
  const std::string cmd = std::string(BELX_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST(Pipeline, RunsAllStagesThenSkipsOnRerun) {
  belx::testing::TempDir dir;
  const auto config = synthetic_config(dir);
  const auto first = run_pipeline(config);
  ASSERT_EQ(first.stages.size(), pipeline_stages().size());
  for (const auto& s : first.stages) EXPECT_FALSE(s.skipped) << s.stage;
  ASSERT_TRUE(first.report);
  EXPECT_EQ(first.report->records, 200u);
  EXPECT_LE(*first.report->overall.reranked_r1, first.report->overall.retrieval_at_candidates);
  for (const char* f : {"triples.tsv", "tuples.tsv", "filtered.tsv", "groups.jsonl", "head.bin",
                        "index.bin", "predictions.jsonl", "report.json", "log.jsonl"}) {
    EXPECT_TRUE(std::filesystem::exists(dir / "work" / f)) << f;
  }
  const auto manifest = json::parse(belx::testing::read_file(dir / "work/manifests/index.json"));
  EXPECT_EQ(manifest.at("config_hash"), first.config_hash);
  EXPECT_EQ(manifest.at("outputs").at("index.bin"), file_checksum(dir / "work/index.bin"));

  const auto second = run_pipeline(config);
  for (const auto& s : second.stages) EXPECT_TRUE(s.skipped) << s.stage;
  ASSERT_TRUE(second.report);
  EXPECT_EQ(report_to_json(*second.report), report_to_json(*first.report));

  // a changed setting invalidates train and everything downstream of it
  const auto third = run_pipeline(synthetic_config(dir, {"train.lr=0.004"}));
  for (const auto& s : third.stages) {
    const bool upstream = s.stage == "ingest" || s.stage == "map" || s.stage == "filter" ||
                          s.stage == "group";
    EXPECT_EQ(s.skipped, upstream) << s.stage;
  }
}

TEST(Pipeline, CorruptedArtifactIsIntegrityErrorAndForceRepairs) {
  belx::testing::TempDir dir;
  const auto config = synthetic_config(dir);
  run_pipeline(config);
  belx::testing::write_file(dir / "work/groups.jsonl", "{}\n");
  EXPECT_EQ(run_kind(config, {}), ErrorKind::kIntegrity);
  const auto state = json::parse(belx::testing::read_file(dir / "work/state.json"));
  EXPECT_EQ(state.at("failed_stage"), "group");
  EXPECT_NE(state.at("resume").get<std::string>().find("--force"), std::string::npos);

  RunOptions repair;
  repair.only_stage = "group";
  repair.force = true;
  const auto fixed = run_pipeline(config, repair);
  ASSERT_EQ(fixed.stages.size(), 1u);
  EXPECT_FALSE(fixed.stages[0].skipped);
  const auto after = run_pipeline(config);
  for (const auto& s : after.stages) EXPECT_TRUE(s.skipped) << s.stage;
}

TEST(Pipeline, SingleStageNeedsUpstreamManifests) {
  belx::testing::TempDir dir;
  RunOptions only;
  only.only_stage = "index";
  EXPECT_EQ(run_kind(synthetic_config(dir), only), ErrorKind::kPipeline);
  only.only_stage = "nonsense";
  EXPECT_EQ(run_kind(synthetic_config(dir), only), ErrorKind::kConfig);
}

TEST(Pipeline, FileChecksumIsFnvOfBytes) {
  belx::testing::TempDir dir;
  belx::testing::write_file(dir / "a", "a");
  EXPECT_EQ(file_checksum(dir / "a"), "af63dc4c8601ec8c");
  belx::testing::write_file(dir / "e", "");
  EXPECT_EQ(file_checksum(dir / "e"), "cbf29ce484222325");
}

#ifdef BELX_CLI_PATH
TEST(Cli, ExitCodes) {
  belx::testing::TempDir dir;
  EXPECT_EQ(cli("--help"), 0);
  EXPECT_EQ(cli("no-such-command"), 2);
  EXPECT_EQ(cli("train --groups " + (dir / "missing.jsonl").string() + " --out " +
                (dir / "h.bin").string() + " --batch 7"),
            2);
  EXPECT_EQ(cli("run --config " + belx::testing::fixture("synthetic/belx.toml").string() +
                " --set bogus.key=1"),
            2);
  EXPECT_EQ(cli("index search --index " + (dir / "missing.bin").string() + " --text x"), 3);
}
#endif

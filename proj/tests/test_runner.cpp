#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <filesystem>
#include <fstream>

#include "atdp/runner.hpp"
#include "test_util.hpp"

using namespace atdp;
using namespace atdp::testutil;

namespace {

// A fast pipeline: tiny model, small generated corpus, two-digit canary.
std::string tiny_pipeline_json(const std::string& name,
                               const std::string& stages_json) {
  const std::string gaz = (data_dir() / "gazetteer").string();
  return R"({
    "name": ")" + name + R"(",
    "seed": 11,
    "corpus": {"generate": {"target_bytes": 9000, "seed": 5}},
    "valid_fraction": 0.1,
    "vocab_max_size": 600,
    "detector_tier": "high-contextual",
    "gazetteer_dir": ")" + gaz + R"(",
    "frequent_top_k": 40,
    "threads": 2,
    "arch": {"embed_dim": 16, "hidden_dim": 24, "num_layers": 1, "context_len": 32},
    "canary": {"template": "My ID is {}", "secret": "37", "insert_count": 4},
    "stages": [)" + stages_json + R"(]
  })";
}

const char* kNoDpStage = R"({"name": "no_dp", "corpus": "original",
  "mode": "non_private", "epochs": 1,
  "config": {"batch_size": 16, "learning_rate": 0.3}})";

}  // namespace

TEST_CASE("pipeline spec parses and validates") {
  const PipelineSpec spec =
      PipelineSpec::from_json_text(tiny_pipeline_json("parse", kNoDpStage));
  CHECK(spec.name == "parse");
  CHECK(spec.seed == 11);
  CHECK(spec.use_generator);
  CHECK(spec.canary.has_value());
  CHECK(spec.stages.size() == 1);
  CHECK_NOTHROW(spec.validate());
}

TEST_CASE("an atdp stage may not come first") {
  const std::string json = tiny_pipeline_json(
      "bad", R"({"name": "atdp", "corpus": "original", "mode": "atdp",
                 "epochs": 1, "config": {"batch_size": 16}})");
  const PipelineSpec spec = PipelineSpec::from_json_text(json);
  try {
    spec.validate();
    FAIL("expected ConfigError");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::ConfigError);
  }
}

TEST_CASE("duplicate stage names are rejected") {
  const std::string two = std::string(kNoDpStage) + "," + kNoDpStage;
  const PipelineSpec spec = PipelineSpec::from_json_text(
      tiny_pipeline_json("dup", two));
  CHECK_THROWS_AS(spec.validate(), Error);
}

TEST_CASE("non-private run reports no epsilon and an empty ledger") {
  const PipelineSpec spec =
      PipelineSpec::from_json_text(tiny_pipeline_json("nodp", kNoDpStage));
  const auto out = temp_dir("runner_nodp");
  const RunReport report = run_pipeline(spec, out);

  CHECK(report.total_noisy_steps == 0);
  CHECK(!report.epsilon.has_value());
  REQUIRE(report.exposure.has_value());
  CHECK(report.exposure->candidate_space == 100);
  CHECK(std::filesystem::exists(out / "report.json"));
  CHECK(std::filesystem::exists(out / "ledger.jsonl"));
  CHECK(std::filesystem::exists(out / "ckpt_no_dp.atdp"));

  const PrivacyLedger ledger =
      PrivacyLedger::load_jsonl(out / "ledger.jsonl");
  CHECK(ledger.empty());
}

TEST_CASE("identical spec and seed reproduce the report bit for bit") {
  const std::string json = tiny_pipeline_json(
      "repro", std::string(kNoDpStage) + R"(,{"name": "atdp",
        "corpus": "original", "mode": "atdp", "epochs": 1,
        "config": {"batch_size": 16, "sigma0": 2.0, "sigma_max": 16.0,
                   "learning_rate": 0.05, "w_non": "auto"}})");
  const PipelineSpec spec = PipelineSpec::from_json_text(json);
  const RunReport a = run_pipeline(spec, temp_dir("runner_repro_a"));
  const RunReport b = run_pipeline(spec, temp_dir("runner_repro_b"));

  CHECK(a.val_ppl == b.val_ppl);
  REQUIRE(a.exposure.has_value());
  REQUIRE(b.exposure.has_value());
  CHECK(a.exposure->canary_rank == b.exposure->canary_rank);
  REQUIRE(a.epsilon.has_value());
  REQUIRE(b.epsilon.has_value());
  CHECK(a.epsilon->epsilon_total == b.epsilon->epsilon_total);
  CHECK(a.total_noisy_steps == b.total_noisy_steps);
  REQUIRE(a.class_ppl_series.size() == b.class_ppl_series.size());
  for (size_t i = 0; i < a.class_ppl_series.size(); ++i) {
    CHECK(a.class_ppl_series[i].ppl_sensitive ==
          b.class_ppl_series[i].ppl_sensitive);
  }
}

TEST_CASE("a later stage never perturbs an earlier stage's checkpoint") {
  const std::string one = tiny_pipeline_json("prefix", kNoDpStage);
  const std::string two = tiny_pipeline_json(
      "prefix", std::string(kNoDpStage) + R"(,{"name": "atdp",
        "corpus": "original", "mode": "atdp", "epochs": 1,
        "config": {"batch_size": 16, "sigma0": 2.0, "sigma_max": 16.0,
                   "learning_rate": 0.05}})");
  const auto dir_one = temp_dir("runner_stage_one");
  const auto dir_two = temp_dir("runner_stage_two");
  run_pipeline(PipelineSpec::from_json_text(one), dir_one);
  run_pipeline(PipelineSpec::from_json_text(two), dir_two);

  const ModelParams a = load_checkpoint(dir_one / "ckpt_no_dp.atdp");
  const ModelParams b = load_checkpoint(dir_two / "ckpt_no_dp.atdp");
  CHECK(a.theta == b.theta);
}

TEST_CASE("ledger rows equal noisy step counts per stage") {
  const std::string json = tiny_pipeline_json(
      "ledger", std::string(kNoDpStage) + R"(,{"name": "dp",
        "corpus": "original", "mode": "dp_sgd", "epochs": 2,
        "config": {"batch_size": 16, "sigma0": 1.0, "learning_rate": 0.05}})");
  const auto out = temp_dir("runner_ledger");
  const RunReport report =
      run_pipeline(PipelineSpec::from_json_text(json), out);

  const PrivacyLedger ledger = PrivacyLedger::load_jsonl(out / "ledger.jsonl");
  CHECK(static_cast<long>(ledger.size()) == report.total_noisy_steps);
  for (const auto& stage : report.stages) {
    CHECK(static_cast<long>(ledger.count_for_stage(stage.name)) ==
          stage.noisy_steps);
  }
  REQUIRE(report.epsilon.has_value());
  CHECK(report.epsilon->epsilon_total > 0.0);
}

TEST_CASE("report json round trips") {
  const PipelineSpec spec =
      PipelineSpec::from_json_text(tiny_pipeline_json("roundtrip", kNoDpStage));
  const auto out = temp_dir("runner_roundtrip");
  const RunReport report = run_pipeline(spec, out);
  const RunReport loaded = RunReport::from_json_file(out / "report.json");
  CHECK(loaded.pipeline == report.pipeline);
  CHECK(loaded.val_ppl == doctest::Approx(report.val_ppl));
  CHECK(loaded.total_noisy_steps == report.total_noisy_steps);
  REQUIRE(loaded.exposure.has_value());
  CHECK(loaded.exposure->canary_rank == report.exposure->canary_rank);
}

TEST_CASE("compare normalizes against the no-dp baseline") {
  RunReport base;
  base.pipeline = "no_dp";
  base.dataset_id = "d1";
  base.val_ppl = 20.0;
  base.total_optimizer_steps = 100;
  base.total_noisy_steps = 0;

  RunReport dp;
  dp.pipeline = "dp_sgd";
  dp.dataset_id = "d1";
  dp.val_ppl = 27.0;
  dp.total_optimizer_steps = 400;
  dp.total_noisy_steps = 400;

  const auto rows = compare({base, dp});
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].relative_compute == doctest::Approx(1.0));
  CHECK(rows[1].relative_compute == doctest::Approx(4.0));

  const std::string md = compare_markdown(rows);
  CHECK(md.find("no_dp") != std::string::npos);
  CHECK(md.find("4.00x") != std::string::npos);
}

TEST_CASE("single report passes through") {
  RunReport only;
  only.pipeline = "solo";
  only.dataset_id = "d1";
  only.val_ppl = 5.0;
  only.total_optimizer_steps = 10;
  only.total_noisy_steps = 10;
  const auto rows = compare({only});
  REQUIRE(rows.size() == 1);
  CHECK(rows[0].name == "solo");
  CHECK(!rows[0].relative_compute.has_value());
}

TEST_CASE("compare rejects mismatched datasets and missing baselines") {
  RunReport a, b;
  a.pipeline = "x";
  a.dataset_id = "d1";
  b.pipeline = "y";
  b.dataset_id = "d2";
  CHECK_THROWS_AS(compare({a, b}), Error);

  b.dataset_id = "d1";
  a.total_noisy_steps = 5;
  b.total_noisy_steps = 5;
  try {
    compare({a, b});
    FAIL("expected ConfigError");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::ConfigError);
  }
}

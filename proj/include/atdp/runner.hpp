#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "atdp/accountant.hpp"
#include "atdp/corpus.hpp"
#include "atdp/corpus_gen.hpp"
#include "atdp/detector.hpp"
#include "atdp/dp_engine.hpp"
#include "atdp/lm.hpp"
#include "atdp/privacy_eval.hpp"

namespace atdp {

enum class CorpusVariant { Original, Redacted };

struct StageSpec {
  std::string name;
  CorpusVariant corpus = CorpusVariant::Original;
  DpMode mode = DpMode::NonPrivate;
  int epochs = 1;
  DpConfig config;
  bool w_non_auto = false;  // derive w_non from measured alpha
};

struct CanaryConfig {
  CanarySpec spec;
  // Phase-1 "missed-canary": the detector does not see the canary, so it
  // survives redaction and carries an all-false mask.
  bool visible_to_detector = false;
  // Phase-2 "no-miss": DP stages treat the canary digits as sensitive.
  bool force_sensitive_in_dp = true;
  long sample = 0;  // 0 = exact exposure ranking
};

struct PipelineSpec {
  std::string name = "pipeline";
  uint64_t seed = 1;
  std::string corpus_file;       // empty when generating
  GenerateSpec generate;
  bool use_generator = false;
  double valid_fraction = 0.1;
  int32_t vocab_max_size = 2000;
  DetectorTier tier = DetectorTier::HighContextual;
  std::string gazetteer_dir;
  int frequent_top_k = 100;
  double delta = 1e-5;
  int threads = 0;
  ArchConfig arch;
  std::optional<CanaryConfig> canary;
  std::vector<StageSpec> stages;

  void validate() const;
  static PipelineSpec from_json_file(const std::filesystem::path& file);
  static PipelineSpec from_json_text(const std::string& text);
};

struct StageReport {
  std::string name;
  DpMode mode = DpMode::NonPrivate;
  int epochs = 0;
  double seconds = 0.0;
  long optimizer_steps = 0;
  long noisy_steps = 0;
  double val_ppl_after = 0.0;
};

struct RunReport {
  std::string pipeline;
  std::string dataset_id;
  uint64_t seed = 0;
  std::vector<StageReport> stages;
  double val_ppl = 0.0;
  std::optional<ExposureReport> exposure;
  std::optional<EpsilonReport> epsilon;
  std::vector<ClassPerplexity> class_ppl_series;
  long total_optimizer_steps = 0;
  long total_noisy_steps = 0;

  std::string to_json() const;
  static RunReport from_json_text(const std::string& text);
  static RunReport from_json_file(const std::filesystem::path& file);
};

RunReport run_pipeline(const PipelineSpec& spec,
                       const std::filesystem::path& out_dir);

struct CompareRow {
  std::string name;
  std::optional<double> relative_compute;  // total steps vs the No-DP row
  double val_ppl = 0.0;
  std::optional<double> exposure;
  long noisy_steps = 0;
  std::optional<double> epsilon;
};

std::vector<CompareRow> compare(const std::vector<RunReport>& reports);
std::string compare_markdown(const std::vector<CompareRow>& rows);
std::string compare_json(const std::vector<CompareRow>& rows);

}  // namespace atdp

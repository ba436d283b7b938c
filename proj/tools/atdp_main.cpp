#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "atdp/accountant.hpp"
#include "atdp/corpus.hpp"
#include "atdp/corpus_gen.hpp"
#include "atdp/detector.hpp"
#include "atdp/privacy_eval.hpp"
#include "atdp/runner.hpp"

namespace {

using namespace atdp;

int cmd_gen_corpus(const std::string& gazetteer_dir, const std::string& out,
                   long target_bytes, uint64_t seed) {
  const Gazetteer gaz = Gazetteer::load(gazetteer_dir);
  GenerateSpec spec;
  spec.target_bytes = target_bytes;
  spec.seed = seed;
  const auto lines = generate_corpus_lines(spec, gaz);
  std::ofstream f(out);
  if (!f) fail(ErrorKind::IoError, "cannot write " + out);
  for (const auto& line : lines) f << line << '\n';
  std::cerr << "wrote " << lines.size() << " lines to " << out << "\n";
  return 0;
}

int cmd_redact(const std::string& tier_name, const std::string& gazetteer_dir,
               const std::string& in_file, const std::string& out_file,
               const std::string& mask_out, const std::string& overrides_file) {
  const DetectorTier tier = tier_from_string(tier_name);
  const Gazetteer gaz = Gazetteer::load(gazetteer_dir);
  const auto lines = read_corpus_lines(in_file);

  std::vector<OverrideRule> rules;
  if (!overrides_file.empty()) rules = load_override_rules(overrides_file);

  std::ofstream out(out_file);
  if (!out) fail(ErrorKind::IoError, "cannot write " + out_file);
  std::ofstream masks;
  if (!mask_out.empty()) {
    masks.open(mask_out);
    if (!masks) fail(ErrorKind::IoError, "cannot write " + mask_out);
  }

  for (size_t i = 0; i < lines.size(); ++i) {
    const WordSeq ws = split_words(lines[i]);
    SensitivityMask mask = detect(ws, tier, gaz);
    if (!rules.empty())
      mask = apply_overrides(mask, resolve_overrides(ws, rules));

    std::string rendered;
    for (size_t t = 0; t < ws.words.size(); ++t) {
      if (mask.flagged(t)) {
        if (t > 0 && mask.flagged(t - 1) && mask.labels[t - 1] == mask.labels[t])
          continue;
        if (!rendered.empty()) rendered += ' ';
        rendered += kSpecialTokens[static_cast<size_t>(mask.label(t))];
      } else {
        if (!rendered.empty()) rendered += ' ';
        rendered += ws.words[t];
      }
    }
    out << rendered << '\n';

    if (masks.is_open()) {
      nlohmann::json j;
      j["line"] = i;
      j["flags"] = mask.flags;
      nlohmann::json labels = nlohmann::json::array();
      for (size_t t = 0; t < mask.size(); ++t) {
        labels.push_back(
            mask.flagged(t)
                ? std::string(kSpecialTokens[static_cast<size_t>(mask.label(t))])
                : std::string());
      }
      j["labels"] = labels;
      masks << j.dump() << '\n';
    }
  }
  return 0;
}

int cmd_account(const std::string& ledger_file, double delta) {
  const PrivacyLedger ledger = PrivacyLedger::load_jsonl(ledger_file);
  const EpsilonReport report = to_epsilon(ledger, delta);
  std::cout << epsilon_report_json(report) << "\n";
  return 0;
}

int cmd_canary(const std::string& checkpoint, const std::string& vocab_file,
               const std::string& template_text, int digits,
               const std::string& secret, long sample, int threads) {
  const ModelParams params = load_checkpoint(checkpoint);
  const Vocab vocab = Vocab::load_json(vocab_file);
  CanarySpec spec;
  spec.template_text = template_text;
  spec.secret_digits = secret;
  if (digits > 0 && digits != spec.digit_count())
    fail(ErrorKind::ConfigError, "--digits does not match secret length");
  ExposureReport report;
  if (sample > 0) {
    Rng rng(RngStreams::derive(0, "canary-cli"));
    report = exposure_sampled(params, spec, vocab, sample, rng, threads);
  } else {
    report = exposure(params, spec, vocab, threads);
  }
  std::cout << report.to_json() << "\n";
  return 0;
}

int cmd_run(const std::string& spec_file, const std::string& out_dir) {
  const PipelineSpec spec = PipelineSpec::from_json_file(spec_file);
  const RunReport report = run_pipeline(spec, out_dir);
  std::cout << report.to_json() << "\n";
  return 0;
}

int cmd_compare(const std::vector<std::string>& report_files,
                const std::string& out_md, const std::string& out_json) {
  std::vector<RunReport> reports;
  for (const auto& f : report_files)
    reports.push_back(RunReport::from_json_file(f));
  const auto rows = compare(reports);
  const std::string md = compare_markdown(rows);
  if (!out_md.empty()) {
    std::ofstream f(out_md);
    if (!f) fail(ErrorKind::IoError, "cannot write " + out_md);
    f << md;
  }
  if (!out_json.empty()) {
    std::ofstream f(out_json);
    if (!f) fail(ErrorKind::IoError, "cannot write " + out_json);
    f << compare_json(rows) << "\n";
  }
  std::cout << md;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ATDP laboratory: token-weighted DP training and evaluation"};
  app.require_subcommand(1);

  // gen-corpus
  auto* gen = app.add_subcommand("gen-corpus", "generate a synthetic corpus");
  std::string gen_gaz, gen_out;
  long gen_bytes = 200000;
  uint64_t gen_seed = 1;
  gen->add_option("--gazetteer", gen_gaz, "gazetteer directory")->required();
  gen->add_option("--out", gen_out, "output corpus file")->required();
  gen->add_option("--target-bytes", gen_bytes, "approximate size in bytes");
  gen->add_option("--seed", gen_seed, "generator seed");

  // redact
  auto* red = app.add_subcommand("redact", "detect and redact a corpus");
  std::string red_tier = "high-contextual", red_gaz, red_in, red_out,
              red_mask, red_overrides;
  red->add_option("--tier", red_tier, "detector tier");
  red->add_option("--gazetteer", red_gaz, "gazetteer directory")->required();
  red->add_option("--in", red_in, "input corpus")->required();
  red->add_option("--out", red_out, "redacted output")->required();
  red->add_option("--mask-out", red_mask, "mask JSONL output");
  red->add_option("--overrides", red_overrides, "override rules JSON");

  // account
  auto* acc = app.add_subcommand("account", "convert a ledger to epsilon");
  std::string acc_ledger;
  double acc_delta = 1e-5;
  acc->add_option("--ledger", acc_ledger, "ledger JSONL")->required();
  acc->add_option("--delta", acc_delta, "target delta");

  // canary
  auto* can = app.add_subcommand("canary", "canary exposure of a checkpoint");
  std::string can_ckpt, can_vocab, can_template = "My ID is {}", can_secret;
  int can_digits = 0, can_threads = 0;
  long can_sample = 0;
  can->add_option("--checkpoint", can_ckpt, "model checkpoint")->required();
  can->add_option("--vocab", can_vocab, "vocab json")->required();
  can->add_option("--template", can_template, "canary template with {}");
  can->add_option("--digits", can_digits, "digit count (must match secret)");
  can->add_option("--secret", can_secret, "true canary digits")->required();
  can->add_option("--sample", can_sample, "distractor sample size (0 = exact)");
  can->add_option("--threads", can_threads, "worker threads");

  // run
  auto* run = app.add_subcommand("run", "execute a pipeline spec");
  std::string run_spec, run_out;
  run->add_option("--spec", run_spec, "pipeline json")->required();
  run->add_option("--out", run_out, "output directory")->required();

  // compare
  auto* cmp = app.add_subcommand("compare", "compare run reports");
  std::vector<std::string> cmp_reports;
  std::string cmp_out, cmp_json;
  cmp->add_option("--reports", cmp_reports, "report.json files")
      ->required()
      ->expected(-1);
  cmp->add_option("--out", cmp_out, "markdown table output");
  cmp->add_option("--json", cmp_json, "json table output");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (gen->parsed())
      return cmd_gen_corpus(gen_gaz, gen_out, gen_bytes, gen_seed);
    if (red->parsed())
      return cmd_redact(red_tier, red_gaz, red_in, red_out, red_mask,
                        red_overrides);
    if (acc->parsed()) return cmd_account(acc_ledger, acc_delta);
    if (can->parsed())
      return cmd_canary(can_ckpt, can_vocab, can_template, can_digits,
                        can_secret, can_sample, can_threads);
    if (run->parsed()) return cmd_run(run_spec, run_out);
    if (cmp->parsed()) return cmd_compare(cmp_reports, cmp_out, cmp_json);
  } catch (const atdp::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.kind() == atdp::ErrorKind::NumericsError ? 3 : 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}

#include "atdp/runner.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "json.hpp"

namespace atdp {

namespace {

using nlohmann::json;

DpConfig config_from_json(const json& j, DpConfig base, bool* w_non_auto) {
  DpConfig cfg = base;
  if (j.contains("sigma0")) cfg.sigma0 = j["sigma0"].get<double>();
  if (j.contains("clip_norm")) cfg.clip_norm = j["clip_norm"].get<double>();
  if (j.contains("batch_size")) cfg.batch_size = j["batch_size"].get<int>();
  if (j.contains("gamma")) cfg.gamma = j["gamma"].get<double>();
  if (j.contains("jitter")) {
    const auto& jt = j["jitter"];
    cfg.jitter_lo = jt.at(0).get<double>();
    cfg.jitter_hi = jt.at(1).get<double>();
  }
  if (j.contains("sigma_max")) cfg.sigma_max = j["sigma_max"].get<double>();
  if (j.contains("delta")) cfg.delta = j["delta"].get<double>();
  if (j.contains("learning_rate"))
    cfg.learning_rate = j["learning_rate"].get<double>();
  if (j.contains("momentum")) cfg.momentum = j["momentum"].get<double>();
  if (j.contains("r_target")) cfg.r_target = j["r_target"].get<double>();
  if (j.contains("w_non")) {
    if (j["w_non"].is_string()) {
      if (j["w_non"].get<std::string>() != "auto")
        fail(ErrorKind::ConfigError, "w_non must be a number or \"auto\"");
      if (w_non_auto) *w_non_auto = true;
    } else {
      cfg.w_non = j["w_non"].get<double>();
    }
  }
  return cfg;
}

std::string mode_name(DpMode m) { return to_string(m); }

json exposure_to_json(const ExposureReport& e) {
  json j{{"canary_rank", e.canary_rank},
         {"candidate_space", e.candidate_space},
         {"exposure", e.exposure},
         {"threshold", e.threshold},
         {"extractable", e.extractable}};
  if (e.sample_size > 0) j["sample_size"] = e.sample_size;
  return j;
}

ExposureReport exposure_from_json(const json& j) {
  ExposureReport e;
  e.canary_rank = j.at("canary_rank").get<long>();
  e.candidate_space = j.at("candidate_space").get<long>();
  e.exposure = j.at("exposure").get<double>();
  e.threshold = j.at("threshold").get<double>();
  e.extractable = j.at("extractable").get<bool>();
  e.sample_size = j.value("sample_size", 0L);
  return e;
}

}  // namespace

void PipelineSpec::validate() const {
  if (stages.empty()) fail(ErrorKind::ConfigError, "pipeline has no stages");
  if (!(valid_fraction > 0.0 && valid_fraction < 0.5))
    fail(ErrorKind::ConfigError, "valid_fraction must lie in (0, 0.5)");
  if (!(delta > 0.0 && delta < 1.0))
    fail(ErrorKind::ConfigError, "delta must lie in (0, 1)");
  if (vocab_max_size < kNumSpecials)
    fail(ErrorKind::ConfigError, "vocab_max_size too small");
  if (gazetteer_dir.empty())
    fail(ErrorKind::ConfigError, "gazetteer_dir is required");
  if (!use_generator && corpus_file.empty())
    fail(ErrorKind::ConfigError, "either corpus file or generator required");
  if (frequent_top_k < 0)
    fail(ErrorKind::ConfigError, "frequent_top_k must be >= 0");

  std::vector<std::string> names;
  bool saw_training = false;
  for (const auto& stage : stages) {
    if (stage.name.empty()) fail(ErrorKind::ConfigError, "stage without name");
    if (std::find(names.begin(), names.end(), stage.name) != names.end())
      fail(ErrorKind::ConfigError, "duplicate stage name " + stage.name);
    names.push_back(stage.name);
    if (stage.epochs < 0)
      fail(ErrorKind::ConfigError, "stage epochs must be >= 0");
    if (stage.mode == DpMode::Atdp && !saw_training)
      fail(ErrorKind::ConfigError,
           "an atdp stage must follow at least one training stage");
    DpConfig cfg = stage.config;
    cfg.mode = stage.mode;
    cfg.validate();
    saw_training = true;
  }
  if (canary) canary->spec.validate();
}

PipelineSpec PipelineSpec::from_json_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    fail(ErrorKind::ConfigError, std::string("malformed pipeline json: ") +
                                     e.what());
  }

  PipelineSpec spec;
  spec.name = j.value("name", std::string("pipeline"));
  spec.seed = j.value("seed", 1ull);
  if (j.contains("corpus")) {
    const auto& c = j["corpus"];
    if (c.contains("file")) {
      spec.corpus_file = c["file"].get<std::string>();
    } else if (c.contains("generate")) {
      spec.use_generator = true;
      const auto& g = c["generate"];
      spec.generate.target_bytes = g.value("target_bytes", 200000L);
      spec.generate.seed = g.value("seed", spec.seed);
    }
  }
  spec.valid_fraction = j.value("valid_fraction", 0.1);
  spec.vocab_max_size = j.value("vocab_max_size", 2000);
  spec.tier =
      tier_from_string(j.value("detector_tier", std::string("high-contextual")));
  spec.gazetteer_dir = j.value("gazetteer_dir", std::string());
  spec.frequent_top_k = j.value("frequent_top_k", 100);
  spec.delta = j.value("delta", 1e-5);
  spec.threads = j.value("threads", 0);
  if (j.contains("arch")) {
    const auto& a = j["arch"];
    spec.arch.embed_dim = a.value("embed_dim", 64);
    spec.arch.hidden_dim = a.value("hidden_dim", 128);
    spec.arch.num_layers = a.value("num_layers", 2);
    spec.arch.context_len = a.value("context_len", 64);
  }
  if (j.contains("canary")) {
    const auto& c = j["canary"];
    CanaryConfig cfg;
    cfg.spec.template_text = c.at("template").get<std::string>();
    cfg.spec.secret_digits = c.at("secret").get<std::string>();
    cfg.spec.insert_count = c.value("insert_count", 10);
    cfg.visible_to_detector = c.value("visible_to_detector", false);
    cfg.force_sensitive_in_dp = c.value("force_sensitive_in_dp", true);
    cfg.sample = c.value("sample", 0L);
    spec.canary = cfg;
  }
  if (j.contains("stages")) {
    for (const auto& s : j["stages"]) {
      StageSpec stage;
      stage.name = s.at("name").get<std::string>();
      const std::string variant = s.value("corpus", std::string("original"));
      if (variant == "original") {
        stage.corpus = CorpusVariant::Original;
      } else if (variant == "redacted") {
        stage.corpus = CorpusVariant::Redacted;
      } else {
        fail(ErrorKind::ConfigError, "stage corpus must be original|redacted");
      }
      stage.mode = dp_mode_from_string(s.value("mode", std::string("non_private")));
      stage.epochs = s.value("epochs", 1);
      stage.config = config_from_json(s.value("config", json::object()),
                                      DpConfig{}, &stage.w_non_auto);
      stage.config.mode = stage.mode;
      stage.config.epochs = stage.epochs;
      spec.stages.push_back(std::move(stage));
    }
  }
  return spec;
}

PipelineSpec PipelineSpec::from_json_file(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) fail(ErrorKind::IoError, "cannot open pipeline " + file.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return from_json_text(buf.str());
}

namespace {

struct PreparedRecord {
  TokenizedRecord original;
  TokenizedRecord redacted;
  bool is_canary = false;
  std::vector<size_t> canary_digit_positions;  // indices into token_ids
};

struct PreparedData {
  Vocab vocab;
  std::vector<PreparedRecord> train;
  std::vector<TokenizedRecord> valid;
  std::unordered_set<int32_t> frequent;
  double alpha_measured = 0.0;
  std::vector<TokenizedRecord> probe;  // canary sentence, digits flagged
  std::string dataset_id;
};

TokenizedRecord build_record(const WordSeq& words, const SensitivityMask& mask,
                             const Vocab& vocab) {
  TokenizedRecord rec;
  rec.token_ids.reserve(words.words.size() + 2);
  rec.token_ids.push_back(vocab.special(Special::Bos));
  for (const auto& id : word_ids(words, vocab)) rec.token_ids.push_back(id);
  rec.token_ids.push_back(vocab.special(Special::Eos));
  rec.sensitive_mask.assign(rec.token_ids.size(), 0);
  for (size_t i = 0; i < mask.size(); ++i)
    rec.sensitive_mask[i + 1] = mask.flagged(i) ? 1 : 0;
  rec.weights.assign(rec.token_ids.size(), 1.0);
  return rec;
}

TokenizedRecord build_redacted_record(const WordSeq& words,
                                      const SensitivityMask& mask,
                                      const Vocab& vocab) {
  const std::vector<int32_t> ids = word_ids(words, vocab);
  std::vector<int32_t> redacted_ids = redact(ids, mask, vocab);
  std::vector<int32_t> wrapped;
  wrapped.reserve(redacted_ids.size() + 2);
  wrapped.push_back(vocab.special(Special::Bos));
  wrapped.insert(wrapped.end(), redacted_ids.begin(), redacted_ids.end());
  wrapped.push_back(vocab.special(Special::Eos));
  return make_record(wrapped);
}

PreparedData prepare_data(const PipelineSpec& spec, const Gazetteer& gaz) {
  std::vector<std::string> lines;
  std::string source_id;
  if (spec.use_generator) {
    lines = generate_corpus_lines(spec.generate, gaz);
    source_id = "gen:" + std::to_string(spec.generate.seed) + ":" +
                std::to_string(spec.generate.target_bytes);
  } else {
    lines = read_corpus_lines(spec.corpus_file);
    source_id = "file:" + spec.corpus_file;
  }
  if (lines.size() < 10)
    fail(ErrorKind::ConfigError, "corpus too small to split");

  Rng split_rng(RngStreams::derive(spec.seed, "split"));
  std::vector<size_t> order(lines.size());
  std::iota(order.begin(), order.end(), 0);
  split_rng.shuffle(order);
  const size_t n_valid = std::max<size_t>(
      1, static_cast<size_t>(spec.valid_fraction *
                             static_cast<double>(lines.size())));

  std::vector<std::string> train_lines, valid_lines;
  for (size_t i = 0; i < order.size(); ++i) {
    (i < n_valid ? valid_lines : train_lines).push_back(lines[order[i]]);
  }

  PreparedData data;
  data.vocab = build_vocab_from_lines(train_lines, spec.vocab_max_size);
  data.dataset_id = source_id + "|seed=" + std::to_string(spec.seed) +
                    "|vocab=" + std::to_string(data.vocab.size());

  size_t flagged = 0, total = 0;
  for (const auto& line : train_lines) {
    const WordSeq ws = split_words(line);
    if (ws.words.empty()) continue;
    const SensitivityMask mask = detect(ws, spec.tier, gaz);
    PreparedRecord rec;
    rec.original = build_record(ws, mask, data.vocab);
    rec.redacted = build_redacted_record(ws, mask, data.vocab);
    for (uint8_t f : mask.flags) flagged += f;
    total += mask.size();
    data.train.push_back(std::move(rec));
  }
  for (const auto& line : valid_lines) {
    const WordSeq ws = split_words(line);
    if (ws.words.empty()) continue;
    data.valid.push_back(make_record(tokenize(line, data.vocab)));
  }
  data.alpha_measured =
      total == 0 ? 0.0
                 : static_cast<double>(flagged) / static_cast<double>(total);

  if (spec.canary) {
    const CanaryConfig& canary = *spec.canary;
    const WordSeq ws = split_words(canary.spec.render(canary.spec.secret_digits));
    SensitivityMask mask(ws.words.size());
    if (canary.visible_to_detector) mask = detect(ws, spec.tier, gaz);

    PreparedRecord rec;
    rec.is_canary = true;
    rec.original = build_record(ws, mask, data.vocab);
    rec.redacted = canary.visible_to_detector
                       ? build_redacted_record(ws, mask, data.vocab)
                       : make_record(rec.original.token_ids);
    for (size_t i = 0; i < ws.words.size(); ++i) {
      const std::string& w = ws.words[i];
      if (w.size() == 1 && w[0] >= '0' && w[0] <= '9')
        rec.canary_digit_positions.push_back(i + 1);  // +1 for <BOS>
    }

    Rng canary_rng(RngStreams::derive(spec.seed, "canary"));
    for (int i = 0; i < canary.spec.insert_count; ++i) {
      const size_t pos =
          static_cast<size_t>(canary_rng.uniform_index(data.train.size() + 1));
      data.train.insert(data.train.begin() + static_cast<std::ptrdiff_t>(pos),
                        rec);
    }

    // Probe set for the per-class trend: memorized training sentences whose
    // detector masks have both classes. The trailing <EOS> target is dropped
    // so the non-sensitive class covers the sentence words only.
    for (const auto& r : data.train) {
      if (data.probe.size() >= 16) break;
      if (r.is_canary) continue;
      size_t flagged = 0;
      size_t clear = 0;
      for (size_t t = 1; t < r.original.sensitive_mask.size() - 1; ++t) {
        (r.original.sensitive_mask[t] ? flagged : clear) += 1;
      }
      if (flagged < 3 || clear < 4) continue;
      TokenizedRecord probe = r.original;
      probe.token_ids.pop_back();
      probe.sensitive_mask.pop_back();
      probe.weights.pop_back();
      data.probe.push_back(std::move(probe));
    }
  }

  std::vector<TokenizedRecord> originals;
  originals.reserve(data.train.size());
  for (const auto& r : data.train) originals.push_back(r.original);
  data.frequent =
      frequent_token_set(originals, spec.frequent_top_k, data.vocab);
  return data;
}

std::vector<TokenizedRecord> stage_records(const PreparedData& data,
                                           const PipelineSpec& spec,
                                           const StageSpec& stage,
                                           double* w_non_out) {
  std::vector<TokenizedRecord> records;
  records.reserve(data.train.size());
  for (const auto& r : data.train) {
    records.push_back(stage.corpus == CorpusVariant::Redacted ? r.redacted
                                                              : r.original);
  }

  if (stage.mode == DpMode::Atdp) {
    if (spec.canary && spec.canary->force_sensitive_in_dp &&
        stage.corpus == CorpusVariant::Original) {
      for (size_t i = 0; i < data.train.size(); ++i) {
        if (!data.train[i].is_canary) continue;
        for (size_t p : data.train[i].canary_digit_positions)
          records[i].sensitive_mask[p] = 1;
      }
    }
    double w_non = stage.config.w_non;
    if (stage.w_non_auto) {
      const double alpha =
          std::clamp(data.alpha_measured, 1e-6, 1.0 - 1e-6);
      w_non = compute_w_non(alpha, stage.config.r_target);
    }
    if (w_non_out) *w_non_out = w_non;
    assign_weights(records, data.frequent, w_non);
  } else {
    // non-private and vanilla DP-SGD train unweighted
    for (auto& rec : records) rec.weights.assign(rec.token_ids.size(), 1.0);
    if (w_non_out) *w_non_out = 1.0;
  }
  return records;
}

}  // namespace

RunReport run_pipeline(const PipelineSpec& spec,
                       const std::filesystem::path& out_dir) {
  spec.validate();
  const Gazetteer gaz = Gazetteer::load(spec.gazetteer_dir);
  std::filesystem::create_directories(out_dir);

  PreparedData data = prepare_data(spec, gaz);

  ArchConfig arch = spec.arch;
  arch.vocab_size = data.vocab.size();
  arch.validate();
  data.vocab.save_json(out_dir / "vocab.json");

  RngStreams streams = RngStreams::from_seed(spec.seed);
  ModelParams params = init_model(arch, streams.init);

  PrivacyLedger ledger;
  RunReport report;
  report.pipeline = spec.name;
  report.dataset_id = data.dataset_id;
  report.seed = spec.seed;

  std::ofstream metrics(out_dir / "metrics.jsonl");
  std::ofstream steps_log(out_dir / "steps.jsonl");
  if (!metrics || !steps_log)
    fail(ErrorKind::IoError, "cannot write logs under " + out_dir.string());

  auto record_probe = [&](const std::string& label) {
    if (data.probe.empty()) return;
    report.class_ppl_series.push_back(
        per_class_perplexity(params, data.probe, label));
  };

  for (const auto& stage : spec.stages) {
    DpConfig cfg = stage.config;
    cfg.mode = stage.mode;
    cfg.epochs = stage.epochs;

    double w_non_used = 1.0;
    const std::vector<TokenizedRecord> records =
        stage_records(data, spec, stage, &w_non_used);

    record_probe(stage.name + ":0");

    const auto wall_start = std::chrono::steady_clock::now();
    const auto on_epoch = [&](int epoch, const ModelParams& p) {
      const double val_ppl = perplexity(p, data.valid);
      json m{{"stage", stage.name},
             {"epoch", epoch},
             {"val_ppl", val_ppl},
             {"w_non", w_non_used}};
      if (!data.probe.empty()) {
        const auto cls = per_class_perplexity(
            p, data.probe, stage.name + ":" + std::to_string(epoch));
        if (cls.ppl_sensitive) m["probe_ppl_sensitive"] = *cls.ppl_sensitive;
        if (cls.ppl_non_sensitive)
          m["probe_ppl_non_sensitive"] = *cls.ppl_non_sensitive;
        report.class_ppl_series.push_back(cls);
      }
      metrics << m.dump() << '\n';
    };
    const auto on_step = [&](const StepLogEntry& e) {
      json s{{"step", e.step},
             {"epoch", e.epoch},
             {"sigma", e.sigma},
             {"batch_loss", e.batch_loss},
             {"grad_norm_pre_clip_mean", e.grad_norm_pre_clip_mean},
             {"stage", stage.name}};
      steps_log << s.dump() << '\n';
    };

    const TrainStats stats =
        run_training(params, records, cfg, stage.epochs, &ledger, streams,
                     stage.name, spec.threads, on_epoch, on_step);
    const auto wall_end = std::chrono::steady_clock::now();

    // Stage boundaries always persist and reload the checkpoint, so a rerun
    // from disk continues exactly like an uninterrupted pipeline.
    const auto ckpt = out_dir / ("ckpt_" + stage.name + ".atdp");
    json meta{{"stage", stage.name},
              {"pipeline", spec.name},
              {"seed", spec.seed},
              {"arch",
               {{"vocab_size", arch.vocab_size},
                {"embed_dim", arch.embed_dim},
                {"hidden_dim", arch.hidden_dim},
                {"num_layers", arch.num_layers},
                {"context_len", arch.context_len}}},
              {"vocab_file", (out_dir / "vocab.json").string()}};
    save_checkpoint(params, ckpt, meta.dump(2));
    params = load_checkpoint(ckpt);

    StageReport sr;
    sr.name = stage.name;
    sr.mode = stage.mode;
    sr.epochs = stage.epochs;
    sr.seconds =
        std::chrono::duration<double>(wall_end - wall_start).count();
    sr.optimizer_steps = stats.optimizer_steps;
    sr.noisy_steps = stats.noisy_steps;
    sr.val_ppl_after = perplexity(params, data.valid);
    report.total_optimizer_steps += sr.optimizer_steps;
    report.total_noisy_steps += sr.noisy_steps;
    report.stages.push_back(sr);
  }

  report.val_ppl = perplexity(params, data.valid);
  if (spec.canary) {
    const CanaryConfig& canary = *spec.canary;
    if (canary.sample > 0) {
      Rng sample_rng(RngStreams::derive(spec.seed, "exposure-sample"));
      report.exposure = exposure_sampled(params, canary.spec, data.vocab,
                                         canary.sample, sample_rng,
                                         spec.threads);
    } else {
      report.exposure =
          exposure(params, canary.spec, data.vocab, spec.threads);
    }
  }
  if (!ledger.empty()) report.epsilon = to_epsilon(ledger, spec.delta);
  ledger.save_jsonl(out_dir / "ledger.jsonl");

  const long ledger_total = static_cast<long>(ledger.size());
  if (ledger_total != report.total_noisy_steps)
    fail(ErrorKind::NumericsError,
         "ledger entries do not match counted noisy steps");

  std::ofstream rep(out_dir / "report.json");
  if (!rep) fail(ErrorKind::IoError, "cannot write report.json");
  rep << report.to_json() << '\n';
  return report;
}

std::string RunReport::to_json() const {
  json stages_json = json::array();
  for (const auto& s : stages) {
    stages_json.push_back({{"name", s.name},
                           {"mode", mode_name(s.mode)},
                           {"epochs", s.epochs},
                           {"seconds", s.seconds},
                           {"optimizer_steps", s.optimizer_steps},
                           {"noisy_steps", s.noisy_steps},
                           {"val_ppl_after", s.val_ppl_after}});
  }
  json j{{"pipeline", pipeline},
         {"dataset_id", dataset_id},
         {"seed", seed},
         {"stages", stages_json},
         {"val_ppl", val_ppl},
         {"total_optimizer_steps", total_optimizer_steps},
         {"total_noisy_steps", total_noisy_steps}};
  if (exposure) j["exposure"] = exposure_to_json(*exposure);
  if (epsilon) {
    json per_stage = json::object();
    for (const auto& [stage, alpha] : epsilon->per_stage)
      per_stage[stage] = alpha;
    j["epsilon"] = {{"epsilon_total", epsilon->epsilon_total},
                    {"best_order", epsilon->best_order},
                    {"delta", epsilon->delta},
                    {"per_stage_alpha_at_best_order", per_stage}};
  }
  if (!class_ppl_series.empty()) {
    json series = json::array();
    for (const auto& c : class_ppl_series) {
      json item{{"checkpoint", c.checkpoint}};
      if (c.ppl_sensitive) item["ppl_sensitive"] = *c.ppl_sensitive;
      if (c.ppl_non_sensitive)
        item["ppl_non_sensitive"] = *c.ppl_non_sensitive;
      series.push_back(item);
    }
    j["class_ppl_series"] = series;
  }
  return j.dump(2);
}

RunReport RunReport::from_json_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    fail(ErrorKind::IoError, std::string("malformed report: ") + e.what());
  }
  RunReport r;
  r.pipeline = j.at("pipeline").get<std::string>();
  r.dataset_id = j.value("dataset_id", std::string());
  r.seed = j.value("seed", 0ull);
  r.val_ppl = j.at("val_ppl").get<double>();
  r.total_optimizer_steps = j.value("total_optimizer_steps", 0L);
  r.total_noisy_steps = j.value("total_noisy_steps", 0L);
  if (j.contains("stages")) {
    for (const auto& s : j["stages"]) {
      StageReport sr;
      sr.name = s.at("name").get<std::string>();
      sr.mode = dp_mode_from_string(s.value("mode", std::string("non_private")));
      sr.epochs = s.value("epochs", 0);
      sr.seconds = s.value("seconds", 0.0);
      sr.optimizer_steps = s.value("optimizer_steps", 0L);
      sr.noisy_steps = s.value("noisy_steps", 0L);
      sr.val_ppl_after = s.value("val_ppl_after", 0.0);
      r.stages.push_back(sr);
    }
  }
  if (j.contains("exposure")) r.exposure = exposure_from_json(j["exposure"]);
  if (j.contains("epsilon")) {
    EpsilonReport e;
    e.epsilon_total = j["epsilon"].at("epsilon_total").get<double>();
    e.best_order = j["epsilon"].value("best_order", 0);
    e.delta = j["epsilon"].value("delta", 0.0);
    if (j["epsilon"].contains("per_stage_alpha_at_best_order")) {
      for (const auto& [k, v] :
           j["epsilon"]["per_stage_alpha_at_best_order"].items())
        e.per_stage.emplace_back(k, v.get<double>());
    }
    r.epsilon = e;
  }
  if (j.contains("class_ppl_series")) {
    for (const auto& c : j["class_ppl_series"]) {
      ClassPerplexity cls;
      cls.checkpoint = c.value("checkpoint", std::string());
      if (c.contains("ppl_sensitive"))
        cls.ppl_sensitive = c["ppl_sensitive"].get<double>();
      if (c.contains("ppl_non_sensitive"))
        cls.ppl_non_sensitive = c["ppl_non_sensitive"].get<double>();
      r.class_ppl_series.push_back(cls);
    }
  }
  return r;
}

RunReport RunReport::from_json_file(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) fail(ErrorKind::IoError, "cannot open report " + file.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return from_json_text(buf.str());
}

std::vector<CompareRow> compare(const std::vector<RunReport>& reports) {
  if (reports.empty()) fail(ErrorKind::ConfigError, "no reports to compare");
  for (const auto& r : reports) {
    if (r.dataset_id != reports.front().dataset_id)
      fail(ErrorKind::ConfigError,
           "reports do not share a dataset: " + r.dataset_id + " vs " +
               reports.front().dataset_id);
  }

  const RunReport* baseline = nullptr;
  for (const auto& r : reports) {
    if (r.total_noisy_steps == 0) {
      baseline = &r;
      break;
    }
  }
  if (reports.size() >= 2 && baseline == nullptr)
    fail(ErrorKind::ConfigError,
         "no No-DP baseline report (zero noisy steps) to normalize against");

  std::vector<CompareRow> rows;
  for (const auto& r : reports) {
    CompareRow row;
    row.name = r.pipeline;
    if (baseline && baseline->total_optimizer_steps > 0) {
      row.relative_compute =
          static_cast<double>(r.total_optimizer_steps) /
          static_cast<double>(baseline->total_optimizer_steps);
    }
    row.val_ppl = r.val_ppl;
    if (r.exposure) row.exposure = r.exposure->exposure;
    row.noisy_steps = r.total_noisy_steps;
    if (r.epsilon) row.epsilon = r.epsilon->epsilon_total;
    rows.push_back(row);
  }
  return rows;
}

std::string compare_markdown(const std::vector<CompareRow>& rows) {
  std::ostringstream out;
  out << "| System | Rel. compute | Val PPL | Canary exposure | Noisy steps | epsilon |\n";
  out << "|---|---|---|---|---|---|\n";
  for (const auto& r : rows) {
    out << "| " << r.name << " | ";
    if (r.relative_compute) {
      char buf[32];
      std::snprintf(buf, sizeof buf, "%.2fx", *r.relative_compute);
      out << buf;
    } else {
      out << "-";
    }
    char ppl[32];
    std::snprintf(ppl, sizeof ppl, "%.3f", r.val_ppl);
    out << " | " << ppl << " | ";
    if (r.exposure) {
      char e[32];
      std::snprintf(e, sizeof e, "%.3f", *r.exposure);
      out << e;
    } else {
      out << "-";
    }
    out << " | " << r.noisy_steps << " | ";
    if (r.epsilon) {
      char e[32];
      std::snprintf(e, sizeof e, "%.3f", *r.epsilon);
      out << e;
    } else {
      out << "-";
    }
    out << " |\n";
  }
  return out.str();
}

std::string compare_json(const std::vector<CompareRow>& rows) {
  json arr = json::array();
  for (const auto& r : rows) {
    json row{{"name", r.name},
             {"val_ppl", r.val_ppl},
             {"noisy_steps", r.noisy_steps}};
    if (r.relative_compute) row["relative_compute"] = *r.relative_compute;
    if (r.exposure) row["exposure"] = *r.exposure;
    if (r.epsilon) row["epsilon"] = *r.epsilon;
    arr.push_back(row);
  }
  return arr.dump(2);
}

}  // namespace atdp

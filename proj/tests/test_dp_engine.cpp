#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "atdp/dp_engine.hpp"
#include "test_util.hpp"

using namespace atdp;
using namespace atdp::testutil;

namespace {

ArchConfig tiny_arch(int32_t vocab) {
  ArchConfig a;
  a.vocab_size = vocab;
  a.embed_dim = 16;
  a.hidden_dim = 24;
  a.num_layers = 1;
  a.context_len = 16;
  return a;
}

std::vector<TokenizedRecord> random_records(Rng& rng, int32_t vocab, size_t n,
                                            size_t len) {
  std::vector<TokenizedRecord> out;
  for (size_t r = 0; r < n; ++r) {
    TokenizedRecord rec;
    for (size_t i = 0; i < len; ++i) {
      rec.token_ids.push_back(static_cast<int32_t>(
          rng.uniform_index(static_cast<uint64_t>(vocab))));
    }
    rec.sensitive_mask.assign(len, 0);
    for (auto& m : rec.sensitive_mask) m = rng.uniform() < 0.3 ? 1 : 0;
    rec.weights.assign(len, 1.0);
    out.push_back(std::move(rec));
  }
  return out;
}

double l2(const std::vector<double>& v) {
  double ss = 0.0;
  for (double x : v) ss += x * x;
  return std::sqrt(ss);
}

}  // namespace

TEST_CASE("compute_w_non evaluates the closed form") {
  CHECK(compute_w_non(0.2, 0.5) == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(compute_w_non(0.10, 0.5) ==
        doctest::Approx(1.0 / 9.0).epsilon(1e-12));
  CHECK(compute_w_non(0.5, 0.5) == doctest::Approx(1.0).epsilon(1e-12));
  // capped at 1 when the formula exceeds it
  CHECK(compute_w_non(0.8, 0.5) == 1.0);
  CHECK_THROWS_AS(compute_w_non(0.0, 0.5), Error);
  CHECK_THROWS_AS(compute_w_non(0.2, 1.0), Error);
}

TEST_CASE("sensitive_share follows the energy formula") {
  GradientDecomposition d;
  d.g_sens = {1.0};       // |g_sens|^2 = 1
  d.g_non = {2.0, 0.0};   // |g_non|^2 = 4
  CHECK(sensitive_share(d, 0.5) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(sensitive_share(d, 0.0) == doctest::Approx(1.0).epsilon(1e-12));

  GradientDecomposition no_non;
  no_non.g_sens = {3.0};
  no_non.g_non = {0.0};
  CHECK(sensitive_share(no_non, 0.7) == doctest::Approx(1.0).epsilon(1e-12));

  GradientDecomposition zero;
  zero.g_sens = {0.0};
  zero.g_non = {0.0};
  try {
    sensitive_share(zero, 0.5);
    FAIL("expected UndefinedShare");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::UndefinedShare);
  }
}

TEST_CASE("sensitive_share is monotone nonincreasing in w") {
  Rng rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    GradientDecomposition d;
    for (int i = 0; i < 8; ++i) {
      d.g_sens.push_back(rng.gauss());
      d.g_non.push_back(rng.gauss());
    }
    const double w1 = rng.uniform(0.0, 1.0);
    const double w2 = rng.uniform(0.0, 1.0);
    const double lo = std::min(w1, w2), hi = std::max(w1, w2);
    CHECK(sensitive_share(d, lo) >= sensitive_share(d, hi) - 1e-12);
  }
}

TEST_CASE("decomposition is consistent with weighted gradients") {
  Rng rng(21);
  const ArchConfig arch = tiny_arch(20);
  const ModelParams params = init_model(arch, rng);
  auto records = random_records(rng, 20, 1, 7);
  const TokenizedRecord& rec = records[0];

  const GradientDecomposition d = decompose_record_gradient(params, rec);
  const double w = 0.3;
  TokenizedRecord weighted = rec;
  for (size_t i = 0; i < rec.token_ids.size(); ++i)
    weighted.weights[i] = rec.sensitive_mask[i] ? 1.0 : w;
  const auto g = weighted_record_gradient(params, weighted).grad;
  for (size_t i = 0; i < g.size(); ++i) {
    CHECK(g[i] == doctest::Approx(d.g_sens[i] + w * d.g_non[i]).epsilon(1e-9));
  }
}

TEST_CASE("assign_weights applies the three-way rule") {
  const Vocab vocab = vocab_from_text("the cat sat rare");
  std::vector<TokenizedRecord> records = {
      record_from_text("the cat sat rare", vocab)};
  records[0].sensitive_mask[2] = 1;  // "cat" sensitive
  std::unordered_set<int32_t> frequent = {vocab.lookup("the")};

  assign_weights(records, frequent, 0.2);
  const auto& w = records[0].weights;
  CHECK(w[1] == 1.0);   // "the": frequent
  CHECK(w[2] == 1.0);   // "cat": sensitive
  CHECK(w[3] == 0.2);   // "sat"
  CHECK(w[4] == 0.2);   // "rare"
  CHECK(w[0] == 0.2);   // <BOS> is neither sensitive nor frequent

  records[0].sensitive_mask.pop_back();
  CHECK_THROWS_AS(assign_weights(records, frequent, 0.2), Error);
}

TEST_CASE("clip scales norms down and leaves small gradients alone") {
  std::vector<double> big = {0.0, 4.0, 0.0};
  const auto clipped = clip(big, 1.0);
  CHECK(clipped[1] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(l2(clipped) == doctest::Approx(1.0).epsilon(1e-12));

  std::vector<double> small = {0.3, 0.4};
  CHECK(clip(small, 1.0) == small);

  std::vector<double> zero = {0.0, 0.0};
  CHECK(clip(zero, 1.0) == zero);

  std::vector<double> bad = {std::nan(""), 1.0};
  try {
    clip(bad, 1.0);
    FAIL("expected NumericsError");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::NumericsError);
  }
}

TEST_CASE("schedule escalates geometrically and resets past the ceiling") {
  DpConfig cfg;
  cfg.sigma0 = 1.0;
  cfg.gamma = 2.0;
  cfg.jitter_lo = 1.0;
  cfg.jitter_hi = 1.0;
  cfg.sigma_max = 8.0;
  cfg.mode = DpMode::Atdp;

  Rng jitter(1);
  ScheduleState st{cfg.sigma0, 0};
  std::vector<double> seen;
  for (int e = 0; e < 5; ++e) {
    st = advance_schedule(st, cfg, jitter);
    seen.push_back(st.sigma);
  }
  CHECK(seen == std::vector<double>{2.0, 4.0, 8.0, 1.0, 2.0});
}

TEST_CASE("no reset when gamma keeps sigma under the ceiling") {
  DpConfig cfg;
  cfg.sigma0 = 1.0;
  cfg.gamma = 1.1;
  cfg.jitter_lo = 1.0;
  cfg.jitter_hi = 1.0;
  cfg.sigma_max = 1000.0;
  Rng jitter(1);
  ScheduleState st{cfg.sigma0, 0};
  double prev = cfg.sigma0;
  for (int e = 0; e < 20; ++e) {
    st = advance_schedule(st, cfg, jitter);
    CHECK(st.sigma > prev);
    prev = st.sigma;
  }
}

TEST_CASE("zero-noise atdp step equals clipped batch sgd") {
  Rng rng(8);
  const ArchConfig arch = tiny_arch(15);
  ModelParams params = init_model(arch, rng);
  const ModelParams before = params;
  auto batch = random_records(rng, 15, 4, 6);

  DpConfig cfg;
  cfg.mode = DpMode::Atdp;
  cfg.batch_size = 4;
  cfg.clip_norm = 0.5;
  cfg.learning_rate = 0.1;

  ScheduleState st{0.0, 0};  // test hook: pinned zero noise
  OptimizerState opt{cfg.learning_rate, 0.0, 0, {}};
  Rng noise(123);
  noisy_step(params, batch, st, cfg, opt, nullptr, 0.5, noise);

  std::vector<double> expected(param_count(arch), 0.0);
  for (const auto& rec : batch) {
    auto g = weighted_record_gradient(before, rec).grad;
    clip_in_place(g, cfg.clip_norm);
    for (size_t i = 0; i < g.size(); ++i) expected[i] += g[i];
  }
  for (size_t i = 0; i < expected.size(); ++i) {
    const double want = before.theta[i] - cfg.learning_rate * expected[i] / 4.0;
    CHECK(params.theta[i] == doctest::Approx(want).epsilon(1e-12));
  }
}

TEST_CASE("noisy_step is deterministic under a fixed seed") {
  Rng rng(9);
  const ArchConfig arch = tiny_arch(15);
  const ModelParams init = init_model(arch, rng);
  auto batch = random_records(rng, 15, 4, 6);

  DpConfig cfg;
  cfg.mode = DpMode::DpSgd;
  cfg.batch_size = 4;
  cfg.sigma0 = 1.0;

  auto run_once = [&](int threads) {
    ModelParams params = init;
    ScheduleState st{cfg.sigma0, 0};
    OptimizerState opt{0.1, 0.0};
    Rng noise(4242);
    for (int i = 0; i < 3; ++i)
      noisy_step(params, batch, st, cfg, opt, nullptr, 0.5, noise, "t",
                 threads);
    return params.theta;
  };
  const auto a = run_once(1);
  const auto b = run_once(1);
  CHECK(a == b);
  // grouped reduction keeps the sum order fixed across thread counts
  const auto c = run_once(4);
  CHECK(a == c);
}

TEST_CASE("noisy steps append exactly one ledger entry each") {
  Rng rng(10);
  const ArchConfig arch = tiny_arch(15);
  ModelParams params = init_model(arch, rng);
  auto batch = random_records(rng, 15, 3, 6);

  DpConfig cfg;
  cfg.mode = DpMode::DpSgd;
  cfg.batch_size = 3;
  ScheduleState st{cfg.sigma0, 0};
  OptimizerState opt{0.05, 0.0};
  PrivacyLedger ledger;
  Rng noise(5);
  for (int i = 0; i < 4; ++i)
    noisy_step(params, batch, st, cfg, opt, &ledger, 0.1, noise);
  CHECK(ledger.size() == 4);

  cfg.mode = DpMode::NonPrivate;
  noisy_step(params, batch, st, cfg, opt, &ledger, 0.1, noise);
  CHECK(ledger.size() == 4);

  try {
    noisy_step(params, {}, st, cfg, opt, &ledger, 0.1, noise);
    FAIL("expected EmptyBatch");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::EmptyBatch);
  }
}

TEST_CASE("plain-sgd drift stays within the eta C + eta noise guardrail") {
  Rng rng(12);
  const ArchConfig arch = tiny_arch(15);
  ModelParams params = init_model(arch, rng);
  auto batch = random_records(rng, 15, 1, 7);

  DpConfig cfg;
  cfg.mode = DpMode::DpSgd;
  cfg.batch_size = 1;
  cfg.clip_norm = 1.0;
  cfg.sigma0 = 2.0;
  cfg.learning_rate = 0.1;

  ScheduleState st{cfg.sigma0, 0};
  OptimizerState opt{cfg.learning_rate, 0.0};
  Rng noise(777);
  Rng noise_replay = noise;  // same stream, replayed to recover the draw

  const std::vector<double> before = params.theta;
  noisy_step(params, batch, st, cfg, opt, nullptr, 1.0, noise);

  std::vector<double> xi(param_count(arch));
  for (auto& x : xi) x = cfg.sigma0 * cfg.clip_norm * noise_replay.gauss();

  std::vector<double> delta(before.size());
  for (size_t i = 0; i < before.size(); ++i)
    delta[i] = params.theta[i] - before[i];
  const double bound =
      cfg.learning_rate * cfg.clip_norm + cfg.learning_rate * l2(xi);
  CHECK(l2(delta) <= bound + 1e-9);
}

TEST_CASE("atdp with ones weights and pinned sigma matches dp-sgd exactly") {
  Rng data_rng(31);
  const ArchConfig arch = tiny_arch(18);
  auto records = random_records(data_rng, 18, 30, 7);

  DpConfig dpsgd;
  dpsgd.mode = DpMode::DpSgd;
  dpsgd.batch_size = 10;
  dpsgd.sigma0 = 1.5;
  dpsgd.learning_rate = 0.05;

  DpConfig atdp = dpsgd;
  atdp.mode = DpMode::Atdp;
  atdp.jitter_lo = 1.0;
  atdp.jitter_hi = 1.0;
  atdp.sigma_max = atdp.sigma0;  // forces a reset to sigma0 every epoch
  atdp.w_non = 1.0;              // all-ones weights

  const uint64_t seed = 99;
  RngStreams s1 = RngStreams::from_seed(seed);
  ModelParams p1 = init_model(arch, s1.init);
  PrivacyLedger l1;
  run_training(p1, records, dpsgd, 3, &l1, s1, "dpsgd");

  RngStreams s2 = RngStreams::from_seed(seed);
  ModelParams p2 = init_model(arch, s2.init);
  PrivacyLedger l2_;
  run_training(p2, records, atdp, 3, &l2_, s2, "atdp");

  CHECK(p1.theta == p2.theta);  // bit-identical trajectories
  REQUIRE(l1.size() == l2_.size());
  for (size_t i = 0; i < l1.size(); ++i) {
    CHECK(l1.entries()[i].sigma == l2_.entries()[i].sigma);
  }
}

TEST_CASE("run_training honors epochs zero") {
  Rng rng(3);
  const ArchConfig arch = tiny_arch(15);
  RngStreams streams = RngStreams::from_seed(4);
  ModelParams params = init_model(arch, streams.init);
  const std::vector<double> before = params.theta;
  auto records = random_records(rng, 15, 8, 6);

  DpConfig cfg;
  cfg.mode = DpMode::Atdp;
  cfg.batch_size = 4;
  cfg.epochs = 0;
  PrivacyLedger ledger;
  const TrainStats stats = run_atdp_epochs(params, records, cfg, ledger,
                                           streams);
  CHECK(stats.optimizer_steps == 0);
  CHECK(ledger.empty());
  CHECK(params.theta == before);
}

TEST_CASE("run_atdp_epochs rejects other modes") {
  Rng rng(3);
  const ArchConfig arch = tiny_arch(15);
  RngStreams streams = RngStreams::from_seed(4);
  ModelParams params = init_model(arch, streams.init);
  auto records = random_records(rng, 15, 8, 6);
  DpConfig cfg;
  cfg.mode = DpMode::DpSgd;
  PrivacyLedger ledger;
  CHECK_THROWS_AS(
      run_atdp_epochs(params, records, cfg, ledger, streams), Error);
}

TEST_CASE("pre-clip norm domination with w_non below one") {
  Rng rng(41);
  const ArchConfig arch = tiny_arch(20);
  const ModelParams params = init_model(arch, rng);
  auto records = random_records(rng, 20, 6, 7);

  for (auto& rec : records) {
    TokenizedRecord down = rec;
    for (size_t i = 0; i < rec.token_ids.size(); ++i)
      down.weights[i] = rec.sensitive_mask[i] ? 1.0 : 0.25;
    const double full = l2(weighted_record_gradient(params, rec).grad);
    const double damped = l2(weighted_record_gradient(params, down).grad);
    CHECK(damped <= full + 1e-9);
  }
}

TEST_CASE("every logged step respects the clipped sensitivity bound") {
  // indirect check: per-record clipped gradients never exceed C
  Rng rng(51);
  const ArchConfig arch = tiny_arch(20);
  const ModelParams params = init_model(arch, rng);
  auto records = random_records(rng, 20, 10, 7);
  const double c = 0.05;  // small enough that every record clips
  for (const auto& rec : records) {
    auto g = weighted_record_gradient(params, rec).grad;
    clip_in_place(g, c);
    CHECK(l2(g) <= c + 1e-12);
  }
}

TEST_CASE("dp config validation rejects bad ranges") {
  DpConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  DpConfig bad = cfg;
  bad.gamma = 1.0;
  CHECK_THROWS_AS(bad.validate(), Error);
  bad = cfg;
  bad.sigma_max = bad.sigma0 / 2;
  CHECK_THROWS_AS(bad.validate(), Error);
  bad = cfg;
  bad.w_non = 0.0;
  CHECK_THROWS_AS(bad.validate(), Error);
  bad = cfg;
  bad.jitter_lo = 1.2;
  CHECK_THROWS_AS(bad.validate(), Error);
}

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <numeric>

#include "atdp/lm.hpp"
#include "atdp/rng.hpp"
#include "test_util.hpp"

using namespace atdp;
using namespace atdp::testutil;

namespace {

ArchConfig tiny_arch(int32_t vocab) {
  ArchConfig a;
  a.vocab_size = vocab;
  a.embed_dim = 16;
  a.hidden_dim = 24;
  a.num_layers = 2;
  a.context_len = 16;
  return a;
}

TokenizedRecord random_record(Rng& rng, int32_t vocab, size_t len,
                              bool random_weights) {
  TokenizedRecord rec;
  for (size_t i = 0; i < len; ++i) {
    rec.token_ids.push_back(
        static_cast<int32_t>(rng.uniform_index(static_cast<uint64_t>(vocab))));
  }
  rec.sensitive_mask.assign(len, 0);
  rec.weights.assign(len, 1.0);
  if (random_weights) {
    for (auto& w : rec.weights) w = 0.05 + 0.95 * rng.uniform();
  }
  return rec;
}

double weighted_total_loss(const ModelParams& params,
                           const TokenizedRecord& rec) {
  const auto losses = forward_loss(params, rec);
  double total = 0.0;
  for (size_t t = 0; t < losses.size(); ++t)
    total += rec.weights[t + 1] * losses[t];
  return total;
}

}  // namespace

TEST_CASE("zero model yields uniform losses") {
  const ArchConfig arch = tiny_arch(50);
  const ModelParams params = zero_model(arch);
  TokenizedRecord rec;
  rec.token_ids = {1, 7, 23, 42, 3};
  rec.sensitive_mask.assign(5, 0);
  rec.weights.assign(5, 1.0);
  const auto losses = forward_loss(params, rec);
  REQUIRE(losses.size() == 4);
  for (double l : losses) CHECK(l == doctest::Approx(std::log(50.0)).epsilon(1e-12));
}

TEST_CASE("single-token record has no targets") {
  const ModelParams params = zero_model(tiny_arch(10));
  TokenizedRecord rec;
  rec.token_ids = {3};
  rec.weights = {1.0};
  rec.sensitive_mask = {0};
  CHECK(forward_loss(params, rec).empty());
  const auto grad = weighted_record_gradient(params, rec);
  for (double g : grad.grad) CHECK(g == 0.0);
}

TEST_CASE("perplexity is exp of mean loss") {
  Rng rng(11);
  const ArchConfig arch = tiny_arch(40);
  const ModelParams params = init_model(arch, rng);
  const TokenizedRecord rec = random_record(rng, 40, 9, false);

  const auto losses = forward_loss(params, rec);
  const double mean =
      std::accumulate(losses.begin(), losses.end(), 0.0) /
      static_cast<double>(losses.size());
  std::vector<TokenizedRecord> one = {rec};
  CHECK(perplexity(params, one) == doctest::Approx(std::exp(mean)).epsilon(1e-12));

  // repeating the record does not change perplexity
  std::vector<TokenizedRecord> many = {rec, rec, rec};
  CHECK(perplexity(params, many) ==
        doctest::Approx(perplexity(params, one)).epsilon(1e-12));
}

TEST_CASE("uniform model perplexity equals vocab size") {
  const ArchConfig arch = tiny_arch(64);
  const ModelParams params = zero_model(arch);
  Rng rng(5);
  std::vector<TokenizedRecord> records;
  for (int i = 0; i < 4; ++i)
    records.push_back(random_record(rng, 64, 6, false));
  CHECK(perplexity(params, records) == doctest::Approx(64.0).epsilon(1e-9));
}

TEST_CASE("out-of-range token ids are rejected") {
  const ModelParams params = zero_model(tiny_arch(10));
  TokenizedRecord rec;
  rec.token_ids = {2, 10};
  rec.weights.assign(2, 1.0);
  rec.sensitive_mask.assign(2, 0);
  try {
    forward_loss(params, rec);
    FAIL("expected VocabError");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::VocabError);
  }
}

TEST_CASE("records longer than the context window are rejected") {
  const ModelParams params = zero_model(tiny_arch(10));
  TokenizedRecord rec;
  rec.token_ids.assign(18, 1);  // context_len 16 allows at most 17
  rec.weights.assign(18, 1.0);
  rec.sensitive_mask.assign(18, 0);
  CHECK_THROWS_AS(forward_loss(params, rec), Error);
}

TEST_CASE("analytic gradient matches central finite differences") {
  Rng rng(1234);
  const ArchConfig arch = tiny_arch(30);
  const ModelParams params = init_model(arch, rng);

  const size_t n_params = param_count(arch);
  for (int r = 0; r < 5; ++r) {
    const TokenizedRecord rec = random_record(rng, 30, 8, true);
    const RecordGradient rg = weighted_record_gradient(params, rec);

    int checked = 0;
    while (checked < 20) {
      const size_t idx = rng.uniform_index(n_params);
      ModelParams bumped = params;
      const double step = 1e-4;
      bumped.theta[idx] = params.theta[idx] + step;
      const double up = weighted_total_loss(bumped, rec);
      bumped.theta[idx] = params.theta[idx] - step;
      const double down = weighted_total_loss(bumped, rec);
      const double fd = (up - down) / (2.0 * step);
      const double an = rg.grad[idx];
      if (std::abs(fd) < 1e-7 && std::abs(an) < 1e-7) continue;  // flat coord
      const double rel =
          std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-8});
      CHECK(rel < 1e-3);
      ++checked;
    }
  }
}

TEST_CASE("weighted gradient is linear in the weights") {
  Rng rng(77);
  const ArchConfig arch = tiny_arch(25);
  const ModelParams params = init_model(arch, rng);
  const TokenizedRecord base = random_record(rng, 25, 7, false);

  TokenizedRecord u = base, v = base, sum = base;
  for (size_t i = 0; i < base.weights.size(); ++i) {
    u.weights[i] = rng.uniform();
    v.weights[i] = rng.uniform();
    sum.weights[i] = u.weights[i] + v.weights[i];
  }
  const auto gu = weighted_record_gradient(params, u).grad;
  const auto gv = weighted_record_gradient(params, v).grad;
  const auto gs = weighted_record_gradient(params, sum).grad;
  for (size_t i = 0; i < gs.size(); ++i) {
    CHECK(gs[i] == doctest::Approx(gu[i] + gv[i]).epsilon(1e-9));
  }
}

TEST_CASE("all-ones weights equal the plain summed-loss gradient and scale") {
  Rng rng(99);
  const ArchConfig arch = tiny_arch(25);
  const ModelParams params = init_model(arch, rng);
  const TokenizedRecord ones = random_record(rng, 25, 6, false);

  TokenizedRecord halves = ones;
  halves.weights.assign(halves.weights.size(), 0.5);
  TokenizedRecord zeros = ones;
  zeros.weights.assign(zeros.weights.size(), 0.0);

  const auto g1 = weighted_record_gradient(params, ones).grad;
  const auto gh = weighted_record_gradient(params, halves).grad;
  const auto g0 = weighted_record_gradient(params, zeros).grad;
  for (size_t i = 0; i < g1.size(); ++i) {
    CHECK(gh[i] == doctest::Approx(0.5 * g1[i]).epsilon(1e-12));
    CHECK(g0[i] == 0.0);
  }
}

TEST_CASE("missing weights are an alignment error") {
  const ModelParams params = zero_model(tiny_arch(10));
  TokenizedRecord rec;
  rec.token_ids = {1, 2, 3};
  rec.sensitive_mask.assign(3, 0);
  rec.weights = {1.0};  // wrong length
  try {
    weighted_record_gradient(params, rec);
    FAIL("expected AlignmentError");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::AlignmentError);
  }
}

TEST_CASE("loss is equivariant under vocabulary relabeling") {
  Rng rng(2024);
  const ArchConfig arch = tiny_arch(12);
  const ModelParams params = init_model(arch, rng);
  const TokenizedRecord rec = random_record(rng, 12, 8, false);

  // permutation pi over vocab ids
  std::vector<int32_t> pi(12);
  std::iota(pi.begin(), pi.end(), 0);
  Rng shuffle_rng(55);
  shuffle_rng.shuffle(pi);

  ModelParams permuted = params;
  const size_t d = static_cast<size_t>(arch.embed_dim);
  const size_t emb = token_embedding_offset(arch);
  const size_t head = lm_head_offset(arch);
  for (int32_t old_id = 0; old_id < 12; ++old_id) {
    const size_t new_id = static_cast<size_t>(pi[static_cast<size_t>(old_id)]);
    for (size_t i = 0; i < d; ++i) {
      permuted.theta[emb + new_id * d + i] =
          params.theta[emb + static_cast<size_t>(old_id) * d + i];
      permuted.theta[head + new_id * d + i] =
          params.theta[head + static_cast<size_t>(old_id) * d + i];
    }
  }
  TokenizedRecord relabeled = rec;
  for (auto& id : relabeled.token_ids) id = pi[static_cast<size_t>(id)];

  const auto base = forward_loss(params, rec);
  const auto perm = forward_loss(permuted, relabeled);
  REQUIRE(base.size() == perm.size());
  for (size_t t = 0; t < base.size(); ++t) {
    CHECK(perm[t] == doctest::Approx(base[t]).epsilon(1e-10));
  }
}

TEST_CASE("checkpoint round trip preserves arch and f32 theta") {
  Rng rng(31);
  const ArchConfig arch = tiny_arch(20);
  const ModelParams params = init_model(arch, rng);
  const auto file = temp_dir("lm") / "model.atdp";
  save_checkpoint(params, file, "{\"note\":\"test\"}");
  const ModelParams loaded = load_checkpoint(file);
  CHECK(loaded.arch == arch);
  REQUIRE(loaded.theta.size() == params.theta.size());
  for (size_t i = 0; i < params.theta.size(); ++i) {
    CHECK(loaded.theta[i] == static_cast<double>(
                                 static_cast<float>(params.theta[i])));
  }
  // reloading a reloaded checkpoint is exact
  save_checkpoint(loaded, file);
  const ModelParams again = load_checkpoint(file);
  CHECK(again.theta == loaded.theta);
}

#include "atdp/privacy_eval.hpp"

#include <atomic>
#include <cmath>
#include <thread>

#include "json.hpp"

#include "atdp/dp_engine.hpp"

namespace atdp {

namespace {

std::string format_candidate(long value, int digits) {
  std::string s(static_cast<size_t>(digits), '0');
  for (int i = digits - 1; i >= 0; --i) {
    s[static_cast<size_t>(i)] = static_cast<char>('0' + value % 10);
    value /= 10;
  }
  return s;
}

void require_digit_vocab(const Vocab& vocab) {
  for (char d = '0'; d <= '9'; ++d) {
    if (vocab.token_to_id.find(std::string(1, d)) == vocab.token_to_id.end())
      fail(ErrorKind::ConfigError,
           "vocabulary lacks digit token '" + std::string(1, d) +
               "'; canary candidates are not scoreable");
  }
}

double total_nll(const ModelParams& params, const TokenizedRecord& record,
                 LmWorkspace* ws) {
  double total = 0.0;
  for (double l : forward_loss(params, record, ws)) total += l;
  return total;
}

std::vector<double> score_candidates(const ModelParams& params,
                                     const CanarySpec& spec,
                                     const Vocab& vocab,
                                     std::span<const long> candidates,
                                     int threads) {
  if (threads <= 0) threads = default_threads();
  std::vector<double> scores(candidates.size(), 0.0);
  const size_t workers =
      std::min<size_t>(static_cast<size_t>(threads), candidates.size());
  std::vector<std::thread> pool;
  for (size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      WorkspaceHandle ws;
      for (size_t i = w; i < candidates.size(); i += workers) {
        const std::string digits =
            format_candidate(candidates[i], spec.digit_count());
        const TokenizedRecord rec =
            make_record(tokenize(spec.render(digits), vocab));
        scores[i] = total_nll(params, rec, ws.get());
      }
    });
  }
  for (auto& t : pool) t.join();
  return scores;
}

}  // namespace

long rank_among(std::span<const double> scores, size_t true_index) {
  if (true_index >= scores.size())
    fail(ErrorKind::ConfigError, "true candidate index out of range");
  const double s_true = scores[true_index];
  long below = 0;
  long equal = 0;
  for (double s : scores) {
    if (s < s_true) ++below;
    else if (s == s_true) ++equal;
  }
  return below + equal;  // true candidate counted last among ties
}

ExposureReport exposure(const ModelParams& params, const CanarySpec& spec,
                        const Vocab& vocab, int threads) {
  spec.validate();
  if (spec.digit_count() > 4)
    fail(ErrorKind::ConfigError,
         "exact exposure supports at most 4 digits; use sampling mode");
  require_digit_vocab(vocab);

  const long n = spec.candidate_space();
  std::vector<long> candidates(static_cast<size_t>(n));
  for (long i = 0; i < n; ++i) candidates[static_cast<size_t>(i)] = i;
  const std::vector<double> scores =
      score_candidates(params, spec, vocab, candidates, threads);

  const long true_value = std::stol(spec.secret_digits);
  const long rank = rank_among(scores, static_cast<size_t>(true_value));

  ExposureReport report;
  report.canary_rank = rank;
  report.candidate_space = n;
  report.threshold = std::log2(static_cast<double>(n));
  report.exposure = report.threshold - std::log2(static_cast<double>(rank));
  report.extractable = report.exposure >= report.threshold - 1.0;
  return report;
}

ExposureReport exposure_sampled(const ModelParams& params,
                                const CanarySpec& spec, const Vocab& vocab,
                                long m, Rng& rng, int threads) {
  spec.validate();
  if (m < 1) fail(ErrorKind::ConfigError, "sample size must be positive");
  require_digit_vocab(vocab);

  const long n = spec.candidate_space();
  const long true_value = std::stol(spec.secret_digits);

  std::vector<long> candidates;
  candidates.reserve(static_cast<size_t>(m) + 1);
  candidates.push_back(true_value);
  while (candidates.size() < static_cast<size_t>(m) + 1) {
    const long c = static_cast<long>(
        rng.uniform_index(static_cast<uint64_t>(n)));
    if (c != true_value) candidates.push_back(c);
  }
  const std::vector<double> scores =
      score_candidates(params, spec, vocab, candidates, threads);

  const double s_true = scores[0];
  long at_or_below = 0;
  for (size_t i = 1; i < scores.size(); ++i) {
    if (scores[i] <= s_true) ++at_or_below;
  }
  const double fraction =
      static_cast<double>(at_or_below) / static_cast<double>(m);
  const double rank_est = 1.0 + static_cast<double>(n - 1) * fraction;

  ExposureReport report;
  report.canary_rank = static_cast<long>(std::llround(rank_est));
  report.candidate_space = n;
  report.sample_size = m;
  report.threshold = std::log2(static_cast<double>(n));
  report.exposure = report.threshold - std::log2(rank_est);
  report.extractable = report.exposure >= report.threshold - 1.0;
  return report;
}

ClassPerplexity per_class_perplexity(const ModelParams& params,
                                     std::span<const TokenizedRecord> records,
                                     const std::string& checkpoint_label) {
  WorkspaceHandle ws;
  double nll_sens = 0.0, nll_non = 0.0;
  long count_sens = 0, count_non = 0;
  for (const auto& rec : records) {
    if (rec.sensitive_mask.size() != rec.token_ids.size())
      fail(ErrorKind::AlignmentError, "mask not aligned with record");
    const auto losses = forward_loss(params, rec, ws.get());
    for (size_t t = 0; t < losses.size(); ++t) {
      if (rec.sensitive_mask[t + 1]) {
        nll_sens += losses[t];
        ++count_sens;
      } else {
        nll_non += losses[t];
        ++count_non;
      }
    }
  }
  ClassPerplexity out;
  out.checkpoint = checkpoint_label;
  if (count_sens > 0)
    out.ppl_sensitive = std::exp(nll_sens / static_cast<double>(count_sens));
  if (count_non > 0)
    out.ppl_non_sensitive = std::exp(nll_non / static_cast<double>(count_non));
  return out;
}

std::string ExposureReport::to_json() const {
  nlohmann::json j{{"canary_rank", canary_rank},
                   {"candidate_space", candidate_space},
                   {"exposure", exposure},
                   {"threshold", threshold},
                   {"extractable", extractable}};
  if (sample_size > 0) j["sample_size"] = sample_size;
  return j.dump(2);
}

}  // namespace atdp

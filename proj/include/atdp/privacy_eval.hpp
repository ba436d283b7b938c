#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "atdp/corpus.hpp"
#include "atdp/lm.hpp"
#include "atdp/rng.hpp"

namespace atdp {

struct ExposureReport {
  long canary_rank = 0;
  long candidate_space = 0;
  double exposure = 0.0;   // log2 N - log2 rank
  double threshold = 0.0;  // log2 N
  bool extractable = false;
  long sample_size = 0;    // 0 = exact ranking

  std::string to_json() const;
};

// Conservative rank: the true candidate is placed last among equal scores.
long rank_among(std::span<const double> scores, size_t true_index);

// Exact ranking over all 10^D candidates; D <= 4 (use sampling beyond).
ExposureReport exposure(const ModelParams& params, const CanarySpec& spec,
                        const Vocab& vocab, int threads = 0);

// Rank estimated from m uniformly drawn distractors:
// rank ~= 1 + (N - 1) * fraction scoring at or below the true canary.
ExposureReport exposure_sampled(const ModelParams& params,
                                const CanarySpec& spec, const Vocab& vocab,
                                long m, Rng& rng, int threads = 0);

struct ClassPerplexity {
  std::string checkpoint;
  std::optional<double> ppl_sensitive;
  std::optional<double> ppl_non_sensitive;
};

// Perplexity split by whether the prediction target is flagged sensitive.
ClassPerplexity per_class_perplexity(const ModelParams& params,
                                     std::span<const TokenizedRecord> records,
                                     const std::string& checkpoint_label = "");

}  // namespace atdp

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "atdp/detector.hpp"

namespace atdp {

struct GenerateSpec {
  long target_bytes = 200'000;
  uint64_t seed = 1;
};

// Deterministic PII-flavored synthetic corpus: names, organizations,
// locations, dates, spaced digit ids, money and percent figures, plus
// generic filler. One document per line. Digits appear as standalone
// tokens so digit-slot canaries are scoreable against the vocabulary.
std::vector<std::string> generate_corpus_lines(const GenerateSpec& spec,
                                               const Gazetteer& gazetteer);

std::string title_case(const std::string& lower);

}  // namespace atdp

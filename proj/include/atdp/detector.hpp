#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <unordered_set>
#include <vector>

#include "atdp/corpus.hpp"

namespace atdp {

enum class DetectorTier : int {
  LowEntity = 0,
  HighEntity = 1,
  LowContextual = 2,
  HighContextual = 3,
};

DetectorTier tier_from_string(const std::string& name);
const char* to_string(DetectorTier tier);

struct Gazetteer {
  // Entries are stored as lowercased word-token sequences and matched
  // greedily, longest entry first.
  std::vector<std::vector<std::string>> persons;
  std::vector<std::vector<std::string>> organizations;
  std::vector<std::vector<std::string>> locations;
  std::unordered_set<std::string> verbs;

  // Raw surface lines as read from the files, for corpus generation.
  std::vector<std::string> person_lines;
  std::vector<std::string> org_lines;
  std::vector<std::string> location_lines;
  std::vector<std::string> verb_lines;

  static Gazetteer load(const std::filesystem::path& dir);
};

inline constexpr int8_t kNoLabel = -1;

struct SensitivityMask {
  std::vector<uint8_t> flags;
  std::vector<int8_t> labels;  // Special enum value, or kNoLabel

  explicit SensitivityMask(size_t n = 0)
      : flags(n, 0), labels(n, kNoLabel) {}

  size_t size() const { return flags.size(); }
  bool flagged(size_t i) const { return flags[i] != 0; }
  Special label(size_t i) const { return static_cast<Special>(labels[i]); }

  void set(size_t i, Special placeholder) {
    flags[i] = 1;
    labels[i] = static_cast<int8_t>(placeholder);
  }
  void clear(size_t i) {
    flags[i] = 0;
    labels[i] = kNoLabel;
  }
};

SensitivityMask detect(const WordSeq& sentence, DetectorTier tier,
                       const Gazetteer& gazetteer);

// Flagged tokens become placeholder ids; contiguous tokens sharing one
// label collapse to a single placeholder.
std::vector<int32_t> redact(const std::vector<int32_t>& token_ids,
                            const SensitivityMask& mask, const Vocab& vocab);

struct Span {
  size_t begin = 0;
  size_t end = 0;  // exclusive
};

struct OverrideSpans {
  std::vector<Span> whitelist;
  std::vector<std::pair<Span, Special>> blacklist;
};

SensitivityMask apply_overrides(const SensitivityMask& mask,
                                const OverrideSpans& overrides);

// One entry of the JSON override file: {"text":..., "action":..., "label":?}.
struct OverrideRule {
  std::string text;
  bool deny = false;               // "deny" flags, "allow" unflags
  std::optional<Special> label;    // deny label, default <OBJ>
};

std::vector<OverrideRule> load_override_rules(
    const std::filesystem::path& file);

// Locates every occurrence of each rule's tokenized text in the sentence.
OverrideSpans resolve_overrides(const WordSeq& sentence,
                                const std::vector<OverrideRule>& rules);

double flagged_fraction(const std::vector<SensitivityMask>& masks);

}  // namespace atdp

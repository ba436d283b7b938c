#include "atdp/detector.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>

#include "json.hpp"

namespace atdp {

namespace {

const std::unordered_set<std::string>& aux_verbs() {
  static const std::unordered_set<std::string> set = {
      "am", "is",  "are",  "was",   "were",  "be",   "been",   "being",
      "have", "has", "had", "do",   "does",  "did",  "will",   "would",
      "can", "could", "shall", "should", "may", "might", "must"};
  return set;
}

const std::unordered_set<std::string>& pronouns() {
  static const std::unordered_set<std::string> set = {
      "i",    "you",  "he",   "she",  "it",   "we",     "they",    "me",
      "him",  "her",  "us",   "them", "his",  "hers",   "theirs",  "mine",
      "yours", "ours", "myself", "yourself", "himself", "herself", "itself",
      "ourselves", "themselves"};
  return set;
}

const std::unordered_set<std::string>& determiners() {
  static const std::unordered_set<std::string> set = {
      "a",   "an",  "the",  "this", "these", "those", "my",  "your",
      "our", "their", "its", "some", "any",  "each",  "every", "another"};
  return set;
}

const std::unordered_set<std::string>& stopwords() {
  static const std::unordered_set<std::string> set = {
      // prepositions and connectives; determiners are separate
      "of", "in", "on", "at", "for", "by", "with", "from", "to", "into",
      "over", "under", "near", "about", "after", "before", "between",
      "during", "through", "against", "among", "around", "off", "out",
      "up", "down", "and", "or", "but", "nor", "so", "yet", "that",
      "which", "who", "whom", "whose", "as", "than", "then", "if",
      "because", "while", "when", "where", "not", "also", "too", "very",
      "there", "here"};
  return set;
}

const std::unordered_set<std::string>& months() {
  static const std::unordered_set<std::string> set = {
      "january", "february", "march",     "april",   "may",      "june",
      "july",    "august",   "september", "october", "november", "december"};
  return set;
}

// Nouns that would otherwise trip the -ing/-ed suffix heuristics.
const std::unordered_set<std::string>& suffix_exceptions() {
  static const std::unordered_set<std::string> set = {
      "thing",   "something", "nothing", "anything", "everything", "morning",
      "evening", "king",      "ring",    "spring",   "string",     "building",
      "wedding", "hundred",   "weekend"};
  return set;
}

bool is_digit_token(const std::string& w) {
  if (w.empty()) return false;
  for (char c : w) {
    if (c < '0' || c > '9') return false;
  }
  return true;
}

bool is_punct_token(const std::string& w) {
  return w.size() == 1 && std::ispunct(static_cast<unsigned char>(w[0]));
}

bool has_verb_suffix(const std::string& w) {
  if (suffix_exceptions().count(w)) return false;
  auto ends_with = [&](std::string_view s) {
    return w.size() >= s.size() + 2 &&
           w.compare(w.size() - s.size(), s.size(), s) == 0;
  };
  return ends_with("ed") || ends_with("ing") || ends_with("ize") ||
         ends_with("izes") || ends_with("ized");
}

struct SentenceView {
  const WordSeq& seq;
  const Gazetteer& gaz;

  size_t size() const { return seq.words.size(); }
  const std::string& word(size_t i) const { return seq.words[i]; }

  // An auxiliary reads as a content verb only when a determiner follows
  // ("had a procedure"); otherwise it is treated as pure auxiliary.
  bool content_verb(size_t i) const {
    const std::string& w = word(i);
    if (aux_verbs().count(w)) {
      return i + 1 < size() && determiners().count(word(i + 1)) > 0;
    }
    return gaz.verbs.count(w) > 0 || has_verb_suffix(w);
  }

  bool verb_like(size_t i) const {
    return aux_verbs().count(word(i)) > 0 || content_verb(i);
  }

  bool noun_like(size_t i, const SensitivityMask& mask) const {
    const std::string& w = word(i);
    return !mask.flagged(i) && !is_punct_token(w) && !is_digit_token(w) &&
           !stopwords().count(w) && !determiners().count(w) &&
           !pronouns().count(w) && !aux_verbs().count(w) && !content_verb(i);
  }

  bool sentence_start(size_t i) const {
    if (i == 0) return true;
    const std::string& prev = word(i - 1);
    return prev == "." || prev == "!" || prev == "?";
  }
};

// --------------------------- tier passes ---------------------------

// Low entity: canonical pattern PII only (dates and long id-like digit
// runs). Gazetteer entities come in at the high-entity tier.
void pass_low_entity(const SentenceView& s, SensitivityMask& mask) {
  const size_t n = s.size();
  for (size_t i = 0; i < n; ++i) {
    if (mask.flagged(i)) continue;
    if (months().count(s.word(i))) {
      mask.set(i, Special::Date);
      std::vector<size_t> tail;
      size_t j = i + 1;
      while (j < n &&
             (is_digit_token(s.word(j)) || s.word(j) == ",") &&
             !mask.flagged(j)) {
        tail.push_back(j);
        ++j;
      }
      while (!tail.empty() && s.word(tail.back()) == ",") tail.pop_back();
      for (size_t t : tail) mask.set(t, Special::Date);
    }
  }
  // numeric dates: d "/" d ["/" d], d "-" d "-" d
  for (size_t i = 0; i + 2 < n; ++i) {
    if (mask.flagged(i) || !is_digit_token(s.word(i))) continue;
    const std::string& sep = s.word(i + 1);
    if ((sep == "/" || sep == "-") && is_digit_token(s.word(i + 2))) {
      size_t end = i + 3;
      if (end + 1 < n && s.word(end) == sep && is_digit_token(s.word(end + 1)))
        end += 2;
      for (size_t k = i; k < end; ++k) mask.set(k, Special::Date);
    }
  }
  for (size_t i = 0; i < n; ++i) {
    if (!mask.flagged(i) && is_digit_token(s.word(i)) &&
        s.word(i).size() >= 5) {
      mask.set(i, Special::Num);
    }
  }
}

struct GazEntry {
  const std::vector<std::string>* tokens;
  Special label;
};

void pass_high_entity(const SentenceView& s, SensitivityMask& mask) {
  const size_t n = s.size();

  std::vector<GazEntry> entries;
  for (const auto& e : s.gaz.persons) entries.push_back({&e, Special::Person});
  for (const auto& e : s.gaz.organizations)
    entries.push_back({&e, Special::Org});
  for (const auto& e : s.gaz.locations) entries.push_back({&e, Special::Loc});
  std::stable_sort(entries.begin(), entries.end(),
                   [](const GazEntry& a, const GazEntry& b) {
                     return a.tokens->size() > b.tokens->size();
                   });

  for (size_t i = 0; i < n; ++i) {
    if (mask.flagged(i)) continue;
    for (const auto& entry : entries) {
      const auto& toks = *entry.tokens;
      if (toks.empty() || i + toks.size() > n) continue;
      bool match = true;
      for (size_t k = 0; k < toks.size(); ++k) {
        if (mask.flagged(i + k) || s.word(i + k) != toks[k]) {
          match = false;
          break;
        }
      }
      if (match) {
        for (size_t k = 0; k < toks.size(); ++k)
          mask.set(i + k, entry.label);
        i += toks.size() - 1;
        break;
      }
    }
  }

  // numbers, money, percents
  for (size_t i = 0; i < n; ++i) {
    if (mask.flagged(i) || !is_digit_token(s.word(i))) continue;
    mask.set(i, Special::Num);
    if (i > 0 && !mask.flagged(i - 1) && s.word(i - 1) == "$")
      mask.set(i - 1, Special::Num);
    if (i + 1 < n && !mask.flagged(i + 1)) {
      const std::string& next = s.word(i + 1);
      if (next == "%" || next == "percent" || next == "dollars" ||
          next == "euros" || next == "pounds" || next == "cents") {
        mask.set(i + 1, Special::Num);
      }
    }
  }
}

void pass_low_contextual(const SentenceView& s, SensitivityMask& mask) {
  const size_t n = s.size();

  // Pronouns count only when governed by a content verb; this keeps the
  // expletive in constructions like "is it true that ..." untouched.
  for (size_t i = 0; i < n; ++i) {
    if (mask.flagged(i) || !pronouns().count(s.word(i))) continue;
    bool governed = false;
    size_t j = i + 1;
    while (j < n && aux_verbs().count(s.word(j)) && !s.content_verb(j)) ++j;
    if (j < n && s.content_verb(j)) governed = true;
    if (!governed && i > 0 && s.content_verb(i - 1)) governed = true;
    if (!governed) continue;
    mask.set(i, Special::Pron);
    // Inverted question: fold a sentence-initial auxiliary into the
    // pronoun span ("have you" -> <PRON>).
    if (i >= 1 && s.sentence_start(i - 1) && aux_verbs().count(s.word(i - 1)) &&
        !mask.flagged(i - 1)) {
      mask.set(i - 1, Special::Pron);
    }
  }

  // Proper nouns: capitalized in the source outside sentence starts.
  for (size_t i = 0; i < n; ++i) {
    if (mask.flagged(i) || !s.seq.caps[i] || s.sentence_start(i)) continue;
    if (pronouns().count(s.word(i)) || is_punct_token(s.word(i))) continue;
    mask.set(i, Special::Person);
  }

  // Subject: first noun-like token before the first verb-like token.
  size_t first_verb_like = n;
  for (size_t i = 0; i < n; ++i) {
    if (s.verb_like(i)) {
      first_verb_like = i;
      break;
    }
  }
  for (size_t i = 0; i < first_verb_like && i < n; ++i) {
    if (s.noun_like(i, mask)) {
      mask.set(i, Special::Subj);
      break;
    }
  }

  // Object: noun run after the first content verb, determiners skipped.
  size_t main_verb = n;
  for (size_t i = 0; i < n; ++i) {
    if (s.content_verb(i) && !mask.flagged(i)) {
      main_verb = i;
      break;
    }
  }
  if (main_verb < n) {
    size_t j = main_verb + 1;
    while (j < n && determiners().count(s.word(j))) ++j;
    while (j < n && s.noun_like(j, mask)) {
      mask.set(j, Special::Obj);
      ++j;
    }
  }
}

void pass_high_contextual(const SentenceView& s, SensitivityMask& mask) {
  for (size_t i = 0; i < s.size(); ++i) {
    if (!mask.flagged(i) && s.content_verb(i)) mask.set(i, Special::Verb);
  }
}

}  // namespace

DetectorTier tier_from_string(const std::string& name) {
  if (name == "low-entity") return DetectorTier::LowEntity;
  if (name == "high-entity") return DetectorTier::HighEntity;
  if (name == "low-contextual") return DetectorTier::LowContextual;
  if (name == "high-contextual") return DetectorTier::HighContextual;
  fail(ErrorKind::ConfigError, "unknown detector tier '" + name + "'");
}

const char* to_string(DetectorTier tier) {
  switch (tier) {
    case DetectorTier::LowEntity: return "low-entity";
    case DetectorTier::HighEntity: return "high-entity";
    case DetectorTier::LowContextual: return "low-contextual";
    case DetectorTier::HighContextual: return "high-contextual";
  }
  return "?";
}

Gazetteer Gazetteer::load(const std::filesystem::path& dir) {
  auto read_lines = [](const std::filesystem::path& file) {
    std::ifstream in(file);
    if (!in)
      fail(ErrorKind::IoError, "cannot open gazetteer file " + file.string());
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (!line.empty()) lines.push_back(line);
    }
    return lines;
  };

  Gazetteer gaz;
  gaz.person_lines = read_lines(dir / "persons.txt");
  gaz.org_lines = read_lines(dir / "orgs.txt");
  gaz.location_lines = read_lines(dir / "locations.txt");
  gaz.verb_lines = read_lines(dir / "verbs.txt");

  auto to_tokens = [](const std::vector<std::string>& lines) {
    std::vector<std::vector<std::string>> out;
    for (const auto& line : lines) {
      auto words = split_words(line).words;
      if (!words.empty()) out.push_back(std::move(words));
    }
    return out;
  };
  gaz.persons = to_tokens(gaz.person_lines);
  gaz.organizations = to_tokens(gaz.org_lines);
  gaz.locations = to_tokens(gaz.location_lines);
  for (const auto& line : gaz.verb_lines) {
    auto words = split_words(line).words;
    if (!words.empty()) gaz.verbs.insert(words.front());
  }
  return gaz;
}

SensitivityMask detect(const WordSeq& sentence, DetectorTier tier,
                       const Gazetteer& gazetteer) {
  SensitivityMask mask(sentence.words.size());
  if (sentence.words.empty()) return mask;
  if (sentence.words.size() != sentence.caps.size())
    fail(ErrorKind::AlignmentError, "caps not aligned with words");

  const SentenceView view{sentence, gazetteer};
  pass_low_entity(view, mask);
  if (tier >= DetectorTier::HighEntity) pass_high_entity(view, mask);
  if (tier >= DetectorTier::LowContextual) pass_low_contextual(view, mask);
  if (tier >= DetectorTier::HighContextual) pass_high_contextual(view, mask);
  return mask;
}

std::vector<int32_t> redact(const std::vector<int32_t>& token_ids,
                            const SensitivityMask& mask, const Vocab& vocab) {
  if (token_ids.size() != mask.size())
    fail(ErrorKind::AlignmentError, "mask not aligned with tokens");
  std::vector<int32_t> out;
  out.reserve(token_ids.size());
  for (size_t i = 0; i < token_ids.size(); ++i) {
    if (!mask.flagged(i)) {
      out.push_back(token_ids[i]);
      continue;
    }
    if (i > 0 && mask.flagged(i - 1) && mask.labels[i - 1] == mask.labels[i])
      continue;  // collapse contiguous same-label span
    out.push_back(vocab.special(mask.label(i)));
  }
  return out;
}

SensitivityMask apply_overrides(const SensitivityMask& mask,
                                const OverrideSpans& overrides) {
  auto check_span = [&](const Span& span) {
    if (span.begin > span.end || span.end > mask.size())
      fail(ErrorKind::AlignmentError, "override span out of bounds");
  };
  for (const auto& w : overrides.whitelist) check_span(w);
  for (const auto& [b, label] : overrides.blacklist) {
    check_span(b);
    for (const auto& w : overrides.whitelist) {
      if (b.begin < w.end && w.begin < b.end)
        fail(ErrorKind::ConflictError,
             "span appears in both whitelist and blacklist");
    }
  }

  SensitivityMask out = mask;
  for (const auto& w : overrides.whitelist) {
    for (size_t i = w.begin; i < w.end; ++i) out.clear(i);
  }
  for (const auto& [b, label] : overrides.blacklist) {
    for (size_t i = b.begin; i < b.end; ++i) out.set(i, label);
  }
  return out;
}

std::vector<OverrideRule> load_override_rules(
    const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) fail(ErrorKind::IoError, "cannot open overrides " + file.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::IoError, std::string("malformed overrides: ") + e.what());
  }
  if (!j.is_array()) fail(ErrorKind::ConfigError, "overrides must be a list");

  std::vector<OverrideRule> rules;
  for (const auto& item : j) {
    OverrideRule rule;
    rule.text = item.at("text").get<std::string>();
    const std::string action = item.at("action").get<std::string>();
    if (action == "deny") {
      rule.deny = true;
    } else if (action != "allow") {
      fail(ErrorKind::ConfigError, "override action must be allow or deny");
    }
    if (item.contains("label")) {
      const std::string label = item["label"].get<std::string>();
      bool found = false;
      for (int32_t i = 0; i < kNumSpecials; ++i) {
        if (label == kSpecialTokens[static_cast<size_t>(i)]) {
          rule.label = static_cast<Special>(i);
          found = true;
          break;
        }
      }
      if (!found) fail(ErrorKind::ConfigError, "unknown label " + label);
    }
    rules.push_back(std::move(rule));
  }
  return rules;
}

OverrideSpans resolve_overrides(const WordSeq& sentence,
                                const std::vector<OverrideRule>& rules) {
  OverrideSpans spans;
  for (const auto& rule : rules) {
    const auto needle = split_words(rule.text).words;
    if (needle.empty()) continue;
    const auto& words = sentence.words;
    for (size_t i = 0; i + needle.size() <= words.size(); ++i) {
      bool match = true;
      for (size_t k = 0; k < needle.size(); ++k) {
        if (words[i + k] != needle[k]) {
          match = false;
          break;
        }
      }
      if (!match) continue;
      const Span span{i, i + needle.size()};
      if (rule.deny) {
        spans.blacklist.emplace_back(span, rule.label.value_or(Special::Obj));
      } else {
        spans.whitelist.push_back(span);
      }
    }
  }
  return spans;
}

double flagged_fraction(const std::vector<SensitivityMask>& masks) {
  size_t flagged = 0;
  size_t total = 0;
  for (const auto& m : masks) {
    total += m.size();
    for (uint8_t f : m.flags) flagged += f;
  }
  return total == 0 ? 0.0 : static_cast<double>(flagged) /
                                static_cast<double>(total);
}

}  // namespace atdp

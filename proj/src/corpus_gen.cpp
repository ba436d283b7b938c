#include "atdp/corpus_gen.hpp"

#include <cctype>

#include "atdp/rng.hpp"

namespace atdp {

std::string title_case(const std::string& lower) {
  std::string out = lower;
  bool at_word_start = true;
  for (char& c : out) {
    if (at_word_start && std::isalpha(static_cast<unsigned char>(c))) {
      c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    }
    at_word_start = (c == ' ');
  }
  return out;
}

namespace {

const std::vector<std::string>& nouns() {
  static const std::vector<std::string> v = {
      "report", "meeting", "contract", "invoice", "patient", "record",
      "claim",  "budget",  "shipment", "ticket",  "letter",  "case",
      "office", "clinic",  "market",   "library"};
  return v;
}

const std::vector<std::string>& adjectives() {
  static const std::vector<std::string> v = {
      "quiet", "urgent", "large", "small", "final",
      "new",   "old",    "routine", "private", "annual"};
  return v;
}

// Past-tense verbs; most also live in verbs.txt or match the -ed suffix.
const std::vector<std::string>& past_verbs() {
  static const std::vector<std::string> v = {
      "signed", "reviewed", "approved", "visited", "finalized",
      "prepared", "mailed", "filed",    "closed",  "opened",
      "checked", "updated"};
  return v;
}

const std::vector<std::string>& months_list() {
  static const std::vector<std::string> v = {
      "january", "february", "march",     "april",   "may",      "june",
      "july",    "august",   "september", "october", "november", "december"};
  return v;
}

struct WordPools {
  std::vector<std::string> persons, orgs, locations;
};

std::string spaced_digits(Rng& rng, int count) {
  std::string out;
  for (int i = 0; i < count; ++i) {
    if (i) out += ' ';
    out += static_cast<char>('0' + rng.uniform_index(10));
  }
  return out;
}

std::string long_id(Rng& rng) {
  std::string out;
  const int len = 5 + static_cast<int>(rng.uniform_index(3));
  for (int i = 0; i < len; ++i)
    out += static_cast<char>('0' + rng.uniform_index(10));
  return out;
}

}  // namespace

std::vector<std::string> generate_corpus_lines(const GenerateSpec& spec,
                                               const Gazetteer& gazetteer) {
  if (spec.target_bytes <= 0)
    fail(ErrorKind::ConfigError, "target_bytes must be positive");
  WordPools pools;
  for (const auto& p : gazetteer.person_lines)
    pools.persons.push_back(title_case(p));
  for (const auto& o : gazetteer.org_lines) pools.orgs.push_back(title_case(o));
  for (const auto& l : gazetteer.location_lines)
    pools.locations.push_back(title_case(l));
  if (pools.persons.empty() || pools.orgs.empty() || pools.locations.empty())
    fail(ErrorKind::ConfigError, "gazetteer has an empty entity list");

  Rng rng(spec.seed);
  auto pick = [&rng](const std::vector<std::string>& v) -> const std::string& {
    return v[rng.uniform_index(v.size())];
  };

  std::vector<std::string> lines;
  long bytes = 0;
  while (bytes < spec.target_bytes) {
    std::string line;
    switch (rng.uniform_index(18)) {
      case 0:
        line = pick(pools.persons) + " " + pick(past_verbs()) + " the " +
               pick(adjectives()) + " " + pick(nouns()) + " at " +
               pick(pools.orgs) + " .";
        break;
      case 1:
        line = pick(pools.persons) + " lives in " + pick(pools.locations) +
               " near the " + pick(nouns()) + " .";
        break;
      case 2:
        line = "The " + pick(nouns()) + " for " + pick(pools.persons) +
               " was filed on " + pick(months_list()) + " " +
               spaced_digits(rng, 1 + static_cast<int>(rng.uniform_index(2))) +
               " .";
        break;
      case 3:
        line = pick(pools.persons) + " said the " + pick(nouns()) + " was " +
               pick(adjectives()) + " .";
        break;
      case 4:
        line = "The badge id for " + pick(pools.persons) + " is " +
               spaced_digits(rng, 4) + " .";
        break;
      case 5:
        line = pick(pools.orgs) + " approved the " + pick(adjectives()) + " " +
               pick(nouns()) + " in " + pick(pools.locations) + " .";
        break;
      case 6:
        line = pick(pools.persons) + " paid $ " + spaced_digits(rng, 2) +
               " for the " + pick(nouns()) + " .";
        break;
      case 7:
        line = "About " + spaced_digits(rng, 2) + " percent of the " +
               pick(nouns()) + " stayed in " + pick(pools.locations) + " .";
        break;
      case 8:
        line = "Case " + long_id(rng) + " opened for " + pick(pools.orgs) +
               " on " + pick(months_list()) + " " + spaced_digits(rng, 1) +
               " .";
        break;
      case 9:
        line = "The id on the " + pick(nouns()) + " read " +
               spaced_digits(rng, 4) + " .";
        break;
      case 10:
        line = "Is it true that " + pick(pools.persons) + " had a " +
               pick(adjectives()) + " " + pick(nouns()) + " at " +
               pick(pools.orgs) + " ?";
        break;
      case 11:
        line = "The route code is " + spaced_digits(rng, 4) + " .";
        break;
      case 12:
        // "passport" stays rare: in vocab, but with little data support
        line = "The clerk checked my " +
               std::string(rng.uniform_index(6) == 0 ? "passport" : "id") +
               " at the " + pick(nouns()) + " .";
        break;
      case 13:
        line = "My badge expired on " + pick(months_list()) + " " +
               spaced_digits(rng, 1) + " .";
        break;
      case 14:
        line = "The serial number on the " + pick(nouns()) + " was " +
               spaced_digits(rng, 6) + " .";
        break;
      case 15:
        line = "Invoice " + spaced_digits(rng, 4) + " for " +
               pick(pools.orgs) + " totaled $ " + spaced_digits(rng, 3) +
               " .";
        break;
      case 16:
        line = "The lot number for the " + pick(nouns()) + " is " +
               spaced_digits(rng, 5) + " .";
        break;
      default:
        line = "The " + pick(adjectives()) + " " + pick(nouns()) + " " +
               pick(past_verbs()) + " my " + pick(nouns()) + " before the " +
               pick(nouns()) + " .";
        break;
    }
    bytes += static_cast<long>(line.size()) + 1;
    lines.push_back(std::move(line));
  }
  return lines;
}

}  // namespace atdp

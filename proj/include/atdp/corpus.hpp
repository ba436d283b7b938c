#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "atdp/error.hpp"
#include "atdp/rng.hpp"

namespace atdp {

// Special ids occupy the front of every vocabulary, in this order.
enum class Special : int32_t {
  Pad = 0,
  Unk,
  Bos,
  Eos,
  Person,
  Org,
  Loc,
  Date,
  Pron,
  Obj,
  Subj,
  Verb,
  Num,
};

inline constexpr int32_t kNumSpecials = 13;

inline constexpr std::array<const char*, kNumSpecials> kSpecialTokens = {
    "<PAD>", "<UNK>", "<BOS>", "<EOS>",  "<PERSON>", "<ORG>", "<LOC>",
    "<DATE>", "<PRON>", "<OBJ>", "<SUBJ>", "<VERB>",  "<NUM>"};

struct Vocab {
  std::vector<std::string> id_to_token;
  std::unordered_map<std::string, int32_t> token_to_id;

  int32_t special(Special s) const { return static_cast<int32_t>(s); }
  int32_t size() const { return static_cast<int32_t>(id_to_token.size()); }

  int32_t lookup(const std::string& token) const {
    auto it = token_to_id.find(token);
    return it == token_to_id.end() ? special(Special::Unk) : it->second;
  }

  bool is_special(int32_t id) const { return id >= 0 && id < kNumSpecials; }

  void save_json(const std::filesystem::path& file) const;
  static Vocab load_json(const std::filesystem::path& file);
};

struct TokenizedRecord {
  std::vector<int32_t> token_ids;
  std::vector<uint8_t> sensitive_mask;  // aligned with token_ids
  std::vector<double> weights;          // aligned; in (0,1], 1 where sensitive
};

struct CanarySpec {
  std::string template_text;  // contains exactly one "{}" digit-slot marker
  std::string secret_digits;  // D decimal digits
  int insert_count = 10;

  int digit_count() const { return static_cast<int>(secret_digits.size()); }
  long candidate_space() const;
  // Digits are rendered space-separated so each digit is one word token.
  std::string render(const std::string& digits) const;
  void validate() const;
};

// A line split into word tokens plus the original-capitalization flags the
// detector's proper-noun rule needs.
struct WordSeq {
  std::vector<std::string> words;  // lowercased
  std::vector<uint8_t> caps;       // first char was an ASCII uppercase letter
};

// Whitespace-and-punctuation word split; words keep alnum (and non-ASCII)
// runs together, every punctuation char is its own token.
WordSeq split_words(const std::string& text);

std::vector<int32_t> word_ids(const WordSeq& seq, const Vocab& vocab);

// <BOS> ... <EOS> wrapped ids; empty text -> EmptyInput.
std::vector<int32_t> tokenize(const std::string& text, const Vocab& vocab);

std::string detokenize(const std::vector<int32_t>& ids, const Vocab& vocab);

Vocab build_vocab(const std::vector<std::filesystem::path>& corpus_paths,
                  int32_t max_size);
Vocab build_vocab_from_lines(const std::vector<std::string>& lines,
                             int32_t max_size);

std::vector<std::string> read_corpus_lines(const std::filesystem::path& file);

// Wraps a word-level mask/weights into a record aligned with <BOS>/<EOS>.
TokenizedRecord make_record(const std::vector<int32_t>& wrapped_ids);

std::vector<TokenizedRecord> insert_canary(
    const std::vector<TokenizedRecord>& train_records, const CanarySpec& spec,
    const Vocab& vocab, uint64_t rng_seed);

std::unordered_set<int32_t> frequent_token_set(
    const std::vector<TokenizedRecord>& train_records, int top_k,
    const Vocab& vocab);

}  // namespace atdp

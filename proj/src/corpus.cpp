#include "atdp/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <sstream>

#include "json.hpp"

namespace atdp {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::EmptyInput: return "EmptyInput";
    case ErrorKind::IoError: return "IoError";
    case ErrorKind::ConfigError: return "ConfigError";
    case ErrorKind::AlignmentError: return "AlignmentError";
    case ErrorKind::ConflictError: return "ConflictError";
    case ErrorKind::VocabError: return "VocabError";
    case ErrorKind::NumericsError: return "NumericsError";
    case ErrorKind::EmptyBatch: return "EmptyBatch";
    case ErrorKind::UndefinedShare: return "UndefinedShare";
    case ErrorKind::OrderError: return "OrderError";
    case ErrorKind::EmptyLedger: return "EmptyLedger";
    case ErrorKind::InvalidBound: return "InvalidBound";
  }
  return "Error";
}

namespace {

bool is_word_char(unsigned char c) {
  // Non-ASCII bytes stay inside words so UTF-8 sequences are not split.
  return std::isalnum(c) != 0 || c >= 0x80;
}

}  // namespace

WordSeq split_words(const std::string& text) {
  WordSeq out;
  size_t i = 0;
  const size_t n = text.size();
  while (i < n) {
    const unsigned char c = static_cast<unsigned char>(text[i]);
    if (std::isspace(c)) {
      ++i;
      continue;
    }
    if (is_word_char(c)) {
      size_t j = i;
      while (j < n && is_word_char(static_cast<unsigned char>(text[j]))) ++j;
      std::string word = text.substr(i, j - i);
      out.caps.push_back(std::isupper(static_cast<unsigned char>(word[0])) ? 1
                                                                           : 0);
      for (char& ch : word) {
        ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
      }
      out.words.push_back(std::move(word));
      i = j;
    } else {
      out.words.push_back(std::string(1, text[i]));
      out.caps.push_back(0);
      ++i;
    }
  }
  return out;
}

std::vector<int32_t> word_ids(const WordSeq& seq, const Vocab& vocab) {
  std::vector<int32_t> ids;
  ids.reserve(seq.words.size());
  for (const auto& w : seq.words) ids.push_back(vocab.lookup(w));
  return ids;
}

std::vector<int32_t> tokenize(const std::string& text, const Vocab& vocab) {
  const WordSeq seq = split_words(text);
  if (seq.words.empty()) fail(ErrorKind::EmptyInput, "no tokens in input text");
  std::vector<int32_t> ids;
  ids.reserve(seq.words.size() + 2);
  ids.push_back(vocab.special(Special::Bos));
  for (const auto& w : seq.words) ids.push_back(vocab.lookup(w));
  ids.push_back(vocab.special(Special::Eos));
  return ids;
}

std::string detokenize(const std::vector<int32_t>& ids, const Vocab& vocab) {
  std::string out;
  for (int32_t id : ids) {
    if (id == vocab.special(Special::Bos) || id == vocab.special(Special::Eos))
      continue;
    if (id < 0 || id >= vocab.size())
      fail(ErrorKind::VocabError, "token id out of range");
    if (!out.empty()) out += ' ';
    out += vocab.id_to_token[static_cast<size_t>(id)];
  }
  return out;
}

std::vector<std::string> read_corpus_lines(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) fail(ErrorKind::IoError, "cannot open corpus file " + file.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) lines.push_back(line);
  }
  return lines;
}

Vocab build_vocab_from_lines(const std::vector<std::string>& lines,
                             int32_t max_size) {
  if (max_size < kNumSpecials) {
    fail(ErrorKind::ConfigError,
         "vocab max_size smaller than the " + std::to_string(kNumSpecials) +
             " special tokens");
  }
  // std::map keeps tokens sorted, which makes the count ties lexicographic
  // without a second pass.
  std::map<std::string, int64_t> counts;
  for (const auto& line : lines) {
    for (const auto& w : split_words(line).words) ++counts[w];
  }
  std::vector<std::pair<std::string, int64_t>> ranked(counts.begin(),
                                                      counts.end());
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) {
                     return a.second > b.second;
                   });

  Vocab vocab;
  for (const char* tok : kSpecialTokens) vocab.id_to_token.emplace_back(tok);
  const size_t budget = static_cast<size_t>(max_size - kNumSpecials);
  for (size_t i = 0; i < ranked.size() && i < budget; ++i) {
    vocab.id_to_token.push_back(ranked[i].first);
  }
  for (size_t i = 0; i < vocab.id_to_token.size(); ++i) {
    vocab.token_to_id[vocab.id_to_token[i]] = static_cast<int32_t>(i);
  }
  return vocab;
}

Vocab build_vocab(const std::vector<std::filesystem::path>& corpus_paths,
                  int32_t max_size) {
  std::vector<std::string> lines;
  for (const auto& p : corpus_paths) {
    auto chunk = read_corpus_lines(p);
    lines.insert(lines.end(), chunk.begin(), chunk.end());
  }
  return build_vocab_from_lines(lines, max_size);
}

void Vocab::save_json(const std::filesystem::path& file) const {
  nlohmann::json j;
  j["tokens"] = id_to_token;
  nlohmann::json specials;
  for (int32_t i = 0; i < kNumSpecials; ++i) {
    specials[kSpecialTokens[static_cast<size_t>(i)]] = i;
  }
  j["specials"] = specials;
  std::ofstream out(file);
  if (!out) fail(ErrorKind::IoError, "cannot write vocab " + file.string());
  out << j.dump(2) << '\n';
}

Vocab Vocab::load_json(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) fail(ErrorKind::IoError, "cannot open vocab " + file.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::IoError, std::string("malformed vocab json: ") + e.what());
  }
  Vocab vocab;
  vocab.id_to_token = j.at("tokens").get<std::vector<std::string>>();
  if (vocab.id_to_token.size() < static_cast<size_t>(kNumSpecials))
    fail(ErrorKind::VocabError, "vocab missing special tokens");
  for (int32_t i = 0; i < kNumSpecials; ++i) {
    if (vocab.id_to_token[static_cast<size_t>(i)] !=
        kSpecialTokens[static_cast<size_t>(i)])
      fail(ErrorKind::VocabError, "special token table mismatch");
  }
  for (size_t i = 0; i < vocab.id_to_token.size(); ++i) {
    auto [it, inserted] =
        vocab.token_to_id.emplace(vocab.id_to_token[i], static_cast<int32_t>(i));
    if (!inserted) fail(ErrorKind::VocabError, "duplicate vocab token");
  }
  return vocab;
}

long CanarySpec::candidate_space() const {
  long n = 1;
  for (int i = 0; i < digit_count(); ++i) n *= 10;
  return n;
}

std::string CanarySpec::render(const std::string& digits) const {
  const size_t slot = template_text.find("{}");
  if (slot == std::string::npos)
    fail(ErrorKind::ConfigError, "canary template has no {} slot");
  std::string spaced;
  for (size_t i = 0; i < digits.size(); ++i) {
    if (i) spaced += ' ';
    spaced += digits[i];
  }
  std::string out = template_text;
  out.replace(slot, 2, spaced);
  return out;
}

void CanarySpec::validate() const {
  const size_t slot = template_text.find("{}");
  if (slot == std::string::npos ||
      template_text.find("{}", slot + 1) != std::string::npos)
    fail(ErrorKind::ConfigError, "canary template needs exactly one {} slot");
  if (secret_digits.empty())
    fail(ErrorKind::ConfigError, "canary secret is empty");
  if (secret_digits.size() > 9)
    fail(ErrorKind::ConfigError, "canary secret longer than 9 digits");
  for (char c : secret_digits) {
    if (c < '0' || c > '9')
      fail(ErrorKind::ConfigError, "canary secret must be decimal digits");
  }
  if (insert_count < 0)
    fail(ErrorKind::ConfigError, "canary insert_count negative");
}

TokenizedRecord make_record(const std::vector<int32_t>& wrapped_ids) {
  TokenizedRecord rec;
  rec.token_ids = wrapped_ids;
  rec.sensitive_mask.assign(wrapped_ids.size(), 0);
  rec.weights.assign(wrapped_ids.size(), 1.0);
  return rec;
}

std::vector<TokenizedRecord> insert_canary(
    const std::vector<TokenizedRecord>& train_records, const CanarySpec& spec,
    const Vocab& vocab, uint64_t rng_seed) {
  spec.validate();
  std::vector<TokenizedRecord> out = train_records;
  if (spec.insert_count == 0) return out;

  const TokenizedRecord canary =
      make_record(tokenize(spec.render(spec.secret_digits), vocab));
  Rng rng(rng_seed);
  for (int i = 0; i < spec.insert_count; ++i) {
    const size_t pos = static_cast<size_t>(rng.uniform_index(out.size() + 1));
    out.insert(out.begin() + static_cast<std::ptrdiff_t>(pos), canary);
  }
  return out;
}

std::unordered_set<int32_t> frequent_token_set(
    const std::vector<TokenizedRecord>& train_records, int top_k,
    const Vocab& vocab) {
  if (top_k < 0) fail(ErrorKind::ConfigError, "top_k must be >= 0");
  std::unordered_map<int32_t, int64_t> counts;
  for (const auto& rec : train_records) {
    for (int32_t id : rec.token_ids) {
      if (!vocab.is_special(id)) ++counts[id];
    }
  }
  std::vector<std::pair<int32_t, int64_t>> ranked(counts.begin(), counts.end());
  std::sort(ranked.begin(), ranked.end(), [&](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return vocab.id_to_token[static_cast<size_t>(a.first)] <
           vocab.id_to_token[static_cast<size_t>(b.first)];
  });
  std::unordered_set<int32_t> out;
  for (size_t i = 0; i < ranked.size() && i < static_cast<size_t>(top_k); ++i) {
    out.insert(ranked[i].first);
  }
  return out;
}

}  // namespace atdp

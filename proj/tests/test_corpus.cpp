#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <fstream>

#include "atdp/corpus.hpp"
#include "atdp/rng.hpp"
#include "test_util.hpp"

using namespace atdp;
using namespace atdp::testutil;

TEST_CASE("tokenize wraps known words in bos/eos") {
  const Vocab vocab = vocab_from_text("emma had surgery");
  const auto ids = tokenize("Emma had surgery", vocab);
  REQUIRE(ids.size() == 5);
  CHECK(ids.front() == vocab.special(Special::Bos));
  CHECK(ids.back() == vocab.special(Special::Eos));
  CHECK(ids[1] == vocab.lookup("emma"));
  CHECK(ids[2] == vocab.lookup("had"));
  CHECK(ids[3] == vocab.lookup("surgery"));
}

TEST_CASE("tokenize rejects empty input") {
  const Vocab vocab = vocab_from_text("a");
  CHECK_THROWS_AS(tokenize("", vocab), Error);
  try {
    tokenize("   ", vocab);
    FAIL("expected EmptyInput");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::EmptyInput);
  }
}

TEST_CASE("unknown words map to <UNK>") {
  const Vocab vocab = vocab_from_text("emma had surgery");
  const auto ids = tokenize("zqx123", vocab);
  REQUIRE(ids.size() == 3);
  CHECK(ids[1] == vocab.special(Special::Unk));
}

TEST_CASE("punctuation splits into its own tokens") {
  const Vocab vocab = vocab_from_text("st . mary ' s hospital");
  const auto words = split_words("St. Mary's Hospital").words;
  const std::vector<std::string> expected = {"st", ".", "mary", "'", "s",
                                             "hospital"};
  CHECK(words == expected);
}

TEST_CASE("build_vocab keeps specials plus most frequent tokens") {
  const Vocab vocab = build_vocab_from_lines({"a a b"}, 15);
  CHECK(vocab.size() == 15);  // 13 specials + a + b
  CHECK(vocab.lookup("a") >= kNumSpecials);
  CHECK(vocab.lookup("b") >= kNumSpecials);
  // higher count sorts first
  CHECK(vocab.lookup("a") < vocab.lookup("b"));
}

TEST_CASE("build_vocab rejects max_size below the specials") {
  try {
    build_vocab_from_lines({"a"}, kNumSpecials - 1);
    FAIL("expected ConfigError");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::ConfigError);
  }
}

TEST_CASE("vocab ties break lexicographically") {
  const Vocab vocab = build_vocab_from_lines({"zebra apple"}, kNumSpecials + 1);
  CHECK(vocab.lookup("apple") == kNumSpecials);
  CHECK(vocab.lookup("zebra") == vocab.special(Special::Unk));
}

TEST_CASE("vocab id_to_token and token_to_id stay mutual inverses") {
  const Vocab vocab = vocab_from_text("one two three four five");
  for (size_t i = 0; i < vocab.id_to_token.size(); ++i) {
    CHECK(vocab.token_to_id.at(vocab.id_to_token[i]) ==
          static_cast<int32_t>(i));
  }
  for (const char* tok : kSpecialTokens) {
    CHECK(vocab.token_to_id.count(tok) == 1);
  }
}

TEST_CASE("vocab json round trip") {
  const Vocab vocab = vocab_from_text("alpha beta gamma");
  const auto file = temp_dir("vocab") / "vocab.json";
  vocab.save_json(file);
  const Vocab loaded = Vocab::load_json(file);
  CHECK(loaded.id_to_token == vocab.id_to_token);
  CHECK(loaded.lookup("beta") == vocab.lookup("beta"));
}

TEST_CASE("detokenize inverts tokenize modulo normalization") {
  const std::vector<std::string> lines = {
      "emma had surgery", "the quick fox ran home",
      "case 4 1 7 opened in june"};
  const Vocab vocab = vocab_from_lines(lines);
  for (const auto& line : lines) {
    CHECK(detokenize(tokenize(line, vocab), vocab) == line);
  }
}

TEST_CASE("insert_canary adds exactly insert_count standalone records") {
  const Vocab vocab =
      vocab_from_lines({"my id is x", "0 1 2 3 4 5 6 7 8 9"});
  std::vector<TokenizedRecord> records;
  for (int i = 0; i < 20; ++i)
    records.push_back(record_from_text("my id is x", vocab));

  CanarySpec spec{"My ID is {}", "3417", 10};
  const auto out = insert_canary(records, spec, vocab, 99);
  CHECK(out.size() == records.size() + 10);

  const auto canary_ids = tokenize(spec.render("3417"), vocab);
  long found = 0;
  for (const auto& rec : out) {
    if (rec.token_ids == canary_ids) ++found;
  }
  CHECK(found == 10);
}

TEST_CASE("insert_canary with zero count is the identity") {
  const Vocab vocab = vocab_from_lines({"my id is x 3 4 1 7"});
  std::vector<TokenizedRecord> records = {record_from_text("my id is x", vocab)};
  CanarySpec spec{"My ID is {}", "3417", 0};
  const auto out = insert_canary(records, spec, vocab, 7);
  REQUIRE(out.size() == 1);
  CHECK(out[0].token_ids == records[0].token_ids);
}

TEST_CASE("insert_canary is deterministic in the seed") {
  const Vocab vocab = vocab_from_lines({"my id is x 3 4 1 7 a b c"});
  std::vector<TokenizedRecord> records;
  for (int i = 0; i < 50; ++i) records.push_back(record_from_text("a b c", vocab));
  CanarySpec spec{"My ID is {}", "3417", 5};
  const auto a = insert_canary(records, spec, vocab, 1234);
  const auto b = insert_canary(records, spec, vocab, 1234);
  REQUIRE(a.size() == b.size());
  for (size_t i = 0; i < a.size(); ++i) CHECK(a[i].token_ids == b[i].token_ids);
}

TEST_CASE("canary render space-separates the digits") {
  CanarySpec spec{"My ID is {}", "3417", 1};
  CHECK(spec.render("3417") == "My ID is 3 4 1 7");
  CHECK(spec.candidate_space() == 10000);
}

TEST_CASE("canary spec validation") {
  const CanarySpec no_slot{"no slot", "12", 1};
  const CanarySpec two_slots{"{} and {}", "12", 1};
  const CanarySpec bad_digits{"id {}", "12a", 1};
  const CanarySpec good{"id {}", "12", 1};
  CHECK_THROWS_AS(no_slot.validate(), Error);
  CHECK_THROWS_AS(two_slots.validate(), Error);
  CHECK_THROWS_AS(bad_digits.validate(), Error);
  CHECK_NOTHROW(good.validate());
}

TEST_CASE("frequent_token_set picks top counts with lexicographic ties") {
  const Vocab vocab = vocab_from_lines({"the the the cat"});
  std::vector<TokenizedRecord> records = {
      record_from_text("the the the cat", vocab)};

  const auto top1 = frequent_token_set(records, 1, vocab);
  CHECK(top1.size() == 1);
  CHECK(top1.count(vocab.lookup("the")) == 1);

  CHECK(frequent_token_set(records, 0, vocab).empty());

  // saturation: more than available yields every non-special token
  const auto all = frequent_token_set(records, 100, vocab);
  CHECK(all.size() == 2);
  CHECK(all.count(vocab.lookup("cat")) == 1);
}

TEST_CASE("frequent_token_set is monotone in top_k") {
  const std::vector<std::string> lines = {
      "a a a b b c d e f g", "b c c d d d e e e e"};
  const Vocab vocab = vocab_from_lines(lines);
  std::vector<TokenizedRecord> records;
  for (const auto& l : lines) records.push_back(record_from_text(l, vocab));
  for (int k = 0; k < 8; ++k) {
    const auto small = frequent_token_set(records, k, vocab);
    const auto big = frequent_token_set(records, k + 1, vocab);
    for (int32_t id : small) CHECK(big.count(id) == 1);
  }
}

TEST_CASE("specials never enter the frequent set") {
  const Vocab vocab = vocab_from_lines({"x"});
  std::vector<TokenizedRecord> records = {record_from_text("x", vocab)};
  const auto set = frequent_token_set(records, 100, vocab);
  CHECK(set.size() == 1);
  CHECK(set.count(vocab.special(Special::Bos)) == 0);
}

TEST_CASE("read_corpus_lines reports missing files") {
  try {
    read_corpus_lines("/nonexistent/corpus.txt");
    FAIL("expected IoError");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::IoError);
  }
}

#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "atdp/corpus.hpp"
#include "atdp/detector.hpp"

namespace atdp::testutil {

inline std::filesystem::path data_dir() { return ATDP_DATA_DIR; }

inline Gazetteer load_gazetteer() {
  return Gazetteer::load(data_dir() / "gazetteer");
}

inline Vocab vocab_from_text(const std::string& text, int32_t max_size = 512) {
  return build_vocab_from_lines({text}, max_size);
}

inline Vocab vocab_from_lines(const std::vector<std::string>& lines,
                              int32_t max_size = 4096) {
  return build_vocab_from_lines(lines, max_size);
}

inline TokenizedRecord record_from_text(const std::string& text,
                                        const Vocab& vocab) {
  return make_record(tokenize(text, vocab));
}

inline std::filesystem::path temp_dir(const std::string& tag) {
  auto dir = std::filesystem::temp_directory_path() / ("atdp_test_" + tag);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace atdp::testutil

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "atdp/corpus.hpp"
#include "atdp/rng.hpp"

namespace atdp {

struct ArchConfig {
  int32_t vocab_size = 0;
  int32_t embed_dim = 64;
  int32_t hidden_dim = 128;
  int32_t num_layers = 2;
  int32_t context_len = 64;

  void validate() const;
  bool operator==(const ArchConfig&) const = default;
};

size_t param_count(const ArchConfig& arch);

struct ModelParams {
  ArchConfig arch;
  std::vector<double> theta;
};

// All-zero parameters; gives exactly uniform next-token distributions.
ModelParams zero_model(const ArchConfig& arch);

// Scaled-Gaussian init (std 0.02), norm gains at 1.
ModelParams init_model(const ArchConfig& arch, Rng& rng);

struct RecordGradient {
  int64_t record_index = 0;
  std::vector<double> grad;
  std::vector<double> token_losses;
};

// Reusable per-thread scratch for forward/backward passes.
struct LmWorkspace;
LmWorkspace* new_workspace();
void free_workspace(LmWorkspace*);

class WorkspaceHandle {
 public:
  WorkspaceHandle() : ws_(new_workspace()) {}
  ~WorkspaceHandle() { free_workspace(ws_); }
  WorkspaceHandle(const WorkspaceHandle&) = delete;
  WorkspaceHandle& operator=(const WorkspaceHandle&) = delete;
  LmWorkspace* get() const { return ws_; }

 private:
  LmWorkspace* ws_;
};

// Per-token negative log-likelihoods: losses[t] = -log p(x[t+1] | x[..t]).
std::vector<double> forward_loss(const ModelParams& params,
                                 const TokenizedRecord& record,
                                 LmWorkspace* ws = nullptr);

// grad = sum_t weights[t] * d(loss of token t)/d(theta), where the loss of
// token t is the NLL of predicting t from its prefix.
RecordGradient weighted_record_gradient(const ModelParams& params,
                                        const TokenizedRecord& record,
                                        int64_t record_index = 0,
                                        LmWorkspace* ws = nullptr);

double perplexity(const ModelParams& params,
                  std::span<const TokenizedRecord> records);

// Flat-theta offsets of the two vocabulary-indexed blocks; rows are token
// ids, so vocabulary relabeling permutes these rows.
size_t token_embedding_offset(const ArchConfig& arch);
size_t lm_head_offset(const ArchConfig& arch);

struct CheckpointMeta {
  std::string json_text = "{}";
};

void save_checkpoint(const ModelParams& params,
                     const std::filesystem::path& file,
                     const std::string& metadata_json = "{}");
ModelParams load_checkpoint(const std::filesystem::path& file);

}  // namespace atdp

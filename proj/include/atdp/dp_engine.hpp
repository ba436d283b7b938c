#pragma once

#include <functional>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include "atdp/accountant.hpp"
#include "atdp/corpus.hpp"
#include "atdp/lm.hpp"
#include "atdp/rng.hpp"

namespace atdp {

enum class DpMode { NonPrivate, DpSgd, Atdp };

DpMode dp_mode_from_string(const std::string& name);
const char* to_string(DpMode mode);

struct DpConfig {
  double sigma0 = 1.0;       // initial noise multiplier
  double clip_norm = 1.0;    // C
  int batch_size = 32;       // B
  int epochs = 3;            // E
  double gamma = 2.0;        // escalation factor, > 1
  double jitter_lo = 0.9;    // alpha_j < 1
  double jitter_hi = 1.1;    // beta_j > 1
  double sigma_max = 32.0;   // reset ceiling, >= sigma0
  double delta = 1e-5;
  double learning_rate = 0.1;
  double momentum = 0.0;     // 0 = plain SGD
  double w_non = 0.2;        // weight of non-sensitive tokens, (0, 1]
  double r_target = 0.5;     // target sensitive share of gradient energy
  DpMode mode = DpMode::DpSgd;

  void validate() const;
};

// Closed form w = alpha (1 - r_target) / (r_target (1 - alpha)), capped at 1.
double compute_w_non(double alpha, double r_target);

struct GradientDecomposition {
  std::vector<double> g_sens;
  std::vector<double> g_non;
};

// r(w) = |g_sens|^2 / (|g_sens|^2 + w^2 |g_non|^2)
double sensitive_share(const GradientDecomposition& decomp, double w);

// Splits the unweighted record gradient into sensitive / non-sensitive
// token contributions (by prediction target).
GradientDecomposition decompose_record_gradient(const ModelParams& params,
                                                const TokenizedRecord& record);

// w(t) = 1 if sensitive or frequent, else w_non.
void assign_weights(std::vector<TokenizedRecord>& records,
                    const std::unordered_set<int32_t>& frequent, double w_non);

// min(1, C/|g|) g
void clip_in_place(std::vector<double>& grad, double clip_norm);
std::vector<double> clip(std::vector<double> grad, double clip_norm);

struct ScheduleState {
  double sigma = 1.0;
  int epoch_index = 0;
};

// sigma <- sigma * gamma * rho, rho ~ U(jitter_lo, jitter_hi);
// reset to sigma0 when the ceiling is exceeded.
ScheduleState advance_schedule(ScheduleState state, const DpConfig& cfg,
                               Rng& jitter_rng);

struct OptimizerState {
  double learning_rate = 0.1;
  double momentum = 0.0;
  long step_count = 0;
  std::vector<double> velocity;  // allocated on first use when momentum > 0
};

struct StepStats {
  double batch_loss = 0.0;               // mean weighted loss per record
  double grad_norm_pre_clip_mean = 0.0;  // mean per-record norm before clip
  double sigma = 0.0;                    // 0 in non-private mode
};

// Number of worker threads for per-record gradient fan-out. The reduction
// is grouped in fixed-size chunks summed in record order, so results are
// bit-identical for every thread count.
int default_threads();

StepStats noisy_step(ModelParams& params,
                     std::span<const TokenizedRecord> batch,
                     ScheduleState& state, const DpConfig& cfg,
                     OptimizerState& opt, PrivacyLedger* ledger,
                     double sampling_rate, Rng& noise_rng,
                     const std::string& stage = "train", int threads = 0);

struct StepLogEntry {
  long step = 0;
  int epoch = 0;
  double sigma = 0.0;
  double batch_loss = 0.0;
  double grad_norm_pre_clip_mean = 0.0;
};

struct TrainStats {
  long optimizer_steps = 0;
  long noisy_steps = 0;
  double final_sigma = 0.0;
  double mean_batch_loss = 0.0;  // over the final epoch
};

using EpochCallback = std::function<void(int epoch, const ModelParams&)>;
using StepCallback = std::function<void(const StepLogEntry&)>;

// Shuffled fixed-size batches for `epochs` epochs; the schedule advances
// once per epoch before its batches (Atdp mode only).
TrainStats run_training(ModelParams& params,
                        const std::vector<TokenizedRecord>& records,
                        const DpConfig& cfg, int epochs, PrivacyLedger* ledger,
                        RngStreams& streams, const std::string& stage = "train",
                        int threads = 0, const EpochCallback& on_epoch = {},
                        const StepCallback& on_step = {});

// Algorithm entry point for the post-hoc phase; requires cfg.mode == Atdp.
TrainStats run_atdp_epochs(ModelParams& params,
                           const std::vector<TokenizedRecord>& records,
                           const DpConfig& cfg, PrivacyLedger& ledger,
                           RngStreams& streams,
                           const std::string& stage = "atdp", int threads = 0,
                           const EpochCallback& on_epoch = {},
                           const StepCallback& on_step = {});

}  // namespace atdp

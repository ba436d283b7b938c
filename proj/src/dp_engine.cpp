#include "atdp/dp_engine.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <numeric>
#include <thread>

namespace atdp {

namespace {

// Records per reduction group. Group sums are accumulated in record order
// and then combined in group order, so the result does not depend on how
// groups are assigned to threads.
constexpr size_t kGroupSize = 8;

double l2_norm(std::span<const double> v) {
  double ss = 0.0;
  for (double x : v) ss += x * x;
  return std::sqrt(ss);
}

void parallel_for(size_t count, int threads, const std::function<void(size_t)>& fn) {
  if (threads <= 1 || count <= 1) {
    for (size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  const size_t workers = std::min<size_t>(static_cast<size_t>(threads), count);
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      for (size_t i = w; i < count; i += workers) fn(i);
    });
  }
  for (auto& t : pool) t.join();
}

}  // namespace

DpMode dp_mode_from_string(const std::string& name) {
  if (name == "non_private") return DpMode::NonPrivate;
  if (name == "dp_sgd") return DpMode::DpSgd;
  if (name == "atdp") return DpMode::Atdp;
  fail(ErrorKind::ConfigError, "unknown dp mode '" + name + "'");
}

const char* to_string(DpMode mode) {
  switch (mode) {
    case DpMode::NonPrivate: return "non_private";
    case DpMode::DpSgd: return "dp_sgd";
    case DpMode::Atdp: return "atdp";
  }
  return "?";
}

void DpConfig::validate() const {
  if (!(sigma0 > 0.0)) fail(ErrorKind::ConfigError, "sigma0 must be positive");
  if (!(clip_norm > 0.0))
    fail(ErrorKind::ConfigError, "clip_norm must be positive");
  if (batch_size < 1) fail(ErrorKind::ConfigError, "batch_size must be >= 1");
  if (epochs < 0) fail(ErrorKind::ConfigError, "epochs must be >= 0");
  if (!(gamma > 1.0)) fail(ErrorKind::ConfigError, "gamma must exceed 1");
  // [1, 1] is allowed: it pins the draw for schedule-free comparisons.
  if (!(jitter_lo <= 1.0 && 1.0 <= jitter_hi))
    fail(ErrorKind::ConfigError, "jitter range must contain 1");
  if (!(jitter_lo > 0.0))
    fail(ErrorKind::ConfigError, "jitter lower bound must be positive");
  if (!(sigma_max >= sigma0))
    fail(ErrorKind::ConfigError, "sigma_max must be >= sigma0");
  if (!(delta > 0.0 && delta < 1.0))
    fail(ErrorKind::ConfigError, "delta must lie in (0, 1)");
  if (!(learning_rate > 0.0))
    fail(ErrorKind::ConfigError, "learning_rate must be positive");
  if (momentum < 0.0 || momentum >= 1.0)
    fail(ErrorKind::ConfigError, "momentum must lie in [0, 1)");
  if (!(w_non > 0.0 && w_non <= 1.0))
    fail(ErrorKind::ConfigError, "w_non must lie in (0, 1]");
  if (!(r_target > 0.0 && r_target < 1.0))
    fail(ErrorKind::ConfigError, "r_target must lie in (0, 1)");
}

double compute_w_non(double alpha, double r_target) {
  if (!(alpha > 0.0 && alpha < 1.0))
    fail(ErrorKind::ConfigError, "alpha must lie in (0, 1)");
  if (!(r_target > 0.0 && r_target < 1.0))
    fail(ErrorKind::ConfigError, "r_target must lie in (0, 1)");
  const double w = alpha * (1.0 - r_target) / (r_target * (1.0 - alpha));
  return std::min(1.0, w);
}

double sensitive_share(const GradientDecomposition& decomp, double w) {
  if (w < 0.0) fail(ErrorKind::ConfigError, "weight must be nonnegative");
  double sens_sq = 0.0;
  for (double x : decomp.g_sens) sens_sq += x * x;
  double non_sq = 0.0;
  for (double x : decomp.g_non) non_sq += x * x;
  const double denom = sens_sq + w * w * non_sq;
  if (denom == 0.0)
    fail(ErrorKind::UndefinedShare,
         "both gradient components vanish; share undefined");
  return sens_sq / denom;
}

GradientDecomposition decompose_record_gradient(
    const ModelParams& params, const TokenizedRecord& record) {
  TokenizedRecord sens = record;
  TokenizedRecord non = record;
  for (size_t i = 0; i < record.token_ids.size(); ++i) {
    const bool flagged = i < record.sensitive_mask.size() &&
                         record.sensitive_mask[i] != 0;
    sens.weights[i] = flagged ? 1.0 : 0.0;
    non.weights[i] = flagged ? 0.0 : 1.0;
  }
  GradientDecomposition decomp;
  decomp.g_sens = weighted_record_gradient(params, sens).grad;
  decomp.g_non = weighted_record_gradient(params, non).grad;
  return decomp;
}

void assign_weights(std::vector<TokenizedRecord>& records,
                    const std::unordered_set<int32_t>& frequent,
                    double w_non) {
  if (!(w_non > 0.0 && w_non <= 1.0))
    fail(ErrorKind::ConfigError, "w_non must lie in (0, 1]");
  for (auto& rec : records) {
    if (rec.sensitive_mask.size() != rec.token_ids.size())
      fail(ErrorKind::AlignmentError, "mask not aligned with record");
    rec.weights.resize(rec.token_ids.size());
    for (size_t i = 0; i < rec.token_ids.size(); ++i) {
      const bool keep = rec.sensitive_mask[i] != 0 ||
                        frequent.count(rec.token_ids[i]) > 0;
      rec.weights[i] = keep ? 1.0 : w_non;
    }
  }
}

void clip_in_place(std::vector<double>& grad, double clip_norm) {
  if (!(clip_norm > 0.0))
    fail(ErrorKind::ConfigError, "clip_norm must be positive");
  double ss = 0.0;
  for (double x : grad) {
    if (!std::isfinite(x))
      fail(ErrorKind::NumericsError, "non-finite gradient in clip");
    ss += x * x;
  }
  const double norm = std::sqrt(ss);
  if (norm <= clip_norm || norm == 0.0) return;
  const double factor = clip_norm / norm;
  for (double& x : grad) x *= factor;
}

std::vector<double> clip(std::vector<double> grad, double clip_norm) {
  clip_in_place(grad, clip_norm);
  return grad;
}

ScheduleState advance_schedule(ScheduleState state, const DpConfig& cfg,
                               Rng& jitter_rng) {
  const double rho = jitter_rng.uniform(cfg.jitter_lo, cfg.jitter_hi);
  state.sigma = state.sigma * cfg.gamma * rho;
  if (state.sigma > cfg.sigma_max) state.sigma = cfg.sigma0;
  state.epoch_index += 1;
  return state;
}

int default_threads() {
  if (const char* env = std::getenv("ATDP_THREADS")) {
    const int n = std::atoi(env);
    if (n >= 1) return n;
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return static_cast<int>(std::clamp(hw, 1u, 8u));
}

StepStats noisy_step(ModelParams& params,
                     std::span<const TokenizedRecord> batch,
                     ScheduleState& state, const DpConfig& cfg,
                     OptimizerState& opt, PrivacyLedger* ledger,
                     double sampling_rate, Rng& noise_rng,
                     const std::string& stage, int threads) {
  cfg.validate();
  if (batch.empty()) fail(ErrorKind::EmptyBatch, "noisy_step on empty batch");
  if (batch.size() > static_cast<size_t>(cfg.batch_size))
    fail(ErrorKind::ConfigError, "batch larger than configured batch_size");
  if (threads <= 0) threads = default_threads();

  const size_t dim = param_count(params.arch);
  const bool priv = cfg.mode != DpMode::NonPrivate;
  const double sigma = cfg.mode == DpMode::Atdp ? state.sigma
                       : cfg.mode == DpMode::DpSgd ? cfg.sigma0
                                                   : 0.0;

  const size_t n_groups = (batch.size() + kGroupSize - 1) / kGroupSize;
  std::vector<std::vector<double>> group_sums(n_groups);
  std::vector<double> record_norms(batch.size(), 0.0);
  std::vector<double> record_losses(batch.size(), 0.0);

  parallel_for(n_groups, threads, [&](size_t g) {
    WorkspaceHandle ws;
    auto& acc = group_sums[g];
    acc.assign(dim, 0.0);
    const size_t lo = g * kGroupSize;
    const size_t hi = std::min(lo + kGroupSize, batch.size());
    for (size_t r = lo; r < hi; ++r) {
      RecordGradient rg = weighted_record_gradient(
          params, batch[r], static_cast<int64_t>(r), ws.get());
      double loss = 0.0;
      for (size_t t = 0; t + 1 < batch[r].token_ids.size(); ++t)
        loss += batch[r].weights[t + 1] * rg.token_losses[t];
      record_losses[r] = loss;
      record_norms[r] = l2_norm(rg.grad);
      if (priv) clip_in_place(rg.grad, cfg.clip_norm);
      for (size_t i = 0; i < dim; ++i) acc[i] += rg.grad[i];
    }
  });

  std::vector<double> grad_sum(dim, 0.0);
  for (const auto& acc : group_sums) {
    for (size_t i = 0; i < dim; ++i) grad_sum[i] += acc[i];
  }

  // Noise is drawn once on the aggregated sum by the trainer thread.
  if (priv) {
    const double noise_std = sigma * cfg.clip_norm;
    for (size_t i = 0; i < dim; ++i)
      grad_sum[i] += noise_std * noise_rng.gauss();
  }

  const double denom = priv ? static_cast<double>(cfg.batch_size)
                            : static_cast<double>(batch.size());
  for (double& x : grad_sum) x /= denom;

  if (opt.momentum > 0.0) {
    if (opt.velocity.size() != dim) opt.velocity.assign(dim, 0.0);
    for (size_t i = 0; i < dim; ++i) {
      opt.velocity[i] = opt.momentum * opt.velocity[i] + grad_sum[i];
      params.theta[i] -= opt.learning_rate * opt.velocity[i];
    }
  } else {
    for (size_t i = 0; i < dim; ++i)
      params.theta[i] -= opt.learning_rate * grad_sum[i];
  }
  opt.step_count += 1;

  if (priv && ledger) ledger->append(stage, sampling_rate, sigma);

  StepStats stats;
  stats.sigma = sigma;
  stats.batch_loss =
      std::accumulate(record_losses.begin(), record_losses.end(), 0.0) /
      static_cast<double>(batch.size());
  stats.grad_norm_pre_clip_mean =
      std::accumulate(record_norms.begin(), record_norms.end(), 0.0) /
      static_cast<double>(batch.size());
  return stats;
}

TrainStats run_training(ModelParams& params,
                        const std::vector<TokenizedRecord>& records,
                        const DpConfig& cfg, int epochs, PrivacyLedger* ledger,
                        RngStreams& streams, const std::string& stage,
                        int threads, const EpochCallback& on_epoch,
                        const StepCallback& on_step) {
  cfg.validate();
  if (records.empty()) fail(ErrorKind::ConfigError, "no training records");
  const size_t n = records.size();
  const size_t batches_per_epoch = n / static_cast<size_t>(cfg.batch_size);
  if (epochs > 0 && batches_per_epoch == 0)
    fail(ErrorKind::ConfigError, "batch_size exceeds the dataset size");

  const double q = static_cast<double>(cfg.batch_size) /
                   static_cast<double>(n);
  OptimizerState opt{cfg.learning_rate, cfg.momentum, 0, {}};
  ScheduleState state{cfg.sigma0, 0};

  TrainStats stats;
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::vector<TokenizedRecord> batch(static_cast<size_t>(cfg.batch_size));

  for (int epoch = 1; epoch <= epochs; ++epoch) {
    if (cfg.mode == DpMode::Atdp)
      state = advance_schedule(state, cfg, streams.jitter);
    streams.shuffle.shuffle(order);

    double epoch_loss = 0.0;
    for (size_t b = 0; b < batches_per_epoch; ++b) {
      for (size_t i = 0; i < static_cast<size_t>(cfg.batch_size); ++i)
        batch[i] = records[order[b * static_cast<size_t>(cfg.batch_size) + i]];
      const StepStats step = noisy_step(params, batch, state, cfg, opt,
                                        ledger, q, streams.noise, stage,
                                        threads);
      stats.optimizer_steps += 1;
      if (cfg.mode != DpMode::NonPrivate) stats.noisy_steps += 1;
      epoch_loss += step.batch_loss;
      if (on_step) {
        on_step(StepLogEntry{stats.optimizer_steps, epoch, step.sigma,
                             step.batch_loss, step.grad_norm_pre_clip_mean});
      }
    }
    stats.mean_batch_loss =
        epoch_loss / static_cast<double>(batches_per_epoch);
    stats.final_sigma = state.sigma;
    if (on_epoch) on_epoch(epoch, params);
  }
  return stats;
}

TrainStats run_atdp_epochs(ModelParams& params,
                           const std::vector<TokenizedRecord>& records,
                           const DpConfig& cfg, PrivacyLedger& ledger,
                           RngStreams& streams, const std::string& stage,
                           int threads, const EpochCallback& on_epoch,
                           const StepCallback& on_step) {
  if (cfg.mode != DpMode::Atdp)
    fail(ErrorKind::ConfigError, "run_atdp_epochs requires Atdp mode");
  return run_training(params, records, cfg, cfg.epochs, &ledger, streams,
                      stage, threads, on_epoch, on_step);
}

}  // namespace atdp

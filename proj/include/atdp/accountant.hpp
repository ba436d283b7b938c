#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "atdp/error.hpp"

namespace atdp {

struct LedgerEntry {
  std::string stage;
  double q = 0.0;      // sampling rate in (0, 1]
  double sigma = 0.0;  // noise multiplier
};

// Append-only log of every noisy step; the sole source of epsilon.
class PrivacyLedger {
 public:
  void append(std::string stage, double q, double sigma);

  bool empty() const { return entries_.empty(); }
  size_t size() const { return entries_.size(); }
  std::span<const LedgerEntry> entries() const { return entries_; }

  size_t count_for_stage(const std::string& stage) const;

  void save_jsonl(const std::filesystem::path& file) const;
  static PrivacyLedger load_jsonl(const std::filesystem::path& file);

 private:
  std::vector<LedgerEntry> entries_;
};

// Integer Renyi orders {2..64} plus {80, 96, ..., 256}.
const std::vector<int>& default_order_grid();

// Single-step RDP of the sampled Gaussian mechanism at integer order
// lambda >= 2, evaluated in log space. q == 1 reduces to lambda/(2 sigma^2).
double rdp_step(double q, double sigma, int lambda);

double compose(const PrivacyLedger& ledger, int lambda);

struct EpsilonReport {
  double epsilon_total = 0.0;
  int best_order = 0;
  double delta = 0.0;
  // stage label -> RDP contribution at the minimizing order
  std::vector<std::pair<std::string, double>> per_stage;
};

EpsilonReport to_epsilon(const PrivacyLedger& ledger, double delta,
                         std::span<const int> order_grid = {});

// Appendix-style bound for a short large-noise stage: every sigma in the
// stage is lower-bounded by sigma_min, so K * rdp(q, sigma_min, lambda)
// upper-bounds the stage's composed cost.
double atdp_upper_bound(long steps, double q, double sigma_min,
                        std::span<const int> order_grid, double delta);

// Ledger-checked variant; sigma_min above any entry's sigma -> InvalidBound.
double atdp_upper_bound(const PrivacyLedger& ledger, double sigma_min,
                        std::span<const int> order_grid, double delta);

std::string epsilon_report_json(const EpsilonReport& report);

}  // namespace atdp

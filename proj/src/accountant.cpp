#include "atdp/accountant.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>

#include "json.hpp"

namespace atdp {

void PrivacyLedger::append(std::string stage, double q, double sigma) {
  if (!(q > 0.0 && q <= 1.0))
    fail(ErrorKind::ConfigError, "sampling rate must be in (0, 1]");
  if (!(sigma > 0.0))
    fail(ErrorKind::ConfigError, "noise multiplier must be positive");
  entries_.push_back({std::move(stage), q, sigma});
}

size_t PrivacyLedger::count_for_stage(const std::string& stage) const {
  size_t n = 0;
  for (const auto& e : entries_) {
    if (e.stage == stage) ++n;
  }
  return n;
}

void PrivacyLedger::save_jsonl(const std::filesystem::path& file) const {
  std::ofstream out(file);
  if (!out) fail(ErrorKind::IoError, "cannot write ledger " + file.string());
  for (const auto& e : entries_) {
    nlohmann::json j{{"stage", e.stage}, {"q", e.q}, {"sigma", e.sigma}};
    out << j.dump() << '\n';
  }
}

PrivacyLedger PrivacyLedger::load_jsonl(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) fail(ErrorKind::IoError, "cannot open ledger " + file.string());
  PrivacyLedger ledger;
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      ledger.append(j.value("stage", std::string("default")),
                    j.at("q").get<double>(), j.at("sigma").get<double>());
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorKind::IoError, "ledger line " + std::to_string(lineno) +
                                   " malformed: " + e.what());
    }
  }
  return ledger;
}

const std::vector<int>& default_order_grid() {
  static const std::vector<int> grid = [] {
    std::vector<int> g;
    for (int l = 2; l <= 64; ++l) g.push_back(l);
    for (int l = 80; l <= 256; l += 16) g.push_back(l);
    return g;
  }();
  return grid;
}

double rdp_step(double q, double sigma, int lambda) {
  if (lambda < 2) fail(ErrorKind::OrderError, "order must be an integer >= 2");
  if (!(q > 0.0 && q <= 1.0))
    fail(ErrorKind::ConfigError, "sampling rate must be in (0, 1]");
  if (!(sigma > 0.0))
    fail(ErrorKind::ConfigError, "noise multiplier must be positive");

  const double s2 = sigma * sigma;
  if (q == 1.0) return static_cast<double>(lambda) / (2.0 * s2);

  // log-sum-exp over the binomial expansion:
  //   sum_j C(lambda,j) (1-q)^(lambda-j) q^j exp(j(j-1) / (2 sigma^2))
  const double log_q = std::log(q);
  const double log_1mq = std::log1p(-q);
  double max_term = -std::numeric_limits<double>::infinity();
  std::vector<double> terms(static_cast<size_t>(lambda) + 1);
  for (int j = 0; j <= lambda; ++j) {
    const double log_binom = std::lgamma(lambda + 1.0) -
                             std::lgamma(j + 1.0) -
                             std::lgamma(lambda - j + 1.0);
    const double term = log_binom + (lambda - j) * log_1mq + j * log_q +
                        (static_cast<double>(j) * (j - 1)) / (2.0 * s2);
    terms[static_cast<size_t>(j)] = term;
    max_term = std::max(max_term, term);
  }
  double acc = 0.0;
  for (double t : terms) acc += std::exp(t - max_term);
  const double log_sum = max_term + std::log(acc);
  // The expansion sums to >= 1, so the divergence is nonnegative; clamp
  // away the last-ulp negatives.
  return std::max(0.0, log_sum / (lambda - 1.0));
}

double compose(const PrivacyLedger& ledger, int lambda) {
  if (ledger.empty()) fail(ErrorKind::EmptyLedger, "no entries to compose");
  double total = 0.0;
  for (const auto& e : ledger.entries())
    total += rdp_step(e.q, e.sigma, lambda);
  return total;
}

EpsilonReport to_epsilon(const PrivacyLedger& ledger, double delta,
                         std::span<const int> order_grid) {
  if (!(delta > 0.0 && delta < 1.0))
    fail(ErrorKind::ConfigError, "delta must lie in (0, 1)");
  if (ledger.empty()) fail(ErrorKind::EmptyLedger, "no entries to convert");

  const std::vector<int>& fallback = default_order_grid();
  const std::span<const int> grid =
      order_grid.empty() ? std::span<const int>(fallback) : order_grid;

  double best_eps = std::numeric_limits<double>::infinity();
  int best_order = 0;
  for (int lambda : grid) {
    const double eps =
        compose(ledger, lambda) - std::log(delta) / (lambda - 1.0);
    if (eps < best_eps) {
      best_eps = eps;
      best_order = lambda;
    }
  }

  EpsilonReport report;
  report.epsilon_total = best_eps;
  report.best_order = best_order;
  report.delta = delta;
  std::map<std::string, double> per_stage;
  for (const auto& e : ledger.entries())
    per_stage[e.stage] += rdp_step(e.q, e.sigma, best_order);
  report.per_stage.assign(per_stage.begin(), per_stage.end());
  return report;
}

double atdp_upper_bound(long steps, double q, double sigma_min,
                        std::span<const int> order_grid, double delta) {
  if (steps <= 0) fail(ErrorKind::ConfigError, "steps must be positive");
  if (!(delta > 0.0 && delta < 1.0))
    fail(ErrorKind::ConfigError, "delta must lie in (0, 1)");
  const std::vector<int>& fallback = default_order_grid();
  const std::span<const int> grid =
      order_grid.empty() ? std::span<const int>(fallback) : order_grid;
  double best = std::numeric_limits<double>::infinity();
  for (int lambda : grid) {
    const double eps = static_cast<double>(steps) *
                           rdp_step(q, sigma_min, lambda) -
                       std::log(delta) / (lambda - 1.0);
    best = std::min(best, eps);
  }
  return best;
}

double atdp_upper_bound(const PrivacyLedger& ledger, double sigma_min,
                        std::span<const int> order_grid, double delta) {
  if (ledger.empty()) fail(ErrorKind::EmptyLedger, "no entries to bound");
  double q = ledger.entries().front().q;
  for (const auto& e : ledger.entries()) {
    if (e.sigma < sigma_min)
      fail(ErrorKind::InvalidBound,
           "sigma_min exceeds a ledger entry's noise multiplier");
    q = std::max(q, e.q);
  }
  return atdp_upper_bound(static_cast<long>(ledger.size()), q, sigma_min,
                          order_grid, delta);
}

std::string epsilon_report_json(const EpsilonReport& report) {
  nlohmann::json per_stage = nlohmann::json::object();
  for (const auto& [stage, alpha] : report.per_stage) per_stage[stage] = alpha;
  nlohmann::json j{{"epsilon_total", report.epsilon_total},
                   {"best_order", report.best_order},
                   {"delta", report.delta},
                   {"per_stage_alpha_at_best_order", per_stage}};
  return j.dump(2);
}

}  // namespace atdp

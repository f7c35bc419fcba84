#pragma once

// Convergence diagnostics and posterior summarization.
//
// Estimator and formatting choices (the report is golden-file tested, so
// these are documented constants, not incidental details):
//  - R-hat is split-chain potential scale reduction: every chain is halved,
//    and the between/within variance ratio is computed over the half-chains.
//    Zero within-chain variance yields NaN plus a warning.
//  - Effective sample size combines per-chain autocovariances into multi-chain
//    autocorrelations (between-chain variance included), truncated by Geyer's
//    initial-monotone-sequence rule.  The estimate is capped at 1.5x the total
//    number of draws; constant draws yield 0 plus a warning.
//  - Quantiles linearly interpolate order statistics at h = (n-1)p (the
//    convention R documents as type 7).
//  - Report table: mean, sd and the 2.5%/97.5% quantiles print with 4
//    decimals, n_eff as a rounded integer, R-hat with 3 decimals; every
//    column is right-aligned and columns are separated by a single space.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "regddm/formula.hpp"
#include "regddm/sampler.hpp"
#include "regddm/table.hpp"

namespace regddm {

struct ParameterSummary {
  std::string name;
  double mean = 0.0;
  double sd = 0.0;
  double q025 = 0.0;
  double q975 = 0.0;
  double n_eff = 0.0;
  double rhat = 0.0;
};

struct FitSummary {
  int n_subjects = 0;
  int n_trials = 0;
  std::vector<std::string> model_lines;  // echoed formulas, DDM first
  std::string family;
  int chains = 0;
  int warmup = 0;
  int iterations = 0;
  double elapsed_seconds = 0.0;  // longest chain wall time
  std::vector<ParameterSummary> parameters;  // every reported parameter
  int n_coefficients = 0;  // leading rows forming the regression table
  double max_rhat = 0.0;
  std::vector<std::string> warnings;
};

// Linear interpolation of order statistics at h = (n-1)p on sorted input.
inline double quantile_sorted(const std::vector<double>& sorted, double p) {
  if (sorted.empty()) throw std::invalid_argument("quantile of empty sample");
  if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("quantile probability outside [0, 1]");
  const double h = (static_cast<double>(sorted.size()) - 1.0) * p;
  const std::size_t lo = static_cast<std::size_t>(h);
  if (lo + 1 >= sorted.size()) return sorted.back();
  const double frac = h - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]);
}

inline double quantile(std::vector<double> draws, double p) {
  std::sort(draws.begin(), draws.end());
  return quantile_sorted(draws, p);
}

namespace diag_detail {

inline double sample_mean(const std::vector<double>& x) {
  double s = 0.0;
  for (double v : x) s += v;
  return s / static_cast<double>(x.size());
}

inline double sample_variance(const std::vector<double>& x, double mean) {
  double s = 0.0;
  for (double v : x) s += (v - mean) * (v - mean);
  return s / static_cast<double>(x.size() - 1);
}

// Biased (1/n) autocovariance of one chain at the given lag.
inline double autocovariance(const std::vector<double>& x, double mean, std::size_t lag) {
  const std::size_t n = x.size();
  double s = 0.0;
  for (std::size_t i = 0; i + lag < n; ++i) s += (x[i] - mean) * (x[i + lag] - mean);
  return s / static_cast<double>(n);
}

inline void require_rectangular(const std::vector<std::vector<double>>& chains,
                                std::size_t min_draws, const char* who) {
  if (chains.empty()) throw std::invalid_argument(std::string(who) + " needs at least one chain");
  for (const auto& c : chains) {
    if (c.size() != chains.front().size())
      throw std::invalid_argument(std::string(who) + " needs equal-length chains");
    if (c.size() < min_draws)
      throw std::invalid_argument(std::string(who) + " needs at least " +
                                  std::to_string(min_draws) + " draws per chain");
  }
}

inline double nan_marker() { return std::numeric_limits<double>::quiet_NaN(); }

}  // namespace diag_detail

// Split-chain potential scale reduction.  Every chain is split in half (the
// middle draw of an odd-length chain is dropped) and R-hat is computed over
// the half-chains.  Constant input reports NaN and sets *warning.
inline double split_rhat(const std::vector<std::vector<double>>& chains,
                         std::string* warning = nullptr) {
  if (chains.size() < 2) throw std::invalid_argument("split_rhat needs at least 2 chains");
  diag_detail::require_rectangular(chains, 8, "split_rhat");

  std::vector<std::vector<double>> halves;
  const std::size_t n_half = chains.front().size() / 2;
  for (const auto& c : chains) {
    halves.emplace_back(c.begin(), c.begin() + static_cast<std::ptrdiff_t>(n_half));
    halves.emplace_back(c.end() - static_cast<std::ptrdiff_t>(n_half), c.end());
  }

  const double m = static_cast<double>(halves.size());
  const double n = static_cast<double>(n_half);
  std::vector<double> means(halves.size());
  double w = 0.0;
  for (std::size_t j = 0; j < halves.size(); ++j) {
    means[j] = diag_detail::sample_mean(halves[j]);
    w += diag_detail::sample_variance(halves[j], means[j]);
  }
  w /= m;
  const double grand = diag_detail::sample_mean(means);
  const double b = n * diag_detail::sample_variance(means, grand);

  if (!(w > 0.0)) {
    if (warning) *warning = "zero within-chain variance; R-hat undefined";
    return diag_detail::nan_marker();
  }
  const double var_plus = (n - 1.0) / n * w + b / n;
  return std::sqrt(var_plus / w);
}

// Multi-chain effective sample size with Geyer initial-monotone truncation.
// Capped at 1.5x the total number of draws; constant input reports 0 and
// sets *warning.
inline double ess(const std::vector<std::vector<double>>& chains,
                  std::string* warning = nullptr) {
  diag_detail::require_rectangular(chains, 4, "ess");
  const std::size_t m = chains.size();
  const std::size_t n = chains.front().size();

  std::vector<double> means(m), vars(m);
  for (std::size_t j = 0; j < m; ++j) {
    means[j] = diag_detail::sample_mean(chains[j]);
    vars[j] = diag_detail::sample_variance(chains[j], means[j]);
  }
  double mean_var = 0.0;
  for (double v : vars) mean_var += v;
  mean_var /= static_cast<double>(m);

  if (!(mean_var > 0.0)) {
    if (warning) *warning = "zero variance; effective sample size undefined";
    return 0.0;
  }

  double var_plus = mean_var * static_cast<double>(n - 1) / static_cast<double>(n);
  if (m > 1) {
    const double grand = diag_detail::sample_mean(means);
    var_plus += diag_detail::sample_variance(means, grand);
  }

  // multi-chain autocorrelation at one lag, computed on demand
  auto rho = [&](std::size_t lag) {
    double acov = 0.0;
    for (std::size_t j = 0; j < m; ++j)
      acov += diag_detail::autocovariance(chains[j], means[j], lag);
    acov /= static_cast<double>(m);
    return 1.0 - (mean_var - acov) / var_plus;
  };

  // Geyer pairing: accumulate pair sums rho(2k) + rho(2k+1) while positive,
  // enforcing a non-increasing sequence
  double tau = -1.0;
  double prev_pair = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; 2 * k + 1 < n; ++k) {
    double pair = rho(2 * k) + rho(2 * k + 1);
    if (k > 0 && !(pair > 0.0)) break;
    pair = std::min(pair, prev_pair);
    prev_pair = pair;
    tau += 2.0 * pair;
  }

  const double total = static_cast<double>(m) * static_cast<double>(n);
  const double cap = 1.5 * total;
  if (!(tau > 0.0)) return cap;  // super-efficient (antithetic) draws
  return std::min(total / tau, cap);
}

// Canonical echo of a parsed formula: "lhs ~ a + b" or "lhs ~ 1".
inline std::string format_formula(const Formula& f) {
  std::string out = f.lhs + " ~ ";
  if (f.rhs.empty()) return out + "1";
  for (std::size_t i = 0; i < f.rhs.size(); ++i) {
    if (i > 0) out += " + ";
    out += f.rhs[i];
  }
  return out;
}

// Full posterior summary in reporting order (the draws' parameter order).
// The leading run of regression coefficients (beta_* and, for gaussian
// outcomes, sigma) forms the printed coefficient table.
inline FitSummary summarize(const PosteriorDraws& draws, const ModelSpec& spec,
                            const Dataset& data) {
  if (draws.n_chains < 1 || draws.n_draws < 1)
    throw std::invalid_argument("summarize needs at least one chain of draws");
  FitSummary s;
  s.n_subjects = static_cast<int>(data.n_subjects());
  s.n_trials = static_cast<int>(data.n_trials());
  for (const Formula& f : spec.ddm) s.model_lines.push_back(format_formula(f));
  if (spec.regression) s.model_lines.push_back(format_formula(*spec.regression));
  s.family = family_name(spec.family);
  s.chains = draws.n_chains;
  s.warmup = draws.warmup;
  s.iterations = draws.iterations;
  for (const ChainDiagnostics& d : draws.diags)
    s.elapsed_seconds = std::max(s.elapsed_seconds, d.elapsed_seconds);

  const bool can_rhat = draws.n_chains >= 2 && draws.n_draws >= 8;
  if (!can_rhat)
    s.warnings.push_back("R-hat requires at least 2 chains of 8 draws; reported as NaN");

  std::vector<double> pooled;
  std::vector<std::vector<double>> per_chain(static_cast<std::size_t>(draws.n_chains));
  for (int k = 0; k < draws.n_params; ++k) {
    ParameterSummary p;
    p.name = draws.names[static_cast<std::size_t>(k)];

    pooled.clear();
    for (int c = 0; c < draws.n_chains; ++c) {
      per_chain[static_cast<std::size_t>(c)] = draws.series(c, k);
      const auto& series = per_chain[static_cast<std::size_t>(c)];
      pooled.insert(pooled.end(), series.begin(), series.end());
    }

    const double mean = diag_detail::sample_mean(pooled);
    p.mean = mean;
    p.sd = pooled.size() > 1 ? std::sqrt(diag_detail::sample_variance(pooled, mean)) : 0.0;
    std::sort(pooled.begin(), pooled.end());
    p.q025 = quantile_sorted(pooled, 0.025);
    p.q975 = quantile_sorted(pooled, 0.975);

    std::string warn;
    p.n_eff = ess(per_chain, &warn);
    if (!warn.empty()) s.warnings.push_back(p.name + ": " + warn);

    warn.clear();
    p.rhat = can_rhat ? split_rhat(per_chain, &warn) : diag_detail::nan_marker();
    if (!warn.empty()) s.warnings.push_back(p.name + ": " + warn);

    s.parameters.push_back(std::move(p));
  }

  while (s.n_coefficients < static_cast<int>(s.parameters.size())) {
    const std::string& name = s.parameters[static_cast<std::size_t>(s.n_coefficients)].name;
    if (name.rfind("beta_", 0) != 0 && name != "sigma") break;
    ++s.n_coefficients;
  }

  s.max_rhat = diag_detail::nan_marker();
  for (const ParameterSummary& p : s.parameters) {
    if (std::isfinite(p.rhat) && !(s.max_rhat >= p.rhat)) s.max_rhat = p.rhat;
  }
  return s;
}

namespace diag_detail {

inline std::string fmt(double v, const char* spec) {
  if (std::isnan(v)) return "NaN";
  char buf[64];
  std::snprintf(buf, sizeof(buf), spec, v);
  return buf;
}

inline void append_row(std::string& out, const std::vector<std::string>& cells,
                       const std::vector<std::size_t>& widths) {
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (i > 0) out += ' ';
    out.append(widths[i] - cells[i].size(), ' ');
    out += cells[i];
  }
  out += '\n';
}

}  // namespace diag_detail

// Plain-text report: header block, regression coefficient table, maximum
// R-hat footer.  Byte-stable for fixed inputs (golden-file tested).
inline std::string render_report(const FitSummary& s) {
  std::string out;
  out += "RegDDM Model Summary\n";
  out += "Number of subjects: " + std::to_string(s.n_subjects) + "\n";
  out += "Number of trials: " + std::to_string(s.n_trials) + "\n";
  out += "Model:\n";
  for (const std::string& line : s.model_lines) out += "  " + line + "\n";
  out += "Family: " + s.family + "\n";
  out += "Sampling: " + std::to_string(s.chains) + " chains, " + std::to_string(s.warmup) +
         " warmups and " + std::to_string(s.iterations) +
         " iterations were used. Longest elapsed time is " +
         std::to_string(static_cast<long long>(std::llround(s.elapsed_seconds))) + " s.\n";
  out += "\n";
  out += "Regression coefficients:\n";

  std::vector<std::vector<std::string>> rows;
  rows.push_back({"", "variable", "mean", "sd", "2.5%", "97.5%", "n_eff", "R-hat"});
  for (int i = 0; i < s.n_coefficients; ++i) {
    const ParameterSummary& p = s.parameters[static_cast<std::size_t>(i)];
    rows.push_back({std::to_string(i + 1), p.name, diag_detail::fmt(p.mean, "%.4f"),
                    diag_detail::fmt(p.sd, "%.4f"), diag_detail::fmt(p.q025, "%.4f"),
                    diag_detail::fmt(p.q975, "%.4f"), diag_detail::fmt(p.n_eff, "%.0f"),
                    diag_detail::fmt(p.rhat, "%.3f")});
  }
  std::vector<std::size_t> widths(rows.front().size(), 0);
  for (const auto& row : rows)
    for (std::size_t i = 0; i < row.size(); ++i) widths[i] = std::max(widths[i], row[i].size());
  for (const auto& row : rows) diag_detail::append_row(out, row, widths);

  out += "Maximum R-hat: " + diag_detail::fmt(s.max_rhat, "%.3f") + "\n";
  return out;
}

}  // namespace regddm

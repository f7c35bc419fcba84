#pragma once

// Result persistence: text report, machine-readable parameter summary,
// optional full draws (lossless round-trip at full float precision), and a
// truth-comparison file for simulation studies.  All files are byte-stable
// given identical inputs.  Missing numeric values (NaN) are written as NA,
// matching the ingestion convention.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "regddm/diagnostics.hpp"
#include "regddm/sampler.hpp"

namespace regddm {

namespace results_detail {

inline std::string g17(double v) {
  if (std::isnan(v)) return "NA";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  return out;
}

}  // namespace results_detail

inline void write_text(const std::string& path, const std::string& content) {
  auto out = results_detail::open_out(path);
  out << content;
  if (!out) throw std::runtime_error("write failed for '" + path + "'");
}

// One record per parameter with every summary column.
inline void write_summary_csv(const std::string& path, const FitSummary& s) {
  auto out = results_detail::open_out(path);
  out << "variable,mean,sd,q2.5,q97.5,n_eff,rhat\n";
  for (const ParameterSummary& p : s.parameters) {
    out << p.name << ',' << results_detail::g17(p.mean) << ',' << results_detail::g17(p.sd)
        << ',' << results_detail::g17(p.q025) << ',' << results_detail::g17(p.q975) << ','
        << results_detail::g17(p.n_eff) << ',' << results_detail::g17(p.rhat) << '\n';
  }
}

// Long format: one row per chain x iteration x parameter.
inline void write_draws_csv(const std::string& path, const PosteriorDraws& draws) {
  auto out = results_detail::open_out(path);
  out << "chain,iteration,parameter,value\n";
  for (int c = 0; c < draws.n_chains; ++c)
    for (int d = 0; d < draws.n_draws; ++d)
      for (int k = 0; k < draws.n_params; ++k)
        out << (c + 1) << ',' << (d + 1) << ',' << draws.names[static_cast<std::size_t>(k)]
            << ',' << results_detail::g17(draws.value(c, d, k)) << '\n';
}

// Inverse of write_draws_csv; values round-trip exactly.  Only the draw grid
// is recoverable from the file (warmup/iteration counts are not stored).
inline PosteriorDraws read_draws_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read '" + path + "'");
  std::string line;
  if (!std::getline(in, line) || line != "chain,iteration,parameter,value")
    throw std::runtime_error("'" + path + "' is not a draws file (unexpected header)");

  PosteriorDraws out;
  struct Row {
    int chain, iter, param;
    double value;
  };
  std::vector<Row> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string chain_s, iter_s, name, value_s;
    if (!std::getline(ss, chain_s, ',') || !std::getline(ss, iter_s, ',') ||
        !std::getline(ss, name, ',') || !std::getline(ss, value_s))
      throw std::runtime_error(path + ": malformed line " + std::to_string(line_no));
    int param = -1;
    for (std::size_t k = 0; k < out.names.size(); ++k)
      if (out.names[k] == name) param = static_cast<int>(k);
    if (param < 0) {
      param = static_cast<int>(out.names.size());
      out.names.push_back(name);
    }
    Row r;
    r.chain = std::atoi(chain_s.c_str());
    r.iter = std::atoi(iter_s.c_str());
    r.param = param;
    r.value = std::strtod(value_s.c_str(), nullptr);
    if (r.chain < 1 || r.iter < 1)
      throw std::runtime_error(path + ": bad chain/iteration at line " + std::to_string(line_no));
    out.n_chains = std::max(out.n_chains, r.chain);
    out.n_draws = std::max(out.n_draws, r.iter);
    rows.push_back(r);
  }
  out.n_params = static_cast<int>(out.names.size());
  if (rows.size() != static_cast<std::size_t>(out.n_chains) *
                         static_cast<std::size_t>(out.n_draws) *
                         static_cast<std::size_t>(out.n_params))
    throw std::runtime_error(path + ": incomplete draw grid");
  out.chains.assign(static_cast<std::size_t>(out.n_chains),
                    std::vector<double>(static_cast<std::size_t>(out.n_draws) *
                                        static_cast<std::size_t>(out.n_params)));
  out.diags.resize(static_cast<std::size_t>(out.n_chains));
  for (const Row& r : rows)
    out.chains[static_cast<std::size_t>(r.chain - 1)]
              [static_cast<std::size_t>(r.iter - 1) * static_cast<std::size_t>(out.n_params) +
               static_cast<std::size_t>(r.param)] = r.value;
  return out;
}

// Per-subject estimates against simulation truth, long format.
inline void write_truth_comparison(const std::string& path,
                                   const std::vector<std::string>& subject_ids,
                                   const std::vector<std::string>& terms,
                                   const std::vector<std::vector<double>>& estimates,
                                   const std::vector<std::string>& truth_columns,
                                   const std::vector<std::vector<double>>& truth_data) {
  auto out = results_detail::open_out(path);
  out << "id,parameter,truth,estimate\n";
  for (std::size_t t = 0; t < terms.size(); ++t) {
    const std::vector<double>* truth = nullptr;
    for (std::size_t c = 0; c < truth_columns.size(); ++c)
      if (truth_columns[c] == terms[t]) truth = &truth_data[c];
    if (!truth) continue;  // no recorded truth for this term
    for (std::size_t i = 0; i < subject_ids.size(); ++i)
      out << subject_ids[i] << ',' << terms[t] << ',' << results_detail::g17((*truth)[i])
          << ',' << results_detail::g17(estimates[t][i]) << '\n';
  }
}

// Standard fit output set: report.txt, summary.csv and (optionally) draws.csv
// under dir, which is created if needed.
inline void write_results(const std::string& dir, const FitSummary& summary,
                          const PosteriorDraws& draws, bool include_draws = true) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create output directory '" + dir + "'");
  write_text((fs::path(dir) / "report.txt").string(), render_report(summary));
  write_summary_csv((fs::path(dir) / "summary.csv").string(), summary);
  if (include_draws) write_draws_csv((fs::path(dir) / "draws.csv").string(), draws);
}

}  // namespace regddm

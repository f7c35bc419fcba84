#pragma once

// Replicated generate -> fit -> score harness behind the experiment command.
//
// Each (condition, replication) task generates a dataset with a seed derived
// from (base seed, task index), fits the scenario's model, optionally runs
// the two-step baseline on the same data, and writes one record file.  The
// presence of a record file is the checkpoint: finished replications are
// skipped on resume, so interrupted experiments pick up where they stopped.
// Records are aggregated per condition into plot-ready CSV tables.

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "regddm/design.hpp"
#include "regddm/diagnostics.hpp"
#include "regddm/fit.hpp"
#include "regddm/formula.hpp"
#include "regddm/model.hpp"
#include "regddm/results.hpp"
#include "regddm/simulate.hpp"
#include "regddm/twostep.hpp"

namespace regddm {

struct ExperimentConfig {
  std::string scenario = "sim1-outcome";
  int replications = 30;
  std::vector<int> subjects_grid = {50};
  std::vector<int> trials_grid = {50};
  std::vector<int> q_grid = {0};  // sim2 only; a single 0 otherwise
  SamplerConfig sampler = default_fit_config();
  bool run_twostep = true;  // baseline runs for the sim1 scenarios
  unsigned long long seed = 1;
  std::string out_dir = "experiment_out";
  int threads = 1;  // replication-level parallelism
};

struct ReplicationRecord {
  std::string scenario;
  int subjects = 0, trials = 0, q = 0, replication = 0;
  unsigned long long seed = 0;
  std::string focal;  // the scenario's focal regression coefficient
  double beta_mean = 0.0, beta_sd = 0.0;
  double beta_twostep = std::numeric_limits<double>::quiet_NaN();
  double beta_twostep_se = std::numeric_limits<double>::quiet_NaN();
  double twostep_p = std::numeric_limits<double>::quiet_NaN();
  double mse_v0 = std::numeric_limits<double>::quiet_NaN();
  double mse_v0_twostep = std::numeric_limits<double>::quiet_NaN();
  double max_rhat = 0.0;
  int divergences = 0;
  double wall_seconds = 0.0;  // RegDDM fit only (the scaling measurements)
};

namespace experiment_detail {

inline std::string focal_coefficient(const std::string& scenario, int q) {
  if (scenario == "sim1-outcome") return "beta_u";
  if (scenario == "sim1-predictor") return "beta_v_0";
  return q >= 1 ? "beta_v_x1" : "beta_v_0";
}

inline int find_param(const PosteriorDraws& draws, const std::string& name) {
  for (std::size_t k = 0; k < draws.names.size(); ++k)
    if (draws.names[k] == name) return static_cast<int>(k);
  throw std::logic_error("parameter '" + name + "' not found in the posterior draws");
}

inline void param_moments(const PosteriorDraws& draws, int k, double& mean, double& sd) {
  const double total = static_cast<double>(draws.n_chains) * static_cast<double>(draws.n_draws);
  mean = 0.0;
  for (int c = 0; c < draws.n_chains; ++c)
    for (int d = 0; d < draws.n_draws; ++d) mean += draws.value(c, d, k);
  mean /= total;
  double ss = 0.0;
  for (int c = 0; c < draws.n_chains; ++c)
    for (int d = 0; d < draws.n_draws; ++d) {
      const double e = draws.value(c, d, k) - mean;
      ss += e * e;
    }
  sd = std::sqrt(ss / (total - 1.0));
}

inline double subject_mse(const PosteriorDraws& draws, const std::string& term,
                          const Simulation& sim) {
  const std::vector<double>* truth = nullptr;
  for (std::size_t c = 0; c < sim.truth_columns.size(); ++c)
    if (sim.truth_columns[c] == term) truth = &sim.truth_data[c];
  if (!truth) return std::numeric_limits<double>::quiet_NaN();
  double mse = 0.0;
  const int n = sim.n_subjects();
  for (int i = 0; i < n; ++i) {
    const int k = find_param(draws, term + "[" + std::to_string(i + 1) + "]");
    double mean, sd;
    param_moments(draws, k, mean, sd);
    const double e = mean - (*truth)[static_cast<std::size_t>(i)];
    mse += e * e;
  }
  return mse / static_cast<double>(n);
}

inline unsigned long long task_seed(unsigned long long base, std::size_t task_index) {
  return base ^ (0x9E3779B97F4A7C15ull * (static_cast<unsigned long long>(task_index) + 1ull));
}

inline std::string record_name(const ReplicationRecord& r) {
  return r.scenario + "_N" + std::to_string(r.subjects) + "_n" + std::to_string(r.trials) +
         "_q" + std::to_string(r.q) + "_r" + std::to_string(r.replication) + ".csv";
}

inline const char* record_header() {
  return "scenario,subjects,trials,q,replication,seed,focal,beta_mean,beta_sd,beta_twostep,"
         "beta_twostep_se,twostep_p,mse_v0,mse_v0_twostep,max_rhat,divergences,wall_seconds";
}

inline void write_record(const std::string& path, const ReplicationRecord& r) {
  auto out = results_detail::open_out(path);
  out << record_header() << '\n'
      << r.scenario << ',' << r.subjects << ',' << r.trials << ',' << r.q << ','
      << r.replication << ',' << r.seed << ',' << r.focal << ','
      << results_detail::g17(r.beta_mean) << ',' << results_detail::g17(r.beta_sd) << ','
      << results_detail::g17(r.beta_twostep) << ',' << results_detail::g17(r.beta_twostep_se)
      << ',' << results_detail::g17(r.twostep_p) << ',' << results_detail::g17(r.mse_v0) << ','
      << results_detail::g17(r.mse_v0_twostep) << ',' << results_detail::g17(r.max_rhat) << ','
      << r.divergences << ',' << results_detail::g17(r.wall_seconds) << '\n';
}

inline double parse_na(const std::string& s) {
  return s == "NA" ? std::numeric_limits<double>::quiet_NaN() : std::strtod(s.c_str(), nullptr);
}

inline bool read_record(const std::string& path, ReplicationRecord& r) {
  std::ifstream in(path);
  if (!in) return false;
  std::string header, line;
  if (!std::getline(in, header) || header != record_header() || !std::getline(in, line))
    return false;
  std::vector<std::string> f;
  std::istringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) f.push_back(cell);
  if (f.size() != 17) return false;
  r.scenario = f[0];
  r.subjects = std::atoi(f[1].c_str());
  r.trials = std::atoi(f[2].c_str());
  r.q = std::atoi(f[3].c_str());
  r.replication = std::atoi(f[4].c_str());
  r.seed = std::strtoull(f[5].c_str(), nullptr, 10);
  r.focal = f[6];
  r.beta_mean = parse_na(f[7]);
  r.beta_sd = parse_na(f[8]);
  r.beta_twostep = parse_na(f[9]);
  r.beta_twostep_se = parse_na(f[10]);
  r.twostep_p = parse_na(f[11]);
  r.mse_v0 = parse_na(f[12]);
  r.mse_v0_twostep = parse_na(f[13]);
  r.max_rhat = parse_na(f[14]);
  r.divergences = std::atoi(f[15].c_str());
  r.wall_seconds = parse_na(f[16]);
  return true;
}

}  // namespace experiment_detail

// One generate -> fit -> score replication, fully determined by its inputs.
inline ReplicationRecord run_replication(const std::string& scenario, int subjects, int trials,
                                         int q, int replication, unsigned long long seed,
                                         const SamplerConfig& sampler_cfg, bool run_twostep) {
  SimConfig sc;
  sc.scenario = scenario;
  sc.subjects = subjects;
  sc.trials = trials;
  sc.q = q;
  sc.seed = seed;
  const Simulation sim = generate(sc);
  const Dataset data = dataset_from_simulation(sim);

  ReplicationRecord rec;
  rec.scenario = scenario;
  rec.subjects = subjects;
  rec.trials = trials;
  rec.q = q;
  rec.replication = replication;
  rec.seed = seed;
  rec.focal = experiment_detail::focal_coefficient(scenario, q);

  const ModelSpec spec = parse_model_spec(sim.model);
  const Model model(spec, build_design(spec, data));
  SamplerConfig cfg = sampler_cfg;
  cfg.seed = seed;

  const auto fit_start = std::chrono::steady_clock::now();
  const PosteriorDraws draws = fit_model(model, cfg);
  rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - fit_start).count();

  const int k = experiment_detail::find_param(draws, rec.focal);
  experiment_detail::param_moments(draws, k, rec.beta_mean, rec.beta_sd);
  rec.mse_v0 = experiment_detail::subject_mse(draws, "v_0", sim);
  for (const ChainDiagnostics& d : draws.diags) rec.divergences += d.divergences;
  const FitSummary summary = summarize(draws, spec, data);
  rec.max_rhat = summary.max_rhat;

  if (run_twostep && scenario != "sim2") {
    const DdmOnlyFit first = fit_ddm_only(ddm_only_spec({}), data, cfg);
    std::size_t vi = 0;
    for (std::size_t t = 0; t < first.terms.size(); ++t)
      if (first.terms[t] == "v_0") vi = t;
    const std::vector<double>& v0_hat = first.means[vi];

    const std::vector<double>* truth_v0 = nullptr;
    for (std::size_t c = 0; c < sim.truth_columns.size(); ++c)
      if (sim.truth_columns[c] == "v_0") truth_v0 = &sim.truth_data[c];
    if (truth_v0) {
      double mse = 0.0;
      for (std::size_t i = 0; i < v0_hat.size(); ++i) {
        const double e = v0_hat[i] - (*truth_v0)[i];
        mse += e * e;
      }
      rec.mse_v0_twostep = mse / static_cast<double>(v0_hat.size());
    }

    if (scenario == "sim1-outcome") {
      const Column* u = data.subjects.find("u");
      const OlsFit second = ols_fit(v0_hat, {u->num}, {"u"});
      rec.beta_twostep = second.coef[1];
      rec.beta_twostep_se = second.se[1];
      rec.twostep_p = second.p[1];
    } else {  // sim1-predictor: y regressed on the estimated v_0
      const Column* y = data.subjects.find("y");
      const OlsFit second = ols_fit(y->num, {v0_hat}, {"v_0"});
      rec.beta_twostep = second.coef[1];
      rec.beta_twostep_se = second.se[1];
      rec.twostep_p = second.p[1];
    }
  }
  return rec;
}

// Grid x replications driver with per-record checkpointing and resume.
// Returns all records in deterministic (condition-major, replication-minor)
// order and writes records.csv plus aggregate.csv under cfg.out_dir.
inline std::vector<ReplicationRecord> run_experiment(const ExperimentConfig& cfg) {
  namespace fs = std::filesystem;
  if (cfg.replications < 1) throw std::invalid_argument("need at least 1 replication");
  if (cfg.subjects_grid.empty() || cfg.trials_grid.empty() || cfg.q_grid.empty())
    throw std::invalid_argument("experiment grids must be non-empty");
  const fs::path records_dir = fs::path(cfg.out_dir) / "records";
  std::error_code ec;
  fs::create_directories(records_dir, ec);
  if (ec) throw std::runtime_error("cannot create '" + records_dir.string() + "'");

  struct Task {
    int subjects, trials, q, replication;
    unsigned long long seed;
  };
  std::vector<Task> tasks;
  for (int n_subj : cfg.subjects_grid)
    for (int n_tri : cfg.trials_grid)
      for (int q : cfg.q_grid)
        for (int r = 0; r < cfg.replications; ++r) {
          Task t{n_subj, n_tri, q, r, 0};
          t.seed = experiment_detail::task_seed(cfg.seed, tasks.size());
          tasks.push_back(t);
        }

  std::vector<ReplicationRecord> records(tasks.size());
  std::vector<char> done(tasks.size(), 0);
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    ReplicationRecord probe;
    probe.scenario = cfg.scenario;
    probe.subjects = tasks[i].subjects;
    probe.trials = tasks[i].trials;
    probe.q = tasks[i].q;
    probe.replication = tasks[i].replication;
    const fs::path p = records_dir / experiment_detail::record_name(probe);
    if (experiment_detail::read_record(p.string(), records[i])) done[i] = 1;
  }

  const int threads = std::max(1, cfg.threads);
  auto worker = [&](int w) {
    for (std::size_t i = static_cast<std::size_t>(w); i < tasks.size();
         i += static_cast<std::size_t>(threads)) {
      if (done[i]) continue;
      const Task& t = tasks[i];
      records[i] = run_replication(cfg.scenario, t.subjects, t.trials, t.q, t.replication,
                                   t.seed, cfg.sampler, cfg.run_twostep);
      const fs::path p = records_dir / experiment_detail::record_name(records[i]);
      experiment_detail::write_record(p.string(), records[i]);
    }
  };
  if (threads == 1) {
    worker(0);
  } else {
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(threads));
    for (int w = 0; w < threads; ++w)
      pool.emplace_back([&, w] {
        try {
          worker(w);
        } catch (...) {
          errors[static_cast<std::size_t>(w)] = std::current_exception();
        }
      });
    for (auto& th : pool) th.join();
    for (const auto& e : errors)
      if (e) std::rethrow_exception(e);
  }

  // all-records table
  {
    auto out = results_detail::open_out((fs::path(cfg.out_dir) / "records.csv").string());
    out << experiment_detail::record_header() << '\n';
    for (const ReplicationRecord& r : records) {
      std::ifstream in((records_dir / experiment_detail::record_name(r)).string());
      std::string header, line;
      std::getline(in, header);
      std::getline(in, line);
      out << line << '\n';
    }
  }

  // per-condition aggregates (plot-ready)
  {
    auto out = results_detail::open_out((fs::path(cfg.out_dir) / "aggregate.csv").string());
    out << "scenario,subjects,trials,q,replications,focal,beta_mean,beta_spread,"
           "mean_posterior_sd,beta_twostep_mean,mse_v0_mean,mse_v0_twostep_mean,"
           "max_rhat,total_divergences,mean_wall_seconds\n";
    for (int n_subj : cfg.subjects_grid)
      for (int n_tri : cfg.trials_grid)
        for (int q : cfg.q_grid) {
          std::vector<const ReplicationRecord*> group;
          for (const ReplicationRecord& r : records)
            if (r.subjects == n_subj && r.trials == n_tri && r.q == q) group.push_back(&r);
          if (group.empty()) continue;
          const double m = static_cast<double>(group.size());
          double beta = 0.0, psd = 0.0, two = 0.0, mse = 0.0, mse2 = 0.0, wall = 0.0,
                 worst = 0.0;
          int divs = 0, two_n = 0, mse2_n = 0;
          for (const ReplicationRecord* r : group) {
            beta += r->beta_mean;
            psd += r->beta_sd;
            mse += r->mse_v0;
            wall += r->wall_seconds;
            divs += r->divergences;
            if (std::isfinite(r->beta_twostep)) {
              two += r->beta_twostep;
              ++two_n;
            }
            if (std::isfinite(r->mse_v0_twostep)) {
              mse2 += r->mse_v0_twostep;
              ++mse2_n;
            }
            if (std::isfinite(r->max_rhat)) worst = std::max(worst, r->max_rhat);
          }
          beta /= m;
          psd /= m;
          mse /= m;
          wall /= m;
          double spread = 0.0;
          for (const ReplicationRecord* r : group)
            spread += (r->beta_mean - beta) * (r->beta_mean - beta);
          spread = group.size() > 1 ? std::sqrt(spread / (m - 1.0)) : 0.0;
          out << cfg.scenario << ',' << n_subj << ',' << n_tri << ',' << q << ','
              << group.size() << ',' << group.front()->focal << ','
              << results_detail::g17(beta) << ',' << results_detail::g17(spread) << ','
              << results_detail::g17(psd) << ','
              << results_detail::g17(two_n ? two / two_n : std::numeric_limits<double>::quiet_NaN())
              << ',' << results_detail::g17(mse) << ','
              << results_detail::g17(mse2_n ? mse2 / mse2_n
                                            : std::numeric_limits<double>::quiet_NaN())
              << ',' << results_detail::g17(worst) << ',' << divs << ','
              << results_detail::g17(wall) << '\n';
        }
  }
  return records;
}

}  // namespace regddm

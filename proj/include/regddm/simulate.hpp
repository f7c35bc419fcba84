#pragma once

// Synthetic data generators for the three simulation scenarios, plus a
// writer producing the standard subject/trial CSV pair and a truth CSV with
// every latent subject parameter (for exact estimator-error computation).
//
// Scenario recipes (subject parameters first, then trials subject by subject,
// so the subject-level draws do not depend on the trial count):
//  - sim1-outcome:   u ~ N(0, 0.5^2), a0 ~ U(1,3), t0 ~ U(0.2,0.5),
//                    z0 ~ U(0.4,0.6), v0 ~ N(1.5 + u, 0.5^2); no trial
//                    covariates; subject table carries u.
//  - sim1-predictor: as above with v0 ~ N(1.5, 0.5^2) and outcome
//                    y ~ N(v0, 0.5^2); subject table carries y.
//  - sim2:           a0/t0/z0/v0 as above; q in {0,1,2} trial covariates
//                    x1[, x2] ~ U(-sqrt(3), sqrt(3)) with per-subject slopes
//                    v_x1[, v_x2] ~ N(0,1); trial drift v0 + x1 v_x1 [+ x2
//                    v_x2]; outcome y ~ N(0,1) (null effects).

#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "regddm/rng.hpp"
#include "regddm/table.hpp"
#include "regddm/wfpt.hpp"

namespace regddm {

struct SimConfig {
  int subjects = 50;
  int trials = 100;
  int q = 0;  // trial-level covariates (sim2 only)
  std::string scenario = "sim1-outcome";
  unsigned long long seed = 1;
};

// One generated dataset in columnar form, plus the latent truth and the
// model formulas the scenario is designed to be fit with.
struct Simulation {
  std::vector<std::string> subject_columns;        // besides id
  std::vector<std::vector<double>> subject_data;   // [column][subject]
  std::vector<std::string> trial_columns;          // covariates, besides id/response/rt
  std::vector<std::vector<double>> trial_data;     // [column][trial]
  std::vector<int> trial_subject;                  // 0-based subject index per trial
  std::vector<double> response;                    // per trial, 0 or 1
  std::vector<double> rt;                          // per trial
  std::vector<std::string> truth_columns;          // latent subject parameters
  std::vector<std::vector<double>> truth_data;     // [column][subject]
  std::vector<std::string> model;                  // formulas for fitting this scenario

  int n_subjects() const { return static_cast<int>(truth_data.empty() ? 0 : truth_data[0].size()); }
  int n_trials() const { return static_cast<int>(rt.size()); }
};

namespace sim_detail {

struct SubjectParams {
  double a0 = 0.0, t0 = 0.0, z0 = 0.0, v0 = 0.0;
};

inline SubjectParams base_params(Rng& rng) {
  SubjectParams p;
  p.a0 = rng.uniform(1.0, 3.0);
  p.t0 = rng.uniform(0.2, 0.5);
  p.z0 = rng.uniform(0.4, 0.6);
  return p;
}

inline void sample_trials(Simulation& sim, const std::vector<SubjectParams>& subjects,
                          const std::vector<double>* v_trial, int trials, Rng& rng) {
  for (std::size_t i = 0; i < subjects.size(); ++i) {
    DdmParams p{subjects[i].a0, subjects[i].t0, subjects[i].z0, subjects[i].v0};
    for (int j = 0; j < trials; ++j) {
      if (v_trial) p.v = (*v_trial)[i * static_cast<std::size_t>(trials) + static_cast<std::size_t>(j)];
      const TrialOutcome out = ddm_sample(p, rng);
      sim.trial_subject.push_back(static_cast<int>(i));
      sim.response.push_back(out.response);
      sim.rt.push_back(out.rt);
    }
  }
}

inline void store_truth(Simulation& sim, const std::vector<SubjectParams>& subjects) {
  const std::size_t n = subjects.size();
  std::vector<double> a0(n), t0(n), z0(n), v0(n);
  for (std::size_t i = 0; i < n; ++i) {
    a0[i] = subjects[i].a0;
    t0[i] = subjects[i].t0;
    z0[i] = subjects[i].z0;
    v0[i] = subjects[i].v0;
  }
  sim.truth_columns.insert(sim.truth_columns.end(), {"a_0", "t_0", "z_0", "v_0"});
  sim.truth_data.insert(sim.truth_data.end(), {a0, t0, z0, v0});
}

}  // namespace sim_detail

inline void validate(const SimConfig& cfg) {
  if (cfg.subjects < 1) throw std::invalid_argument("simulation needs at least 1 subject");
  if (cfg.trials < 1) throw std::invalid_argument("simulation needs at least 1 trial per subject");
  if (cfg.q < 0 || cfg.q > 2)
    throw std::invalid_argument("q must be 0, 1 or 2, got " + std::to_string(cfg.q));
  if (cfg.scenario != "sim1-outcome" && cfg.scenario != "sim1-predictor" &&
      cfg.scenario != "sim2")
    throw std::invalid_argument("unknown scenario '" + cfg.scenario +
                                "' (expected sim1-outcome, sim1-predictor or sim2)");
  if (cfg.scenario != "sim2" && cfg.q != 0)
    throw std::invalid_argument("scenario " + cfg.scenario + " has no trial-level variables");
}

// DDM parameters as the regression outcome: u predicts the baseline drift.
inline Simulation generate_sim1_outcome(const SimConfig& cfg, Rng& rng) {
  Simulation sim;
  const std::size_t n = static_cast<std::size_t>(cfg.subjects);
  std::vector<sim_detail::SubjectParams> subjects(n);
  std::vector<double> u(n);
  for (std::size_t i = 0; i < n; ++i) {
    u[i] = rng.normal(0.0, 0.5);
    subjects[i] = sim_detail::base_params(rng);
    subjects[i].v0 = rng.normal(1.5 + u[i], 0.5);
  }
  sim.subject_columns = {"u"};
  sim.subject_data = {u};
  sim_detail::store_truth(sim, subjects);
  sim.truth_columns.push_back("u");
  sim.truth_data.push_back(u);
  sim_detail::sample_trials(sim, subjects, nullptr, cfg.trials, rng);
  sim.model = {"v ~ 1", "v_0 ~ u"};
  return sim;
}

// DDM parameters as predictors: the baseline drift predicts the outcome y.
inline Simulation generate_sim1_predictor(const SimConfig& cfg, Rng& rng) {
  Simulation sim;
  const std::size_t n = static_cast<std::size_t>(cfg.subjects);
  std::vector<sim_detail::SubjectParams> subjects(n);
  std::vector<double> y(n);
  for (std::size_t i = 0; i < n; ++i) {
    subjects[i] = sim_detail::base_params(rng);
    subjects[i].v0 = rng.normal(1.5, 0.5);
    y[i] = rng.normal(subjects[i].v0, 0.5);
  }
  sim.subject_columns = {"y"};
  sim.subject_data = {y};
  sim_detail::store_truth(sim, subjects);
  sim.truth_columns.push_back("y");
  sim.truth_data.push_back(y);
  sim_detail::sample_trials(sim, subjects, nullptr, cfg.trials, rng);
  sim.model = {"v ~ 1", "y ~ v_0"};
  return sim;
}

// Null-effect grid scenario with q trial-level drift covariates.
inline Simulation generate_sim2(const SimConfig& cfg, Rng& rng) {
  Simulation sim;
  const std::size_t n = static_cast<std::size_t>(cfg.subjects);
  const double bound = std::sqrt(3.0);
  std::vector<sim_detail::SubjectParams> subjects(n);
  std::vector<std::vector<double>> slopes(static_cast<std::size_t>(cfg.q),
                                          std::vector<double>(n));
  std::vector<double> y(n);
  for (std::size_t i = 0; i < n; ++i) {
    subjects[i] = sim_detail::base_params(rng);
    subjects[i].v0 = rng.normal(1.5, 0.5);
    for (int k = 0; k < cfg.q; ++k) slopes[static_cast<std::size_t>(k)][i] = rng.normal();
    y[i] = rng.normal();
  }
  sim.subject_columns = {"y"};
  sim.subject_data = {y};
  sim_detail::store_truth(sim, subjects);
  for (int k = 0; k < cfg.q; ++k) {
    sim.truth_columns.push_back("v_x" + std::to_string(k + 1));
    sim.truth_data.push_back(slopes[static_cast<std::size_t>(k)]);
  }
  sim.truth_columns.push_back("y");
  sim.truth_data.push_back(y);

  // trial covariates and the composed per-trial drift, subject-major
  const std::size_t total = n * static_cast<std::size_t>(cfg.trials);
  sim.trial_data.assign(static_cast<std::size_t>(cfg.q), std::vector<double>(total));
  std::vector<double> v_trial(total);
  for (std::size_t i = 0; i < n; ++i) {
    for (int j = 0; j < cfg.trials; ++j) {
      const std::size_t t = i * static_cast<std::size_t>(cfg.trials) + static_cast<std::size_t>(j);
      double v = subjects[i].v0;
      for (int k = 0; k < cfg.q; ++k) {
        const double x = rng.uniform(-bound, bound);
        sim.trial_data[static_cast<std::size_t>(k)][t] = x;
        v += x * slopes[static_cast<std::size_t>(k)][i];
      }
      v_trial[t] = v;
    }
  }
  for (int k = 0; k < cfg.q; ++k) sim.trial_columns.push_back("x" + std::to_string(k + 1));
  sim_detail::sample_trials(sim, subjects, &v_trial, cfg.trials, rng);

  std::string ddm = "v ~ ", reg = "y ~ v_0";
  if (cfg.q == 0) ddm += "1";
  for (int k = 0; k < cfg.q; ++k) {
    const std::string x = "x" + std::to_string(k + 1);
    ddm += (k > 0 ? " + " : "") + x;
    reg += " + v_" + x;
  }
  sim.model = {ddm, reg};
  return sim;
}

// Dispatch on the configured scenario; pure given (config, seed).
inline Simulation generate(const SimConfig& cfg) {
  validate(cfg);
  Rng rng(cfg.seed, 0);
  if (cfg.scenario == "sim1-outcome") return generate_sim1_outcome(cfg, rng);
  if (cfg.scenario == "sim1-predictor") return generate_sim1_predictor(cfg, rng);
  return generate_sim2(cfg, rng);
}

// In-memory ingestion of a generated simulation (equivalent to writing the
// CSVs and reading them back, minus the disk round trip).
inline Dataset dataset_from_simulation(const Simulation& sim) {
  Dataset ds;
  ds.subjects.source = "simulation";
  ds.trials.source = "simulation";
  const int n = sim.n_subjects();
  for (int i = 0; i < n; ++i) ds.subjects.id.push_back(std::to_string(i + 1));
  for (std::size_t c = 0; c < sim.subject_columns.size(); ++c) {
    Column col;
    col.name = sim.subject_columns[c];
    col.num = sim.subject_data[c];
    col.missing.assign(static_cast<std::size_t>(n), false);
    ds.subjects.cols.push_back(std::move(col));
  }
  ds.subject_trials.resize(static_cast<std::size_t>(n));
  for (int t = 0; t < sim.n_trials(); ++t) {
    const int i = sim.trial_subject[static_cast<std::size_t>(t)];
    ds.trials.id.push_back(std::to_string(i + 1));
    ds.subject_trials[static_cast<std::size_t>(i)].push_back(t);
  }
  for (std::size_t c = 0; c < sim.trial_columns.size(); ++c) {
    Column col;
    col.name = sim.trial_columns[c];
    col.num = sim.trial_data[c];
    col.missing.assign(sim.rt.size(), false);
    ds.trials.cols.push_back(std::move(col));
  }
  // read_tables keeps response and rt as regular trial columns too
  for (const auto* pair : {&sim.response, &sim.rt}) {
    Column col;
    col.name = pair == &sim.response ? "response" : "rt";
    col.num = *pair;
    col.missing.assign(sim.rt.size(), false);
    ds.trials.cols.push_back(std::move(col));
  }
  ds.trial_subject = sim.trial_subject;
  ds.response = sim.response;
  ds.rt = sim.rt;
  return ds;
}

namespace sim_detail {

inline std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace sim_detail

// Write subjects.csv, trials.csv and truth.csv under dir (created if needed).
inline void write_simulation(const std::string& dir, const Simulation& sim) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);

  std::ofstream subj(fs::path(dir) / "subjects.csv");
  subj << "id";
  for (const auto& c : sim.subject_columns) subj << "," << c;
  subj << "\n";
  for (int i = 0; i < sim.n_subjects(); ++i) {
    subj << (i + 1);
    for (const auto& col : sim.subject_data) subj << "," << sim_detail::num(col[static_cast<std::size_t>(i)]);
    subj << "\n";
  }

  std::ofstream tri(fs::path(dir) / "trials.csv");
  tri << "id";
  for (const auto& c : sim.trial_columns) tri << "," << c;
  tri << ",response,rt\n";
  for (int t = 0; t < sim.n_trials(); ++t) {
    tri << (sim.trial_subject[static_cast<std::size_t>(t)] + 1);
    for (const auto& col : sim.trial_data) tri << "," << sim_detail::num(col[static_cast<std::size_t>(t)]);
    tri << "," << static_cast<int>(sim.response[static_cast<std::size_t>(t)]) << ","
        << sim_detail::num(sim.rt[static_cast<std::size_t>(t)]) << "\n";
  }

  std::ofstream truth(fs::path(dir) / "truth.csv");
  truth << "id";
  for (const auto& c : sim.truth_columns) truth << "," << c;
  truth << "\n";
  for (int i = 0; i < sim.n_subjects(); ++i) {
    truth << (i + 1);
    for (const auto& col : sim.truth_data) truth << "," << sim_detail::num(col[static_cast<std::size_t>(i)]);
    truth << "\n";
  }
}

}  // namespace regddm

// regddm: hierarchical drift-diffusion regression from the command line.
//
// Subcommands:
//   fit         fit the joint model to subject/trial CSVs and write a report
//   simulate    generate a synthetic dataset (with recorded ground truth)
//   twostep     the sequential baseline: DDM-only fit, then OLS or a t-test
//   experiment  replicated generate -> fit -> score runs over a design grid
//
// Exit codes: 0 success, 1 error, 2 finished but the convergence check
// failed (max split R-hat above the threshold, or not computable).

#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <iostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "regddm/diagnostics.hpp"
#include "regddm/experiment.hpp"
#include "regddm/fit.hpp"
#include "regddm/formula.hpp"
#include "regddm/model.hpp"
#include "regddm/results.hpp"
#include "regddm/sampler.hpp"
#include "regddm/simulate.hpp"
#include "regddm/table.hpp"
#include "regddm/twostep.hpp"

namespace {

using namespace regddm;

std::string one_line(std::string s) {
  for (std::size_t i = 0; i < s.size(); ++i)
    if (s[i] == '\n') s.replace(i, 1, "; ");
  return s;
}

int fail(const std::string& category, const std::string& what) {
  const std::string flat = one_line(what);
  std::cerr << "error: " << category << ": " << flat << '\n';
  if (flat != what) std::cerr << what << '\n';  // multi-line human detail
  return 1;
}

void print_warnings(const std::vector<std::string>& warnings, const std::string& kind) {
  for (const std::string& w : warnings) std::cerr << "warning: " << kind << ": " << w << '\n';
}

// 0 when the fit passes the R-hat gate, 2 (with a warning) otherwise.
int convergence_gate(double max_rhat, double threshold) {
  if (std::isfinite(max_rhat) && max_rhat <= threshold) return 0;
  char buf[160];
  if (std::isfinite(max_rhat))
    std::snprintf(buf, sizeof(buf),
                  "warning: convergence: max R-hat %.3f exceeds the threshold %.3f; "
                  "run longer chains before trusting the estimates",
                  max_rhat, threshold);
  else
    std::snprintf(buf, sizeof(buf),
                  "warning: convergence: R-hat is unavailable (need at least 2 chains "
                  "with enough draws); convergence cannot be verified");
  std::cerr << buf << '\n';
  return 2;
}

// --- shared flag groups ----------------------------------------------------

struct DataFlags {
  std::string subjects_csv;
  std::string trials_csv;
  bool trim_rt = false;
  double rt_min = 0.1;
  double rt_max = 3.0;
  std::vector<std::string> as_factor;
  std::vector<std::string> as_numeric;
  bool data_summary = false;
};

void add_data_flags(CLI::App* cmd, DataFlags& f) {
  cmd->add_option("subjects", f.subjects_csv, "subject-level CSV (one row per subject)")
      ->required()
      ->check(CLI::ExistingFile);
  cmd->add_option("trials", f.trials_csv, "trial-level CSV (id, response, rt, covariates)")
      ->required()
      ->check(CLI::ExistingFile);
  cmd->add_flag("--trim-rt", f.trim_rt, "drop trials with rt outside [--rt-min, --rt-max]");
  cmd->add_option("--rt-min", f.rt_min, "lower rt bound for --trim-rt (s)")
      ->capture_default_str();
  cmd->add_option("--rt-max", f.rt_max, "upper rt bound for --trim-rt (s)")
      ->capture_default_str();
  cmd->add_option("--as-factor", f.as_factor, "treat this subject column as a factor")
      ->type_size(1);
  cmd->add_option("--as-numeric", f.as_numeric, "treat this subject column as numeric")
      ->type_size(1);
  cmd->add_flag("--data-summary", f.data_summary, "print a cohort summary table first");
}

Dataset load_dataset(const DataFlags& f) {
  ReadOptions opt;
  opt.trim_rt = f.trim_rt;
  opt.rt_min = f.rt_min;
  opt.rt_max = f.rt_max;
  opt.force_factor = f.as_factor;
  opt.force_numeric = f.as_numeric;
  Dataset ds = read_tables(f.subjects_csv, f.trials_csv, opt);
  print_warnings(ds.warnings, "data");
  if (f.data_summary) std::cout << summarize_data(ds);
  return ds;
}

struct SamplerFlags {
  int chains = 4;
  int warmup = 500;
  int iterations = 1000;
  int threads = 1;
  unsigned long long seed = 1;
  double target_accept = default_fit_config().target_accept;
  int max_depth = 10;
  double rhat_threshold = 1.05;
};

void add_sampler_flags(CLI::App* cmd, SamplerFlags& f) {
  cmd->add_option("--chains", f.chains, "number of MCMC chains")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  cmd->add_option("--warmup", f.warmup, "warm-up (adaptation) iterations per chain")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  cmd->add_option("--iter", f.iterations, "total iterations per chain, including warm-up")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  cmd->add_option("--seed", f.seed, "random seed; runs are reproducible from (inputs, seed)")
      ->capture_default_str();
  cmd->add_option("--threads", f.threads, "worker threads (chains here; replications in experiment)")
      ->capture_default_str()
      ->check(CLI::PositiveNumber)
      ->envname("REGDDM_THREADS");
  cmd->add_option("--target-accept", f.target_accept, "step-size adaptation target")
      ->capture_default_str()
      ->check(CLI::Range(0.1, 0.999));
  cmd->add_option("--max-depth", f.max_depth, "maximum trajectory doublings per draw")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  cmd->add_option("--rhat-threshold", f.rhat_threshold,
                  "convergence gate: exit 2 when max R-hat exceeds this")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
}

SamplerConfig to_sampler_config(const SamplerFlags& f) {
  SamplerConfig cfg;
  cfg.chains = f.chains;
  cfg.warmup = f.warmup;
  cfg.iterations = f.iterations;
  cfg.seed = f.seed;
  cfg.threads = f.threads;
  cfg.target_accept = f.target_accept;
  cfg.max_depth = f.max_depth;
  return cfg;
}

// --- fit ---------------------------------------------------------------—---

struct FitArgs {
  DataFlags data;
  SamplerFlags sampler;
  std::vector<std::string> formulas;
  std::string family = "gaussian";
  std::string out_dir = "regddm_fit";
  bool no_draws = false;
};

int run_fit(const FitArgs& a) {
  const Dataset ds = load_dataset(a.data);
  const ModelSpec spec = parse_model_spec(a.formulas, a.family);
  DesignData dd = build_design(spec, ds);
  print_warnings(dd.warnings, "design");
  const Model model(spec, std::move(dd));

  const PosteriorDraws draws = fit_model(model, to_sampler_config(a.sampler));
  const FitSummary summary = summarize(draws, spec, ds);
  print_warnings(summary.warnings, "diagnostics");

  write_results(a.out_dir, summary, draws, !a.no_draws);
  std::cout << render_report(summary);
  std::cerr << "results written to " << a.out_dir << '\n';
  return convergence_gate(summary.max_rhat, a.sampler.rhat_threshold);
}

// --- simulate ---------------------------------------------------------—---

int run_simulate(const SimConfig& sc, const std::string& out_dir) {
  const Simulation sim = generate(sc);
  write_simulation(out_dir, sim);
  std::cout << "wrote subjects.csv, trials.csv and truth.csv to " << out_dir << " ("
            << sim.n_subjects() << " subjects, " << sim.n_trials() << " trials, scenario "
            << sc.scenario << ", seed " << sc.seed << ")\n";
  return 0;
}

// --- twostep ---------------------------------------------------------—----

struct TwostepArgs {
  DataFlags data;
  SamplerFlags sampler;
  std::string formula;  // second-step formula
  std::string test = "ols";
  bool pooled = false;
  std::string out_dir = "regddm_twostep";
};

int run_twostep(const TwostepArgs& a) {
  const Dataset ds = load_dataset(a.data);
  const ModelSpec ddm_spec = ddm_only_spec({});
  const DdmOnlyFit first = fit_ddm_only(ddm_spec, ds, to_sampler_config(a.sampler));
  const FitSummary first_summary = summarize(first.draws, ddm_spec, ds);
  print_warnings(first_summary.warnings, "diagnostics");

  // a second-step variable is an estimated DDM parameter or a subject column
  auto resolve = [&](const std::string& name) -> std::vector<double> {
    for (std::size_t t = 0; t < first.terms.size(); ++t)
      if (first.terms[t] == name) return first.means[t];
    const Column* c = ds.subjects.find(name);
    if (!c)
      throw std::invalid_argument("'" + name +
                                  "' is neither an estimated DDM parameter nor a subject column");
    if (!c->numeric)
      throw std::invalid_argument("subject column '" + name +
                                  "' is a factor; the second step needs numeric variables");
    if (c->any_missing())
      throw std::invalid_argument("subject column '" + name + "' has missing values");
    return c->num;
  };

  const Formula f = parse_formula(a.formula);
  if (f.rhs.empty())
    throw std::invalid_argument("second-step formula needs at least one right-hand-side term");
  const std::vector<double> y = resolve(f.lhs);

  std::filesystem::create_directories(a.out_dir);
  {  // per-subject first-step point estimates
    auto out = results_detail::open_out(
        (std::filesystem::path(a.out_dir) / "first_step.csv").string());
    out << "id,parameter,estimate\n";
    for (std::size_t t = 0; t < first.terms.size(); ++t)
      for (std::size_t i = 0; i < first.subject_ids.size(); ++i)
        out << first.subject_ids[i] << ',' << first.terms[t] << ','
            << results_detail::g17(first.means[t][i]) << '\n';
  }

  auto out = results_detail::open_out((std::filesystem::path(a.out_dir) / "twostep.csv").string());
  out << "term,estimate,se,t,df,p\n";
  if (a.test == "ols") {
    std::vector<std::vector<double>> columns;
    for (const std::string& name : f.rhs) columns.push_back(resolve(name));
    const OlsFit fit = ols_fit(y, columns, f.rhs);
    for (std::size_t k = 0; k < fit.names.size(); ++k) {
      out << fit.names[k] << ',' << results_detail::g17(fit.coef[k]) << ','
          << results_detail::g17(fit.se[k]) << ',' << results_detail::g17(fit.t[k]) << ','
          << fit.df << ',' << results_detail::g17(fit.p[k]) << '\n';
      std::printf("%-16s %10.4f  se %8.4f  t %7.3f  p %.4g\n", fit.names[k].c_str(),
                  fit.coef[k], fit.se[k], fit.t[k], fit.p[k]);
    }
    std::printf("residual sd %.4f on %d degrees of freedom\n", fit.sigma, fit.df);
  } else {  // ttest
    if (f.rhs.size() != 1)
      throw std::invalid_argument("--test ttest needs exactly one grouping variable");
    const std::vector<double> group = resolve(f.rhs[0]);
    double lo = group[0], hi = group[0];
    for (double g : group) {
      lo = std::min(lo, g);
      hi = std::max(hi, g);
    }
    if (lo == hi)
      throw std::invalid_argument("grouping variable '" + f.rhs[0] + "' has a single value");
    std::vector<double> g0, g1;
    for (std::size_t i = 0; i < group.size(); ++i) {
      if (group[i] == lo)
        g0.push_back(y[i]);
      else if (group[i] == hi)
        g1.push_back(y[i]);
      else
        throw std::invalid_argument("grouping variable '" + f.rhs[0] +
                                    "' must take exactly two distinct values");
    }
    const TTestResult tt = two_sample_ttest(g0, g1, a.pooled);
    out << f.rhs[0] << ',' << results_detail::g17(tt.mean_diff) << ','
        << results_detail::g17(tt.se) << ',' << results_detail::g17(tt.t) << ','
        << results_detail::g17(tt.df) << ',' << results_detail::g17(tt.p) << '\n';
    std::printf("%s (%s): mean diff %.4f  se %.4f  t %.3f  df %.2f  p %.4g\n", f.rhs[0].c_str(),
                a.pooled ? "pooled" : "Welch", tt.mean_diff, tt.se, tt.t, tt.df, tt.p);
  }
  std::cerr << "results written to " << a.out_dir << '\n';
  return convergence_gate(first_summary.max_rhat, a.sampler.rhat_threshold);
}

// --- experiment ---------------------------------------------------------—-

int run_experiment_cmd(ExperimentConfig cfg, const SamplerFlags& sf) {
  cfg.sampler = to_sampler_config(sf);
  cfg.sampler.threads = 1;  // --threads drives replications here, not chains
  cfg.threads = sf.threads;
  cfg.seed = sf.seed;
  const std::vector<ReplicationRecord> records = run_experiment(cfg);

  double worst = std::numeric_limits<double>::quiet_NaN();
  int over = 0;
  for (const ReplicationRecord& r : records) {
    if (std::isfinite(r.max_rhat) && !(worst >= r.max_rhat)) worst = r.max_rhat;
    if (!std::isfinite(r.max_rhat) || r.max_rhat > sf.rhat_threshold) ++over;
  }
  std::cout << "experiment " << cfg.scenario << ": " << records.size()
            << " replications finished; records in " << cfg.out_dir
            << "/records.csv, per-condition aggregates in " << cfg.out_dir << "/aggregate.csv\n";
  if (over > 0) {
    std::cerr << "warning: convergence: " << over << " of " << records.size()
              << " replications exceed the R-hat threshold " << sf.rhat_threshold << '\n';
    return 2;
  }
  return convergence_gate(worst, sf.rhat_threshold);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hierarchical Bayesian drift-diffusion regression"};
  app.require_subcommand(1);
  app.set_config("--config", "", "read option defaults from a TOML/INI file");
  app.set_version_flag("--version", "regddm 0.1.0");

  FitArgs fit_args;
  CLI::App* fit_cmd = app.add_subcommand("fit", "fit the joint model to CSV data");
  add_data_flags(fit_cmd, fit_args.data);
  add_sampler_flags(fit_cmd, fit_args.sampler);
  fit_cmd->add_option("--formula", fit_args.formulas,
                      "model formula, e.g. \"v ~ memload\" or \"iq ~ v_0 + age\"; repeatable")
      ->required()
      ->type_size(1);
  fit_cmd->add_option("--family", fit_args.family, "regression outcome family")
      ->capture_default_str()
      ->check(CLI::IsMember({"gaussian", "bernoulli"}));
  fit_cmd->add_option("--out-dir", fit_args.out_dir, "directory for report.txt/summary.csv/draws.csv")
      ->capture_default_str();
  fit_cmd->add_flag("--no-draws", fit_args.no_draws, "skip writing draws.csv");

  SimConfig sim_cfg;
  std::string sim_out;
  CLI::App* sim_cmd = app.add_subcommand("simulate", "generate a synthetic dataset");
  sim_cmd->add_option("--scenario", sim_cfg.scenario, "generator scenario")
      ->required()
      ->check(CLI::IsMember({"sim1-outcome", "sim1-predictor", "sim2"}));
  sim_cmd->add_option("--subjects", sim_cfg.subjects, "number of subjects")
      ->required()
      ->check(CLI::PositiveNumber);
  sim_cmd->add_option("--trials", sim_cfg.trials, "trials per subject")
      ->required()
      ->check(CLI::PositiveNumber);
  sim_cmd->add_option("--q", sim_cfg.q, "number of trial covariates (sim2 only)")
      ->capture_default_str()
      ->check(CLI::Range(0, 2));
  sim_cmd->add_option("--seed", sim_cfg.seed, "random seed")->capture_default_str();
  sim_cmd->add_option("--out-dir", sim_out, "directory for subjects/trials/truth CSVs")
      ->required();

  TwostepArgs ts_args;
  CLI::App* ts_cmd = app.add_subcommand("twostep", "sequential baseline: DDM fit, then OLS/t-test");
  add_data_flags(ts_cmd, ts_args.data);
  add_sampler_flags(ts_cmd, ts_args.sampler);
  ts_cmd->add_option("--formula", ts_args.formula,
                     "second-step formula over estimated parameters and subject columns, "
                     "e.g. \"iq ~ v_0 + age\"")
      ->required();
  ts_cmd->add_option("--test", ts_args.test, "second-step analysis")
      ->capture_default_str()
      ->check(CLI::IsMember({"ols", "ttest"}));
  ts_cmd->add_flag("--pooled", ts_args.pooled, "pooled-variance t-test instead of Welch");
  ts_cmd->add_option("--out-dir", ts_args.out_dir, "directory for first_step.csv/twostep.csv")
      ->capture_default_str();

  ExperimentConfig exp_cfg;
  SamplerFlags exp_sampler;
  bool exp_no_twostep = false;
  CLI::App* exp_cmd = app.add_subcommand("experiment", "replicated generate -> fit -> score runs");
  exp_cmd->add_option("--name", exp_cfg.scenario, "scenario to replicate")
      ->required()
      ->check(CLI::IsMember({"sim1-outcome", "sim1-predictor", "sim2"}));
  exp_cmd->add_option("--replications", exp_cfg.replications, "replications per grid condition")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  exp_cmd->add_option("--subjects", exp_cfg.subjects_grid, "subject-count grid; repeatable")
      ->capture_default_str()
      ->delimiter(',')
      ->check(CLI::PositiveNumber);
  exp_cmd->add_option("--trials", exp_cfg.trials_grid, "trials-per-subject grid; repeatable")
      ->capture_default_str()
      ->delimiter(',')
      ->check(CLI::PositiveNumber);
  exp_cmd->add_option("--q", exp_cfg.q_grid, "trial-covariate-count grid (sim2 only); repeatable")
      ->capture_default_str()
      ->delimiter(',')
      ->check(CLI::Range(0, 2));
  exp_cmd->add_option("--out-dir", exp_cfg.out_dir, "directory for records/ and aggregate tables")
      ->capture_default_str();
  exp_cmd->add_flag("--no-twostep", exp_no_twostep, "skip the two-step baseline in each replication");
  add_sampler_flags(exp_cmd, exp_sampler);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help/--version
    std::cerr << "error: usage: " << one_line(e.what()) << '\n';
    std::cerr << "run 'regddm --help' or 'regddm <command> --help' for usage\n";
    return 1;
  }

  try {
    if (fit_cmd->parsed()) return run_fit(fit_args);
    if (sim_cmd->parsed()) return run_simulate(sim_cfg, sim_out);
    if (ts_cmd->parsed()) return run_twostep(ts_args);
    if (exp_cmd->parsed()) {
      exp_cfg.run_twostep = !exp_no_twostep;
      if (exp_cfg.scenario != "sim2")
        for (int q : exp_cfg.q_grid)
          if (q != 0) throw std::invalid_argument("--q applies to the sim2 scenario only");
      return run_experiment_cmd(exp_cfg, exp_sampler);
    }
  } catch (const FormulaError& e) {
    return fail("formula", e.what());
  } catch (const DataError& e) {
    return fail("data", e.what());
  } catch (const std::invalid_argument& e) {
    return fail("invalid-argument", e.what());
  } catch (const std::exception& e) {
    return fail("runtime", e.what());
  }
  return 1;  // unreachable: require_subcommand guarantees a branch above
}

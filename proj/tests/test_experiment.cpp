#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "regddm/experiment.hpp"

using namespace regddm;
namespace fs = std::filesystem;

namespace {

SamplerConfig quick_cfg() {
  SamplerConfig cfg;
  cfg.chains = 2;
  cfg.warmup = 100;
  cfg.iterations = 220;
  cfg.target_accept = 0.95;
  return cfg;
}

std::vector<std::string> lines_of(const std::string& path) {
  std::ifstream in(path);
  REQUIRE(in.good());
  std::vector<std::string> out;
  std::string line;
  while (std::getline(in, line)) out.push_back(line);
  return out;
}

std::string field(const std::string& csv_line, std::size_t index) {
  std::istringstream ss(csv_line);
  std::string cell;
  for (std::size_t i = 0; i <= index; ++i) REQUIRE(std::getline(ss, cell, ','));
  return cell;
}

}  // namespace

TEST_CASE("task seeds are distinct and reproducible", "[experiment]") {
  std::set<unsigned long long> seen;
  for (std::size_t i = 0; i < 64; ++i) {
    const unsigned long long s = experiment_detail::task_seed(7, i);
    CHECK(s == experiment_detail::task_seed(7, i));
    CHECK(s != 7ull);
    seen.insert(s);
  }
  CHECK(seen.size() == 64);
  CHECK(experiment_detail::task_seed(7, 0) != experiment_detail::task_seed(8, 0));
}

TEST_CASE("focal coefficient tracks the scenario", "[experiment]") {
  CHECK(experiment_detail::focal_coefficient("sim1-outcome", 0) == "beta_u");
  CHECK(experiment_detail::focal_coefficient("sim1-predictor", 0) == "beta_v_0");
  CHECK(experiment_detail::focal_coefficient("sim2", 0) == "beta_v_0");
  CHECK(experiment_detail::focal_coefficient("sim2", 1) == "beta_v_x1");
  CHECK(experiment_detail::focal_coefficient("sim2", 2) == "beta_v_x1");
}

TEST_CASE("record files round-trip every field", "[experiment]") {
  const std::string dir = "/tmp/regddm_test_exp_record";
  fs::remove_all(dir);
  fs::create_directories(dir);

  ReplicationRecord r;
  r.scenario = "sim1-outcome";
  r.subjects = 12;
  r.trials = 34;
  r.q = 0;
  r.replication = 5;
  r.seed = 987654321123456789ull;
  r.focal = "beta_u";
  r.beta_mean = 1.0 / 3.0;
  r.beta_sd = 0.25;
  r.beta_twostep = -0.125;
  r.beta_twostep_se = 0.0625;
  r.twostep_p = 0.0415926;
  r.mse_v0 = 0.75;
  r.mse_v0_twostep = std::numeric_limits<double>::quiet_NaN();
  r.max_rhat = 1.0171;
  r.divergences = 3;
  r.wall_seconds = 12.75;

  const std::string path = dir + "/" + experiment_detail::record_name(r);
  CHECK(experiment_detail::record_name(r) == "sim1-outcome_N12_n34_q0_r5.csv");
  experiment_detail::write_record(path, r);

  ReplicationRecord b;
  REQUIRE(experiment_detail::read_record(path, b));
  CHECK(b.scenario == r.scenario);
  CHECK(b.subjects == r.subjects);
  CHECK(b.trials == r.trials);
  CHECK(b.q == r.q);
  CHECK(b.replication == r.replication);
  CHECK(b.seed == r.seed);
  CHECK(b.focal == r.focal);
  CHECK(b.beta_mean == r.beta_mean);
  CHECK(b.beta_sd == r.beta_sd);
  CHECK(b.beta_twostep == r.beta_twostep);
  CHECK(b.beta_twostep_se == r.beta_twostep_se);
  CHECK(b.twostep_p == r.twostep_p);
  CHECK(b.mse_v0 == r.mse_v0);
  CHECK(std::isnan(b.mse_v0_twostep));
  CHECK(b.max_rhat == r.max_rhat);
  CHECK(b.divergences == r.divergences);
  CHECK(b.wall_seconds == r.wall_seconds);

  SECTION("stale or foreign files are not trusted") {
    ReplicationRecord ignored;
    CHECK_FALSE(experiment_detail::read_record(dir + "/absent.csv", ignored));
    std::ofstream(dir + "/junk.csv") << "something,else\n1,2\n";
    CHECK_FALSE(experiment_detail::read_record(dir + "/junk.csv", ignored));
  }
}

TEST_CASE("a replication scores the joint fit and the baseline", "[experiment]") {
  const ReplicationRecord r =
      run_replication("sim1-outcome", 6, 25, 0, 0, 41, quick_cfg(), true);

  CHECK(r.scenario == "sim1-outcome");
  CHECK(r.subjects == 6);
  CHECK(r.trials == 25);
  CHECK(r.replication == 0);
  CHECK(r.seed == 41);
  CHECK(r.focal == "beta_u");
  CHECK(std::isfinite(r.beta_mean));
  CHECK(r.beta_sd > 0.0);
  CHECK(std::isfinite(r.beta_twostep));
  CHECK(r.beta_twostep_se > 0.0);
  CHECK(r.twostep_p >= 0.0);
  CHECK(r.twostep_p <= 1.0);
  CHECK(r.mse_v0 >= 0.0);
  CHECK(r.mse_v0_twostep >= 0.0);
  CHECK(std::isfinite(r.max_rhat));
  CHECK(r.max_rhat > 0.9);
  CHECK(r.divergences >= 0);
  CHECK(r.wall_seconds > 0.0);
}

TEST_CASE("experiments checkpoint per replication and resume", "[experiment]") {
  const std::string dir = "/tmp/regddm_test_exp_resume";
  fs::remove_all(dir);

  ExperimentConfig cfg;
  cfg.scenario = "sim1-predictor";
  cfg.replications = 2;
  cfg.subjects_grid = {4};
  cfg.trials_grid = {15};
  cfg.q_grid = {0};
  cfg.sampler = quick_cfg();
  cfg.run_twostep = false;  // keep the fixture to one fit per replication
  cfg.seed = 3;
  cfg.out_dir = dir;

  const std::vector<ReplicationRecord> first = run_experiment(cfg);
  REQUIRE(first.size() == 2);
  CHECK(first[0].replication == 0);
  CHECK(first[1].replication == 1);
  CHECK(first[0].seed != first[1].seed);
  CHECK(std::isnan(first[0].beta_twostep));  // baseline disabled
  CHECK(fs::exists(dir + "/records/sim1-predictor_N4_n15_q0_r0.csv"));
  CHECK(fs::exists(dir + "/records/sim1-predictor_N4_n15_q0_r1.csv"));

  const std::vector<std::string> records_csv = lines_of(dir + "/records.csv");
  REQUIRE(records_csv.size() == 3);
  CHECK(records_csv[0] == experiment_detail::record_header());

  const std::vector<std::string> agg = lines_of(dir + "/aggregate.csv");
  REQUIRE(agg.size() == 2);
  CHECK(field(agg[1], 0) == "sim1-predictor");
  CHECK(field(agg[1], 4) == "2");           // replications aggregated
  CHECK(field(agg[1], 5) == "beta_v_0");    // focal coefficient

  // Replace replication 0 with a sentinel record and delete replication 1:
  // resume must trust the existing file and recompute only the missing one.
  ReplicationRecord sentinel = first[0];
  sentinel.beta_mean = 99.0;
  experiment_detail::write_record(dir + "/records/sim1-predictor_N4_n15_q0_r0.csv", sentinel);
  fs::remove(dir + "/records/sim1-predictor_N4_n15_q0_r1.csv");

  const std::vector<ReplicationRecord> second = run_experiment(cfg);
  REQUIRE(second.size() == 2);
  CHECK(second[0].beta_mean == 99.0);
  CHECK(second[1].beta_mean == first[1].beta_mean);  // same derived seed, same draw
  CHECK(second[1].max_rhat == first[1].max_rhat);

  const std::vector<std::string> records_csv2 = lines_of(dir + "/records.csv");
  REQUIRE(records_csv2.size() == 3);
  CHECK(field(records_csv2[1], 7) == "99");  // sentinel propagated to the combined table
}

TEST_CASE("experiment configuration is validated", "[experiment]") {
  ExperimentConfig cfg;
  cfg.replications = 0;
  CHECK_THROWS_AS(run_experiment(cfg), std::invalid_argument);
  cfg.replications = 1;
  cfg.subjects_grid = {};
  CHECK_THROWS_AS(run_experiment(cfg), std::invalid_argument);
}

#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "regddm/fit.hpp"
#include "regddm/model.hpp"

using namespace regddm;

namespace {

struct TempFile {
  std::string path;
  explicit TempFile(const std::string& name, const std::string& content) {
    path = std::string("/tmp/regddm_test_") + name;
    std::ofstream out(path);
    out << content;
  }
  ~TempFile() { std::remove(path.c_str()); }
};

Dataset tiny_dataset() {
  static const TempFile subj("m_s.csv",
                             "id,iq,age\n"
                             "1,105,0.3\n"
                             "2,98,-0.2\n");
  static const TempFile tri("m_t.csv",
                            "id,x,response,rt\n"
                            "1,0,1,1.5\n"
                            "1,2,0,2.1\n"
                            "2,1,1,1.8\n");
  return read_tables(subj.path, tri.path);
}

double logistic(double u) { return 1.0 / (1.0 + std::exp(-u)); }

// Central finite differences against the analytic gradient.
void check_gradient(const Model& m, const std::vector<double>& u, double h = 1e-5,
                    double rel_tol = 1e-5) {
  std::vector<double> grad;
  const double lp = m.log_posterior_grad(u, grad);
  REQUIRE(std::isfinite(lp));
  std::vector<double> up = u;
  for (std::size_t k = 0; k < u.size(); ++k) {
    up[k] = u[k] + h;
    const double lp_plus = m.log_posterior(up);
    up[k] = u[k] - h;
    const double lp_minus = m.log_posterior(up);
    up[k] = u[k];
    const double fd = (lp_plus - lp_minus) / (2.0 * h);
    INFO("coordinate " << k << " (" << m.layout().flat_names()[k] << "): fd=" << fd
                       << " analytic=" << grad[k]);
    REQUIRE(std::fabs(fd - grad[k]) <= rel_tol * std::max(1.0, std::fabs(grad[k])));
  }
}

}  // namespace

TEST_CASE("layout follows the documented order and naming") {
  const Dataset ds = tiny_dataset();
  const ModelSpec spec = parse_model_spec({"v ~ x", "iq ~ v_0 + age"});
  const Model m(spec, build_design(spec, ds));
  const std::vector<std::string> names = m.layout().flat_names();
  const std::vector<std::string> expected{
      "beta_0",     "beta_v_0",   "beta_age",   "sigma",      "mu_a_0",  "sigma_a_0",
      "mu_t_0",     "sigma_t_0",  "mu_z_0",     "sigma_z_0",  "mu_v_0",  "sigma_v_0",
      "mu_v_x",     "sigma_v_x",  "a_0[1]",     "a_0[2]",     "t_0[1]",  "t_0[2]",
      "z_0[1]",     "z_0[2]",     "v_0[1]",     "v_0[2]",     "v_x[1]",  "v_x[2]"};
  REQUIRE(names == expected);
  REQUIRE(m.dim() == 24);
  REQUIRE(m.layout().find("beta") != nullptr);
  REQUIRE(m.layout().find("sigma")->transform == Transform::log_pos);
  REQUIRE(m.layout().find("mu_z_0")->transform == Transform::logit);
  REQUIRE(m.layout().find("mu_a_0")->transform == Transform::log_pos);
  // hierarchical subject blocks are sampled as standard-normal offsets
  REQUIRE(m.layout().find("z_0")->transform == Transform::identity);
  REQUIRE(m.layout().find("a_0")->transform == Transform::identity);
  REQUIRE(m.layout().find("v_0")->transform == Transform::identity);
}

TEST_CASE("case B omits the target's hierarchy hyperparameters") {
  const Dataset ds = tiny_dataset();
  const ModelSpec spec = parse_model_spec({"v ~ x", "v_x ~ age"});
  const Model m(spec, build_design(spec, ds));
  const auto& layout = m.layout();
  REQUIRE(layout.find("mu_v_x") == nullptr);
  REQUIRE(layout.find("sigma_v_x") == nullptr);
  REQUIRE(layout.find("mu_v_0") != nullptr);
  REQUIRE(layout.find("v_x") != nullptr);  // subject values stay
  REQUIRE(layout.find("sigma") != nullptr);

  const ModelSpec a_spec = parse_model_spec({"v ~ x", "iq ~ v_x"});
  const Model ma(a_spec, build_design(a_spec, ds));
  REQUIRE(ma.layout().find("mu_v_x") != nullptr);
  REQUIRE(ma.layout().find("sigma_v_x") != nullptr);
}

TEST_CASE("log posterior equals a term-by-term composition") {
  const Dataset ds = tiny_dataset();
  const ModelSpec spec = parse_model_spec({"v ~ x", "iq ~ v_0 + age"});
  PriorConfig pc;
  const Model m(spec, build_design(spec, ds), pc);

  std::vector<double> u(24);
  u[0] = 0.5;             // beta_0
  u[1] = 2.0;             // beta_v_0
  u[2] = 1.0;             // beta_age
  u[3] = std::log(30.0);  // sigma
  u[4] = std::log(1.5);   // mu_a_0
  u[5] = std::log(0.1);   // sigma_a_0
  u[6] = std::log(0.3);   // mu_t_0
  u[7] = std::log(0.05);  // sigma_t_0
  u[8] = 0.05;            // mu_z_0 (logit scale)
  u[9] = std::log(0.04);  // sigma_z_0
  u[10] = 1.0;            // mu_v_0
  u[11] = std::log(0.5);  // sigma_v_0
  u[12] = 0.2;            // mu_v_x
  u[13] = std::log(0.3);  // sigma_v_x
  u[14] = 0.5;            // a_0[1] offset
  u[15] = -0.4;           // a_0[2] offset
  u[16] = -0.3;           // t_0[1] offset
  u[17] = 0.6;            // t_0[2] offset
  u[18] = 0.8;            // z_0[1] offset
  u[19] = -1.0;           // z_0[2] offset
  u[20] = 0.4;            // v_0[1] offset
  u[21] = -0.6;           // v_0[2] offset
  u[22] = 0.9;            // v_x[1] offset
  u[23] = -0.7;           // v_x[2] offset

  // natural subject values implied by mu + sigma * offset on each link scale
  const auto a_nat = [&](int i) { return std::exp(u[4] + std::exp(u[5]) * u[14 + i]); };
  const auto t_nat = [&](int i) { return std::exp(u[6] + std::exp(u[7]) * u[16 + i]); };
  const auto z_nat = [&](int i) { return logistic(u[8] + std::exp(u[9]) * u[18 + i]); };
  const auto v_nat = [&](int i) { return u[10] + std::exp(u[11]) * u[20 + i]; };
  const auto vx_nat = [&](int i) { return u[12] + std::exp(u[13]) * u[22 + i]; };

  double lp = 0.0;
  for (int k = 0; k < 3; ++k) lp += normal_lpdf(u[k], 0.0, 10.0);
  lp += half_normal_lpdf(std::exp(u[3]), 5.0) + u[3];
  lp += gamma_lpdf(std::exp(u[4]), 1.125, 0.75) + u[4];
  lp += half_normal_lpdf(std::exp(u[5]), 0.1) + u[5];
  lp += gamma_lpdf(std::exp(u[6]), 0.08, 0.2) + u[6];
  lp += half_normal_lpdf(std::exp(u[7]), 1.0) + u[7];
  const double zmu = logistic(u[8]);
  lp += normal_lpdf(zmu, 0.5, 0.5) + std::log(zmu) + std::log1p(-zmu);
  lp += half_normal_lpdf(std::exp(u[9]), 0.05) + u[9];
  lp += normal_lpdf(u[10], 2.0, 3.0);
  lp += half_normal_lpdf(std::exp(u[11]), 2.0) + u[11];
  lp += normal_lpdf(u[12], 0.0, 10.0);
  lp += half_normal_lpdf(std::exp(u[13]), 5.0) + u[13];
  for (int k = 14; k < 24; ++k) lp += normal_lpdf(u[k], 0.0, 1.0);
  const double iq[2] = {105.0, 98.0};
  const double age[2] = {0.3, -0.2};
  for (int i = 0; i < 2; ++i) {
    lp += normal_lpdf(iq[i], u[0] + u[1] * v_nat(i) + u[2] * age[i], std::exp(u[3]));
  }
  const int resp[3] = {1, 0, 1};
  const double rts[3] = {1.5, 2.1, 1.8};
  const double xs[3] = {0.0, 2.0, 1.0};
  const int sub[3] = {0, 0, 1};
  for (int j = 0; j < 3; ++j) {
    const int i = sub[j];
    const DdmParams p{a_nat(i), t_nat(i), z_nat(i), v_nat(i) + vx_nat(i) * xs[j]};
    lp += wfpt_log_density_raw(resp[j], rts[j], p, pc.wfpt_tol);
  }

  const double got = m.log_posterior(u);
  REQUIRE(std::isfinite(got));
  REQUIRE(got == Catch::Approx(lp).epsilon(1e-10));

  PriorConfig tight = pc;
  tight.wfpt_tol = 1e-13;
  check_gradient(Model(spec, build_design(spec, ds), tight), u);

  SECTION("reported draws are the natural subject values") {
    std::vector<double> out;
    m.constrain_draws(u, out);
    REQUIRE(out[4] == Catch::Approx(1.5).epsilon(1e-12));   // mu_a_0 natural
    REQUIRE(out[14] == Catch::Approx(a_nat(0)).epsilon(1e-12));
    REQUIRE(out[15] == Catch::Approx(a_nat(1)).epsilon(1e-12));
    REQUIRE(out[17] == Catch::Approx(t_nat(1)).epsilon(1e-12));
    REQUIRE(out[18] == Catch::Approx(z_nat(0)).epsilon(1e-12));
    REQUIRE(out[21] == Catch::Approx(v_nat(1)).epsilon(1e-12));
    REQUIRE(out[23] == Catch::Approx(vx_nat(1)).epsilon(1e-12));
    for (int i = 14; i < 18; ++i) REQUIRE(out[static_cast<std::size_t>(i)] > 0.0);
    REQUIRE(out[18] > 0.0);
    REQUIRE(out[18] < 1.0);
  }
}

TEST_CASE("finite-difference gradients agree on varied instances") {
  const Dataset ds = tiny_dataset();
  PriorConfig pc;
  pc.wfpt_tol = 1e-13;
  Rng rng(99);

  auto jittered_start = [&](const Model& m) {
    Rng init_rng(7);
    std::vector<double> u = m.initial_values(init_rng);
    for (auto& x : u) x += rng.uniform(-0.1, 0.1);
    return u;
  };

  SECTION("case A gaussian with derived and covariate predictors") {
    const ModelSpec spec = parse_model_spec({"v ~ x", "a ~ 1", "iq ~ v_0 + v_x + age"});
    const Model m(spec, build_design(spec, ds), pc);
    for (int rep = 0; rep < 3; ++rep) check_gradient(m, jittered_start(m));
  }
  SECTION("case B") {
    const ModelSpec spec = parse_model_spec({"v ~ x", "v_x ~ age"});
    const Model m(spec, build_design(spec, ds), pc);
    for (int rep = 0; rep < 3; ++rep) check_gradient(m, jittered_start(m));
  }
  SECTION("bernoulli outcome") {
    TempFile subj("m_s2.csv", "id,resp2\n1,1\n2,0\n");
    TempFile tri("m_t2.csv", "id,response,rt\n1,1,1.5\n1,0,2.1\n2,1,1.8\n");
    const Dataset d2 = read_tables(subj.path, tri.path);
    const ModelSpec spec = parse_model_spec({"v ~ 1", "resp2 ~ v_0"}, "bernoulli");
    const Model m(spec, build_design(spec, d2), pc);
    REQUIRE(m.layout().find("sigma") == nullptr);
    for (int rep = 0; rep < 3; ++rep) check_gradient(m, jittered_start(m));
  }
  SECTION("poisson outcome") {
    TempFile subj("m_s3.csv", "id,cnt\n1,4\n2,1\n");
    TempFile tri("m_t3.csv", "id,response,rt\n1,1,1.5\n1,0,2.1\n2,1,1.8\n");
    const Dataset d3 = read_tables(subj.path, tri.path);
    const ModelSpec spec = parse_model_spec({"v ~ 1", "cnt ~ v_0"}, "poisson");
    const Model m(spec, build_design(spec, d3), pc);
    for (int rep = 0; rep < 3; ++rep) check_gradient(m, jittered_start(m));
  }
  SECTION("missing covariate latents") {
    TempFile subj("m_s4.csv", "id,iq,age\n1,105,0.3\n2,98,NA\n3,101,-0.1\n");
    TempFile tri("m_t4.csv",
                 "id,response,rt\n1,1,1.5\n1,0,2.1\n2,1,1.8\n3,0,1.2\n");
    const Dataset d4 = read_tables(subj.path, tri.path);
    const ModelSpec spec = parse_model_spec({"v ~ 1", "iq ~ v_0 + age"});
    const Model m(spec, build_design(spec, d4), pc);
    REQUIRE(m.layout().find("mu_age") != nullptr);
    REQUIRE(m.layout().find("sigma_age") != nullptr);
    const Block* mis = m.layout().find("age_mis");
    REQUIRE(mis != nullptr);
    REQUIRE(mis->element_names == std::vector<std::string>{"age_mis[2]"});
    for (int rep = 0; rep < 3; ++rep) check_gradient(m, jittered_start(m));
  }
  SECTION("diffusion-only model") {
    const Model m(ddm_only_spec({"v ~ x"}), build_design(ddm_only_spec({"v ~ x"}), ds), pc);
    REQUIRE(m.layout().find("beta") == nullptr);
    REQUIRE(m.layout().find("sigma") == nullptr);
    for (int rep = 0; rep < 3; ++rep) check_gradient(m, jittered_start(m));
  }
}

TEST_CASE("posterior is invariant to subject and trial order") {
  TempFile s1("p_s1.csv", "id,iq\n1,105\n2,98\n3,101\n");
  TempFile t1("p_t1.csv",
              "id,x,response,rt\n1,0,1,1.5\n1,2,0,2.1\n2,1,1,1.8\n3,1,0,1.3\n3,0,1,2.4\n");
  TempFile s2("p_s2.csv", "id,iq\n3,101\n1,105\n2,98\n");
  TempFile t2("p_t2.csv",
              "id,x,response,rt\n3,0,1,2.4\n2,1,1,1.8\n1,2,0,2.1\n3,1,0,1.3\n1,0,1,1.5\n");
  const std::vector<std::string> formulas{"v ~ x", "iq ~ v_0"};
  const ModelSpec spec = parse_model_spec(formulas);
  const Model ma(spec, build_design(spec, read_tables(s1.path, t1.path)));
  const Model mb(spec, build_design(spec, read_tables(s2.path, t2.path)));
  REQUIRE(ma.dim() == mb.dim());

  // one deterministic value per parameter name, shared across both layouts
  auto fill = [](const Model& m) {
    const auto names = m.layout().flat_names();
    std::vector<std::string> sorted = names;
    std::sort(sorted.begin(), sorted.end());
    std::map<std::string, double> value;
    for (std::size_t r = 0; r < sorted.size(); ++r) {
      const std::string& nm = sorted[r];
      double base = 0.1;
      if (nm.rfind("a_0[", 0) == 0) base = 0.3;
      else if (nm.rfind("t_0[", 0) == 0) base = -1.4;
      else if (nm.rfind("z_0[", 0) == 0) base = 0.0;
      else if (nm.rfind("v_0[", 0) == 0) base = 1.0;
      else if (nm.rfind("v_x[", 0) == 0) base = 0.2;
      else if (nm == "mu_a_0") base = 0.4;
      else if (nm == "mu_t_0") base = -1.5;
      else if (nm == "mu_v_0") base = 1.0;
      else if (nm.rfind("sigma", 0) == 0) base = -1.5;
      value[nm] = base + 0.01 * static_cast<double>(r);
    }
    std::vector<double> u(names.size());
    for (std::size_t k = 0; k < names.size(); ++k) u[k] = value[names[k]];
    return u;
  };
  const double lpa = ma.log_posterior(fill(ma));
  const double lpb = mb.log_posterior(fill(mb));
  REQUIRE(std::isfinite(lpa));
  REQUIRE(lpa == Catch::Approx(lpb).epsilon(1e-12));
}

TEST_CASE("constrain and unconstrain round-trip through the model layout") {
  const Dataset ds = tiny_dataset();
  const ModelSpec spec = parse_model_spec({"v ~ x", "iq ~ v_0 + age"});
  const Model m(spec, build_design(spec, ds));
  Rng rng(5);
  std::vector<double> u(static_cast<std::size_t>(m.dim()));
  for (auto& x : u) x = rng.uniform(-2.0, 2.0);
  std::vector<double> c, back;
  m.layout().constrain(u, c);
  m.layout().unconstrain(c, back);
  for (std::size_t k = 0; k < u.size(); ++k) {
    REQUIRE(back[k] == Catch::Approx(u[k]).margin(1e-12));
  }
}

TEST_CASE("a subject without trials is driven by hierarchy and regression only") {
  TempFile subj("n_s.csv", "id,iq\n1,105\n2,98\n");
  TempFile tri("n_t.csv", "id,response,rt\n1,1,1.5\n1,0,2.1\n");
  const Dataset ds = read_tables(subj.path, tri.path);
  REQUIRE_FALSE(ds.warnings.empty());  // zero-trial subject noted
  const ModelSpec spec = parse_model_spec({"v ~ 1", "iq ~ v_0"});
  const Model m(spec, build_design(spec, ds));
  Rng rng(11);
  const std::vector<double> u = m.initial_values(rng);
  std::vector<double> grad;
  REQUIRE(std::isfinite(m.log_posterior_grad(u, grad)));

  const auto names = m.layout().flat_names();
  auto at = [&](const std::string& nm) {
    const auto it = std::find(names.begin(), names.end(), nm);
    REQUIRE(it != names.end());
    return static_cast<std::size_t>(it - names.begin());
  };
  // subject 2 has no trials: its v_0 offset gradient is the standard-normal
  // score plus the regression pull scaled by sigma_v_0; its a_0 offset
  // gradient is the standard-normal score alone
  const std::size_t kv = at("v_0[2]"), kmu = at("mu_v_0");
  const std::size_t kb0 = at("beta_0"), kb1 = at("beta_v_0"), ks = at("sigma");
  const double sd = std::exp(u[at("sigma_v_0")]);
  const double v0_nat = u[kmu] + sd * u[kv];
  const double sreg = std::exp(u[ks]);
  const double eta = u[kb0] + u[kb1] * v0_nat;
  const double reg = (98.0 - eta) / (sreg * sreg) * u[kb1] * sd;
  REQUIRE(grad[kv] == Catch::Approx(-u[kv] + reg).margin(1e-10));

  const std::size_t ka = at("a_0[2]");
  REQUIRE(grad[ka] == Catch::Approx(-u[ka]).margin(1e-10));
}

TEST_CASE("rejections are soft and diagnosable") {
  const Dataset ds = tiny_dataset();
  const ModelSpec spec = parse_model_spec({"v ~ x", "iq ~ v_0 + age"});
  const Model m(spec, build_design(spec, ds));
  Rng rng(3);
  std::vector<double> u = m.initial_values(rng);
  REQUIRE(m.diagnose_nonfinite(u).empty());

  // push the non-decision times past every rt via the group mean
  const auto names = m.layout().flat_names();
  const auto it = std::find(names.begin(), names.end(), "mu_t_0");
  u[static_cast<std::size_t>(it - names.begin())] = std::log(5.0);
  std::vector<double> grad;
  const double lp = m.log_posterior_grad(u, grad);
  REQUIRE(lp == -std::numeric_limits<double>::infinity());
  REQUIRE(std::all_of(grad.begin(), grad.end(), [](double g) { return g == 0.0; }));
  const std::string why = m.diagnose_nonfinite(u);
  REQUIRE(why.find("subject '1'") != std::string::npos);

  REQUIRE_THROWS_AS(m.log_posterior(std::vector<double>(3, 0.0)), std::invalid_argument);
}

TEST_CASE("initialization is deterministic, distinct per chain, and robust") {
  const Dataset ds = tiny_dataset();
  const ModelSpec spec = parse_model_spec({"v ~ x", "iq ~ v_0 + age"});
  const Model m(spec, build_design(spec, ds));
  std::vector<std::vector<double>> starts;
  for (unsigned chain = 0; chain < 4; ++chain) {
    Rng rng(42, chain);
    starts.push_back(m.initial_values(rng));
    REQUIRE(std::isfinite(m.log_posterior(starts.back())));
  }
  for (std::size_t a = 0; a < starts.size(); ++a) {
    for (std::size_t b = a + 1; b < starts.size(); ++b) {
      REQUIRE(starts[a] != starts[b]);
    }
  }
  Rng again(42, 0);
  REQUIRE(m.initial_values(again) == starts[0]);

  // degenerate data: all rts identical still initializes
  TempFile subj("deg_s.csv", "id,iq\n1,100\n2,100\n");
  TempFile tri("deg_t.csv",
               "id,response,rt\n1,1,1.0\n1,1,1.0\n2,1,1.0\n2,1,1.0\n");
  const Dataset dd = read_tables(subj.path, tri.path);
  const ModelSpec s2 = parse_model_spec({"v ~ 1", "iq ~ v_0"});
  const Model m2(s2, build_design(s2, dd));
  Rng r2(1);
  REQUIRE(std::isfinite(m2.log_posterior(m2.initial_values(r2))));
}

TEST_CASE("all-zero unconstrained point has a finite gradient") {
  // rts above 1s keep t0 = exp(0) = 1 inside the support
  TempFile subj("z_s.csv", "id,iq\n1,105\n2,98\n");
  TempFile tri("z_t.csv", "id,response,rt\n1,1,1.6\n1,0,2.1\n2,1,1.9\n");
  const Dataset ds = read_tables(subj.path, tri.path);
  const ModelSpec spec = parse_model_spec({"v ~ 1", "iq ~ v_0"});
  const Model m(spec, build_design(spec, ds));
  const std::vector<double> u(static_cast<std::size_t>(m.dim()), 0.0);
  std::vector<double> grad;
  const double lp = m.log_posterior_grad(u, grad);
  REQUIRE(std::isfinite(lp));
  for (double g : grad) REQUIRE(std::isfinite(g));
}

TEST_CASE("gamma median helper matches the cdf") {
  const double med = model_detail::gamma_median(1.125, 0.75);
  REQUIRE(gamma_p(1.125, med * 0.75) == Catch::Approx(0.5).margin(1e-10));
  const double tmed = model_detail::gamma_median(0.08, 0.2);
  REQUIRE(gamma_p(0.08, tmed * 0.2) == Catch::Approx(0.5).margin(1e-10));
  REQUIRE(tmed < 0.05);  // strongly concentrated near zero
}

TEST_CASE("prior-only draws reproduce the drift-bound location prior moments") {
  // with the likelihood switched off (no trials), the marginal posterior of
  // mu_a_0 is its shape-rate Gamma(1.125, 0.75) prior: mean 1.5, sd sqrt(2)
  Dataset ds = tiny_dataset();
  ds.trials.id.clear();
  for (auto& col : ds.trials.cols) {
    col.num.clear();
    col.str.clear();
    col.missing.clear();
  }
  ds.trial_subject.clear();
  ds.response.clear();
  ds.rt.clear();
  for (auto& rows : ds.subject_trials) rows.clear();

  const ModelSpec spec = ddm_only_spec({});
  const Model m(spec, build_design(spec, ds));
  SamplerConfig cfg;
  cfg.seed = 424242;
  const PosteriorDraws d = run_chains(model_target(m), cfg);

  int k = -1;
  for (std::size_t i = 0; i < d.names.size(); ++i) {
    if (d.names[i] == "mu_a_0") k = static_cast<int>(i);
  }
  REQUIRE(k >= 0);
  double sum = 0.0, sum2 = 0.0;
  const double n = static_cast<double>(d.n_chains) * d.n_draws;
  for (int c = 0; c < d.n_chains; ++c) {
    for (int it = 0; it < d.n_draws; ++it) {
      const double x = d.value(c, it, k);
      REQUIRE(x > 0.0);  // constrained scale
      sum += x;
      sum2 += x * x;
    }
  }
  const double mean = sum / n;
  const double sd = std::sqrt((sum2 - n * mean * mean) / (n - 1.0));
  REQUIRE(std::fabs(mean - 1.5) < 0.15);
  REQUIRE(std::fabs(sd - std::sqrt(2.0)) < 0.2);
}

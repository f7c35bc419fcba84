#pragma once

// The comparison baseline: fit the hierarchical DDM without the regression
// layer, extract per-subject posterior means of the derived terms, then run
// a frequentist second step on those point estimates (OLS with an intercept,
// or a two-sample t-test, Welch by default).

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "regddm/design.hpp"
#include "regddm/fit.hpp"
#include "regddm/formula.hpp"
#include "regddm/model.hpp"
#include "regddm/sampler.hpp"
#include "regddm/special.hpp"
#include "regddm/table.hpp"

namespace regddm {

struct OlsFit {
  std::vector<std::string> names;  // "(intercept)" first
  std::vector<double> coef;
  std::vector<double> se;
  std::vector<double> t;
  std::vector<double> p;  // two-sided, t distribution with df degrees of freedom
  double sigma = 0.0;     // residual standard deviation
  int df = 0;             // residual degrees of freedom, n - p
};

// Ordinary least squares of y on an intercept plus the given predictor
// columns, via Householder QR.  Rank deficiency names the offending column.
inline OlsFit ols_fit(const std::vector<double>& y,
                      const std::vector<std::vector<double>>& columns,
                      const std::vector<std::string>& names = {}) {
  const std::size_t n = y.size();
  const std::size_t p = columns.size() + 1;
  if (!names.empty() && names.size() != columns.size())
    throw std::invalid_argument("ols_fit: one name per predictor column expected");
  for (const auto& c : columns)
    if (c.size() != n) throw std::invalid_argument("ols_fit: column length must match y");
  if (n < p + 1)
    throw std::invalid_argument("ols_fit needs at least " + std::to_string(p + 1) +
                                " rows for " + std::to_string(p) + " coefficients, got " +
                                std::to_string(n));

  OlsFit fit;
  fit.names.push_back("(intercept)");
  for (std::size_t j = 0; j < columns.size(); ++j)
    fit.names.push_back(names.empty() ? "x" + std::to_string(j + 1) : names[j]);

  // column-major working copy of [1 | columns] and of y
  std::vector<std::vector<double>> a(p, std::vector<double>(n, 1.0));
  for (std::size_t j = 1; j < p; ++j) a[j] = columns[j - 1];
  std::vector<double> qty = y;

  // Householder triangularization; R overwrites the top of `a`
  for (std::size_t k = 0; k < p; ++k) {
    double norm = 0.0;
    for (std::size_t i = k; i < n; ++i) norm += a[k][i] * a[k][i];
    norm = std::sqrt(norm);
    const double col_scale = std::sqrt(static_cast<double>(n));
    if (norm <= 1e-10 * col_scale)
      throw std::invalid_argument("ols_fit: design is rank deficient (column '" +
                                  fit.names[k] + "' is collinear with earlier columns)");
    if (a[k][k] > 0.0) norm = -norm;  // reflect onto the opposite sign for stability
    std::vector<double> v(n - k);
    for (std::size_t i = k; i < n; ++i) v[i - k] = a[k][i];
    v[0] -= norm;
    double vtv = 0.0;
    for (double x : v) vtv += x * x;
    if (vtv > 0.0) {
      for (std::size_t j = k; j < p; ++j) {
        double dot = 0.0;
        for (std::size_t i = k; i < n; ++i) dot += v[i - k] * a[j][i];
        const double f = 2.0 * dot / vtv;
        for (std::size_t i = k; i < n; ++i) a[j][i] -= f * v[i - k];
      }
      double dot = 0.0;
      for (std::size_t i = k; i < n; ++i) dot += v[i - k] * qty[i];
      const double f = 2.0 * dot / vtv;
      for (std::size_t i = k; i < n; ++i) qty[i] -= f * v[i - k];
    }
    a[k][k] = norm;
  }
  for (std::size_t k = 0; k < p; ++k) {
    const double rel = std::fabs(a[k][k]);
    if (!(rel > 1e-10 * std::sqrt(static_cast<double>(n))))
      throw std::invalid_argument("ols_fit: design is rank deficient (column '" +
                                  fit.names[k] + "' is collinear with earlier columns)");
  }

  // back-substitution for the coefficients
  fit.coef.assign(p, 0.0);
  for (std::size_t k = p; k-- > 0;) {
    double s = qty[k];
    for (std::size_t j = k + 1; j < p; ++j) s -= a[j][k] * fit.coef[j];
    fit.coef[k] = s / a[k][k];
  }

  double rss = 0.0;
  for (std::size_t i = p; i < n; ++i) rss += qty[i] * qty[i];
  fit.df = static_cast<int>(n - p);
  const double s2 = rss / static_cast<double>(fit.df);
  fit.sigma = std::sqrt(s2);

  // diag of (X'X)^-1 = row sums of squares of R^-1
  std::vector<std::vector<double>> rinv(p, std::vector<double>(p, 0.0));
  for (std::size_t c = 0; c < p; ++c) {
    rinv[c][c] = 1.0 / a[c][c];
    for (std::size_t k = c; k-- > 0;) {
      double s = 0.0;
      for (std::size_t j = k + 1; j <= c; ++j) s -= a[j][k] * rinv[c][j];
      rinv[c][k] = s / a[k][k];
    }
  }
  fit.se.assign(p, 0.0);
  fit.t.assign(p, 0.0);
  fit.p.assign(p, 0.0);
  for (std::size_t k = 0; k < p; ++k) {
    double d = 0.0;
    for (std::size_t c = k; c < p; ++c) d += rinv[c][k] * rinv[c][k];
    fit.se[k] = std::sqrt(s2 * d);
    fit.t[k] = fit.se[k] > 0.0 ? fit.coef[k] / fit.se[k]
                               : std::numeric_limits<double>::infinity();
    fit.p[k] = student_t_two_sided_p(fit.t[k], fit.df);
  }
  return fit;
}

struct TTestResult {
  double mean_diff = 0.0;  // mean(group1) - mean(group0)
  double se = 0.0;
  double t = 0.0;
  double df = 0.0;
  double p = 0.0;
};

// Two-sample t-test; Welch's unequal-variance form unless pooled is set.
inline TTestResult two_sample_ttest(const std::vector<double>& group0,
                                    const std::vector<double>& group1, bool pooled = false) {
  const double n0 = static_cast<double>(group0.size());
  const double n1 = static_cast<double>(group1.size());
  if (group0.size() < 2 || group1.size() < 2)
    throw std::invalid_argument("two_sample_ttest needs at least 2 observations per group");

  auto moments = [](const std::vector<double>& g, double& mean, double& var) {
    mean = 0.0;
    for (double v : g) mean += v;
    mean /= static_cast<double>(g.size());
    var = 0.0;
    for (double v : g) var += (v - mean) * (v - mean);
    var /= static_cast<double>(g.size() - 1);
  };
  double m0, s20, m1, s21;
  moments(group0, m0, s20);
  moments(group1, m1, s21);
  if (s20 == 0.0 && s21 == 0.0)
    throw std::invalid_argument("two_sample_ttest: both groups have zero variance");

  TTestResult r;
  r.mean_diff = m1 - m0;
  if (pooled) {
    const double sp2 = ((n0 - 1.0) * s20 + (n1 - 1.0) * s21) / (n0 + n1 - 2.0);
    r.se = std::sqrt(sp2 * (1.0 / n0 + 1.0 / n1));
    r.df = n0 + n1 - 2.0;
  } else {
    const double a = s20 / n0, b = s21 / n1;
    r.se = std::sqrt(a + b);
    r.df = (a + b) * (a + b) / (a * a / (n0 - 1.0) + b * b / (n1 - 1.0));
  }
  r.t = r.mean_diff / r.se;
  r.p = student_t_two_sided_p(r.t, r.df);
  return r;
}

struct DdmOnlyFit {
  std::vector<std::string> terms;          // derived term names, spec order
  std::vector<std::string> subject_ids;
  std::vector<std::vector<double>> means;  // [term][subject] posterior means
  PosteriorDraws draws;
};

// First step of the baseline: the hierarchical DDM with no regression layer.
// Point estimates are posterior means of each subject's derived terms.
inline DdmOnlyFit fit_ddm_only(const ModelSpec& spec, const Dataset& data,
                               const SamplerConfig& cfg = default_fit_config(),
                               const PriorConfig& priors = {}) {
  if (spec.regression)
    throw std::invalid_argument(
        "fit_ddm_only expects a model without a regression formula; drop it or use a full fit");
  const Model model(spec, build_design(spec, data), priors);
  DdmOnlyFit out;
  out.draws = fit_model(model, cfg);
  out.subject_ids = data.subjects.id;

  for (const DerivedTerm& term : spec.derived_terms) {
    out.terms.push_back(term.name());
    std::vector<double> means(out.subject_ids.size(), 0.0);
    for (std::size_t i = 0; i < out.subject_ids.size(); ++i) {
      const std::string flat = term.name() + "[" + out.subject_ids[i] + "]";
      int idx = -1;
      for (std::size_t k = 0; k < out.draws.names.size(); ++k) {
        if (out.draws.names[k] == flat) {
          idx = static_cast<int>(k);
          break;
        }
      }
      if (idx < 0) throw std::logic_error("fit_ddm_only: parameter " + flat + " not found");
      double s = 0.0;
      for (int c = 0; c < out.draws.n_chains; ++c)
        for (int d = 0; d < out.draws.n_draws; ++d) s += out.draws.value(c, d, idx);
      means[i] = s / static_cast<double>(out.draws.n_chains * out.draws.n_draws);
    }
    out.means.push_back(std::move(means));
  }
  return out;
}

}  // namespace regddm

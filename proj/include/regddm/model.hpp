#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "regddm/design.hpp"
#include "regddm/distributions.hpp"
#include "regddm/formula.hpp"
#include "regddm/layout.hpp"
#include "regddm/rng.hpp"
#include "regddm/special.hpp"
#include "regddm/wfpt.hpp"

namespace regddm {

// Prior settings.  The four diffusion intercepts carry informative priors on
// their group means and sds; every other location gets N(0, loc_scale^2) and
// every other scale gets half-normal(0, scale_scale).
struct PriorConfig {
  double a0_mean_shape = 1.125, a0_mean_rate = 0.75;  // Gamma (shape, rate)
  double t0_mean_shape = 0.08, t0_mean_rate = 0.2;    // Gamma (shape, rate)
  double z0_mean_loc = 0.5, z0_mean_scale = 0.5;      // normal truncated to (0,1)
  double v0_mean_loc = 2.0, v0_mean_scale = 3.0;      // normal
  double a0_sd_scale = 0.1;                           // half-normal scales
  double t0_sd_scale = 1.0;
  double z0_sd_scale = 0.05;
  double v0_sd_scale = 2.0;
  double loc_scale = 10.0;
  double scale_scale = 5.0;
  double wfpt_tol = 1e-10;  // first-passage series truncation
};

namespace model_detail {

inline double softplus(double x) {
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

// Median of Gamma(shape, rate) by bisection on the regularized lower
// incomplete gamma, in log space to cover shape < 1.
inline double gamma_median(double shape, double rate) {
  double lo = -60.0, hi = 10.0;  // log of the unit-rate quantile
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (gamma_p(shape, std::exp(mid)) < 0.5) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return std::exp(0.5 * (lo + hi)) / rate;
}

inline double half_normal_median(double scale) { return 0.674489750196082 * scale; }

}  // namespace model_detail

// Hierarchical posterior over the unconstrained parameter vector.
//
// Structure, in sampling (= reporting) order:
//   beta (regression coefficients), sigma (gaussian residual sd),
//   mu_/sigma_ hyperparameters per derived diffusion term (the regression
//   target term omits them in case B), mu_/sigma_/latents per partially
//   missing covariate, and finally one subject-length block per derived term.
//
// Positivity-constrained quantities are sampled on the log scale and z_0 on
// the logit scale; the subject hierarchy is normal on that link scale around
// the link of the group mean, so subject draws always satisfy the parameter
// domain.  Subject blocks under a hierarchy are sampled non-centered: the
// coordinate is a standard-normal offset eta with link value mu + sigma*eta,
// which removes the mu/sigma funnel that otherwise produces divergences when
// per-subject data is weak.  The reporting scale (constrain_draws) is always
// the natural per-subject parameter value.  Trial-level diffusion parameters
// are the linear combinations of subject terms and trial covariates on the
// natural scale; combinations that leave the likelihood domain reject the
// proposal with a -infinity result rather than an error.
class Model {
 public:
  Model(ModelSpec spec, DesignData design, PriorConfig prior = {})
      : spec_(std::move(spec)), design_(std::move(design)), prior_(prior) {
    build_layout();
  }

  const ModelSpec& spec() const { return spec_; }
  const DesignData& design() const { return design_; }
  const ParamLayout& layout() const { return layout_; }
  const PriorConfig& prior() const { return prior_; }
  int dim() const { return layout_.total; }

  double log_posterior(const std::vector<double>& u) const { return eval(u, nullptr, nullptr); }

  double log_posterior_grad(const std::vector<double>& u, std::vector<double>& grad) const {
    return eval(u, &grad, nullptr);
  }

  // Map a sampling-scale vector to reported values: hyperparameters and
  // coefficients through their pointwise transforms, hierarchical subject
  // blocks to the natural value implied by their offset coordinates.
  void constrain_draws(const std::vector<double>& u, std::vector<double>& out) const {
    layout_.constrain(u, out);
    for (const TermInfo& ti : terms_) {
      if (ti.case_b_target) continue;  // its block already holds the link value
      const double sg = std::exp(u[static_cast<std::size_t>(ti.sigma)]);
      for (int i = 0; i < design_.n_subjects; ++i) {
        const std::size_t vk = static_cast<std::size_t>(ti.subj + i);
        out[vk] = constrain_value(ti.transform,
                                  u[static_cast<std::size_t>(ti.mu)] + sg * u[vk]);
      }
    }
  }

  // Human-readable reason the posterior is non-finite at u ("" when finite).
  std::string diagnose_nonfinite(const std::vector<double>& u) const {
    std::string why;
    const double lp = eval(u, nullptr, &why);
    return std::isfinite(lp) ? std::string() : why;
  }

  // Unconstrained start near the prior medians, jittered by U(-0.5, 0.5)
  // per coordinate; retries until the posterior is finite.
  std::vector<double> initial_values(Rng& rng) const {
    const std::vector<double> center = median_point();
    std::vector<double> u(center.size());
    std::string why;
    for (int attempt = 0; attempt < 100; ++attempt) {
      for (std::size_t k = 0; k < u.size(); ++k) {
        u[k] = center[k] + rng.uniform(-0.5, 0.5);
      }
      if (std::isfinite(eval(u, nullptr, &why))) return u;
    }
    throw std::runtime_error("failed to find a finite starting point after 100 attempts (" +
                             why + ")");
  }

 private:
  struct TermInfo {
    Transform transform = Transform::identity;  // subject-block scale
    int mu = -1;     // flat offset of the group mean (-1 for the case-B target)
    int sigma = -1;  // flat offset of the group sd
    int subj = 0;    // flat offset of the subject-length block
    int trial_col = -1;  // column in the parameter's trial block (-1 = intercept)
    bool case_b_target = false;
    double sd_scale = 5.0;  // half-normal scale of the group sd prior
  };
  struct McInfo {
    int mu = -1;
    int sigma = -1;
    std::vector<int> slot;  // per subject: flat offset of the latent, -1 observed
  };

  static Transform link_for(const DerivedTerm& d) {
    if (!d.covariate.empty()) return Transform::identity;
    switch (d.param) {
      case 'a': return Transform::log_pos;
      case 't': return Transform::log_pos;
      case 'z': return Transform::logit;
      default: return Transform::identity;
    }
  }

  void build_layout() {
    const int nsub = design_.n_subjects;

    if (spec_.regression) {
      std::vector<std::string> names{"beta_0"};
      for (const auto& col : design_.reg_cols) names.push_back("beta_" + col.name);
      const int bi = layout_.add_vector("beta", std::move(names), Transform::identity);
      beta_ = layout_[bi].offset;
      if (spec_.family == Family::gaussian) {
        sigma_ = layout_[layout_.add("sigma", Transform::log_pos)].offset;
      }
    }

    terms_.resize(spec_.derived_terms.size());
    for (std::size_t d = 0; d < spec_.derived_terms.size(); ++d) {
      const DerivedTerm& dt = spec_.derived_terms[d];
      TermInfo& ti = terms_[d];
      ti.transform = link_for(dt);
      ti.case_b_target = spec_.case_b && dt == spec_.case_b_target;
      if (ti.case_b_target) case_b_term_ = static_cast<int>(d);
      if (dt.covariate.empty()) {
        switch (dt.param) {
          case 'a': ti.sd_scale = prior_.a0_sd_scale; break;
          case 't': ti.sd_scale = prior_.t0_sd_scale; break;
          case 'z': ti.sd_scale = prior_.z0_sd_scale; break;
          default: ti.sd_scale = prior_.v0_sd_scale; break;
        }
      } else {
        ti.sd_scale = prior_.scale_scale;
      }
      if (!ti.case_b_target) {
        ti.mu = layout_[layout_.add("mu_" + dt.name(), ti.transform)].offset;
        ti.sigma = layout_[layout_.add("sigma_" + dt.name(), Transform::log_pos)].offset;
      }
    }

    mcs_.resize(design_.missing_covs.size());
    for (std::size_t m = 0; m < design_.missing_covs.size(); ++m) {
      const auto& mc = design_.missing_covs[m];
      McInfo& info = mcs_[m];
      info.mu = layout_[layout_.add("mu_" + mc.name, Transform::identity)].offset;
      info.sigma = layout_[layout_.add("sigma_" + mc.name, Transform::log_pos)].offset;
      std::vector<std::string> names;
      names.reserve(mc.subjects.size());
      for (int s : mc.subjects) {
        names.push_back(mc.name + "_mis[" + design_.subject_ids[static_cast<std::size_t>(s)] +
                        "]");
      }
      const int li = layout_.add_vector(mc.name + "_mis", std::move(names), Transform::identity);
      info.slot.assign(static_cast<std::size_t>(nsub), -1);
      for (std::size_t pos = 0; pos < mc.subjects.size(); ++pos) {
        info.slot[static_cast<std::size_t>(mc.subjects[pos])] =
            layout_[li].offset + static_cast<int>(pos);
      }
    }

    for (std::size_t d = 0; d < spec_.derived_terms.size(); ++d) {
      const DerivedTerm& dt = spec_.derived_terms[d];
      std::vector<std::string> names;
      names.reserve(static_cast<std::size_t>(nsub));
      for (int i = 0; i < nsub; ++i) {
        names.push_back(dt.name() + "[" + design_.subject_ids[static_cast<std::size_t>(i)] + "]");
      }
      // hierarchical blocks hold the standard-normal offsets (identity scale);
      // the case-B target has no hierarchy and keeps its link coordinate
      const Transform block_t =
          terms_[d].case_b_target ? terms_[d].transform : Transform::identity;
      terms_[d].subj = layout_[layout_.add_vector(dt.name(), std::move(names), block_t)].offset;
    }

    for (std::size_t d = 0; d < spec_.derived_terms.size(); ++d) {
      const DerivedTerm& dt = spec_.derived_terms[d];
      const int pi = DesignData::param_index(dt.param);
      if (!dt.covariate.empty()) {
        const auto& names = design_.trial_blocks[pi].cov_names;
        for (std::size_t j = 0; j < names.size(); ++j) {
          if (names[j] == dt.covariate) terms_[d].trial_col = static_cast<int>(j);
        }
        if (terms_[d].trial_col < 0) {
          throw std::logic_error("trial covariate '" + dt.covariate + "' missing from design");
        }
      }
      param_terms_[pi].push_back(static_cast<int>(d));
    }
  }

  std::string flat_name(int k) const {
    for (const auto& b : layout_.blocks) {
      if (k >= b.offset && k < b.offset + b.size) {
        return b.element_names.empty() ? b.name
                                       : b.element_names[static_cast<std::size_t>(k - b.offset)];
      }
    }
    return "parameter " + std::to_string(k);
  }

  // Single evaluation path: log posterior, with the exact unconstrained-scale
  // gradient written to *grad when requested and a rejection reason written
  // to *why when the result is non-finite.
  double eval(const std::vector<double>& u, std::vector<double>* grad, std::string* why) const {
    const int n = layout_.total;
    if (static_cast<int>(u.size()) != n) {
      throw std::invalid_argument("parameter vector has length " + std::to_string(u.size()) +
                                  ", model has " + std::to_string(n));
    }
    const double neg_inf = -std::numeric_limits<double>::infinity();
    auto reject = [&](const std::string& msg) {
      if (why) *why = msg;
      if (grad) {
        grad->assign(static_cast<std::size_t>(n), 0.0);
      }
      return neg_inf;
    };

    // transform to the constrained scale
    std::vector<double> c(static_cast<std::size_t>(n)), dcdu(static_cast<std::size_t>(n), 1.0);
    for (const auto& b : layout_.blocks) {
      for (int i = 0; i < b.size; ++i) {
        const std::size_t k = static_cast<std::size_t>(b.offset + i);
        switch (b.transform) {
          case Transform::identity:
            c[k] = u[k];
            if (!std::isfinite(c[k])) return reject("non-finite value for " + flat_name(b.offset + i));
            break;
          case Transform::log_pos:
            c[k] = std::exp(u[k]);
            dcdu[k] = c[k];
            if (!std::isfinite(c[k]) || c[k] <= 0.0) {
              return reject("log-scale overflow/underflow for " + flat_name(b.offset + i));
            }
            break;
          case Transform::logit:
            c[k] = u[k] >= 0.0 ? 1.0 / (1.0 + std::exp(-u[k]))
                               : std::exp(u[k]) / (1.0 + std::exp(u[k]));
            dcdu[k] = c[k] * (1.0 - c[k]);
            if (!(c[k] > 0.0 && c[k] < 1.0)) {
              return reject("logit-scale saturation for " + flat_name(b.offset + i));
            }
            break;
        }
      }
    }

    std::vector<double> grad_c(static_cast<std::size_t>(n), 0.0);
    std::vector<double> jac_grad(static_cast<std::size_t>(n), 0.0);
    double lp = 0.0;

    // jacobian helper for a density stated over the constrained value
    auto own_jacobian = [&](Transform t, int k) {
      switch (t) {
        case Transform::identity:
          break;
        case Transform::log_pos:
          lp += u[static_cast<std::size_t>(k)];
          jac_grad[static_cast<std::size_t>(k)] += 1.0;
          break;
        case Transform::logit: {
          const double uu = u[static_cast<std::size_t>(k)];
          lp += -(model_detail::softplus(uu) + model_detail::softplus(-uu));
          jac_grad[static_cast<std::size_t>(k)] += 1.0 - 2.0 * c[static_cast<std::size_t>(k)];
          break;
        }
      }
    };

    // --- priors -----------------------------------------------------------
    if (spec_.regression) {
      const int nb = 1 + static_cast<int>(design_.reg_cols.size());
      for (int k = 0; k < nb; ++k) {
        lp += normal_lpdf(c[static_cast<std::size_t>(beta_ + k)], 0.0, prior_.loc_scale,
                          &grad_c[static_cast<std::size_t>(beta_ + k)]);
      }
      if (sigma_ >= 0) {
        lp += half_normal_lpdf(c[static_cast<std::size_t>(sigma_)], prior_.scale_scale,
                               &grad_c[static_cast<std::size_t>(sigma_)]);
        own_jacobian(Transform::log_pos, sigma_);
      }
    }
    for (std::size_t d = 0; d < terms_.size(); ++d) {
      const TermInfo& ti = terms_[d];
      if (ti.mu < 0) continue;  // case-B target: hierarchy replaced by the regression
      const DerivedTerm& dt = spec_.derived_terms[d];
      const std::size_t mk = static_cast<std::size_t>(ti.mu);
      if (dt.covariate.empty()) {
        switch (dt.param) {
          case 'a':
            lp += gamma_lpdf(c[mk], prior_.a0_mean_shape, prior_.a0_mean_rate, &grad_c[mk]);
            break;
          case 't':
            lp += gamma_lpdf(c[mk], prior_.t0_mean_shape, prior_.t0_mean_rate, &grad_c[mk]);
            break;
          case 'z':
            // truncation to (0,1) is a constant factor; left unnormalized
            lp += normal_lpdf(c[mk], prior_.z0_mean_loc, prior_.z0_mean_scale, &grad_c[mk]);
            break;
          default:
            lp += normal_lpdf(c[mk], prior_.v0_mean_loc, prior_.v0_mean_scale, &grad_c[mk]);
            break;
        }
      } else {
        lp += normal_lpdf(c[mk], 0.0, prior_.loc_scale, &grad_c[mk]);
      }
      own_jacobian(ti.transform, ti.mu);
      const std::size_t sk = static_cast<std::size_t>(ti.sigma);
      lp += half_normal_lpdf(c[sk], ti.sd_scale, &grad_c[sk]);
      own_jacobian(Transform::log_pos, ti.sigma);
    }
    for (const McInfo& info : mcs_) {
      lp += normal_lpdf(c[static_cast<std::size_t>(info.mu)], 0.0, prior_.loc_scale,
                        &grad_c[static_cast<std::size_t>(info.mu)]);
      lp += half_normal_lpdf(c[static_cast<std::size_t>(info.sigma)], prior_.scale_scale,
                             &grad_c[static_cast<std::size_t>(info.sigma)]);
      own_jacobian(Transform::log_pos, info.sigma);
    }
    if (!std::isfinite(lp)) return reject("non-finite prior density");

    // --- subject hierarchy (non-centered on the link scale) ----------------
    // Each hierarchical subject coordinate is a standard-normal offset; the
    // link value is mu + sigma * offset and nat[] holds its natural value.
    // gnat[] collects d lp / d nat from the regression and trial layers and
    // is chained back to offset, mu, and sigma at the end.
    const int nsub = design_.n_subjects;
    const std::size_t nterm = terms_.size();
    std::vector<double> nat(nterm * static_cast<std::size_t>(nsub), 0.0);
    std::vector<double> dnat(nterm * static_cast<std::size_t>(nsub), 1.0);  // d nat / d link
    std::vector<double> gnat(nterm * static_cast<std::size_t>(nsub), 0.0);
    for (std::size_t d = 0; d < nterm; ++d) {
      const TermInfo& ti = terms_[d];
      for (int i = 0; i < nsub; ++i) {
        const std::size_t vk = static_cast<std::size_t>(ti.subj + i);
        const std::size_t di = d * static_cast<std::size_t>(nsub) + static_cast<std::size_t>(i);
        if (ti.case_b_target) {
          nat[di] = c[vk];  // pointwise-constrained; gradient flows through grad_c
          continue;
        }
        lp += normal_lpdf(u[vk], 0.0, 1.0, &grad_c[vk]);
        const double link = u[static_cast<std::size_t>(ti.mu)] +
                            c[static_cast<std::size_t>(ti.sigma)] * u[vk];
        switch (ti.transform) {
          case Transform::identity:
            nat[di] = link;
            break;
          case Transform::log_pos:
            nat[di] = std::exp(link);
            dnat[di] = nat[di];
            break;
          case Transform::logit:
            nat[di] = link >= 0.0 ? 1.0 / (1.0 + std::exp(-link))
                                  : std::exp(link) / (1.0 + std::exp(link));
            dnat[di] = nat[di] * (1.0 - nat[di]);
            break;
        }
        if (!std::isfinite(nat[di]) ||
            (ti.transform == Transform::log_pos && nat[di] <= 0.0) ||
            (ti.transform == Transform::logit && !(nat[di] > 0.0 && nat[di] < 1.0))) {
          return reject("link-scale overflow for " + flat_name(ti.subj + i));
        }
      }
    }
    if (!std::isfinite(lp)) return reject("non-finite hierarchy density");

    // --- covariate model for partially missing columns ---------------------
    for (std::size_t m = 0; m < mcs_.size(); ++m) {
      const McInfo& info = mcs_[m];
      const auto& mc = design_.missing_covs[m];
      const std::size_t mk = static_cast<std::size_t>(info.mu);
      const std::size_t sk = static_cast<std::size_t>(info.sigma);
      for (int i = 0; i < nsub; ++i) {
        const int slot = info.slot[static_cast<std::size_t>(i)];
        if (slot >= 0) {
          lp += normal_lpdf(c[static_cast<std::size_t>(slot)], c[mk], c[sk],
                            &grad_c[static_cast<std::size_t>(slot)], &grad_c[mk], &grad_c[sk]);
        } else {
          lp += normal_lpdf(mc.values[static_cast<std::size_t>(i)], c[mk], c[sk], nullptr,
                            &grad_c[mk], &grad_c[sk]);
        }
      }
    }
    if (!std::isfinite(lp)) return reject("non-finite covariate model density");

    // --- regression layer ---------------------------------------------------
    if (spec_.regression) {
      std::vector<double> xrow(design_.reg_cols.size());
      for (int i = 0; i < nsub; ++i) {
        double eta = c[static_cast<std::size_t>(beta_)];
        for (std::size_t k = 0; k < design_.reg_cols.size(); ++k) {
          const auto& col = design_.reg_cols[k];
          double x;
          if (col.kind == DesignData::RegCol::Kind::derived) {
            x = nat[static_cast<std::size_t>(col.derived_index) *
                        static_cast<std::size_t>(nsub) +
                    static_cast<std::size_t>(i)];
          } else if (col.missing_index >= 0 &&
                     mcs_[static_cast<std::size_t>(col.missing_index)]
                             .slot[static_cast<std::size_t>(i)] >= 0) {
            x = c[static_cast<std::size_t>(
                mcs_[static_cast<std::size_t>(col.missing_index)].slot[static_cast<std::size_t>(i)])];
          } else {
            x = col.values[static_cast<std::size_t>(i)];
          }
          xrow[k] = x;
          eta += c[static_cast<std::size_t>(beta_ + 1 + static_cast<int>(k))] * x;
        }
        double deta = 0.0;
        if (spec_.case_b) {
          const TermInfo& ti = terms_[static_cast<std::size_t>(case_b_term_)];
          const std::size_t vk = static_cast<std::size_t>(ti.subj + i);
          lp += normal_lpdf(c[vk], eta, c[static_cast<std::size_t>(sigma_)], &grad_c[vk], &deta,
                            &grad_c[static_cast<std::size_t>(sigma_)]);
          own_jacobian(ti.transform, ti.subj + i);
        } else {
          const double y = design_.outcome[static_cast<std::size_t>(i)];
          switch (spec_.family) {
            case Family::gaussian:
              lp += normal_lpdf(y, eta, c[static_cast<std::size_t>(sigma_)], nullptr, &deta,
                                &grad_c[static_cast<std::size_t>(sigma_)]);
              break;
            case Family::bernoulli:
              lp += bernoulli_logit_lpmf(y, eta, &deta);
              break;
            case Family::poisson:
              lp += poisson_log_lpmf(y, eta, &deta);
              break;
          }
        }
        grad_c[static_cast<std::size_t>(beta_)] += deta;
        for (std::size_t k = 0; k < design_.reg_cols.size(); ++k) {
          const auto& col = design_.reg_cols[k];
          const double bk = c[static_cast<std::size_t>(beta_ + 1 + static_cast<int>(k))];
          grad_c[static_cast<std::size_t>(beta_ + 1 + static_cast<int>(k))] += deta * xrow[k];
          if (col.kind == DesignData::RegCol::Kind::derived) {
            gnat[static_cast<std::size_t>(col.derived_index) * static_cast<std::size_t>(nsub) +
                 static_cast<std::size_t>(i)] += deta * bk;
          } else if (col.missing_index >= 0) {
            const int slot =
                mcs_[static_cast<std::size_t>(col.missing_index)].slot[static_cast<std::size_t>(i)];
            if (slot >= 0) grad_c[static_cast<std::size_t>(slot)] += deta * bk;
          }
        }
      }
      if (!std::isfinite(lp)) return reject("non-finite regression density");
    }

    // --- trial likelihood ----------------------------------------------------
    for (int i = 0; i < nsub; ++i) {
      for (const int r : design_.subject_trials[static_cast<std::size_t>(i)]) {
        double pv[4];
        for (int p = 0; p < 4; ++p) {
          const auto& blk = design_.trial_blocks[p];
          const std::size_t kcols = blk.cov_names.size();
          double val = 0.0;
          for (const int d : param_terms_[static_cast<std::size_t>(p)]) {
            const TermInfo& ti = terms_[static_cast<std::size_t>(d)];
            const double sv = nat[static_cast<std::size_t>(d) * static_cast<std::size_t>(nsub) +
                                  static_cast<std::size_t>(i)];
            val += ti.trial_col < 0
                       ? sv
                       : sv * blk.x[static_cast<std::size_t>(r) * kcols +
                                    static_cast<std::size_t>(ti.trial_col)];
          }
          pv[p] = val;
        }
        const DdmParams dp{pv[0], pv[1], pv[2], pv[3]};
        double lpt = 0.0;
        std::array<double, 4> g{};
        if (!wfpt_log_density_grad_raw(static_cast<int>(design_.response[static_cast<std::size_t>(r)]),
                                       design_.rt[static_cast<std::size_t>(r)], dp, &lpt, g,
                                       prior_.wfpt_tol)) {
          return reject("zero trial likelihood for subject '" +
                        design_.subject_ids[static_cast<std::size_t>(i)] + "' (a=" +
                        std::to_string(dp.a) + ", t0=" + std::to_string(dp.t0) + ", z=" +
                        std::to_string(dp.z) + ", v=" + std::to_string(dp.v) + ")");
        }
        lp += lpt;
        for (int p = 0; p < 4; ++p) {
          const auto& blk = design_.trial_blocks[p];
          const std::size_t kcols = blk.cov_names.size();
          for (const int d : param_terms_[static_cast<std::size_t>(p)]) {
            const TermInfo& ti = terms_[static_cast<std::size_t>(d)];
            gnat[static_cast<std::size_t>(d) * static_cast<std::size_t>(nsub) +
                 static_cast<std::size_t>(i)] +=
                ti.trial_col < 0 ? g[static_cast<std::size_t>(p)]
                                 : g[static_cast<std::size_t>(p)] *
                                       blk.x[static_cast<std::size_t>(r) * kcols +
                                             static_cast<std::size_t>(ti.trial_col)];
          }
        }
      }
    }
    if (!std::isfinite(lp)) return reject("non-finite trial likelihood");

    if (grad) {
      // chain d lp / d nat back through link = mu + sigma * offset
      for (std::size_t d = 0; d < nterm; ++d) {
        const TermInfo& ti = terms_[d];
        for (int i = 0; i < nsub; ++i) {
          const std::size_t vk = static_cast<std::size_t>(ti.subj + i);
          const std::size_t di = d * static_cast<std::size_t>(nsub) + static_cast<std::size_t>(i);
          if (ti.case_b_target) {
            grad_c[vk] += gnat[di];
            continue;
          }
          const double glink = gnat[di] * dnat[di];
          grad_c[vk] += glink * c[static_cast<std::size_t>(ti.sigma)];
          jac_grad[static_cast<std::size_t>(ti.mu)] += glink;
          grad_c[static_cast<std::size_t>(ti.sigma)] += glink * u[vk];
        }
      }
      grad->resize(static_cast<std::size_t>(n));
      for (std::size_t k = 0; k < static_cast<std::size_t>(n); ++k) {
        (*grad)[k] = grad_c[k] * dcdu[k] + jac_grad[k];
      }
    }
    return lp;
  }

  // Prior medians on the unconstrained scale, the center of initialization.
  std::vector<double> median_point() const {
    using model_detail::gamma_median;
    using model_detail::half_normal_median;
    std::vector<double> m(static_cast<std::size_t>(layout_.total), 0.0);
    if (sigma_ >= 0) {
      m[static_cast<std::size_t>(sigma_)] = std::log(half_normal_median(prior_.scale_scale));
    }
    const double a0_med = std::log(gamma_median(prior_.a0_mean_shape, prior_.a0_mean_rate));
    const double t0_med = std::log(gamma_median(prior_.t0_mean_shape, prior_.t0_mean_rate));
    for (std::size_t d = 0; d < terms_.size(); ++d) {
      const DerivedTerm& dt = spec_.derived_terms[d];
      const TermInfo& ti = terms_[d];
      double mu_med = 0.0;  // unconstrained scale
      if (dt.covariate.empty()) {
        switch (dt.param) {
          case 'a': mu_med = a0_med; break;
          case 't': mu_med = t0_med; break;
          case 'z': mu_med = 0.0; break;  // logit of the symmetric prior median 0.5
          default: mu_med = prior_.v0_mean_loc; break;
        }
      }
      if (ti.mu >= 0) {
        m[static_cast<std::size_t>(ti.mu)] = mu_med;
        m[static_cast<std::size_t>(ti.sigma)] = std::log(half_normal_median(ti.sd_scale));
      }
      if (ti.case_b_target) {
        // link-scale coordinates; hierarchical blocks are offsets centered at 0
        for (int i = 0; i < design_.n_subjects; ++i) {
          m[static_cast<std::size_t>(ti.subj + i)] = mu_med;
        }
      }
    }
    for (const McInfo& info : mcs_) {
      m[static_cast<std::size_t>(info.sigma)] = std::log(half_normal_median(prior_.scale_scale));
    }
    return m;
  }

  ModelSpec spec_;
  DesignData design_;
  PriorConfig prior_;
  ParamLayout layout_;
  std::vector<TermInfo> terms_;
  std::array<std::vector<int>, 4> param_terms_;
  std::vector<McInfo> mcs_;
  int beta_ = -1;
  int sigma_ = -1;
  int case_b_term_ = -1;
};

// Convenience: validate, design, and assemble in one step.
inline Model build_model(const ModelSpec& spec, const Dataset& data, PriorConfig prior = {}) {
  return Model(spec, build_design(spec, data), prior);
}

}  // namespace regddm

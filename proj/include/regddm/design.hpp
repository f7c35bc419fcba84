#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "regddm/formula.hpp"
#include "regddm/table.hpp"

namespace regddm {

// Model-ready data: trial-level covariate matrices per diffusion parameter,
// the subject-level regression design, and bookkeeping for latent missing
// covariates.
struct DesignData {
  struct TrialBlock {
    std::vector<std::string> cov_names;
    std::vector<double> x;  // n_trials x cov_names.size(), row-major
  };
  TrialBlock trial_blocks[4];  // indexed like kDdmParams: a, t, z, v

  struct RegCol {
    enum class Kind { derived, numeric, dummy };
    std::string name;       // coefficient suffix, e.g. "v_0", "age", "genderM"
    Kind kind = Kind::numeric;
    int derived_index = -1;       // into ModelSpec::derived_terms
    std::string covariate;        // source subject column for numeric/dummy
    int missing_index = -1;       // into missing_covs for numeric with NAs
    std::vector<double> values;   // per subject; NaN where latent fills in
  };
  std::vector<RegCol> reg_cols;

  std::vector<double> outcome;  // case A only (bernoulli/factor mapped to 0/1)

  struct MissingCov {
    std::string name;
    std::vector<int> subjects;    // subject indices lacking the value
    std::vector<double> values;   // observed values, NaN at missing rows
  };
  std::vector<MissingCov> missing_covs;

  // flat trial data
  std::vector<double> response, rt;
  std::vector<std::vector<int>> subject_trials;
  std::vector<std::string> subject_ids;
  std::vector<std::string> warnings;

  int n_subjects = 0;
  int n_trials = 0;

  static int param_index(char p) {
    for (int i = 0; i < 4; ++i) {
      if (kDdmParams[i] == p) return i;
    }
    throw std::logic_error("unknown diffusion parameter");
  }
};

namespace design_detail {

inline std::string list_columns(const Table& t) {
  std::string s;
  for (const auto& c : t.cols) {
    if (!s.empty()) s += ", ";
    s += c.name;
  }
  return s.empty() ? "(none)" : s;
}

inline bool near_integer(double v) { return std::fabs(v - std::round(v)) < 1e-9; }

// Append the design columns for one subject-side term (derived reference,
// numeric covariate, or factor dummies).
inline void add_subject_term(DesignData& dd, const ModelSpec& spec, const Dataset& ds,
                             const std::string& term) {
  const std::size_t n = ds.n_subjects();
  if (const DerivedTerm* d = spec.find_derived(term)) {
    if (ds.subjects.find(term)) {
      throw DataError("'" + term + "' is both a derived model term and a subject column; "
                      "rename the column");
    }
    DesignData::RegCol col;
    col.kind = DesignData::RegCol::Kind::derived;
    col.name = term;
    for (std::size_t k = 0; k < spec.derived_terms.size(); ++k) {
      if (spec.derived_terms[k] == *d) col.derived_index = static_cast<int>(k);
    }
    dd.reg_cols.push_back(std::move(col));
    return;
  }
  const Column* c = ds.subjects.find(term);
  if (!c) {
    throw DataError("regression term '" + term + "' is neither a derived model term nor a "
                    "subject column (columns: " + list_columns(ds.subjects) + ")");
  }
  if (c->numeric) {
    DesignData::RegCol col;
    col.kind = DesignData::RegCol::Kind::numeric;
    col.name = term;
    col.covariate = term;
    col.values.assign(c->num.begin(), c->num.end());
    int observed = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (!c->missing[i]) ++observed;
    }
    if (observed == 0) {
      throw DataError("covariate '" + term + "' has no observed values");
    }
    if (observed < static_cast<int>(n)) {
      DesignData::MissingCov mc;
      mc.name = term;
      mc.values.assign(c->num.begin(), c->num.end());
      for (std::size_t i = 0; i < n; ++i) {
        if (c->missing[i]) mc.subjects.push_back(static_cast<int>(i));
      }
      col.missing_index = static_cast<int>(dd.missing_covs.size());
      dd.missing_covs.push_back(std::move(mc));
    } else {
      double mn = c->num[0], mx = c->num[0], mean = 0.0;
      for (double v : c->num) {
        mn = std::min(mn, v);
        mx = std::max(mx, v);
        mean += v;
      }
      mean /= static_cast<double>(n);
      if (mn == mx) {
        dd.warnings.push_back("covariate '" + term + "' has zero variance");
      }
      if (std::fabs(mean) > 10.0) {
        dd.warnings.push_back("covariate '" + term + "' has a large offset (mean " +
                              std::to_string(mean) + "); consider centering — prior scales "
                              "assume roughly unit-scale predictors");
      }
    }
    dd.reg_cols.push_back(std::move(col));
    return;
  }
  // factor: dummies against the first sorted level; missing becomes its own level
  std::set<std::string> levels;
  bool has_missing = false;
  for (std::size_t i = 0; i < n; ++i) {
    if (c->missing[i]) {
      has_missing = true;
    } else {
      levels.insert(c->str[i]);
    }
  }
  if (levels.empty()) throw DataError("factor '" + term + "' has no observed levels");
  std::vector<std::string> ordered(levels.begin(), levels.end());
  auto add_dummy = [&](const std::string& level, bool is_na) {
    DesignData::RegCol col;
    col.kind = DesignData::RegCol::Kind::dummy;
    col.name = term + (is_na ? "NA" : level);
    col.covariate = term;
    col.values.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      const bool hit = is_na ? c->missing[i] : (!c->missing[i] && c->str[i] == level);
      col.values[i] = hit ? 1.0 : 0.0;
    }
    dd.reg_cols.push_back(std::move(col));
  };
  for (std::size_t k = 1; k < ordered.size(); ++k) add_dummy(ordered[k], false);
  if (has_missing) add_dummy("", true);
  if (ordered.size() == 1 && !has_missing) {
    dd.warnings.push_back("factor '" + term + "' has a single level; no contrast columns");
  }
}

}  // namespace design_detail

// Assemble design matrices for a classified model against a validated
// dataset.
inline DesignData build_design(const ModelSpec& spec, const Dataset& ds) {
  using design_detail::near_integer;
  DesignData dd;
  dd.n_subjects = static_cast<int>(ds.n_subjects());
  dd.n_trials = static_cast<int>(ds.n_trials());
  dd.response = ds.response;
  dd.rt = ds.rt;
  dd.subject_trials = ds.subject_trials;
  dd.subject_ids = ds.subjects.id;

  // trial-side covariate blocks
  for (int pi = 0; pi < 4; ++pi) {
    const Formula* f = spec.ddm_formula(kDdmParams[pi]);
    if (!f) continue;
    auto& blk = dd.trial_blocks[pi];
    blk.cov_names = f->rhs;
    std::vector<const Column*> cols;
    for (const auto& name : f->rhs) {
      const Column* c = ds.trials.find(name);
      if (!c) {
        throw DataError("formula \"" + render(*f) + "\": trial covariate '" + name +
                        "' not found (columns: " + design_detail::list_columns(ds.trials) + ")");
      }
      if (name == "response" || name == "rt") {
        throw DataError("formula \"" + render(*f) + "\": '" + name +
                        "' cannot be used as a covariate");
      }
      cols.push_back(c);
      double mn = c->num[0], mx = c->num[0], mean = 0.0;
      for (double v : c->num) {
        mn = std::min(mn, v);
        mx = std::max(mx, v);
        mean += v;
      }
      mean /= static_cast<double>(c->num.size());
      if (mn == mx) dd.warnings.push_back("trial covariate '" + name + "' has zero variance");
      if (std::fabs(mean) > 10.0) {
        dd.warnings.push_back("trial covariate '" + name + "' has a large offset (mean " +
                              std::to_string(mean) + "); consider centering — prior scales "
                              "assume roughly unit-scale predictors");
      }
    }
    const std::size_t k = cols.size();
    blk.x.resize(ds.n_trials() * k);
    for (std::size_t r = 0; r < ds.n_trials(); ++r) {
      for (std::size_t j = 0; j < k; ++j) blk.x[r * k + j] = cols[j]->num[r];
    }
  }

  if (!spec.regression) return dd;

  // subject-side regression design
  for (const auto& term : spec.regression->rhs) {
    design_detail::add_subject_term(dd, spec, ds, term);
  }

  if (spec.case_b) return dd;

  // case A: typed outcome column
  const std::string& yname = spec.regression->lhs;
  const Column* y = ds.subjects.find(yname);
  if (!y) {
    throw DataError("outcome column '" + yname + "' not found in the subject table (columns: " +
                    design_detail::list_columns(ds.subjects) + ")");
  }
  if (y->any_missing()) {
    throw DataError("outcome '" + yname + "' has missing values; the outcome must be observed "
                    "for every subject");
  }
  dd.outcome.resize(ds.n_subjects());
  switch (spec.family) {
    case Family::gaussian: {
      if (!y->numeric) {
        throw DataError("outcome '" + yname + "' must be numeric for family gaussian");
      }
      dd.outcome = y->num;
      break;
    }
    case Family::bernoulli: {
      if (y->numeric) {
        for (std::size_t i = 0; i < y->num.size(); ++i) {
          if (y->num[i] != 0.0 && y->num[i] != 1.0) {
            throw DataError("outcome '" + yname + "' must be binary 0/1 for family bernoulli");
          }
          dd.outcome[i] = y->num[i];
        }
      } else {
        std::set<std::string> levels(y->str.begin(), y->str.end());
        if (levels.size() != 2) {
          throw DataError("outcome '" + yname + "' must have exactly two levels for family "
                          "bernoulli, found " + std::to_string(levels.size()));
        }
        const std::string ref = *levels.begin();
        for (std::size_t i = 0; i < y->str.size(); ++i) {
          dd.outcome[i] = y->str[i] == ref ? 0.0 : 1.0;
        }
        dd.warnings.push_back("outcome '" + yname + "': '" + ref + "' -> 0, '" +
                              *std::next(levels.begin()) + "' -> 1");
      }
      break;
    }
    case Family::poisson: {
      if (!y->numeric) {
        throw DataError("outcome '" + yname + "' must be numeric for family poisson");
      }
      for (std::size_t i = 0; i < y->num.size(); ++i) {
        if (y->num[i] < 0.0 || !near_integer(y->num[i])) {
          throw DataError("outcome '" + yname + "' must hold non-negative integers for family "
                          "poisson");
        }
        dd.outcome[i] = std::round(y->num[i]);
      }
      break;
    }
  }
  return dd;
}

}  // namespace regddm

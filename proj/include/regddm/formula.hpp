#pragma once

#include <algorithm>
#include <cctype>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace regddm {

// One parsed formula "lhs ~ term (+ term)*".  An intercept-only right-hand
// side ("lhs ~ 1") is stored as an empty term list.
struct Formula {
  std::string lhs;
  std::vector<std::string> rhs;
};

class FormulaError : public std::runtime_error {
 public:
  explicit FormulaError(const std::string& msg) : std::runtime_error(msg) {}
};

namespace formula_detail {

inline bool ident_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_'; }
inline bool ident_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }

struct Token {
  enum class Kind { ident, one, tilde, plus, end };
  Kind kind;
  std::string text;
  std::size_t pos;  // 1-based position in the input
};

inline std::vector<Token> tokenize(const std::string& s) {
  std::vector<Token> out;
  std::size_t i = 0;
  while (i < s.size()) {
    const char c = s[i];
    if (std::isspace(static_cast<unsigned char>(c))) {
      ++i;
      continue;
    }
    const std::size_t pos = i + 1;
    if (c == '~') {
      out.push_back({Token::Kind::tilde, "~", pos});
      ++i;
    } else if (c == '+') {
      out.push_back({Token::Kind::plus, "+", pos});
      ++i;
    } else if (c == '1' && (i + 1 >= s.size() || !ident_char(s[i + 1]))) {
      out.push_back({Token::Kind::one, "1", pos});
      ++i;
    } else if (ident_start(c)) {
      std::size_t j = i + 1;
      while (j < s.size() && ident_char(s[j])) ++j;
      out.push_back({Token::Kind::ident, s.substr(i, j - i), pos});
      i = j;
    } else {
      throw FormulaError("formula \"" + s + "\": unexpected character '" + std::string(1, c) +
                         "' at position " + std::to_string(pos));
    }
  }
  out.push_back({Token::Kind::end, "", s.size() + 1});
  return out;
}

}  // namespace formula_detail

// Parse "lhs ~ term (+ term)*".  The literal 1 may appear as the only
// right-hand-side term and denotes an intercept-only formula.
inline Formula parse_formula(const std::string& text) {
  using formula_detail::Token;
  const auto toks = formula_detail::tokenize(text);
  std::size_t i = 0;
  auto fail = [&](const std::string& what, std::size_t pos) -> void {
    throw FormulaError("formula \"" + text + "\": " + what + " at position " +
                       std::to_string(pos));
  };
  Formula f;
  if (toks[i].kind != Token::Kind::ident) {
    fail("expected a name on the left of '~'", toks[i].pos);
  }
  f.lhs = toks[i++].text;
  if (toks[i].kind != Token::Kind::tilde) {
    fail("expected '~' after the response name", toks[i].pos);
  }
  ++i;
  if (toks[i].kind == Token::Kind::one) {
    ++i;
    if (toks[i].kind != Token::Kind::end) {
      fail("the literal 1 must be the only right-hand-side term", toks[i].pos);
    }
    return f;
  }
  for (;;) {
    if (toks[i].kind != Token::Kind::ident) {
      fail("expected a term name", toks[i].pos);
    }
    const std::string& term = toks[i].text;
    if (std::find(f.rhs.begin(), f.rhs.end(), term) != f.rhs.end()) {
      fail("duplicate term '" + term + "'", toks[i].pos);
    }
    f.rhs.push_back(term);
    ++i;
    if (toks[i].kind == Token::Kind::end) break;
    if (toks[i].kind != Token::Kind::plus) {
      fail("expected '+' between terms", toks[i].pos);
    }
    ++i;
  }
  return f;
}

inline std::string render(const Formula& f) {
  std::string s = f.lhs + " ~ ";
  if (f.rhs.empty()) return s + "1";
  for (std::size_t i = 0; i < f.rhs.size(); ++i) {
    if (i) s += " + ";
    s += f.rhs[i];
  }
  return s;
}

enum class Family { gaussian, bernoulli, poisson };

inline std::string family_name(Family f) {
  switch (f) {
    case Family::gaussian: return "gaussian";
    case Family::bernoulli: return "bernoulli";
    case Family::poisson: return "poisson";
  }
  return "gaussian";
}

inline Family parse_family(const std::string& s) {
  if (s == "gaussian") return Family::gaussian;
  if (s == "bernoulli") return Family::bernoulli;
  if (s == "poisson") return Family::poisson;
  throw FormulaError("unknown family '" + s + "' (expected gaussian, bernoulli or poisson)");
}

// A subject-level quantity derived from the diffusion layer: the per-subject
// intercept of a parameter ("v_0") or a per-subject slope on a trial
// covariate ("v_memload").
struct DerivedTerm {
  char param = 'v';
  std::string covariate;  // empty for the intercept

  std::string name() const {
    return std::string(1, param) + "_" + (covariate.empty() ? "0" : covariate);
  }
  bool operator==(const DerivedTerm& o) const {
    return param == o.param && covariate == o.covariate;
  }
};

inline constexpr char kDdmParams[4] = {'a', 't', 'z', 'v'};

// Classified model: up to one diffusion formula per parameter plus one
// regression formula, which either explains an observed outcome (case A)
// or treats one derived term as the response of a subject-level regression
// (case B, gaussian only).
struct ModelSpec {
  std::vector<Formula> ddm;
  std::optional<Formula> regression;
  bool case_b = false;
  DerivedTerm case_b_target;
  Family family = Family::gaussian;
  std::vector<DerivedTerm> derived_terms;

  const Formula* ddm_formula(char param) const {
    for (const auto& f : ddm) {
      if (f.lhs.size() == 1 && f.lhs[0] == param) return &f;
    }
    return nullptr;
  }

  const DerivedTerm* find_derived(const std::string& name) const {
    for (const auto& d : derived_terms) {
      if (d.name() == name) return &d;
    }
    return nullptr;
  }

  std::vector<std::string> model_lines() const {
    std::vector<std::string> out;
    for (const auto& f : ddm) out.push_back(render(f));
    if (regression) out.push_back(render(*regression));
    return out;
  }
};

namespace formula_detail {

inline bool is_ddm_lhs(const std::string& s) {
  return s.size() == 1 && (s == "a" || s == "t" || s == "z" || s == "v");
}

// Fill in the derived-term set and reject derived-term references inside the
// diffusion formulas themselves.
inline void finish_ddm_side(ModelSpec& spec) {
  for (char p : kDdmParams) {
    spec.derived_terms.push_back({p, ""});
    if (const Formula* f = spec.ddm_formula(p)) {
      for (const auto& c : f->rhs) spec.derived_terms.push_back({p, c});
    }
  }
  for (const auto& f : spec.ddm) {
    for (const auto& term : f.rhs) {
      if (spec.find_derived(term)) {
        throw FormulaError("formula \"" + render(f) + "\": '" + term +
                           "' names a derived model term and cannot appear in a "
                           "parameter formula");
      }
    }
  }
}

}  // namespace formula_detail

// Parse and classify a full model given as formula strings.  Exactly one
// formula must have a non-parameter left-hand side; it becomes the
// regression.  Derived-term references in the regression are resolved by
// exact name against the set implied by the diffusion formulas.
inline ModelSpec parse_model_spec(const std::vector<std::string>& formulas,
                                  const std::string& family = "gaussian") {
  ModelSpec spec;
  spec.family = parse_family(family);
  std::vector<Formula> regressions;
  for (const auto& text : formulas) {
    Formula f = parse_formula(text);
    if (formula_detail::is_ddm_lhs(f.lhs)) {
      if (spec.ddm_formula(f.lhs[0])) {
        throw FormulaError("parameter '" + f.lhs + "' has more than one formula");
      }
      spec.ddm.push_back(std::move(f));
    } else {
      regressions.push_back(std::move(f));
    }
  }
  if (regressions.size() != 1) {
    throw FormulaError("the model needs exactly one regression formula (a formula whose "
                       "response is not one of a, t, z, v); found " +
                       std::to_string(regressions.size()));
  }
  formula_detail::finish_ddm_side(spec);
  spec.regression = std::move(regressions.front());
  if (const DerivedTerm* d = spec.find_derived(spec.regression->lhs)) {
    spec.case_b = true;
    spec.case_b_target = *d;
    if (spec.family != Family::gaussian) {
      throw FormulaError("family must be gaussian when the regression response is the "
                         "model term '" + spec.regression->lhs + "'");
    }
    for (const auto& term : spec.regression->rhs) {
      if (spec.find_derived(term)) {
        throw FormulaError("'" + term + "' is a derived model term and cannot be a "
                           "predictor when the response is also a model term");
      }
    }
  }
  return spec;
}

// Diffusion-only model used by the first stage of the two-step baseline.
inline ModelSpec ddm_only_spec(const std::vector<std::string>& ddm_formulas) {
  ModelSpec spec;
  for (const auto& text : ddm_formulas) {
    Formula f = parse_formula(text);
    if (!formula_detail::is_ddm_lhs(f.lhs)) {
      throw FormulaError("formula \"" + text + "\": a diffusion-only model accepts only "
                         "a, t, z, v responses");
    }
    if (spec.ddm_formula(f.lhs[0])) {
      throw FormulaError("parameter '" + f.lhs + "' has more than one formula");
    }
    spec.ddm.push_back(std::move(f));
  }
  formula_detail::finish_ddm_side(spec);
  return spec;
}

}  // namespace regddm

#include <catch2/catch_amalgamated.hpp>

#include "regddm/formula.hpp"

using namespace regddm;

TEST_CASE("basic formula parsing") {
  const Formula f = parse_formula("v ~ memload + age");
  REQUIRE(f.lhs == "v");
  REQUIRE(f.rhs == std::vector<std::string>{"memload", "age"});
  REQUIRE(render(f) == "v ~ memload + age");
}

TEST_CASE("intercept-only formula") {
  const Formula f = parse_formula("v ~ 1");
  REQUIRE(f.lhs == "v");
  REQUIRE(f.rhs.empty());
  REQUIRE(render(f) == "v ~ 1");
}

TEST_CASE("whitespace is irrelevant") {
  const Formula f = parse_formula("  iq~v_0+ v_memload +age ");
  REQUIRE(f.lhs == "iq");
  REQUIRE(f.rhs == std::vector<std::string>{"v_0", "v_memload", "age"});
}

TEST_CASE("parse errors carry positions") {
  REQUIRE_THROWS_WITH(parse_formula("~ x"), Catch::Matchers::ContainsSubstring("position 1"));
  REQUIRE_THROWS_WITH(parse_formula("y ~ x + + z"),
                      Catch::Matchers::ContainsSubstring("position 9"));
  REQUIRE_THROWS_WITH(parse_formula("y ~"), Catch::Matchers::ContainsSubstring("term"));
  REQUIRE_THROWS_WITH(parse_formula("y ~ x +"), Catch::Matchers::ContainsSubstring("term"));
  REQUIRE_THROWS_WITH(parse_formula("y x"), Catch::Matchers::ContainsSubstring("'~'"));
  REQUIRE_THROWS_WITH(parse_formula("y ~ x + x"),
                      Catch::Matchers::ContainsSubstring("duplicate term 'x'"));
  REQUIRE_THROWS_WITH(parse_formula("y ~ 1 + x"),
                      Catch::Matchers::ContainsSubstring("literal 1"));
  REQUIRE_THROWS_WITH(parse_formula("y ~ x%z"),
                      Catch::Matchers::ContainsSubstring("unexpected character '%'"));
  REQUIRE_THROWS_AS(parse_formula(""), FormulaError);
}

TEST_CASE("model spec classification, case A") {
  const ModelSpec s = parse_model_spec({"v ~ memload", "iq ~ v_0 + v_memload + age + education"});
  REQUIRE(s.ddm.size() == 1);
  REQUIRE_FALSE(s.case_b);
  REQUIRE(s.family == Family::gaussian);
  REQUIRE(s.regression->lhs == "iq");
  // derived set: four intercepts plus the memload slope on v
  REQUIRE(s.derived_terms.size() == 5);
  REQUIRE(s.find_derived("v_0") != nullptr);
  REQUIRE(s.find_derived("v_memload") != nullptr);
  REQUIRE(s.find_derived("a_0") != nullptr);
  REQUIRE(s.find_derived("z_memload") == nullptr);
  const auto lines = s.model_lines();
  REQUIRE(lines == std::vector<std::string>{"v ~ memload", "iq ~ v_0 + v_memload + age + education"});
}

TEST_CASE("model spec classification, case B") {
  const ModelSpec s = parse_model_spec({"v ~ memload", "v_memload ~ gender"});
  REQUIRE(s.case_b);
  REQUIRE(s.case_b_target.param == 'v');
  REQUIRE(s.case_b_target.covariate == "memload");
  REQUIRE(s.family == Family::gaussian);
}

TEST_CASE("case B requires gaussian family") {
  REQUIRE_THROWS_WITH(parse_model_spec({"v ~ memload", "v_memload ~ gender"}, "bernoulli"),
                      Catch::Matchers::ContainsSubstring("gaussian"));
}

TEST_CASE("case B rejects derived predictors") {
  REQUIRE_THROWS_WITH(parse_model_spec({"v ~ memload", "v_memload ~ v_0"}),
                      Catch::Matchers::ContainsSubstring("derived model term"));
}

TEST_CASE("exactly one regression formula") {
  REQUIRE_THROWS_WITH(parse_model_spec({"v ~ memload"}),
                      Catch::Matchers::ContainsSubstring("exactly one regression"));
  REQUIRE_THROWS_WITH(parse_model_spec({"y ~ v_0", "w ~ v_0"}),
                      Catch::Matchers::ContainsSubstring("exactly one regression"));
}

TEST_CASE("at most one formula per parameter") {
  REQUIRE_THROWS_WITH(parse_model_spec({"v ~ x", "v ~ w", "y ~ v_0"}),
                      Catch::Matchers::ContainsSubstring("more than one formula"));
}

TEST_CASE("ddm formulas cannot reference derived terms") {
  REQUIRE_THROWS_WITH(parse_model_spec({"v ~ a_0", "y ~ v_0"}),
                      Catch::Matchers::ContainsSubstring("derived model term"));
}

TEST_CASE("families parse") {
  REQUIRE(parse_model_spec({"y ~ v_0"}, "bernoulli").family == Family::bernoulli);
  REQUIRE(parse_model_spec({"y ~ v_0"}, "poisson").family == Family::poisson);
  REQUIRE_THROWS_AS(parse_model_spec({"y ~ v_0"}, "beta"), FormulaError);
}

TEST_CASE("ddm-only spec for the two-step first stage") {
  const ModelSpec s = ddm_only_spec({"v ~ memload"});
  REQUIRE_FALSE(s.regression.has_value());
  REQUIRE(s.derived_terms.size() == 5);
  REQUIRE_THROWS_AS(ddm_only_spec({"y ~ x"}), FormulaError);
}

TEST_CASE("intercept-only ddm formula is accepted and adds no slopes") {
  const ModelSpec s = parse_model_spec({"v ~ 1", "y ~ v_0"});
  REQUIRE(s.derived_terms.size() == 4);
}

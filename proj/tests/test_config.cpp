#include <doctest.h>

#include <string>

#include "crt/config.hpp"
#include "crt/errors.hpp"

using namespace crt;

namespace {

const char* kImmigration = R"(
[factor.reason]
levels = ["persecution", "economic", "reunite"]

[factor.origin]
levels = ["Iraq", "Sudan", "Somalia", "Germany", "Mexico", "China"]
probs = [0.2, 0.2, 0.2, 0.2, 0.1, 0.1]

[factor.gender]
levels = ["Male", "Female"]

[covariate.age]
numeric = true

[covariate.party_id]
levels = ["Dem", "Rep", "Ind"]

[[restriction]]
if_factor = "reason"
if_levels = ["persecution"]
then_factor = "origin"
allowed_levels = ["Iraq", "Sudan", "Somalia"]

[statistic]
kind = "hiernet"
target = ["origin"]
options = { I = 3, cv_folds = 4, extra_main = [["gender", "reason"]] }

[plan]
B = 250
seed = 17
workers = 2
)";

std::string error_of(const std::string& text) {
  try {
    parse_config(text, "c.toml");
  } catch (const ValidationError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_CASE("immigration config parses") {
  const auto cfg = parse_config(kImmigration);
  REQUIRE(cfg.schema.factors.size() == 3);
  CHECK(cfg.schema.factors[0].name == "reason");  // declaration order
  CHECK(cfg.schema.factors[1].name == "origin");
  CHECK(cfg.scheme.marginals[1][4] == 0.1);
  CHECK(cfg.scheme.marginals[2][0] == 0.5);
  REQUIRE(cfg.scheme.restrictions.size() == 1);
  CHECK(cfg.scheme.restrictions[0].allowed == std::vector<int>{0, 1, 2});
  CHECK(cfg.schema.covariates[0].numeric);
  CHECK(cfg.schema.covariates[1].levels.size() == 3);
  REQUIRE(cfg.statistic);
  CHECK(cfg.statistic->kind == StatisticKind::hiernet_main);
  CHECK(cfg.statistic->options.I == 3);
  CHECK(cfg.statistic->options.extra_main.size() == 1);
  CHECK(cfg.plan.B == 250);
  CHECK(cfg.plan.master_seed == 17);
  CHECK(cfg.has_seed);
}

TEST_CASE("config round-trip") {
  const auto a = parse_config(kImmigration);
  const auto b = parse_config(to_toml(a));
  CHECK(same_config(a, b));
}

TEST_CASE("coarsening tables") {
  const std::string text = std::string(kImmigration) + R"(
[coarsen]
factor = "origin"
keep_others = true
tested_group = "mexico-mideast"
[coarsen.map]
MiddleEast = ["Iraq", "Sudan"]
[coarsen.groups]
mexico-mideast = ["MiddleEast", "Mexico"]
)";
  const auto cfg = parse_config(text);
  REQUIRE(cfg.coarsening);
  const auto& c = *cfg.coarsening;
  CHECK(c.source_factors == std::vector<std::string>{"origin"});
  CHECK(c.group_members() == std::vector<std::string>{"MiddleEast", "Mexico"});
  CHECK(c.h_map.at("China") == "China");
  const auto again = parse_config(to_toml(cfg));
  CHECK(same_config(cfg, again));
}

TEST_CASE("errors name the file and line") {
  const auto e1 = error_of("[factor.a]\nlevels = [\"x\"]\n");
  CHECK(e1.find("c.toml:1") != std::string::npos);
  CHECK(e1.find("at least 2 levels") != std::string::npos);
  const auto e2 = error_of("[factor.a]\nlevels = [\"x\", \"y\"]\nprobs = [0.5]\n");
  CHECK(e2.find("c.toml:3") != std::string::npos);
  const auto e3 = error_of("[factor.a]\nlevels = [\"x\", \"y\"]\n[[restriction]]\nif_factor = \"a\"\nif_levels = [\"x\"]\n"
                           "then_factor = \"b\"\nallowed_levels = [\"x\"]\n");
  CHECK(e3.find("unknown then_factor") != std::string::npos);
  const auto e4 = error_of("[factor.a]\nlevels = [\"x\", \"y\"]\n[statistic]\noptions = { bogus = 1 }\n");
  CHECK(e4.find("unknown statistic option 'bogus'") != std::string::npos);
  CHECK(error_of("this is not toml").find("c.toml:1") != std::string::npos);
  CHECK(error_of("[plan]\nB = 3\n").find("no [factor") != std::string::npos);
  CHECK(error_of("[factor.a]\nlevels = [\"x\", \"y\"]\n[plan]\nB = 0\n").find("B must be at least 1") != std::string::npos);
}

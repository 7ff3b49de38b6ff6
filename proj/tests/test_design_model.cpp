#include <doctest.h>

#include <sstream>

#include "crt/design_model.hpp"
#include "crt/errors.hpp"
#include "helpers.hpp"

using namespace crt;
using testutil::factor;

namespace {

Schema gender_party() {
  Schema s;
  s.factors = {factor("gender", {"Male", "Female"}), factor("party", {"Dem", "Rep"})};
  return s;
}

const char* kValid =
    "respondent_id,task,Y,gender_L,gender_R,party_L,party_R\n"
    "a,1,1,Male,Female,Dem,Rep\n"
    "a,2,0,Female,Female,Rep,Rep\n"
    "b,1,0,Male,Male,Dem,Dem\n"
    "b,2,1,Female,Male,Rep,Dem\n";

std::string error_of(const std::string& csv, const Schema& s, LoadOptions o = {}) {
  try {
    testutil::parse(csv, s, o);
  } catch (const ValidationError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_CASE("load: 2 respondents x 2 tasks") {
  const auto ds = testutil::parse(kValid, gender_party());
  CHECK(ds.n == 2);
  CHECK(ds.J == 2);
  CHECK(ds.rows() == 4);
  CHECK(ds.left(0, 0) == 0);
  CHECK(ds.right(0, 0) == 1);
  CHECK(ds.left(3, 1) == 1);
  CHECK(ds.y == std::vector<int>{1, 0, 0, 1});
  CHECK(ds.task == std::vector<int>{1, 2, 1, 2});
}

TEST_CASE("load: tasks may arrive out of order within a respondent") {
  const std::string csv =
      "respondent_id,task,Y,gender_L,gender_R,party_L,party_R\n"
      "a,2,0,Female,Female,Rep,Rep\n"
      "a,1,1,Male,Female,Dem,Rep\n";
  const auto ds = testutil::parse(csv, gender_party());
  CHECK(ds.y == std::vector<int>{1, 0});
}

TEST_CASE("load: contract violations") {
  const auto s = gender_party();
  CHECK(error_of("respondent_id,task,Y,gender_L,gender_R,party_L,party_R\na,1,2,Male,Female,Dem,Rep\n", s)
            .find("non-binary response") != std::string::npos);
  CHECK(error_of("respondent_id,task,Y,gender_L,gender_R,party_L\na,1,1,Male,Female,Dem\n", s).find("missing column") !=
        std::string::npos);
  CHECK(error_of("respondent_id,task,Y,gender_L,gender_R,party_L,party_R\na,1,1,Male,Other,Dem,Rep\n", s)
            .find("unknown level") != std::string::npos);
  CHECK(error_of("respondent_id,task,Y,gender_L,gender_R,party_L,party_R\na,1,1,Male,Male,Dem,Rep\n"
                 "b,1,1,Male,Male,Dem,Rep\na,2,1,Male,Male,Dem,Rep\n",
                 s)
            .find("not contiguous") != std::string::npos);
}

TEST_CASE("load: covariate must be constant within a respondent") {
  Schema s = gender_party();
  s.covariates = {testutil::numeric_covariate("age")};
  const std::string csv =
      "respondent_id,task,Y,gender_L,gender_R,party_L,party_R,age\n"
      "a,1,1,Male,Female,Dem,Rep,27\n"
      "a,2,0,Female,Female,Rep,Rep,28\n";
  CHECK(error_of(csv, s).find("covariate varies within respondent") != std::string::npos);
}

TEST_CASE("load: ragged respondents rejected unless allowed") {
  const std::string csv = std::string(kValid) + "c,1,1,Male,Female,Dem,Rep\n";
  CHECK(error_of(csv, gender_party()).find("ragged") != std::string::npos);
  LoadOptions o;
  o.allow_ragged = true;
  const auto ds = testutil::parse(csv, gender_party(), o);
  CHECK(ds.n == 2);
  CHECK(ds.dropped_respondents == 1);
}

TEST_CASE("load: respondents with a missing covariate are dropped") {
  Schema s = gender_party();
  s.covariates = {testutil::numeric_covariate("age")};
  const std::string csv =
      "respondent_id,task,Y,gender_L,gender_R,party_L,party_R,age\n"
      "a,1,1,Male,Female,Dem,Rep,27\n"
      "a,2,0,Female,Female,Rep,Rep,27\n"
      "b,1,1,Male,Female,Dem,Rep,\n"
      "b,2,0,Female,Female,Rep,Rep,\n"
      "c,1,1,Male,Female,Dem,Rep,41\n"
      "c,2,0,Female,Female,Rep,Rep,41\n";
  const auto ds = testutil::parse(csv, s);
  CHECK(ds.n == 2);
  CHECK(ds.dropped_respondents == 1);
  CHECK(ds.respondent_ids == std::vector<std::string>{"a", "c"});
  // standardized: mean 0, population SD 1 over rows
  CHECK(ds.V.col(0).mean() == doctest::Approx(0).epsilon(1e-12));
  CHECK(ds.V(0, 0) * ds.v_scale[0] + ds.v_center[0] == doctest::Approx(27));
}

TEST_CASE("load -> save -> load round-trip") {
  Schema s = gender_party();
  s.covariates = {testutil::numeric_covariate("age")};
  const std::string csv =
      "respondent_id,task,Y,gender_L,gender_R,party_L,party_R,age\n"
      "a,1,1,Male,Female,Dem,Rep,27.5\n"
      "a,2,0,Female,Female,Rep,Rep,27.5\n"
      "b,1,0,Male,Male,Dem,Dem,63\n"
      "b,2,1,Female,Male,Rep,Dem,63\n";
  const auto a = testutil::parse(csv, s);
  std::ostringstream out;
  save_dataset(a, out);
  const auto b = testutil::parse(out.str(), s);
  CHECK(testutil::same_data(a, b));
  CHECK(a.respondent_ids == b.respondent_ids);
}

TEST_CASE("validate rejects broken invariants") {
  auto ds = testutil::random_dataset({factor("a", {"x", "y"})}, 3, 2, 1);
  auto bad = ds;
  bad.y[0] = 3;
  CHECK_THROWS_AS(validate(bad), ValidationError);
  bad = ds;
  bad.left(0, 0) = 2;
  CHECK_THROWS_AS(validate(bad), ValidationError);
  bad = ds;
  bad.task[1] = 1;
  CHECK_THROWS_AS(validate(bad), ValidationError);
  CHECK_THROWS_AS(validate_factor(factor("solo", {"only"})), ValidationError);
  CHECK_THROWS_AS(validate_factor(factor("dup", {"a", "a"})), ValidationError);
}

namespace {

ConjointDataset origins() {
  const auto origin = factor("origin", {"France", "Germany", "Poland", "Mexico", "China"});
  const auto prof = factor("profession", {"gardener", "doctor"});
  LevelMatrix L(3, 2), R(3, 2);
  L << 1, 0, 3, 1, 4, 0;
  R << 0, 0, 2, 1, 3, 1;
  return make_dataset({origin, prof}, 3, 1, L, R, {1, 0, 1}, {0});
}

CoarseningSpec europe() {
  CoarseningSpec c;
  c.source_factors = {"origin"};
  c.name = "origin_c";
  for (const char* e : {"France", "Germany", "Poland"}) c.c_map.push_back({{e}, "Europe"});
  c.c_map.push_back({{"Mexico"}, "Mexico"});
  c.c_map.push_back({{"China"}, "China"});
  c.h_map = {{"Europe", "mexico-europe"}, {"Mexico", "mexico-europe"}, {"China", "China"}};
  c.tested_group = "mexico-europe";
  return c;
}

}  // namespace

TEST_CASE("coarsening: European countries collapse to Europe") {
  const auto ds = origins();
  const auto out = apply_coarsening(ds, europe());
  const int f = out.factor_index("origin_c");
  REQUIRE(f == 0);
  const auto& lv = out.factors[0].levels;
  CHECK(lv[out.left(0, 0)] == "Europe");  // Germany
  CHECK(lv[out.right(0, 0)] == "Europe");
  CHECK(lv[out.left(1, 0)] == "Mexico");
  CHECK(lv[out.left(2, 0)] == "China");
  // Y, Z, n, J untouched; input unchanged
  CHECK(out.y == ds.y);
  CHECK(out.left.col(1) == ds.left.col(1));
  CHECK(out.n == ds.n);
  CHECK(out.J == ds.J);
  CHECK(ds.factors[0].levels.size() == 5);
  CHECK(europe().group_members() == std::vector<std::string>{"Europe", "Mexico"});
}

TEST_CASE("coarsening: identity map returns the input") {
  const auto ds = origins();
  const auto out = apply_coarsening(ds, identity_coarsening(ds.factors[0], "Mexico"));
  CHECK(testutil::same_data(ds, out));
  CHECK(out.factors[0].levels == ds.factors[0].levels);
}

TEST_CASE("coarsening: pairs of factors") {
  const auto ds = origins();
  CoarseningSpec c;
  c.source_factors = {"profession", "origin"};
  c.name = "prof_origin";
  for (const char* p : {"gardener", "doctor"})
    for (const char* o : {"France", "Germany", "Poland", "Mexico", "China"}) {
      const std::string os = o;
      const bool eu = os == "France" || os == "Germany" || os == "Poland";
      const std::string label = std::string(p) + "/" + (eu ? "Europe" : os);
      c.c_map.push_back({{p, o}, label});
      c.h_map[label] = label == "gardener/Europe" ? "g" : label;
    }
  c.tested_group = "g";
  const auto out = apply_coarsening(ds, c);
  const int f = out.factor_index("prof_origin");
  REQUIRE(f >= 0);
  CHECK(out.p() == 1);
  const auto& lv = out.factors[f].levels;
  // (gardener, Germany) and (gardener, Poland) share a coarse value
  CHECK(lv[out.left(0, f)] == "gardener/Europe");
  CHECK(lv[out.right(0, f)] == "gardener/Europe");
  CHECK(lv[out.left(1, f)] == "doctor/Mexico");
}

TEST_CASE("coarsening: idempotent when applied to its own output") {
  const auto once = apply_coarsening(origins(), europe());
  const auto twice = apply_coarsening(once, identity_coarsening(once.factors[0], "Mexico"));
  CHECK(testutil::same_data(once, twice));
}

TEST_CASE("coarsening errors") {
  auto c = europe();
  c.c_map.pop_back();  // China unmapped
  CHECK_THROWS_AS(apply_coarsening(origins(), c), ValidationError);
  auto g = europe();
  g.h_map["Europe"] = "other";
  g.h_map["Mexico"] = "other";
  CHECK_THROWS_AS(apply_coarsening(origins(), g), ValidationError);
}

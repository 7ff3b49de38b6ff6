#include <doctest.h>

#include <json.hpp>

#include "crt/engine.hpp"
#include "crt/errors.hpp"
#include "crt/simulation.hpp"
#include "helpers.hpp"

using namespace crt;

namespace {

CrtResult from_list(double observed, std::vector<double> resampled) {
  return run_crt([=] { return observed; }, [=](std::size_t b) { return resampled[b - 1]; }, resampled.size(), 1);
}

}  // namespace

TEST_CASE("p-value arithmetic") {
  const auto c = from_list(1, std::vector<double>(9, 1.0));
  CHECK(c.p_numerator == 10);
  CHECK(c.p_denominator == 10);
  CHECK(c.p_value() == 1.0);
  const auto top = from_list(5, {1, 2, 3, 4, 0, 1, 2, 3, 4});
  CHECK(top.p_value() == 0.1);
  CHECK(top.p_value_string() == "1/10");
  const auto tie = from_list(0.25, {0.1, 0.2, 0.3, 0.4});
  CHECK(tie.p_numerator == 3);
  CHECK(tie.p_denominator == 5);
  CHECK(tie.p_value() == 0.6);
}

TEST_CASE("p-value is recomputable from stored statistics") {
  auto r = from_list(0.3, {0.5, 0.3, 0.1, 0.3, 0.9});
  const auto num = r.p_numerator;
  r.p_numerator = 0;
  set_p_value(r);
  CHECK(r.p_numerator == num);
  CHECK(r.p_numerator == 5);  // 1 + #{0.5, 0.3, 0.3, 0.9}
}

TEST_CASE("NaN statistics abort the run") {
  CHECK_THROWS_AS(from_list(std::nan(""), {1, 2}), NumericalError);
  CHECK_THROWS_AS(from_list(1, {1, std::nan("")}), NumericalError);
  CHECK_THROWS_AS(from_list(1, {}), ValidationError);
}

TEST_CASE("plan and statistic compatibility") {
  CHECK_THROWS_AS(check_compatible(ResampleKind::order, StatisticKind::hiernet_main), ValidationError);
  CHECK_THROWS_AS(check_compatible(ResampleKind::main, StatisticKind::fatigue), ValidationError);
  CHECK_NOTHROW(check_compatible(ResampleKind::carryover, StatisticKind::carryover));
  CHECK_NOTHROW(check_compatible(ResampleKind::main, StatisticKind::dicrt));
}

TEST_CASE("results do not depend on the worker count") {
  ForcedChoiceDgp d;
  d.num_z = 3;
  d.n = 200;
  const auto ds = generate(d, 4).ds;
  StatisticSpec spec;
  spec.target = {"x"};
  spec.options.grid_size = 8;
  ResamplePlan plan;
  plan.B = 24;
  plan.master_seed = 77;
  std::vector<CrtResult> out;
  for (std::size_t w : {1, 4, 16}) {
    plan.workers = w;
    out.push_back(run_crt(ds, RandomizationScheme::uniform(ds.factors), plan, spec));
  }
  for (const auto& r : out) {
    CHECK(r.resampled_statistics == out[0].resampled_statistics);
    CHECK(r.observed_statistic == out[0].observed_statistic);
    CHECK(r.p_numerator == out[0].p_numerator);
  }
  CHECK(out[0].p_value() >= 1.0 / 25);
}

TEST_CASE("result JSON carries the statistics and the p-value") {
  auto r = from_list(0.25, {0.1, 0.2, 0.3, 0.4});
  r.spec.target = {"x"};
  const auto j = nlohmann::json::parse(to_json(r));
  CHECK(j["B"] == 4);
  CHECK(j["resampled_statistics"].size() == 4);
  CHECK(j["p_value"] == "3/5");
  CHECK(j.contains("wall_time"));
}

TEST_CASE("validity summary") {
  const auto one = summarize_p_values({0.3});
  CHECK(one.p_values == std::vector<double>{0.3});
  const auto s = summarize_p_values({0.01, 0.04, 0.2, 0.5, 0.9}, {0.05});
  CHECK(s.rejection_at(0.05) == doctest::Approx(0.4));
}

TEST_CASE("validity suite on a small null") {
  ForcedChoiceDgp d;
  d.num_z = 3;
  d.n = 150;
  d.beta_x = 0;
  StatisticSpec spec;
  spec.target = {"x"};
  spec.options.lambda = 0.01;
  ResamplePlan plan;
  plan.B = 19;
  plan.master_seed = 5;
  const auto res = run_validity_suite([&](std::size_t r) { return generate(d, 900 + r).ds; },
                                      RandomizationScheme::uniform(generate(d, 0).ds.factors), plan, spec, 30);
  CHECK(res.p_values.size() == 30);
  for (double p : res.p_values) {
    CHECK(p >= 1.0 / 20);
    CHECK(p <= 1.0);
  }
  CHECK(res.ks_one_sided_p > 0.001);
}

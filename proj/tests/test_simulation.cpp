#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "crt/errors.hpp"
#include "crt/glm.hpp"
#include "crt/rng.hpp"
#include "crt/simulation.hpp"

using namespace crt;

namespace {

double logistic(double x) { return 1 / (1 + std::exp(-x)); }

// Sample variance and its standard error from the fourth central moment.
std::pair<double, double> var_and_se(const std::vector<double>& x) {
  const double n = static_cast<double>(x.size());
  double m = 0;
  for (double v : x) m += v / n;
  double m2 = 0, m4 = 0;
  for (double v : x) {
    const double d = (v - m) * (v - m);
    m2 += d / n;
    m4 += d * d / n;
  }
  return {m2, std::sqrt((m4 - m2 * m2) / n)};
}

}  // namespace

TEST_CASE("defaults: remaining variance 0.06375") {
  const auto d = default_dgp(1);
  CHECK(d.num_z == 10);
  CHECK(d.beta_x == 0.1);
  CHECK(d.gamma_tilde.size() == 15);
  CHECK(d.n == 3000);
  const auto v = variance_decomposition(d);
  CHECK(v.remaining == doctest::Approx(0.06375).epsilon(1e-15));
  CHECK(v.interaction == 0.0);
  CHECK(v.fraction == 0.0);
}

TEST_CASE("interaction variance I^2 n_I / 2") {
  auto d = default_dgp(1);
  d.n_within = 3;
  d.n_between = 3;
  d.within_size = d.between_size = 0.05;
  CHECK(variance_decomposition(d).interaction == doctest::Approx(0.0075).epsilon(1e-15));
  d.n_within = d.n_between = 6;
  const auto v = variance_decomposition(d);
  CHECK(v.fraction == doctest::Approx(0.015 / (0.015 + 0.06375)));
}

TEST_CASE("component variances match 10^6 draws") {
  auto d = default_dgp(2);
  d.n_within = d.n_between = 6;
  d.within_size = d.between_size = 0.1;
  const auto draw = generate([&] {
    auto s = d;
    s.n = 10;
    return s;
  }(), 3);
  auto mains = d;
  mains.n_within = mains.n_between = 0;
  auto inter = d;
  inter.beta_x = 0;
  inter.beta_z.clear();
  inter.gamma_tilde.clear();
  const std::vector<double> zero(d.num_z, 0.0);
  CounterRng rng(4);
  const std::size_t N = 1000000;
  std::vector<double> a(N), b(N);
  int L[11], R[11];
  for (std::size_t i = 0; i < N; ++i) {
    for (int f = 0; f < 11; ++f) L[f] = rng.coin();
    for (int f = 0; f < 11; ++f) R[f] = rng.coin();
    a[i] = linear_predictor(mains, zero, zero, L, R);
    b[i] = linear_predictor(inter, draw.gamma, draw.delta, L, R);
  }
  const auto v = variance_decomposition(d);
  const auto [va, sa] = var_and_se(a);
  const auto [vb, sb] = var_and_se(b);
  CHECK(std::abs(va - v.remaining) < 4 * sa);
  CHECK(std::abs(vb - v.interaction) < 4 * sb);
}

TEST_CASE("heterogeneous coefficients") {
  CHECK(heterogeneous_coefficients(0) == std::pair<double, double>{0, 0});
  const auto [s, w] = heterogeneous_coefficients(0.05);
  CHECK(s == doctest::Approx(0.057735).epsilon(1e-5));
  CHECK(w == doctest::Approx(0.040825).epsilon(1e-5));
  CHECK(s * s + w * w == doctest::Approx(2 * 0.05 * 0.05).epsilon(1e-14));
  CHECK_THROWS_AS(heterogeneous_coefficients(-1), ValidationError);
  for (double I : {0.025, 0.1}) {
    const auto hom = heterogeneous_grid(1, 100, {I});
    REQUIRE(hom.size() == 2);
    CHECK(std::abs(variance_decomposition(hom[0].dgp).interaction - variance_decomposition(hom[1].dgp).interaction) <
          1e-12);
  }
}

TEST_CASE("null DGP: P(Y=1) = 1/2") {
  ForcedChoiceDgp d;
  d.beta_x = 0;
  d.n = 100000;
  const auto draw = generate(d, 5);
  double m = 0;
  for (int y : draw.ds.y) m += y;
  m /= static_cast<double>(d.n);
  CHECK(std::abs(m - 0.5) < 4 * std::sqrt(0.25 / static_cast<double>(d.n)));
}

TEST_CASE("latent variable reproduces Y") {
  const auto draw = generate(default_dgp(3, 2000), 6);
  for (std::size_t i = 0; i < draw.ds.rows(); ++i) CHECK(draw.ds.y[i] == (draw.latent[i] > 0 ? 1 : 0));
  CHECK(draw.ds.J == 1);
  CHECK(draw.ds.p() == 11);
}

TEST_CASE("beta_X alone: AMCE matches the logit integral") {
  ForcedChoiceDgp d;
  d.n = 200000;
  const auto r = amce_test(generate(d, 7).ds, "x");
  // P(choose | hi) - P(choose | lo), averaged over the other profile's X
  const double analytic = 0.5 * (logistic(0.1) - logistic(-0.1));
  const double se = std::sqrt(r.cov(static_cast<Eigen::Index>(r.tested[0]), static_cast<Eigen::Index>(r.tested[0])));
  CHECK(std::abs(r.estimate - analytic) < 4 * se);
}

TEST_CASE("random positions: counts, signs, and errors") {
  ForcedChoiceDgp d;
  d.n = 10;
  d.n_within = 4;
  d.n_between = 2;
  d.within_size = 0.1;
  d.between_size = 0.2;
  const auto a = generate(d, 1), b = generate(d, 2);
  std::size_t gw = 0, db = 0;
  for (double g : a.gamma) gw += g == 0.1;
  for (double g : a.delta) db += g == -0.2;
  CHECK(gw == 4);
  CHECK(db == 2);
  CHECK((a.gamma != b.gamma || a.delta != b.delta));
  d.n_within = 11;
  CHECK_THROWS_AS(generate(d, 1), ValidationError);
}

TEST_CASE("grids") {
  const auto g = interaction_size_grid(1, 500, {0, 0.05, 0.1});
  REQUIRE(g.size() == 3);
  CHECK(g[2].dgp.n_within == 6);
  CHECK(g[2].dgp.n_between == 6);
  CHECK(g[2].dgp.within_size == 0.1);
  CHECK(g[0].dgp.n_within + g[0].dgp.n_between == 0);
  const auto c = interaction_count_grid(1, 500, 0.1, {0, 4, 12});
  CHECK(c[1].dgp.n_within == 2);
  CHECK(c[2].dgp.n_between == 6);
}

TEST_CASE("power study plumbing") {
  PowerStudyOptions o;
  o.methods = {PowerMethod::crt_hiernet, PowerMethod::amce};
  o.reps = 3;
  o.B = 9;
  o.lambda = 0.01;
  auto grid = interaction_size_grid(1, 200, {0, 0.1});
  for (auto& p : grid) {
    p.dgp.num_z = 4;
    p.dgp.beta_z.resize(4);
    p.dgp.gamma_tilde.clear();
    p.dgp.n_within = p.dgp.n_between = std::min<std::size_t>(p.dgp.n_within, 2);
  }
  const auto r = power_study(grid, o);
  CHECK(r.rows.size() == 2 * 2 * 3);
  CHECK(r.summary.size() == 4);
  CHECK(r.p_values(1, PowerMethod::amce).size() == 3);
  CHECK(r.at(0, PowerMethod::crt_hiernet).lambda == 0.01);
  std::ostringstream rows, sum;
  write_power_rows_csv(r, rows);
  write_power_summary_csv(r, sum);
  CHECK(rows.str().rfind("grid_id,method,rep,seed,p_value\n", 0) == 0);
  const std::string summary = sum.str();
  CHECK(std::count(summary.begin(), summary.end(), '\n') == 5);
  // same seed, same p-values
  const auto again = power_study(grid, o);
  CHECK(again.p_values(1, PowerMethod::crt_hiernet) == r.p_values(1, PowerMethod::crt_hiernet));
  CHECK(power_method_from_string(to_string(PowerMethod::crt_dicrt)) == PowerMethod::crt_dicrt);
  CHECK_THROWS_AS(power_method_from_string("nope"), ValidationError);
}

TEST_CASE("inflation study plumbing") {
  InflationOptions o;
  o.num_z = {2, 3};
  o.n = 400;
  o.reps = 4;
  const auto rows = logistic_inflation_study(o);
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].num_z == 2);
  CHECK(rows[0].p_values.size() + rows[0].failed == 4);
  double mass = 0;
  for (double h : rows[1].histogram) mass += h;
  CHECK(mass == doctest::Approx(1.0));
  std::ostringstream out;
  write_inflation_csv(rows, out);
  const std::string csv = out.str();
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 3);
}

TEST_CASE("multi-task DGP") {
  TaskDgp d;
  d.n = 50;
  const auto ds = generate_tasks(d, 1);
  CHECK(ds.J == 4);
  CHECK(ds.rows() == 200);
  CHECK(ds.factors[1].size() == 3);
  CHECK(task_scheme(d).marginals.size() == 4);
  CHECK_NOTHROW(validate(ds));
  d.levels = {1, 2};
  CHECK_THROWS_AS(generate_tasks(d, 1), ValidationError);
}

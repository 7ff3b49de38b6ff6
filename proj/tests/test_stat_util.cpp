#include <doctest.h>

#include <cmath>

#include "crt/stat_util.hpp"

using namespace crt;

namespace {
const std::vector<double> kU{0.03, 0.11, 0.27, 0.31, 0.5, 0.52, 0.77, 0.8, 0.91, 0.02};
}

// Reference values from scipy.stats.kstest.
TEST_CASE("one-sided KS: D+ with exact tail") {
  const auto r = ks_uniform_one_sided(kU);
  CHECK(r.statistic == doctest::Approx(0.19).epsilon(1e-12));
  CHECK(r.p_value == doctest::Approx(0.4314929847353726).epsilon(1e-9));
}

TEST_CASE("two-sided KS") {
  const auto r = ks_uniform_two_sided(kU);
  CHECK(r.statistic == doctest::Approx(0.19).epsilon(1e-12));
  // approximate tail: loose at n = 10, tight at n = 200
  CHECK(std::abs(r.p_value - 0.7994599807966074) < 0.03);
  std::vector<double> u;
  for (int i = 1; i <= 200; ++i) u.push_back(std::pow(std::fmod(i * 0.6180339887498949, 1.0), 1.1));
  const auto big = ks_uniform_two_sided(u);
  CHECK(big.statistic == doctest::Approx(0.03619605628252176).epsilon(1e-10));
  CHECK(std::abs(big.p_value - 0.9472561774758075) < 0.01);
}

TEST_CASE("KS on a grossly non-uniform sample") {
  std::vector<double> small(100, 0.01);
  CHECK(ks_uniform_one_sided(small).p_value < 1e-20);
  CHECK(ks_uniform_two_sided(small).p_value < 1e-20);
}

TEST_CASE("two-proportion z test matches statsmodels") {
  CHECK(two_proportion_p(30, 200, 45, 210) == doctest::Approx(0.09237967055994593).epsilon(1e-10));
  CHECK(two_proportion_p(10, 100, 10, 100) == doctest::Approx(1.0));
}

TEST_CASE("spearman rho with and without ties") {
  CHECK(spearman_rho({1, 2, 3, 4, 5, 6}, {2, 1, 4, 3, 6, 5}) == doctest::Approx(0.8285714285714287));
  CHECK(spearman_rho({1, 2, 2, 4, 5}, {5, 3, 3, 1, 0}) == doctest::Approx(-1.0));
}

TEST_CASE("moments and normal tail") {
  CHECK(mean({1, 2, 3, 6}) == doctest::Approx(3));
  CHECK(variance({1, 2, 3, 6}) == doctest::Approx(14.0 / 3));
  CHECK(normal_two_sided_p(1.959963984540054) == doctest::Approx(0.05).epsilon(1e-12));
  CHECK(normal_two_sided_p(0) == doctest::Approx(1));
}

#pragma once

#include <vector>

namespace crt {

// Kolmogorov-Smirnov tests of a sample against Uniform(0,1).
// ks_uniform_one_sided tests against the alternative that values are
// stochastically smaller than uniform (D+ = max(i/n - u_(i))), exact
// Birnbaum-Tingey tail.
struct KsResult {
  double statistic = 0;
  double p_value = 1;
};
KsResult ks_uniform_one_sided(std::vector<double> u);
KsResult ks_uniform_two_sided(std::vector<double> u);

// Two-sided pooled two-proportion z test.
double two_proportion_p(double x1, double n1, double x2, double n2);

double spearman_rho(const std::vector<double>& a, const std::vector<double>& b);

double normal_two_sided_p(double z);

double mean(const std::vector<double>& v);
double variance(const std::vector<double>& v);  // n - 1 denominator

}  // namespace crt

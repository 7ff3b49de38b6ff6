#include "crt/stat_util.hpp"

#include <algorithm>
#include <boost/math/distributions/normal.hpp>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace crt {

KsResult ks_uniform_one_sided(std::vector<double> u) {
  if (u.empty()) throw std::invalid_argument("empty sample");
  std::sort(u.begin(), u.end());
  const auto n = static_cast<double>(u.size());
  double d = 0;
  for (std::size_t i = 0; i < u.size(); ++i) d = std::max(d, static_cast<double>(i + 1) / n - u[i]);
  KsResult r;
  r.statistic = d;
  if (d <= 0) return r;
  if (d >= 1) {
    r.p_value = 0;
    return r;
  }
  const auto N = static_cast<int>(u.size());
  double p = 0;
  const int jmax = static_cast<int>(std::floor(n * (1 - d)));
  for (int j = 0; j <= jmax; ++j) {
    const double a = 1 - d - j / n, b = d + j / n;
    if (a <= 0) continue;
    const double lg = std::lgamma(N + 1.0) - std::lgamma(j + 1.0) - std::lgamma(N - j + 1.0) +
                      (N - j) * std::log(a) + (j - 1) * std::log(b);
    p += std::exp(lg);
  }
  r.p_value = std::clamp(d * p, 0.0, 1.0);
  return r;
}

KsResult ks_uniform_two_sided(std::vector<double> u) {
  if (u.empty()) throw std::invalid_argument("empty sample");
  std::sort(u.begin(), u.end());
  const auto n = static_cast<double>(u.size());
  double d = 0;
  for (std::size_t i = 0; i < u.size(); ++i)
    d = std::max({d, static_cast<double>(i + 1) / n - u[i], u[i] - static_cast<double>(i) / n});
  KsResult r;
  r.statistic = d;
  // Stephens' small-sample adjustment of the Kolmogorov limit
  const double lam = (std::sqrt(n) + 0.12 + 0.11 / std::sqrt(n)) * d;
  if (lam < 0.2) return r;
  double p = 0;
  for (int k = 1; k <= 100; ++k) {
    const double term = std::exp(-2.0 * k * k * lam * lam);
    p += (k % 2 ? 2 : -2) * term;
    if (term < 1e-16) break;
  }
  r.p_value = std::clamp(p, 0.0, 1.0);
  return r;
}

double normal_two_sided_p(double z) {
  boost::math::normal_distribution<double> N;
  return 2 * boost::math::cdf(boost::math::complement(N, std::abs(z)));
}

double two_proportion_p(double x1, double n1, double x2, double n2) {
  const double p1 = x1 / n1, p2 = x2 / n2, pp = (x1 + x2) / (n1 + n2);
  const double se = std::sqrt(pp * (1 - pp) * (1 / n1 + 1 / n2));
  if (se == 0) return 1.0;
  return normal_two_sided_p((p1 - p2) / se);
}

static std::vector<double> ranks(const std::vector<double>& v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
    for (std::size_t k = i; k <= j; ++k) r[idx[k]] = (static_cast<double>(i + j) / 2) + 1;
    i = j + 1;
  }
  return r;
}

double spearman_rho(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size() || a.size() < 2) throw std::invalid_argument("spearman needs paired samples");
  const auto ra = ranks(a), rb = ranks(b);
  const double ma = mean(ra), mb = mean(rb);
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    sab += (ra[i] - ma) * (rb[i] - mb);
    saa += (ra[i] - ma) * (ra[i] - ma);
    sbb += (rb[i] - mb) * (rb[i] - mb);
  }
  if (saa == 0 || sbb == 0) return 0;
  return sab / std::sqrt(saa * sbb);
}

double mean(const std::vector<double>& v) {
  if (v.empty()) return 0;
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double variance(const std::vector<double>& v) {
  if (v.size() < 2) return 0;
  const double m = mean(v);
  double s = 0;
  for (double x : v) s += (x - m) * (x - m);
  return s / static_cast<double>(v.size() - 1);
}

}  // namespace crt

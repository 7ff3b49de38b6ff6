#pragma once

#include <sstream>
#include <string>
#include <vector>

#include "crt/design_model.hpp"
#include "crt/rng.hpp"

namespace testutil {

inline crt::FactorSpec factor(const std::string& name, std::vector<std::string> levels) {
  crt::FactorSpec f;
  f.name = name;
  f.levels = std::move(levels);
  return f;
}

inline crt::FactorSpec numeric_covariate(const std::string& name) {
  crt::FactorSpec f;
  f.name = name;
  f.kind = crt::FactorKind::covariate;
  f.numeric = true;
  return f;
}

inline crt::ConjointDataset parse(const std::string& csv, const crt::Schema& schema, crt::LoadOptions opt = {}) {
  std::istringstream in(csv);
  return crt::parse_dataset(in, schema, opt);
}

// Uniform random levels for every factor; responses from a coin.
inline crt::ConjointDataset random_dataset(const std::vector<crt::FactorSpec>& factors, std::size_t n, std::size_t J,
                                           std::uint64_t seed, std::vector<std::size_t> targets = {0}) {
  crt::CounterRng rng(seed);
  const auto N = static_cast<Eigen::Index>(n * J);
  const auto p = static_cast<Eigen::Index>(factors.size());
  crt::LevelMatrix L(N, p), R(N, p);
  std::vector<int> y(static_cast<std::size_t>(N));
  for (Eigen::Index r = 0; r < N; ++r) {
    for (Eigen::Index f = 0; f < p; ++f) {
      L(r, f) = static_cast<int>(rng.below(factors[static_cast<std::size_t>(f)].size()));
      R(r, f) = static_cast<int>(rng.below(factors[static_cast<std::size_t>(f)].size()));
    }
    y[static_cast<std::size_t>(r)] = rng.coin() ? 1 : 0;
  }
  return crt::make_dataset(factors, n, J, L, R, y, std::move(targets));
}

inline bool same_data(const crt::ConjointDataset& a, const crt::ConjointDataset& b) {
  return a.n == b.n && a.J == b.J && a.left == b.left && a.right == b.right && a.y == b.y && a.task == b.task &&
         a.V.rows() == b.V.rows() && a.V.cols() == b.V.cols() && (a.V.size() == 0 || a.V.isApprox(b.V, 1e-12));
}

}  // namespace testutil

#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "crt/encoding.hpp"
#include "crt/errors.hpp"
#include "crt/hiernet.hpp"
#include "helpers.hpp"

using namespace crt;
using testutil::factor;

namespace {

std::vector<FactorSpec> two_binary() { return {factor("a", {"x", "y"}), factor("b", {"p", "q"})}; }

// Columns of the unpenalized model: intercept, every dummy, and every product
// of dummies from different groups.
Eigen::MatrixXd full_basis(const DesignMatrix& dm) {
  const Eigen::MatrixXd D = dm.dense();
  std::vector<Eigen::VectorXd> cols{Eigen::VectorXd::Ones(D.rows())};
  for (Eigen::Index c = 0; c < D.cols(); ++c) cols.push_back(D.col(c));
  for (Eigen::Index a = 0; a < D.cols(); ++a)
    for (Eigen::Index b = a + 1; b < D.cols(); ++b)
      if (dm.group_of_column(static_cast<std::size_t>(a)) != dm.group_of_column(static_cast<std::size_t>(b)))
        cols.push_back(D.col(a).cwiseProduct(D.col(b)));
  Eigen::MatrixXd X(D.rows(), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t c = 0; c < cols.size(); ++c) X.col(static_cast<Eigen::Index>(c)) = cols[c];
  return X;
}

std::vector<double> noisy_response(const ConjointDataset& ds, std::uint64_t seed, double main_a, double inter_ab) {
  CounterRng rng(seed);
  std::vector<double> y(ds.rows());
  for (Eigen::Index r = 0; r < static_cast<Eigen::Index>(ds.rows()); ++r) {
    const double xa = ds.left(r, 0) - 0.5, xb = ds.left(r, 1) - 0.5;
    y[static_cast<std::size_t>(r)] = main_a * xa + inter_ab * xa * xb + 0.3 * (rng.uniform() - 0.5);
  }
  return y;
}

}  // namespace

TEST_CASE("lambda = 0 matches least squares on main and interaction columns") {
  const auto ds = testutil::random_dataset(two_binary(), 50, 1, 1);
  const auto dm = build_design(ds);
  const auto y = noisy_response(ds, 2, 0.4, 0.8);
  HierNetConfig cfg;
  cfg.tol = 1e-14;
  cfg.max_iter = 200000;
  const auto fit = fit_hiernet(dm, y, 0.0, cfg);
  const Eigen::MatrixXd X = full_basis(dm);
  const Eigen::VectorXd yv = Eigen::Map<const Eigen::VectorXd>(y.data(), 50);
  const Eigen::VectorXd ls = X * X.completeOrthogonalDecomposition().solve(yv);
  CHECK((predict(fit, dm) - ls).cwiseAbs().maxCoeff() < 1e-4);
}

TEST_CASE("lambda above lambda_max gives the zero fit") {
  const auto ds = testutil::random_dataset(two_binary(), 80, 1, 3);
  const auto dm = build_design(ds);
  const auto y = noisy_response(ds, 4, 0.5, 0.5);
  const double lmax = lambda_max(dm, y);
  for (double lam : {lmax * 1.0001, 1e6}) {
    const auto fit = fit_hiernet(dm, y, lam);
    CHECK(fit.beta().cwiseAbs().maxCoeff() == 0.0);
    CHECK(fit.theta.cwiseAbs().maxCoeff() == 0.0);
    double mean = 0;
    for (double v : y) mean += v / static_cast<double>(y.size());
    CHECK(fit.intercept == doctest::Approx(mean));
  }
  const auto below = fit_hiernet(dm, y, 0.9 * lmax);
  CHECK(below.beta().cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("objective is non-increasing and hierarchy holds") {
  const auto ds = testutil::random_dataset({factor("a", {"x", "y", "z"}), factor("b", {"p", "q"}), factor("c", {"u", "v", "w"})},
                                           200, 2, 5);
  const auto aug = build_symmetry_augmented(ds);
  HierNetConfig cfg;
  cfg.record_trace = true;
  const double lmax = lambda_max(aug.dm, aug.y);
  for (double frac : {0.5, 0.1, 0.02}) {
    const auto fit = fit_hiernet(aug.dm, aug.y, frac * lmax, cfg);
    CHECK(fit.converged);
    for (std::size_t i = 1; i < fit.objective_trace.size(); ++i)
      REQUIRE(fit.objective_trace[i] <= fit.objective_trace[i - 1] + 1e-10);
    CHECK(fit.hierarchy_violation() < 1e-6);
  }
}

TEST_CASE("hierarchy binds: no interaction without a main effect") {
  // A has no main effect, A x B is strong
  const auto ds = testutil::random_dataset(two_binary(), 400, 1, 6);
  const auto dm = build_design(ds);
  const auto y = noisy_response(ds, 7, 0.0, 1.2);
  const auto fit = fit_hiernet(dm, y, 0.3 * lambda_max(dm, y));
  CHECK(fit.hierarchy_violation() < 1e-6);
  std::size_t zero_mains = 0;
  for (Eigen::Index a = 0; a < fit.theta.rows(); ++a) {
    if (fit.beta_pos[a] + fit.beta_neg[a] > 0) continue;
    ++zero_mains;
    CHECK(fit.theta.row(a).cwiseAbs().maxCoeff() == 0.0);
  }
  CHECK(zero_mains > 0);
}

TEST_CASE("symmetry-augmented fit satisfies the swap constraints") {
  const auto ds = testutil::random_dataset({factor("a", {"x", "y", "z"}), factor("b", {"p", "q"})}, 150, 2, 8);
  auto d = ds;
  for (std::size_t r = 0; r < ds.rows(); ++r) d.y[r] = ds.left(static_cast<Eigen::Index>(r), 0) == 2 ? 1 : ds.y[r];
  const auto aug = build_symmetry_augmented(d);
  const auto fit = fit_hiernet(aug.dm, aug.y, 0.05 * lambda_max(aug.dm, aug.y));
  const int gl = fit.find_group(GroupRole::profile, Side::left, 0);
  const int gr = fit.find_group(GroupRole::profile, Side::right, 0);
  const int hl = fit.find_group(GroupRole::profile, Side::left, 1);
  const int hr = fit.find_group(GroupRole::profile, Side::right, 1);
  const auto G = [](int g) { return static_cast<std::size_t>(g); };
  CHECK(std::abs(fit.main(G(gl), 2)) > 1e-3);
  for (std::size_t k = 0; k < 3; ++k) {
    CHECK(fit.main(G(gl), k) == doctest::Approx(-fit.main(G(gr), k)).epsilon(1e-6).scale(1));
    for (std::size_t l = 0; l < 2; ++l) {
      // within: (aL, bL) vs (aR, bR); between: (aL, bR) vs (aR, bL)
      CHECK(std::abs(fit.inter(G(gl), k, G(hl), l) + fit.inter(G(gr), k, G(hr), l)) < 1e-6);
      CHECK(std::abs(fit.inter(G(gl), k, G(hr), l) + fit.inter(G(gr), k, G(hl), l)) < 1e-6);
    }
  }
  const Eigen::VectorXd pred = predict(fit, aug.dm);
  const auto N = static_cast<Eigen::Index>(ds.rows());
  CHECK((pred.head(N) + pred.tail(N) - Eigen::VectorXd::Constant(N, 2 * fit.intercept)).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("solution does not depend on row order") {
  const auto ds = testutil::random_dataset({factor("a", {"x", "y", "z"}), factor("b", {"p", "q"})}, 120, 1, 9);
  const auto dm = build_design(ds);
  const auto y = noisy_response(ds, 10, 0.5, 0.5);
  std::vector<std::size_t> perm(ds.rows());
  for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = (i * 37 + 11) % perm.size();
  std::vector<double> yp;
  for (auto i : perm) yp.push_back(y[i]);
  const auto dp = dm.subset(perm);
  const double lam = 0.1 * lambda_max(dm, y);
  HierNetConfig cfg;
  cfg.tol = 1e-13;
  const auto a = fit_hiernet(dm, y, lam, cfg);
  const auto b = fit_hiernet(dp, yp, lam, cfg);
  CHECK((a.beta() - b.beta()).cwiseAbs().maxCoeff() < 1e-5);
  CHECK((a.theta - b.theta).cwiseAbs().maxCoeff() < 1e-5);
}

TEST_CASE("fit errors") {
  const auto ds = testutil::random_dataset(two_binary(), 20, 1, 11);
  const auto dm = build_design(ds);
  auto y = noisy_response(ds, 1, 0, 0);
  CHECK_THROWS_AS(fit_hiernet(dm, y, -1.0), ValidationError);
  y[3] = std::nan("");
  CHECK_THROWS(fit_hiernet(dm, y, 0.1));
  HierNetConfig bad;
  bad.lambda_grid = {0.1, 0.2};
  CHECK_THROWS_AS(lambda_grid(dm, noisy_response(ds, 1, 0, 0), bad), ValidationError);
}

TEST_CASE("cross-validation: folds by respondent, deterministic") {
  const auto ds = testutil::random_dataset(two_binary(), 60, 4, 12);
  const auto aug = build_symmetry_augmented(ds);
  HierNetConfig cfg;
  cfg.grid_size = 10;
  cfg.fold_seed = 3;
  const auto a = cross_validate(aug.dm, aug.y, cfg);
  const auto b = cross_validate(aug.dm, aug.y, cfg);
  CHECK(a.lambda_selected == b.lambda_selected);
  CHECK(a.cv_error == b.cv_error);
  CHECK(a.lambdas.size() == 10);
  HierNetConfig many;
  many.cv_folds = 61;
  CHECK_THROWS_AS(cross_validate(aug.dm, aug.y, many), ValidationError);
}

TEST_CASE("cross-validation: pure noise selects a large lambda") {
  std::size_t top_quartile = 0;
  const std::size_t seeds = 20;
  for (std::uint64_t s = 0; s < seeds; ++s) {
    const auto ds = testutil::random_dataset(two_binary(), 100, 2, 100 + s);
    const auto aug = build_symmetry_augmented(ds);
    HierNetConfig cfg;
    cfg.grid_size = 20;
    cfg.fold_seed = s;
    const auto cv = cross_validate(aug.dm, aug.y, cfg);
    top_quartile += cv.best < 5;
  }
  CHECK(top_quartile * 2 > seeds);
}

TEST_CASE("cross-validation: strong main effect beats the intercept") {
  auto ds = testutil::random_dataset(two_binary(), 2000, 1, 13);
  CounterRng rng(14);
  for (std::size_t r = 0; r < ds.rows(); ++r) {
    const double d = ds.left(static_cast<Eigen::Index>(r), 0) - ds.right(static_cast<Eigen::Index>(r), 0);
    ds.y[r] = rng.uniform() < 0.5 + 0.3 * d ? 1 : 0;
  }
  const auto aug = build_symmetry_augmented(ds);
  HierNetConfig cfg;
  cfg.grid_size = 15;
  const auto cv = cross_validate(aug.dm, aug.y, cfg);
  CHECK(cv.cv_error[cv.best] < cv.null_error);
  CHECK(cv.cv_error[cv.best] < cv.cv_error.front());
}

#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "crt/errors.hpp"
#include "crt/glm.hpp"
#include "crt/simulation.hpp"
#include "crt/stat_util.hpp"
#include "helpers.hpp"

using namespace crt;
using testutil::factor;

namespace {

// Deterministic regressors shared with the frozen statsmodels values below.
struct Fixture {
  Eigen::MatrixXd X;
  Eigen::VectorXd y, yb;
  std::vector<int> groups;
};

Fixture fixture() {
  Fixture f;
  const int n = 40;
  f.X.resize(n, 3);
  f.y.resize(n);
  f.yb.resize(n);
  for (int i = 0; i < n; ++i) {
    const double x1 = std::sin(i * 1.3), x2 = std::pow(std::cos(i * 0.7), 2);
    f.X.row(i) << 1, x1, x2;
    f.y[i] = 0.5 + 0.8 * x1 - 0.3 * x2 + 0.2 * std::sin(i * 2.9 + 1);
    f.yb[i] = std::sin(i * 3.7) + 0.6 * x1 > 0 ? 1 : 0;
    f.groups.push_back(i / 4);
  }
  return f;
}

}  // namespace

TEST_CASE("clustered OLS matches statsmodels CR0") {
  const auto f = fixture();
  const auto fit = fit_ols_clustered(f.X, f.y, f.groups);
  Eigen::Vector3d coef(0.49514412981005096, 0.8052489416408903, -0.2818289807945335);
  Eigen::Matrix3d cov;
  cov << 1.6303951441763080e-04, -7.5425490042562658e-05, -2.6759661188009855e-04, -7.5425490042562671e-05,
      1.5336886642432026e-04, 1.2714065753232129e-04, -2.6759661188009845e-04, 1.2714065753232124e-04,
      5.1990110088747396e-04;
  CHECK((fit.coef - coef).cwiseAbs().maxCoeff() < 1e-10);
  CHECK((fit.cov - cov).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(fit.clusters == 10);
  CHECK(fit.df == 9);
  CHECK((f.X.transpose() * fit.residuals).cwiseAbs().maxCoeff() < 1e-8);
  CHECK((fit.cov - fit.cov.transpose()).cwiseAbs().maxCoeff() < 1e-10);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(fit.cov);
  CHECK(es.eigenvalues().minCoeff() > -1e-10);
}

TEST_CASE("singleton clusters reduce to HC0") {
  const auto f = fixture();
  std::vector<int> single(40);
  for (int i = 0; i < 40; ++i) single[static_cast<std::size_t>(i)] = i;
  const auto fit = fit_ols_clustered(f.X, f.y, single);
  const Eigen::MatrixXd bread = (f.X.transpose() * f.X).inverse();
  const Eigen::MatrixXd meat = f.X.transpose() * fit.residuals.array().square().matrix().asDiagonal() * f.X;
  CHECK((fit.cov - bread * meat * bread).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("constant response: slopes 0, intercept the constant") {
  auto f = fixture();
  f.y.setConstant(0.7);
  const auto fit = fit_ols_clustered(f.X, f.y, f.groups);
  CHECK(fit.coef[0] == doctest::Approx(0.7));
  CHECK(std::abs(fit.coef[1]) < 1e-12);
  CHECK(std::abs(fit.coef[2]) < 1e-12);
}

TEST_CASE("OLS errors") {
  auto f = fixture();
  Eigen::MatrixXd alias(40, 4);
  alias << f.X, f.X.col(1) * 2;
  CHECK_THROWS_AS(fit_ols_clustered(alias, f.y, f.groups), ValidationError);
  CHECK_THROWS_AS(fit_ols_clustered(f.X, f.y, std::vector<int>(40, 0)), ValidationError);
}

TEST_CASE("logistic MLE matches statsmodels") {
  const auto f = fixture();
  const auto fit = fit_logistic(f.X, f.yb);
  Eigen::Vector3d coef(0.6212052292110097, 0.6237028764735275, -1.0349237239600566);
  Eigen::Matrix3d cov;
  cov << 0.38148974769318345, -0.09981872686439403, -0.5361640387036288, -0.09981872686439398, 0.27701765822463736,
      0.20452486395418107, -0.5361640387036287, 0.2045248639541811, 1.0656860708488503;
  CHECK(fit.converged);
  CHECK((fit.coef - coef).cwiseAbs().maxCoeff() < 1e-8);
  CHECK((fit.cov - cov).cwiseAbs().maxCoeff() < 1e-8);
  CHECK(fit.gradient.cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("logistic: balanced 2x2 table gives log-odds 0") {
  Eigen::MatrixXd X(8, 2);
  Eigen::VectorXd y(8);
  for (int i = 0; i < 8; ++i) {
    X.row(i) << 1, i % 2;
    y[i] = (i / 2) % 2;
  }
  const auto fit = fit_logistic(X, y);
  CHECK(std::abs(fit.coef[1]) < 3 * std::sqrt(fit.cov(1, 1)));
  CHECK(std::abs(fit.coef[1]) < 1e-10);
  const auto w = logistic_subset_test(fit, {1}, 6);
  CHECK(w.p_value == doctest::Approx(1.0));
}

TEST_CASE("logistic: separation is an error") {
  Eigen::MatrixXd X(6, 2);
  Eigen::VectorXd y(6);
  for (int i = 0; i < 6; ++i) {
    X.row(i) << 1, i;
    y[i] = i >= 3;
  }
  CHECK_THROWS_AS(fit_logistic(X, y), NumericalError);
}

TEST_CASE("Wald F with one restriction equals t squared") {
  const auto f = fixture();
  const auto fit = fit_ols_clustered(f.X, f.y, f.groups);
  Eigen::MatrixXd R = Eigen::MatrixXd::Zero(1, 3);
  R(0, 1) = 1;
  const auto w = wald_f_test(fit.coef, fit.cov, R, Eigen::VectorXd::Zero(1), fit.df);
  CHECK(w.statistic == doctest::Approx(fit.t[1] * fit.t[1]).epsilon(1e-12));
  CHECK(std::abs(w.p_value - fit.p[1]) < 1e-10);
}

TEST_CASE("AMCE: binary factor F test equals the t test") {
  ForcedChoiceDgp dgp;
  dgp.num_z = 3;
  dgp.n = 500;
  const auto draw = generate(dgp, 3);
  const auto r = amce_test(draw.ds, "x");
  REQUIRE(r.tested.size() == 1);
  const double se = std::sqrt(r.cov(static_cast<Eigen::Index>(r.tested[0]), static_cast<Eigen::Index>(r.tested[0])));
  const double t = r.estimate / se;
  CHECK(r.test.statistic == doctest::Approx(t * t).epsilon(1e-10));
  CHECK(r.p_value == r.test.p_value);
  CHECK_THROWS_AS(amce_test(draw.ds, "nope"), ValidationError);
}

TEST_CASE("AMCE: known marginal effect of 0.1 on choice probability") {
  // P(Y=1) = 0.5 + 0.1 (X^L - X^R) with X binary in {0, 1}
  const auto ds0 = testutil::random_dataset({factor("x", {"lo", "hi"}), factor("z", {"a", "b", "c"})}, 3000, 1, 21);
  auto ds = ds0;
  CounterRng rng(22);
  for (std::size_t r = 0; r < ds.rows(); ++r) {
    const auto i = static_cast<Eigen::Index>(r);
    ds.y[r] = rng.uniform() < 0.5 + 0.1 * (ds.left(i, 0) - ds.right(i, 0)) ? 1 : 0;
  }
  const auto res = amce_test(ds, "x");
  CHECK(std::abs(res.estimate - 0.1) < 0.03);
  CHECK(res.p_value < 1e-4);
}

TEST_CASE("AMCE: null p-values are uniform") {
  ForcedChoiceDgp dgp = default_dgp(5, 1000);
  dgp.beta_x = 0;
  std::vector<double> p;
  std::size_t reject = 0;
  for (std::uint64_t s = 0; s < 200; ++s) {
    p.push_back(amce_test(generate(dgp, 1000 + s).ds, "x").p_value);
    reject += p.back() <= 0.05;
  }
  CHECK(ks_uniform_two_sided(p).p_value > 0.01);
  CHECK(reject >= 4);   // 0.02 * 200
  CHECK(reject <= 18);  // 0.09 * 200
}

TEST_CASE("AMCE: extra terms and equality contrast") {
  const auto ds = testutil::random_dataset({factor("origin", {"Mexico", "France", "Germany", "China"}),
                                            factor("reason", {"econ", "war"})},
                                           400, 2, 23);
  AmceOptions o;
  o.extra_terms = {"reason"};
  const auto joint = amce_test(ds, "origin", o);
  CHECK(joint.test.df1 == 6);  // 3 mains + 3 interactions
  AmceOptions c = o;
  c.contrast_a = {"Mexico"};
  c.contrast_b = {"France", "Germany"};
  const auto eq = amce_test(ds, "origin", c);
  CHECK(eq.test.df1 == 1);
  CHECK(eq.p_value > 0);
  CHECK(eq.p_value <= 1);
}

TEST_CASE("lasso logistic: lambda above lambda_max zeroes every slope") {
  const auto f = fixture();
  const double lmax = lasso_logistic_lambda_max(f.X.rightCols(2), f.yb);
  const auto fit = fit_lasso_logistic(f.X.rightCols(2), f.yb, lmax * 1.001);
  CHECK(fit.beta.cwiseAbs().maxCoeff() == 0.0);
  const auto big = fit_lasso_logistic(f.X.rightCols(2), f.yb, 1e3);
  CHECK(big.beta.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("lasso logistic: lambda 0 matches the MLE") {
  const auto f = fixture();
  LassoLogisticOptions o;
  o.tol = 1e-14;
  o.max_iter = 100000;
  o.record_trace = true;
  const auto fit = fit_lasso_logistic(f.X.rightCols(2), f.yb, 0.0, o);
  const auto mle = fit_logistic(f.X, f.yb);
  const Eigen::VectorXd coef = fit.original_coef();
  CHECK(std::abs(coef[0] - mle.coef[1]) < 1e-4);
  CHECK(std::abs(coef[1] - mle.coef[2]) < 1e-4);
  CHECK(std::abs(fit.original_intercept() - mle.coef[0]) < 1e-4);
  for (std::size_t i = 1; i < fit.objective_trace.size(); ++i)
    REQUIRE(fit.objective_trace[i] <= fit.objective_trace[i - 1] + 1e-12);
}

TEST_CASE("lasso logistic: one strong predictor among noise") {
  std::size_t zeros = 0, noise = 0, kept = 0;
  for (std::uint64_t s = 0; s < 20; ++s) {
    CounterRng rng(300 + s);
    const int n = 2000, p = 10;
    Eigen::MatrixXd X(n, p);
    Eigen::VectorXd y(n);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < p; ++j) X(i, j) = rng.coin() ? 1 : 0;
      const double eta = std::log(3.0) * (X(i, 0) - 0.5);
      y[i] = rng.uniform() < 1 / (1 + std::exp(-eta)) ? 1 : 0;
    }
    const double lam = 0.25 * lasso_logistic_lambda_max(X, y);
    const auto fit = fit_lasso_logistic(X, y, lam);
    kept += fit.beta[0] != 0;
    for (int j = 1; j < p; ++j) {
      ++noise;
      zeros += fit.beta[j] == 0;
    }
  }
  CHECK(kept == 20);
  CHECK(zeros >= 0.8 * static_cast<double>(noise));
}

TEST_CASE("lasso logistic CV is deterministic and picks an interior lambda on signal") {
  CounterRng rng(9);
  const int n = 600;
  Eigen::MatrixXd X(n, 4);
  Eigen::VectorXd y(n);
  std::vector<int> cl(n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < 4; ++j) X(i, j) = rng.coin();
    y[i] = rng.uniform() < 1 / (1 + std::exp(-(1.5 * X(i, 0) - 0.75))) ? 1 : 0;
    cl[static_cast<std::size_t>(i)] = i / 3;
  }
  LassoCvOptions cv;
  cv.grid_size = 15;
  const auto a = cv_lasso_logistic(X, y, cl, {}, cv);
  const auto b = cv_lasso_logistic(X, y, cl, {}, cv);
  CHECK(a.lambda_selected == b.lambda_selected);
  CHECK(a.best > 0);
}

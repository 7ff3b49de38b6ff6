#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "crt/design_model.hpp"

namespace crt {

struct WaldTest {
  double statistic = 0;  // F
  double df1 = 0;
  double df2 = 0;
  double p_value = 1;
};

// F = (R b - r)' (R V R')^-1 (R b - r) / q on (q, df2) degrees of freedom.
// df2 <= 0 uses the chi-square limit.
WaldTest wald_f_test(const Eigen::VectorXd& coef, const Eigen::MatrixXd& cov, const Eigen::MatrixXd& R,
                     const Eigen::VectorXd& r, double df2);

struct ClusteredOlsFit {
  Eigen::VectorXd coef;
  Eigen::MatrixXd cov;  // CR0 sandwich
  Eigen::VectorXd se, t, p;
  Eigen::VectorXd residuals;
  std::size_t clusters = 0;
  double df = 0;  // G - 1
};

ClusteredOlsFit fit_ols_clustered(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const std::vector<int>& clusters,
                                  const std::vector<std::string>& names = {});

enum class ClusterBy { task, respondent };

struct AmceOptions {
  std::vector<std::string> extra_terms;  // factors interacted with the target
  ClusterBy cluster = ClusterBy::task;
  // Optional null AMCE(first levels) == AMCE(second levels), each side averaged
  // with equal weights; AMCE of a level averages its interactions with equal
  // weight over the levels of every extra term.
  std::vector<std::string> contrast_a, contrast_b;
};

struct AmceResult {
  std::vector<std::string> names;
  Eigen::VectorXd coef;
  Eigen::MatrixXd cov;
  std::vector<std::size_t> tested;  // coefficient indices under the null
  double estimate = 0;              // first tested coefficient (or contrast value)
  WaldTest test;
  double p_value = 1;
};

// Stacked regression of [Y; 1 - Y] on [X_L; X_R] with treatment coding.
AmceResult amce_test(const ConjointDataset& ds, const std::string& target, const AmceOptions& opt = {});

struct LogisticFit {
  Eigen::VectorXd coef;
  Eigen::MatrixXd cov;  // inverse Fisher information
  Eigen::VectorXd gradient;
  double loglik = 0;
  std::size_t iterations = 0;
  bool converged = false;
};

LogisticFit fit_logistic(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, std::size_t max_iter = 100,
                         double tol = 1e-10);

// Wald F test that the listed coefficients are all zero, df2 = rows - cols.
WaldTest logistic_subset_test(const LogisticFit& fit, const std::vector<std::size_t>& subset, double df2);

struct LassoLogisticOptions {
  Eigen::VectorXd offset;              // empty: none
  std::vector<double> penalty_factor;  // empty: all ones
  double tol = 1e-9;
  std::size_t max_iter = 500;
  bool record_trace = false;
};

// Columns are standardized internally; beta is reported on that scale, the
// intercept on the link scale with centred columns.
struct LassoLogisticFit {
  double intercept = 0;
  Eigen::VectorXd beta;
  Eigen::VectorXd center, scale;
  double lambda = 0;
  bool converged = false;
  std::size_t iterations = 0;
  double objective = 0;
  std::vector<double> objective_trace;

  Eigen::VectorXd original_coef() const;  // per raw column
  double original_intercept() const;
};

LassoLogisticFit fit_lasso_logistic(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, double lambda,
                                    const LassoLogisticOptions& opt = {}, const LassoLogisticFit* warm = nullptr);

double lasso_logistic_lambda_max(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                                 const LassoLogisticOptions& opt = {});

Eigen::VectorXd predict_link(const LassoLogisticFit& fit, const Eigen::MatrixXd& X, const Eigen::VectorXd& offset);

struct LassoCv {
  std::vector<double> lambdas;
  std::vector<double> cv_deviance;
  std::size_t best = 0;
  double lambda_selected = 0;
};

struct LassoCvOptions {
  std::size_t folds = 5;
  std::size_t grid_size = 50;
  double grid_ratio = 100;
  std::uint64_t seed = 0;
};

LassoCv cv_lasso_logistic(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const std::vector<int>& clusters,
                          const LassoLogisticOptions& opt = {}, const LassoCvOptions& cv = {});

}  // namespace crt

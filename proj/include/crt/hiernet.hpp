#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <cstdint>
#include <vector>

#include "crt/encoding.hpp"

namespace crt {

// Per-group treatment inside the solver. An interaction-only group has no main
// effect and no hierarchy budget of its own: its interactions are charged to
// the partner column only, and it never interacts with another such group.
enum GroupMode : char { group_free = 0, group_zero = 1, group_interaction_only = 2 };

struct HierNetConfig {
  std::vector<double> lambda_grid;  // empty: grid_size values from lambda_max down by grid_ratio
  std::size_t grid_size = 50;
  double grid_ratio = 100;
  double tol = 1e-9;                // relative objective change
  std::size_t max_iter = 20000;
  std::size_t cv_folds = 5;
  std::uint64_t fold_seed = 0;
  bool record_trace = false;
  std::vector<char> group_mode;     // empty: every group free
};

// Coefficients live on the standardized scale: main column a enters as
// s_a = (x_a - center_a) / scale_a and the pair (a, b) as s_a * s_b minus its
// training mean. Theta is symmetric with zeros on same-group blocks.
struct HierNetFit {
  std::vector<ColumnGroup> groups;
  Eigen::VectorXd beta_pos, beta_neg;
  Eigen::MatrixXd theta;
  Eigen::VectorXd center, scale;
  Eigen::MatrixXd pair_mean;
  double intercept = 0;  // mean response
  double lambda = 0;
  bool converged = false;
  std::size_t iterations = 0;
  double objective = 0;
  double lipschitz = 1;  // final step-size estimate; reused by warm starts
  std::vector<double> objective_trace;
  bool symmetry_augmented = false;
  bool carryover_augmented = false;
  std::vector<char> group_mode;

  Eigen::VectorXd beta() const { return beta_pos - beta_neg; }
  double main(std::size_t col) const { return beta_pos[col] - beta_neg[col]; }
  double main(std::size_t g, std::size_t k) const { return main(groups[g].offset + k); }
  double inter(std::size_t g, std::size_t k, std::size_t h, std::size_t l) const {
    return theta(static_cast<Eigen::Index>(groups[g].offset + k), static_cast<Eigen::Index>(groups[h].offset + l));
  }
  int find_group(GroupRole role, Side side, int source) const;
  // Largest violation of sum_b |theta_ab| <= beta_pos_a + beta_neg_a over
  // columns that carry a hierarchy budget.
  double hierarchy_violation() const;
};

double lambda_max(const DesignMatrix& dm, const std::vector<double>& y, const std::vector<char>& group_mode = {});
std::vector<double> lambda_grid(const DesignMatrix& dm, const std::vector<double>& y, const HierNetConfig& cfg);

// `mode`, when given, replaces cfg.group_mode for this fit. `warm` supplies a
// starting point on the same group layout.
HierNetFit fit_hiernet(const DesignMatrix& dm, const std::vector<double>& y, double lambda,
                       const HierNetConfig& cfg = {}, const HierNetFit* warm = nullptr,
                       const std::vector<char>* mode = nullptr);

Eigen::VectorXd predict(const HierNetFit& fit, const DesignMatrix& dm);

struct CvResult {
  std::vector<double> lambdas;
  std::vector<double> cv_error;  // mean held-out squared error
  std::vector<double> cv_se;
  std::size_t best = 0;
  double lambda_selected = 0;
  double null_error = 0;  // held-out error of the intercept-only model
};

// Folds partition clusters (respondents); every row of a respondent shares a fold.
CvResult cross_validate(const DesignMatrix& dm, const std::vector<double>& y, const HierNetConfig& cfg = {});

// Cross-validates, then fits the full data at the selected lambda.
HierNetFit fit_hiernet_cv(const DesignMatrix& dm, const std::vector<double>& y, const HierNetConfig& cfg = {},
                          CvResult* cv_out = nullptr);

}  // namespace crt

#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "crt/design_model.hpp"
#include "crt/glm.hpp"
#include "crt/hiernet.hpp"
#include "crt/randomization.hpp"

namespace crt {

enum class StatisticKind {
  hiernet_main,
  hiernet_respondent,
  hiernet_coarsened,
  hiernet_unconstrained,
  order,
  carryover,
  fatigue,
  dicrt,
  lasso_main,
  interaction_screen,
};

const char* to_string(StatisticKind k);
StatisticKind statistic_kind_from_string(const std::string& s);  // also accepts "hiernet"
ResampleKind required_resample(StatisticKind k);

struct StatisticOptions {
  std::size_t I = 2;                  // d_I CRT screened factors
  double lambda = 0;                  // > 0 fixes the penalty; 0 selects it by cross-validation
  std::size_t cv_folds = 5;
  std::size_t grid_size = 30;
  double grid_ratio = 100;
  bool cv_per_resample = false;       // rerun cross-validation on every dataset
  bool include_v = false;
  std::vector<std::pair<std::string, std::string>> extra_main;
  std::string screen_variable;        // interaction_screen: a factor or covariate name
  std::vector<std::string> tested_levels;  // restrict the target's levels (coarsened tests)
  std::uint64_t cv_seed = 0;
  double tol = 1e-9;

  bool operator==(const StatisticOptions&) const = default;
};

struct StatisticSpec {
  StatisticKind kind = StatisticKind::hiernet_main;
  std::vector<std::string> target;
  StatisticOptions options;
  std::optional<CoarseningSpec> coarsening;  // hiernet_coarsened and coarsened lasso_main
};

// ---- closed-form pieces, evaluated on fitted coefficients ----

// Sum over keys of squared deviations from the per-key mean.
double demeaned_sum_sq(const std::vector<double>& values, const std::vector<int>& keys);
double demeaned_sum_sq(const std::vector<double>& values);

struct TargetLevels {
  std::size_t factor = 0;
  std::vector<int> levels;  // empty: all levels
};

// Main, within-profile, between-profile and respondent terms for each target,
// read from the left-profile coefficients of a symmetry-augmented fit.
double t_hiernet(const HierNetFit& fit, const std::vector<TargetLevels>& targets);
double t_hiernet_respondent(const HierNetFit& fit, const std::vector<TargetLevels>& targets);
double t_hiernet_coarsened(const HierNetFit& fit, std::size_t factor, const std::vector<int>& group_levels);
// T^L + T^R on a fit to the raw design.
double t_hiernet_unconstrained(const HierNetFit& fit, const std::vector<TargetLevels>& targets);
double t_order(const HierNetFit& fit);
double t_carryover(const HierNetFit& fit);
double t_fatigue(const HierNetFit& fit);
// beta over the target levels; each slice lists coefficients over target
// levels for one (factor, level) of the partner. M counts nonzero entries.
double t_dicrt(const std::vector<double>& beta, const std::vector<std::vector<double>>& gamma_slices,
               const std::vector<std::vector<double>>& delta_slices);
double t_lasso_main(const std::vector<double>& beta);

// ---- dataset -> statistic ----

class Statistic {
 public:
  virtual ~Statistic() = default;
  // Pure and thread-safe.
  virtual double operator()(const ConjointDataset& ds) const = 0;
  // Penalty used for every evaluation (0 when chosen per dataset).
  virtual double lambda() const { return 0; }
};

// Prepares a statistic for `observed`: cross-validation, warm starts and the
// d_I CRT distillation use only columns the matching resampler leaves fixed,
// so observed and resampled evaluations stay exchangeable. For coarsened and
// carryover kinds `observed` is the coarsened / even-task dataset.
std::unique_ptr<Statistic> make_statistic(const StatisticSpec& spec, const ConjointDataset& observed);

// Cross-validated penalty on the full design of ds, nothing masked. Used to fix
// lambda from an independent pilot dataset. HierNet main-effect kinds only.
double select_lambda(const StatisticSpec& spec, const ConjointDataset& ds);

// Lasso-logistic design on the left/right-swapped doubling of ds. A block is
// a one-hot factor side or the product of two factor sides.
struct DcBlock {
  int f1 = -1;
  bool left1 = true;
  int f2 = -1;  // -1: main effect; -2 - m: covariate m
  bool left2 = true;
};
Eigen::MatrixXd dc_columns(const ConjointDataset& ds, const std::vector<DcBlock>& blocks,
                           std::vector<std::size_t>* offsets = nullptr);
Eigen::VectorXd dc_response(const ConjointDataset& ds);
std::vector<int> dc_clusters(const ConjointDataset& ds);

}  // namespace crt

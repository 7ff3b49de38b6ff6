#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "crt/design_model.hpp"
#include "crt/randomization.hpp"

namespace crt {

// Forced-choice logistic DGP with one binary factor of interest X and num_z
// binary factors Z, all uniform and coded -0.5 / +0.5 (level 0 / level 1):
//   Y' = b_X (X^L - X^R) + b_Z'(Z^L - Z^R)
//        + 2 g'(X^L Z^L - X^R Z^R) + 2 d'(X^L Z^R - X^R Z^L)
//        + 2 sum gt_ab (Z^L_a Z^L_b - Z^R_a Z^R_b) + eps,   eps ~ Logistic
//   Y = 1{Y' > 0}
// X is factor 0 ("x"), Z_k is factor k ("z1", ...).
struct ForcedChoiceDgp {
  struct ZPair {
    std::size_t a = 0, b = 0;
    double coef = 0;
  };

  std::size_t num_z = 10;
  double beta_x = 0.1;
  std::vector<double> beta_z;  // num_z entries; empty means zero
  // Fixed interactions, num_z entries each (empty means zero). Ignored when
  // random positions are requested below.
  std::vector<double> gamma, delta;
  // Random positions, redrawn per rep: n_within entries of gamma set to
  // +within_size and n_between entries of delta set to -between_size.
  std::size_t n_within = 0, n_between = 0;
  double within_size = 0, between_size = 0;
  std::vector<ZPair> gamma_tilde;
  std::size_t n = 3000;

  bool random_positions() const { return n_within + n_between > 0; }
};

// Eight Z main effects of alternating sign at 0.1 and 15 Z x Z pairs at 0.05,
// their positions drawn once from `seed`.
ForcedChoiceDgp default_dgp(std::uint64_t seed, std::size_t n = 3000);

struct DgpDraw {
  ConjointDataset ds;
  std::vector<double> latent;       // Y' per row
  std::vector<double> gamma, delta;  // realized interactions
};

DgpDraw generate(const ForcedChoiceDgp& dgp, std::uint64_t seed);

// Linear predictor of one row, without noise.
double linear_predictor(const ForcedChoiceDgp& dgp, const std::vector<double>& gamma,
                        const std::vector<double>& delta, const int* left, const int* right);

struct VarianceDecomposition {
  double interaction = 0;
  double remaining = 0;
  double fraction = 0;
};

// Var(Y' - eps) split into the X x Z interaction part and the rest. With
// random positions the counts and sizes are used directly.
VarianceDecomposition variance_decomposition(const ForcedChoiceDgp& dgp);

// Within and between sizes for the heterogeneous scenario at the same total
// interaction variance as size I everywhere.
std::pair<double, double> heterogeneous_coefficients(double I);

// ---- power studies ----

enum class PowerMethod { crt_hiernet, crt_hiernet_unconstrained, crt_dicrt, amce };

const char* to_string(PowerMethod m);
PowerMethod power_method_from_string(const std::string& s);

struct PowerGridPoint {
  std::string label;
  double x = 0;  // value on the study's horizontal axis
  ForcedChoiceDgp dgp;
};

struct PowerStudyOptions {
  std::vector<PowerMethod> methods{PowerMethod::crt_hiernet, PowerMethod::amce};
  std::size_t reps = 200;
  std::size_t B = 100;
  double alpha = 0.05;
  std::uint64_t seed = 1;
  std::size_t workers = 1;
  // HierNet penalties are fixed per grid point by cross-validation on an
  // independent pilot draw. Set to a positive value to skip the pilot.
  double lambda = 0;
  std::size_t pilot_n = 0;  // 0: the grid point's n
  std::size_t grid_size = 30;
  std::function<void(const std::string&)> progress;
};

struct PowerRow {
  std::size_t grid_id = 0;
  PowerMethod method = PowerMethod::crt_hiernet;
  std::size_t rep = 0;
  std::uint64_t seed = 0;  // replays the rep's dataset
  double p_value = 1;
};

struct PowerSummary {
  std::size_t grid_id = 0;
  std::string label;
  double x = 0;
  PowerMethod method = PowerMethod::crt_hiernet;
  std::size_t reps = 0;
  double power = 0;
  double se = 0;
  double variance_fraction = 0;
  double lambda = 0;
};

struct PowerStudyResult {
  std::vector<PowerRow> rows;
  std::vector<PowerSummary> summary;

  const PowerSummary& at(std::size_t grid_id, PowerMethod m) const;
  std::vector<double> p_values(std::size_t grid_id, PowerMethod m) const;
};

// Rep r of grid point g draws its dataset with seed stream_key({seed, g, r});
// every method sees the same dataset.
PowerStudyResult power_study(const std::vector<PowerGridPoint>& grid, const PowerStudyOptions& opt);

void write_power_rows_csv(const PowerStudyResult& r, std::ostream& out);
void write_power_summary_csv(const PowerStudyResult& r, std::ostream& out);

// Grids for the named studies. `n_interactions` is the total count n_I split
// evenly between within and between.
std::vector<PowerGridPoint> interaction_size_grid(std::uint64_t seed, std::size_t n,
                                                  const std::vector<double>& sizes, std::size_t n_interactions = 12);
std::vector<PowerGridPoint> interaction_count_grid(std::uint64_t seed, std::size_t n, double size,
                                                   const std::vector<std::size_t>& counts);
// Homogeneous size I next to the heterogeneous (I_s, I_w) pair, per size.
std::vector<PowerGridPoint> heterogeneous_grid(std::uint64_t seed, std::size_t n, const std::vector<double>& sizes,
                                               std::size_t n_interactions = 12);

// ---- logistic inflation ----

struct InflationOptions {
  std::vector<std::size_t> num_z{3, 5, 10, 11, 12, 13};
  std::size_t n = 5000;
  std::size_t levels = 4;
  std::size_t reps = 200;
  double alpha = 0.05;
  std::size_t bins = 10;
  std::uint64_t seed = 1;
  std::function<void(const std::string&)> progress;
};

struct InflationRow {
  std::size_t num_z = 0;
  std::size_t reps = 0;
  std::size_t failed = 0;  // fits that did not converge, excluded
  double rejection = 0;
  double se = 0;
  std::vector<double> histogram;  // fraction of p-values per bin on [0, 1]
  std::vector<double> p_values;
};

// One profile, every factor four-level and null; logistic regression on all
// mains and two-way interactions; Wald F test of X's main and interactions.
double logistic_inflation_p_value(std::size_t num_z, std::size_t n, std::size_t levels, std::uint64_t seed);
std::vector<InflationRow> logistic_inflation_study(const InflationOptions& opt);
void write_inflation_csv(const std::vector<InflationRow>& rows, std::ostream& out);

// ---- regularity DGPs ----

// Multi-task forced choice with uniform factors of the given level counts.
// Factor f at level k contributes main * c_f(k) with c_f(k) = k/(K-1) - 1/2.
// Planted departures, all on factor 0:
//   order:     + order * c_0(left level) on the left profile only
//   carryover: + carryover * (c_0(L_prev) + c_0(R_prev)) (c_0(L) - c_0(R))
//              on even tasks, where prev is the preceding odd task. The
//              effect must not depend on which side the previous profiles
//              sat: the lagged design treats that swap as uninformative.
//   fatigue:   the factor-0 main effect scales by (J - j) / (J - 1)
struct TaskDgp {
  std::size_t n = 500;
  std::size_t J = 4;
  std::vector<std::size_t> levels{2, 3, 3, 2};
  double main = 0.5;
  double order = 0;
  double carryover = 0;
  double fatigue_main = 0;  // extra factor-0 effect that decays with task index
};

ConjointDataset generate_tasks(const TaskDgp& dgp, std::uint64_t seed);
RandomizationScheme task_scheme(const TaskDgp& dgp);

}  // namespace crt

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "crt/design_model.hpp"
#include "crt/randomization.hpp"
#include "crt/statistics.hpp"

namespace crt {

struct CrtResult {
  double observed_statistic = 0;
  std::vector<double> resampled_statistics;
  std::uint64_t p_numerator = 1;  // 1 + #{T_b >= T_obs}
  std::uint64_t p_denominator = 1;  // B + 1
  std::size_t B = 0;
  std::uint64_t master_seed = 0;
  double wall_time = 0;  // seconds
  double lambda = 0;
  ResampleKind resample = ResampleKind::main;
  StatisticSpec spec;
  std::vector<std::string> notes;  // e.g. dropped final task

  double p_value() const { return static_cast<double>(p_numerator) / static_cast<double>(p_denominator); }
  std::string p_value_string() const;
};

// Ties count toward the numerator.
void set_p_value(CrtResult& r);

// Generic skeleton: resampled(b) for b = 1..B runs on `workers` threads and
// lands in slot b - 1, so the result does not depend on scheduling.
CrtResult run_crt(const std::function<double()>& observed, const std::function<double(std::size_t)>& resampled,
                  std::size_t B, std::size_t workers);

void check_compatible(ResampleKind plan, StatisticKind stat);

CrtResult run_crt(const ConjointDataset& ds, const RandomizationScheme& scheme, const ResamplePlan& plan,
                  const StatisticSpec& spec);

std::string to_json(const CrtResult& r, int indent = 2);

struct ValidityResult {
  std::vector<double> p_values;
  std::vector<double> alphas;
  std::vector<double> rejection;  // per alpha
  double ks_one_sided_p = 1;
  double ks_two_sided_p = 1;

  double rejection_at(double alpha) const;
};

ValidityResult summarize_p_values(std::vector<double> p_values, std::vector<double> alphas = {0.01, 0.05, 0.1});

// Rep r draws its dataset from dgp(r) and runs with seed stream_key({plan.master_seed, r}).
ValidityResult run_validity_suite(const std::function<ConjointDataset(std::size_t)>& dgp,
                                  const RandomizationScheme& scheme, const ResamplePlan& plan,
                                  const StatisticSpec& spec, std::size_t reps);

}  // namespace crt

#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "crt/design_model.hpp"
#include "crt/rng.hpp"

namespace crt {

// "if <if_factor> takes a level in if_levels then <then_factor> must lie in
// allowed"; applied to left and right profiles separately.
struct RestrictionRule {
  std::size_t if_factor = 0;
  std::vector<int> if_levels;
  std::size_t then_factor = 0;
  std::vector<int> allowed;
};

struct RandomizationScheme {
  std::vector<std::vector<double>> marginals;  // one per profile factor
  std::vector<RestrictionRule> restrictions;

  static RandomizationScheme uniform(const std::vector<FactorSpec>& factors);
};

void validate_scheme(const RandomizationScheme& scheme, const std::vector<FactorSpec>& factors);

// The experimental law of a single profile. Factors are generated in an order
// where every conditioning factor precedes the factors it restricts; a
// restricted factor's marginal is renormalized over the intersection of the
// allowed sets of all rules that fire.
class ProfileLaw {
 public:
  ProfileLaw(const RandomizationScheme& scheme, const std::vector<FactorSpec>& factors);

  double probability(const int* levels) const;
  void draw(CounterRng& rng, int* levels) const;
  // P(levels[f] = k | levels of the factors generated before f).
  double conditional(std::size_t f, int k, const int* levels) const;

  std::size_t factors() const { return marginals_.size(); }

 private:
  std::vector<std::vector<double>> marginals_;
  std::vector<RestrictionRule> rules_;
  std::vector<std::vector<std::size_t>> rules_for_;  // by restricted factor
  std::vector<std::size_t> order_;
};

enum class ResampleKind { main, coarsened, order, carryover, fatigue };

const char* to_string(ResampleKind k);
ResampleKind resample_kind_from_string(const std::string& s);

struct ResamplePlan {
  ResampleKind kind = ResampleKind::main;
  std::size_t B = 400;
  std::uint64_t master_seed = 0;
  std::size_t workers = 1;
};

// Draws all target columns of a row jointly from P(X | Z). The conditional is
// computed by enumerating target-level tuples against the full profile law, so
// restrictions that involve targets in either role are honoured exactly.
class ConditionalSampler {
 public:
  ConditionalSampler(const ConjointDataset& ds, const RandomizationScheme& scheme);

  ConjointDataset draw(const ConjointDataset& ds, std::uint64_t seed, std::uint64_t b) const;
  // Probability over target tuples (row-major over ds.targets) for one row/side.
  std::vector<double> distribution(std::size_t row, bool right) const;

 private:
  std::vector<std::size_t> targets_;
  std::vector<std::size_t> radix_;
  std::size_t tuples_ = 1;
  std::vector<double> cdf_;  // rows * 2 * tuples_
};

ConjointDataset sample_x_given_z(const ConjointDataset& ds, const RandomizationScheme& scheme,
                                 std::uint64_t b, std::uint64_t seed);

// Redraws coarse labels that fall in the tested group, using the c-pushforward
// of P(source tuple | other factors) restricted to the group. Labels outside
// the group are never touched.
class CoarsenedSampler {
 public:
  CoarsenedSampler(const ConjointDataset& original, const RandomizationScheme& scheme,
                   const CoarseningSpec& spec);

  const ConjointDataset& observed() const { return coarse_; }
  ConjointDataset draw(std::uint64_t seed, std::uint64_t b) const;
  // Pushforward restricted to the group (zero outside) for one row/side.
  std::vector<double> distribution(std::size_t row, bool right) const;

 private:
  ConjointDataset coarse_;
  std::size_t column_ = 0;
  std::size_t levels_ = 0;
  std::vector<double> probs_;  // rows * 2 * levels_, empty rows for out-of-group entries
  std::vector<char> redraw_;   // rows * 2
};

ConjointDataset sample_coarsened(const ConjointDataset& ds, const RandomizationScheme& scheme,
                                 const CoarseningSpec& spec, std::uint64_t b, std::uint64_t seed);

// Swaps left/right profiles (and flips Y) on rows where E[row] is set.
ConjointDataset swap_rows(const ConjointDataset& ds, const std::vector<char>& E);
std::vector<char> draw_swap_set(std::size_t rows, std::uint64_t b, std::uint64_t seed);
ConjointDataset sample_order_swap(const ConjointDataset& ds, std::uint64_t b, std::uint64_t seed,
                                  std::vector<char>* E_out = nullptr);

// Drops the final task when J is odd. Throws if J < 2.
ConjointDataset trim_to_even_tasks(const ConjointDataset& ds, bool* dropped = nullptr);

// Redraws every factor of odd-numbered tasks from the full experimental law.
// Expects even J (see trim_to_even_tasks).
ConjointDataset sample_carryover(const ConjointDataset& ds, const RandomizationScheme& scheme,
                                 std::uint64_t b, std::uint64_t seed);

ConjointDataset sample_fatigue_permutation(const ConjointDataset& ds, std::uint64_t b,
                                           std::uint64_t seed);

}  // namespace crt

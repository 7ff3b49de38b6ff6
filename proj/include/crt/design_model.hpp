#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace crt {

enum class FactorKind { profile, covariate };

struct FactorSpec {
  std::string name;
  std::vector<std::string> levels;
  FactorKind kind = FactorKind::profile;
  bool numeric = false;  // covariates only

  std::size_t size() const { return levels.size(); }
  int level_index(std::string_view label) const;
};

void validate_factor(const FactorSpec& f);

struct Schema {
  std::vector<FactorSpec> factors;     // profile factors, in declaration order
  std::vector<FactorSpec> covariates;  // respondent covariates

  int factor_index(std::string_view name) const;
  int covariate_index(std::string_view name) const;
};

using LevelMatrix = Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Rows are (respondent, task) in respondent-major order; row = i * J + j.
// Level indices are 0-based. X is the subset of factors listed in `targets`,
// Z is every other profile factor.
struct ConjointDataset {
  std::vector<FactorSpec> factors;
  std::vector<FactorSpec> covariates;
  std::vector<std::size_t> targets;

  std::size_t n = 0;
  std::size_t J = 0;
  LevelMatrix left;
  LevelMatrix right;
  // Numeric covariates hold standardized values, categorical ones a level index.
  Eigen::MatrixXd V;
  std::vector<double> v_center;  // raw = value * v_scale + v_center
  std::vector<double> v_scale;
  std::vector<int> y;
  std::vector<int> task;  // F, 1-based
  std::vector<std::string> respondent_ids;
  std::size_t dropped_respondents = 0;

  std::size_t rows() const { return n * J; }
  std::size_t p() const { return factors.size(); }
  std::size_t respondent(std::size_t row) const { return row / J; }
  int factor_index(std::string_view name) const;
  int covariate_index(std::string_view name) const;
  bool is_target(std::size_t f) const;
  std::vector<std::size_t> nontargets() const;
};

// Throws ValidationError on any broken invariant.
void validate(const ConjointDataset& ds);

// Looks up factor names and returns their indices; throws on unknown names.
std::vector<std::size_t> resolve_targets(const ConjointDataset& ds,
                                         const std::vector<std::string>& names);

struct LoadOptions {
  bool allow_ragged = false;
  std::vector<std::string> targets;
};

ConjointDataset load_dataset(const std::string& csv_path, const Schema& schema,
                             const LoadOptions& opt = {});
ConjointDataset parse_dataset(std::istream& in, const Schema& schema,
                              const LoadOptions& opt = {});
void save_dataset(const ConjointDataset& ds, std::ostream& out);
void save_dataset(const ConjointDataset& ds, const std::string& csv_path);

// c maps tuples of source-factor labels to a coarse label; h maps coarse labels
// to group ids. The coarse factor replaces the source factors.
struct CoarseningSpec {
  std::vector<std::string> source_factors;
  std::string name;
  std::vector<std::pair<std::vector<std::string>, std::string>> c_map;
  std::map<std::string, std::string> h_map;
  std::string tested_group;

  std::vector<std::string> coarse_levels() const;  // range of c, first-seen order
  std::vector<std::string> group_members() const;  // coarse levels in tested_group
};

// Identity coarsening of a single factor: every level maps to itself and is its
// own group.
CoarseningSpec identity_coarsening(const FactorSpec& f, const std::string& tested_level);

void validate_coarsening(const CoarseningSpec& spec);

// Index of the coarse level for each source-level tuple, flattened in
// row-major order over the source factors. Throws if a tuple is unmapped.
struct ResolvedCoarsening {
  std::vector<std::size_t> sources;  // factor indices in the original dataset
  std::vector<std::size_t> radix;    // level counts of sources
  std::vector<int> image;            // flattened tuple -> coarse index (-1 if unmapped)
  std::vector<std::string> levels;
  std::vector<bool> in_group;        // per coarse level
  std::size_t position = 0;          // index of the coarse factor in the output
  std::size_t tuple_index(const LevelMatrix& m, std::size_t row) const;
};

ResolvedCoarsening resolve_coarsening(const ConjointDataset& ds, const CoarseningSpec& spec);

ConjointDataset apply_coarsening(const ConjointDataset& ds, const CoarseningSpec& spec);

// Builds a dataset from level-index matrices; used by tests and simulations.
ConjointDataset make_dataset(std::vector<FactorSpec> factors, std::size_t n, std::size_t J,
                             LevelMatrix left, LevelMatrix right, std::vector<int> y,
                             std::vector<std::size_t> targets = {0});

}  // namespace crt

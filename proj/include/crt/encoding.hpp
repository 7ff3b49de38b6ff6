#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "crt/design_model.hpp"

namespace crt {

enum class GroupRole { profile, lag_profile, covariate, task_index, extra };
enum class Side { left, right, none };

// A block of columns: a one-hot block for a categorical factor-side (all K
// levels, no baseline) or a single numeric column.
struct ColumnGroup {
  std::string name;
  GroupRole role = GroupRole::profile;
  Side side = Side::none;
  int source = -1;  // factor index, covariate index, or extra-term index
  int pair_first = -1, pair_second = -1;  // extra terms: the two factors, level = a * K2 + b
  bool numeric = false;
  std::size_t levels = 1;
  std::size_t offset = 0;
  std::vector<std::string> labels;

  std::size_t width() const { return numeric ? 1 : levels; }
};

// Row-major storage of one level index (categorical) or value (numeric) per
// group; interaction columns are never stored.
class DesignMatrix {
 public:
  DesignMatrix() = default;
  DesignMatrix(std::size_t rows, std::vector<ColumnGroup> groups);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t num_groups() const { return groups_.size(); }
  const std::vector<ColumnGroup>& groups() const { return groups_; }
  const ColumnGroup& group(std::size_t g) const { return groups_[g]; }

  int level(std::size_t r, std::size_t g) const { return lev_[r * groups_.size() + g]; }
  double value(std::size_t r, std::size_t g) const { return val_[r * groups_.size() + g]; }
  void set_level(std::size_t r, std::size_t g, int k) { lev_[r * groups_.size() + g] = k; }
  void set_value(std::size_t r, std::size_t g, double x) { val_[r * groups_.size() + g] = x; }

  double entry(std::size_t r, std::size_t col) const;
  std::size_t column(std::size_t g, std::size_t level = 0) const { return groups_[g].offset + level; }
  std::size_t group_of_column(std::size_t col) const;
  std::string column_label(std::size_t col) const;
  Eigen::MatrixXd dense() const;

  int find_group(GroupRole role, Side side, int source) const;

  std::vector<int> clusters;  // respondent index per row
  bool symmetry_augmented = false;
  bool carryover_augmented = false;

  DesignMatrix subset(const std::vector<std::size_t>& rows) const;
  static DesignMatrix concat(const DesignMatrix& a, const DesignMatrix& b);

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<ColumnGroup> groups_;
  std::vector<int> lev_;
  std::vector<double> val_;
};

struct DesignOptions {
  bool include_v = false;
  bool include_task = false;
  // Each pair (f1, f2) adds a per-side factor whose levels are the level
  // combinations of f1 and f2.
  std::vector<std::pair<std::size_t, std::size_t>> extra_products;
};

DesignMatrix build_design(const ConjointDataset& ds, const DesignOptions& opt = {});

struct AugmentedDesign {
  DesignMatrix dm;
  std::vector<double> y;
};

// [D; D with left/right exchanged], response [Y; 1 - Y].
AugmentedDesign build_symmetry_augmented(const ConjointDataset& ds, const DesignOptions& opt = {});

// Base rows pair the previous (odd) task's profiles X* with the current (even)
// task's profiles Z*, response Y*. Three copies follow:
//   [X*R, X*L, Z*R, Z*L] with 1 - Y*
//   [X*L, X*R, Z*R, Z*L] with 1 - Y*
//   [X*R, X*L, Z*L, Z*R] with Y*
// Expects even J.
AugmentedDesign build_carryover_augmented(const ConjointDataset& ds);

std::vector<double> response(const ConjointDataset& ds);

}  // namespace crt
